//! Mission files and the coordinator that runs them.
//!
//! A mission is a list of directives executed in order. Goal-based steps
//! are awaited by default, recurrent ones run in the background until
//! stopped, preempted by a member of the same exclusion group, or the
//! mission ends.

mod coordinator;
mod demo;
mod parse;

pub use coordinator::{
    Event, EventKind, MissionOutcome, MissionReport, Session, SessionError, SessionOptions,
    StepResult, StepStatus, TimingMode,
};
pub use demo::{exploration_mission, DEMO_ALTITUDE, DEMO_ROOMS};
pub use parse::{
    parse_mission, Directive, ExclusionGroup, Mission, MissionError, MissionStep, OnFailure,
    StepMode,
};
