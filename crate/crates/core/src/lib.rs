//! Behavior execution management for a simulated quadrotor.

pub mod bus;
pub mod catalog;
pub mod cli;
pub mod clock;
pub mod mission;
pub mod report;
pub mod runtime;
pub mod world;

pub use cli::cli_run;
