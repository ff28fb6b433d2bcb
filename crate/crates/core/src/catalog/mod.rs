//! Concrete behaviors for the simulated quadrotor, grouped into behavior
//! systems.

mod flight;
mod localization;
mod monitors;
mod motion;
mod navigation;
pub mod pid;
pub mod planner;

pub use flight::{land, take_off, wait, DEFAULT_ALTITUDE, DEFAULT_WAIT, LAND_SPEED};
pub use localization::{estimated_pose_topic, self_localize, ESTIMATED_POSE_TOPIC};
pub use monitors::{DivergenceMonitor, ExceedanceMonitor, Heartbeat, Thresholds};
pub use motion::{follow_path, hover, rotate, waypoint_text};
pub use navigation::{
    generate_path, InlineBackend, PlanOutcome, PlanRequest, PlannerBackend, RetryPolicy,
    ThreadedBackend,
};
pub use pid::{pid_step, Pid, PidGains, PidState};
pub use planner::{plan_path, PlanError, PlannedPath};

use std::sync::Arc;

use thiserror::Error;

use crate::bus::{Bus, TopicId};
use crate::runtime::{BehaviorCallbacks, BehaviorConfig, BehaviorHandle, Runtime, RuntimeError};
use crate::world::{command_topic, pose_topic, MotionCommand, SimWorld};

pub const TAKE_OFF: &str = "TAKE_OFF";
pub const LAND: &str = "LAND";
pub const WAIT: &str = "WAIT";
pub const SELF_LOCALIZE: &str = "SELF_LOCALIZE_WITH_GROUND_TRUTH";
pub const HOVER: &str = "KEEP_HOVERING_WITH_PID_CONTROL";
pub const ROTATE: &str = "ROTATE_WITH_PID_CONTROL";
pub const FOLLOW_PATH: &str = "FOLLOW_PATH";
pub const GENERATE_PATH: &str = "GENERATE_PATH_WITH_OCCUPANCY_GRID";

pub const ALL_BEHAVIORS: [&str; 8] = [
    TAKE_OFF,
    LAND,
    WAIT,
    SELF_LOCALIZE,
    HOVER,
    ROTATE,
    FOLLOW_PATH,
    GENERATE_PATH,
];

/// Behaviors that command motion and so exclude each other.
pub const MOTION_GROUP: [&str; 5] = [TAKE_OFF, LAND, FOLLOW_PATH, HOVER, ROTATE];

pub const PLANNED_PATH_TOPIC: &str = "planning/planned_path";

pub fn planned_path_topic() -> TopicId {
    TopicId::new(PLANNED_PATH_TOPIC).expect("static topic name")
}

/// Behaviors sharing a functionality, registered and measured together.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BehaviorSystem {
    pub name: &'static str,
    pub behaviors: &'static [&'static str],
}

pub const SYSTEMS: [BehaviorSystem; 3] = [
    BehaviorSystem {
        name: "basic_quadrotor_behaviors",
        behaviors: &[TAKE_OFF, LAND, WAIT, SELF_LOCALIZE],
    },
    BehaviorSystem {
        name: "quadrotor_motion_with_pid_control",
        behaviors: &[FOLLOW_PATH, ROTATE, HOVER],
    },
    BehaviorSystem {
        name: "navigation_with_grid",
        behaviors: &[GENERATE_PATH],
    },
];

pub fn system(name: &str) -> Option<&'static BehaviorSystem> {
    SYSTEMS.iter().find(|s| s.name == name)
}

pub fn system_of(behavior: &str) -> Option<&'static BehaviorSystem> {
    SYSTEMS.iter().find(|s| s.behaviors.contains(&behavior))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlannerKind {
    /// Answers at the first poll; keeps virtual runs reproducible.
    #[default]
    Inline,
    Threaded,
}

#[derive(Debug, Clone, Default)]
pub struct CatalogOptions {
    pub gains: PidGains,
    pub thresholds: Thresholds,
    pub retry: RetryPolicy,
    pub planner: PlannerKind,
    /// Per-behavior execution-frequency overrides, in Hz.
    pub frequencies: Vec<(String, f64)>,
}

/// A behavior ready to be registered.
pub struct CatalogEntry {
    pub config: BehaviorConfig,
    pub callbacks: Box<dyn BehaviorCallbacks>,
}

impl CatalogEntry {
    pub fn new(config: BehaviorConfig, callbacks: impl BehaviorCallbacks + 'static) -> Self {
        Self {
            config,
            callbacks: Box::new(callbacks),
        }
    }

    pub fn register(self, runtime: &mut Runtime) -> Result<BehaviorHandle, RuntimeError> {
        runtime.register(self.config, self.callbacks)
    }
}

pub fn build(name: &str, world: &Arc<SimWorld>, opts: &CatalogOptions) -> Option<CatalogEntry> {
    let (g, t) = (opts.gains, opts.thresholds);
    let mut entry = match name {
        TAKE_OFF => take_off(world, g, t),
        LAND => land(world, t),
        WAIT => wait(),
        SELF_LOCALIZE => self_localize(t),
        HOVER => hover(world, g, t),
        ROTATE => rotate(world, g, t),
        FOLLOW_PATH => follow_path(world, g, t),
        GENERATE_PATH => {
            let backend: Box<dyn PlannerBackend> = match opts.planner {
                PlannerKind::Inline => Box::<InlineBackend>::default(),
                PlannerKind::Threaded => Box::<ThreadedBackend>::default(),
            };
            generate_path(world, opts.retry, backend)
        }
        _ => return None,
    };
    if let Some((_, hz)) = opts.frequencies.iter().find(|(b, _)| b == name) {
        entry.config.execution_frequency_hz = *hz;
    }
    Some(entry)
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("unknown behavior system `{0}`")]
    UnknownSystem(String),
    #[error("invalid PID gains: {0}")]
    Gains(#[from] pid::InvalidGains),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
}

/// Registers every behavior of the named system.
pub fn register_system(
    runtime: &mut Runtime,
    system_name: &str,
    world: &Arc<SimWorld>,
    opts: &CatalogOptions,
) -> Result<Vec<BehaviorHandle>, CatalogError> {
    opts.gains.validate()?;
    let sys = system(system_name).ok_or_else(|| CatalogError::UnknownSystem(system_name.into()))?;
    sys.behaviors
        .iter()
        .map(|b| {
            build(b, world, opts)
                .expect("system members are catalog behaviors")
                .register(runtime)
                .map_err(CatalogError::from)
        })
        .collect()
}

pub fn register_all(
    runtime: &mut Runtime,
    world: &Arc<SimWorld>,
    opts: &CatalogOptions,
) -> Result<Vec<BehaviorHandle>, CatalogError> {
    let mut out = Vec::new();
    for s in SYSTEMS {
        out.extend(register_system(runtime, s.name, world, opts)?);
    }
    Ok(out)
}

/// Publishes motion commands for the world to pick up.
struct Actuator {
    topic: TopicId,
}

impl Actuator {
    fn new() -> Self {
        Self {
            topic: command_topic(),
        }
    }

    fn send(&self, bus: &Bus, cmd: MotionCommand) {
        if let Err(e) = bus.publish(&self.topic, cmd.to_value()) {
            log::warn!("cannot publish motion command: {e}");
        }
    }
}

fn pose_heartbeat(t: &Thresholds) -> Heartbeat {
    Heartbeat::new(pose_topic(), t.staleness_window)
}

/// Time step between consecutive ticks of one activation.
#[derive(Debug, Default)]
struct TickDt {
    last_ns: Option<u64>,
}

impl TickDt {
    const FIRST: f64 = 0.01;

    fn reset(&mut self) {
        self.last_ns = None;
    }

    fn next(&mut self, now_ns: u64) -> f64 {
        let dt = match self.last_ns {
            Some(last) if now_ns > last => (now_ns - last) as f64 / 1e9,
            _ => Self::FIRST,
        };
        self.last_ns = Some(now_ns);
        dt
    }
}
