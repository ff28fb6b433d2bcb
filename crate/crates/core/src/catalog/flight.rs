use std::sync::Arc;
use std::time::Duration;

use crate::runtime::{
    BehaviorCallbacks, BehaviorConfig, CheckPhase, Context, ParamSchema, ParamType,
    SituationAssessment,
};
use crate::world::{FlightPhase, MotionCommand, SimWorld};

use super::monitors::{DivergenceMonitor, Heartbeat, Thresholds};
use super::pid::{Pid, PidGains};
use super::{pose_heartbeat, Actuator, CatalogEntry, TickDt, LAND, TAKE_OFF, WAIT};

pub const DEFAULT_ALTITUDE: f64 = 1.0;
pub const LAND_SPEED: f64 = 0.5;
pub const DEFAULT_WAIT: f64 = 1.0;

fn require_phase(ctx: &Context, world: &SimWorld, phase: FlightPhase) -> SituationAssessment {
    if ctx.phase == CheckPhase::Monitoring {
        return SituationAssessment::optimal();
    }
    let now = world.snapshot().phase;
    if now == phase {
        SituationAssessment::optimal()
    } else {
        SituationAssessment::unsuitable(format!(
            "robot must be {}, it is {}",
            phase.as_str().to_lowercase(),
            now.as_str().to_lowercase()
        ))
    }
}

/// Climbs to `altitude` (default 1 m) with a PID on the height error.
pub struct TakeOff {
    world: Arc<SimWorld>,
    thresholds: Thresholds,
    pid: Pid,
    target: f64,
    actuator: Actuator,
    heartbeat: Heartbeat,
    progress: DivergenceMonitor,
    dt: TickDt,
}

pub fn take_off(world: &Arc<SimWorld>, gains: PidGains, thresholds: Thresholds) -> CatalogEntry {
    CatalogEntry::new(
        BehaviorConfig::goal_based(TAKE_OFF, Duration::from_secs(30))
            .with_schema(ParamSchema::new().optional("altitude", ParamType::Real)),
        TakeOff {
            world: world.clone(),
            thresholds,
            pid: Pid::new(gains),
            target: DEFAULT_ALTITUDE,
            actuator: Actuator::new(),
            heartbeat: pose_heartbeat(&thresholds),
            progress: DivergenceMonitor::new(thresholds.progress_window),
            dt: TickDt::default(),
        },
    )
}

impl TakeOff {
    fn error(&self) -> f64 {
        (self.target - self.world.snapshot().pose.z).abs()
    }
}

impl BehaviorCallbacks for TakeOff {
    fn on_activate(&mut self, ctx: &Context) -> Result<(), String> {
        self.target = ctx.params.get_f64("altitude").unwrap_or(DEFAULT_ALTITUDE);
        if self.target <= 0.0 {
            return Err(format!("altitude must be positive, got {}", self.target));
        }
        self.pid.reset();
        self.progress.reset();
        self.dt.reset();
        self.heartbeat.start(ctx.bus, ctx.now_us());
        Ok(())
    }

    fn on_execute(&mut self, ctx: &Context) {
        let z = self.world.snapshot().pose.z;
        let vz = self.pid.update(self.target - z, self.dt.next(ctx.now_ns));
        self.actuator
            .send(ctx.bus, MotionCommand::velocity(0.0, 0.0, vz));
    }

    fn on_deactivate(&mut self, ctx: &Context) {
        self.actuator.send(ctx.bus, MotionCommand::zero());
        self.heartbeat.stop();
    }

    fn check_situation(&self, ctx: &Context) -> SituationAssessment {
        require_phase(ctx, &self.world, FlightPhase::Landed)
    }

    fn check_goal(&mut self, _ctx: &Context) -> bool {
        self.world.snapshot().is_flying() && self.error() < self.thresholds.goal_tolerance
    }

    fn check_progress(&mut self, ctx: &Context) -> Result<(), String> {
        let e = self.error();
        if self.progress.diverging(ctx.now_ns, e) {
            Err(format!("altitude error grew to {e:.2} m"))
        } else {
            Ok(())
        }
    }

    fn check_processes(&mut self, ctx: &Context) -> Result<(), String> {
        self.heartbeat.check(ctx.now_us())
    }
}

/// Descends at a constant rate until touchdown.
pub struct Land {
    world: Arc<SimWorld>,
    actuator: Actuator,
    heartbeat: Heartbeat,
    progress: DivergenceMonitor,
}

pub fn land(world: &Arc<SimWorld>, thresholds: Thresholds) -> CatalogEntry {
    CatalogEntry::new(
        BehaviorConfig::goal_based(LAND, Duration::from_secs(30)),
        Land {
            world: world.clone(),
            actuator: Actuator::new(),
            heartbeat: pose_heartbeat(&thresholds),
            progress: DivergenceMonitor::new(thresholds.progress_window),
        },
    )
}

impl BehaviorCallbacks for Land {
    fn on_activate(&mut self, ctx: &Context) -> Result<(), String> {
        self.progress.reset();
        self.heartbeat.start(ctx.bus, ctx.now_us());
        Ok(())
    }

    fn on_execute(&mut self, ctx: &Context) {
        self.actuator
            .send(ctx.bus, MotionCommand::velocity(0.0, 0.0, -LAND_SPEED));
    }

    fn on_deactivate(&mut self, ctx: &Context) {
        self.actuator.send(ctx.bus, MotionCommand::zero());
        self.heartbeat.stop();
    }

    fn check_situation(&self, ctx: &Context) -> SituationAssessment {
        require_phase(ctx, &self.world, FlightPhase::Flying)
    }

    fn check_goal(&mut self, _ctx: &Context) -> bool {
        self.world.snapshot().phase == FlightPhase::Landed
    }

    fn check_progress(&mut self, ctx: &Context) -> Result<(), String> {
        let z = self.world.snapshot().pose.z;
        if self.progress.diverging(ctx.now_ns, z) {
            Err(format!("climbing instead of descending, z = {z:.2} m"))
        } else {
            Ok(())
        }
    }

    fn check_processes(&mut self, ctx: &Context) -> Result<(), String> {
        self.heartbeat.check(ctx.now_us())
    }
}

/// Does nothing for `duration` seconds (default 1 s).
pub struct Wait {
    duration: Duration,
}

pub fn wait() -> CatalogEntry {
    CatalogEntry::new(
        BehaviorConfig::goal_based(WAIT, Duration::from_secs(600))
            .with_schema(ParamSchema::new().optional("duration", ParamType::Real)),
        Wait {
            duration: Duration::ZERO,
        },
    )
}

impl BehaviorCallbacks for Wait {
    fn on_activate(&mut self, ctx: &Context) -> Result<(), String> {
        let secs = ctx.params.get_f64("duration").unwrap_or(DEFAULT_WAIT);
        if secs <= 0.0 {
            return Err(format!("duration must be positive, got {secs}"));
        }
        self.duration = Duration::from_secs_f64(secs);
        Ok(())
    }

    fn check_goal(&mut self, ctx: &Context) -> bool {
        ctx.elapsed >= self.duration
    }
}
