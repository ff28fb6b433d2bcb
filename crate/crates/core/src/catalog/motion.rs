use std::sync::Arc;
use std::time::Duration;

use crate::bus::Subscription;
use crate::runtime::{
    parse_waypoints, BehaviorCallbacks, BehaviorConfig, Context, ParamSchema, ParamType,
    SituationAssessment,
};
use crate::world::{normalize_angle, MotionCommand, Pose, SimWorld};

use super::monitors::{DivergenceMonitor, ExceedanceMonitor, Heartbeat, Thresholds};
use super::pid::{Pid, PidGains};
use super::planner::PlannedPath;
use super::{
    planned_path_topic, pose_heartbeat, Actuator, CatalogEntry, TickDt, FOLLOW_PATH, HOVER, ROTATE,
};

fn require_flying(world: &SimWorld) -> SituationAssessment {
    if world.snapshot().is_flying() {
        SituationAssessment::optimal()
    } else {
        SituationAssessment::unsuitable("robot is not flying")
    }
}

fn distance(a: &Pose, b: &Pose) -> f64 {
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2) + (a.z - b.z).powi(2)).sqrt()
}

/// Per-axis position controller.
#[derive(Debug, Clone, Copy)]
struct PositionPid {
    axes: [Pid; 3],
}

impl PositionPid {
    fn new(gains: PidGains) -> Self {
        Self {
            axes: [Pid::new(gains); 3],
        }
    }

    fn reset(&mut self) {
        self.axes.iter_mut().for_each(Pid::reset);
    }

    fn command(&mut self, at: &Pose, target: &Pose, dt: f64) -> MotionCommand {
        let [x, y, z] = &mut self.axes;
        MotionCommand::velocity(
            x.update(target.x - at.x, dt),
            y.update(target.y - at.y, dt),
            z.update(target.z - at.z, dt),
        )
    }
}

/// Holds the pose captured at activation.
pub struct Hover {
    world: Arc<SimWorld>,
    hold: Pose,
    position: PositionPid,
    yaw: Pid,
    actuator: Actuator,
    heartbeat: Heartbeat,
    drift: ExceedanceMonitor,
    dt: TickDt,
}

pub fn hover(world: &Arc<SimWorld>, gains: PidGains, thresholds: Thresholds) -> CatalogEntry {
    CatalogEntry::new(
        BehaviorConfig::recurrent(HOVER),
        Hover {
            world: world.clone(),
            hold: Pose::default(),
            position: PositionPid::new(gains),
            yaw: Pid::new(gains),
            actuator: Actuator::new(),
            heartbeat: pose_heartbeat(&thresholds),
            drift: ExceedanceMonitor::new(thresholds.progress_epsilon, thresholds.progress_window),
            dt: TickDt::default(),
        },
    )
}

impl BehaviorCallbacks for Hover {
    fn on_activate(&mut self, ctx: &Context) -> Result<(), String> {
        self.hold = self.world.snapshot().pose;
        self.position.reset();
        self.yaw.reset();
        self.drift.reset();
        self.dt.reset();
        self.heartbeat.start(ctx.bus, ctx.now_us());
        Ok(())
    }

    fn on_execute(&mut self, ctx: &Context) {
        let at = self.world.snapshot().pose;
        let dt = self.dt.next(ctx.now_ns);
        let mut cmd = self.position.command(&at, &self.hold, dt);
        cmd.yaw_rate = self.yaw.update(normalize_angle(self.hold.yaw - at.yaw), dt);
        self.actuator.send(ctx.bus, cmd);
    }

    fn on_deactivate(&mut self, ctx: &Context) {
        self.actuator.send(ctx.bus, MotionCommand::zero());
        self.heartbeat.stop();
    }

    fn check_situation(&self, _ctx: &Context) -> SituationAssessment {
        require_flying(&self.world)
    }

    fn check_progress(&mut self, ctx: &Context) -> Result<(), String> {
        let e = distance(&self.world.snapshot().pose, &self.hold);
        if self.drift.exceeded(ctx.now_ns, e) {
            Err(format!("{e:.2} m away from the hold point"))
        } else {
            Ok(())
        }
    }

    fn check_processes(&mut self, ctx: &Context) -> Result<(), String> {
        self.heartbeat.check(ctx.now_us())
    }
}

/// Turns by `angle` degrees relative to the yaw at activation.
pub struct Rotate {
    world: Arc<SimWorld>,
    thresholds: Thresholds,
    target: f64,
    pid: Pid,
    actuator: Actuator,
    heartbeat: Heartbeat,
    progress: DivergenceMonitor,
    dt: TickDt,
}

pub fn rotate(world: &Arc<SimWorld>, gains: PidGains, thresholds: Thresholds) -> CatalogEntry {
    CatalogEntry::new(
        BehaviorConfig::goal_based(ROTATE, Duration::from_secs(30))
            .with_schema(ParamSchema::new().required("angle", ParamType::Real)),
        Rotate {
            world: world.clone(),
            thresholds,
            target: 0.0,
            pid: Pid::new(gains),
            actuator: Actuator::new(),
            heartbeat: pose_heartbeat(&thresholds),
            progress: DivergenceMonitor::new(thresholds.progress_window),
            dt: TickDt::default(),
        },
    )
}

impl Rotate {
    fn error(&self) -> f64 {
        normalize_angle(self.target - self.world.snapshot().pose.yaw)
    }
}

impl BehaviorCallbacks for Rotate {
    fn on_activate(&mut self, ctx: &Context) -> Result<(), String> {
        let degrees = ctx.params.get_f64("angle").ok_or("missing angle")?;
        self.target = normalize_angle(self.world.snapshot().pose.yaw + degrees.to_radians());
        self.pid.reset();
        self.progress.reset();
        self.dt.reset();
        self.heartbeat.start(ctx.bus, ctx.now_us());
        Ok(())
    }

    fn on_execute(&mut self, ctx: &Context) {
        let rate = self.pid.update(self.error(), self.dt.next(ctx.now_ns));
        self.actuator.send(
            ctx.bus,
            MotionCommand {
                yaw_rate: rate,
                ..MotionCommand::zero()
            },
        );
    }

    fn on_deactivate(&mut self, ctx: &Context) {
        self.actuator.send(ctx.bus, MotionCommand::zero());
        self.heartbeat.stop();
    }

    fn check_situation(&self, _ctx: &Context) -> SituationAssessment {
        require_flying(&self.world)
    }

    fn check_goal(&mut self, _ctx: &Context) -> bool {
        self.error().abs() < self.thresholds.yaw_tolerance
    }

    fn check_progress(&mut self, ctx: &Context) -> Result<(), String> {
        let e = self.error().abs();
        if self.progress.diverging(ctx.now_ns, e) {
            Err(format!(
                "turning away from the target, yaw error {e:.2} rad"
            ))
        } else {
            Ok(())
        }
    }

    fn check_processes(&mut self, ctx: &Context) -> Result<(), String> {
        self.heartbeat.check(ctx.now_us())
    }
}

/// Flies through a list of waypoints in order.
///
/// The path comes from the `path` parameter (`x,y[,z];...`, missing z
/// means the current altitude) or, without it, from the newest planned
/// path not yet followed.
pub struct FollowPath {
    world: Arc<SimWorld>,
    thresholds: Thresholds,
    planned: Option<Subscription>,
    pending: Option<PlannedPath>,
    waypoints: Vec<Pose>,
    current: usize,
    position: PositionPid,
    actuator: Actuator,
    heartbeat: Heartbeat,
    progress: DivergenceMonitor,
    dt: TickDt,
}

pub fn follow_path(world: &Arc<SimWorld>, gains: PidGains, thresholds: Thresholds) -> CatalogEntry {
    CatalogEntry::new(
        BehaviorConfig::goal_based(FOLLOW_PATH, Duration::from_secs(300))
            .with_schema(ParamSchema::new().optional("path", ParamType::Waypoints)),
        FollowPath {
            world: world.clone(),
            thresholds,
            planned: None,
            pending: None,
            waypoints: Vec::new(),
            current: 0,
            position: PositionPid::new(gains),
            actuator: Actuator::new(),
            heartbeat: pose_heartbeat(&thresholds),
            progress: DivergenceMonitor::new(thresholds.progress_window),
            dt: TickDt::default(),
        },
    )
}

impl FollowPath {
    fn target(&self) -> &Pose {
        &self.waypoints[self.current]
    }

    fn error(&self) -> f64 {
        distance(&self.world.snapshot().pose, self.target())
    }

    fn collect_planned(&mut self) {
        let Some(sub) = &self.planned else { return };
        for envelope in sub.drain() {
            match PlannedPath::from_value(&envelope.payload) {
                Some(p) if !p.waypoints.is_empty() => self.pending = Some(p),
                _ => log::warn!("ignoring malformed planned path"),
            }
        }
    }
}

impl BehaviorCallbacks for FollowPath {
    fn on_configure(&mut self, ctx: &Context) -> Result<(), String> {
        self.planned = Some(ctx.bus.subscribe(&planned_path_topic(), 8));
        Ok(())
    }

    fn on_activate(&mut self, ctx: &Context) -> Result<(), String> {
        self.collect_planned();
        let altitude = self.world.snapshot().pose.z;
        self.waypoints = match ctx.params.get("path").and_then(|p| p.as_str()) {
            Some(text) => parse_waypoints(text)?
                .into_iter()
                .map(|w| Pose {
                    x: w.x,
                    y: w.y,
                    z: w.z.unwrap_or(altitude),
                    yaw: 0.0,
                })
                .collect(),
            None => {
                self.pending
                    .take()
                    .ok_or("no path given and no planned path available")?
                    .waypoints
            }
        };
        self.current = 0;
        self.position.reset();
        self.progress.reset();
        self.dt.reset();
        self.heartbeat.start(ctx.bus, ctx.now_us());
        Ok(())
    }

    fn on_execute(&mut self, ctx: &Context) {
        let at = self.world.snapshot().pose;
        let last = self.waypoints.len() - 1;
        if self.current < last && distance(&at, self.target()) < self.thresholds.waypoint_radius {
            self.current += 1;
            self.position.reset();
            self.progress.reset();
        }
        let target = *self.target();
        let cmd = self
            .position
            .command(&at, &target, self.dt.next(ctx.now_ns));
        self.actuator.send(ctx.bus, cmd);
    }

    fn on_deactivate(&mut self, ctx: &Context) {
        self.actuator.send(ctx.bus, MotionCommand::zero());
        self.heartbeat.stop();
    }

    fn check_situation(&self, _ctx: &Context) -> SituationAssessment {
        require_flying(&self.world)
    }

    fn check_goal(&mut self, _ctx: &Context) -> bool {
        self.current + 1 == self.waypoints.len() && self.error() < self.thresholds.goal_tolerance
    }

    fn check_progress(&mut self, ctx: &Context) -> Result<(), String> {
        let e = self.error();
        if self.progress.diverging(ctx.now_ns, e) {
            Err(format!(
                "moving away from waypoint {} ({e:.2} m)",
                self.current + 1
            ))
        } else {
            Ok(())
        }
    }

    fn check_processes(&mut self, ctx: &Context) -> Result<(), String> {
        self.heartbeat.check(ctx.now_us())
    }
}

/// Waypoint text for the `path` parameter.
pub fn waypoint_text(points: &[(f64, f64, f64)]) -> String {
    points
        .iter()
        .map(|(x, y, z)| format!("{x},{y},{z}"))
        .collect::<Vec<_>>()
        .join(";")
}
