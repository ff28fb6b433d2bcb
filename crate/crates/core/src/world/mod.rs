//! Kinematic quadrotor world: a velocity-commanded point mass with a
//! flight phase, plus a static occupancy grid.
//!
//! The world reads commands from `actuation/motion_command` and publishes
//! ground truth on `self_localization/pose` every step. All access goes
//! through one mutex; the mission stepper decides when to step.

mod grid;

pub use grid::{Cell, CellState, GridError, OccupancyGrid, DEFAULT_RESOLUTION};

use std::f64::consts::PI;
use std::sync::{Arc, Mutex, MutexGuard};

use log::warn;
use thiserror::Error;

use crate::bus::{Bus, Subscription, TopicId, Value};

pub const POSE_TOPIC: &str = "self_localization/pose";
pub const COMMAND_TOPIC: &str = "actuation/motion_command";
pub const GRID_TOPIC: &str = "mapping/occupancy_grid";

pub const DEFAULT_DT: f64 = 0.01;
pub const MAX_DT: f64 = 0.1;

pub fn pose_topic() -> TopicId {
    TopicId::new(POSE_TOPIC).expect("static topic name")
}

pub fn command_topic() -> TopicId {
    TopicId::new(COMMAND_TOPIC).expect("static topic name")
}

pub fn grid_topic() -> TopicId {
    TopicId::new(GRID_TOPIC).expect("static topic name")
}

/// Wraps an angle into (-π, π].
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a % (2.0 * PI);
    if r <= -PI {
        r += 2.0 * PI;
    } else if r > PI {
        r -= 2.0 * PI;
    }
    r
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("motion command has non-finite fields")]
    NonFiniteCommand,
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlightPhase {
    Landed,
    Flying,
}

impl FlightPhase {
    pub fn as_str(self) -> &'static str {
        match self {
            FlightPhase::Landed => "LANDED",
            FlightPhase::Flying => "FLYING",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldState {
    pub pose: Pose,
    pub velocity: [f64; 3],
    pub yaw_rate: f64,
    pub phase: FlightPhase,
    /// Simulated seconds since the world was created.
    pub time: f64,
}

impl WorldState {
    pub fn initial() -> Self {
        Self {
            pose: Pose::default(),
            velocity: [0.0; 3],
            yaw_rate: 0.0,
            phase: FlightPhase::Landed,
            time: 0.0,
        }
    }

    pub fn is_flying(&self) -> bool {
        self.phase == FlightPhase::Flying
    }

    /// Payload of `self_localization/pose`.
    pub fn to_value(&self) -> Value {
        let p = &self.pose;
        Value::map([
            ("x", p.x.into()),
            ("y", p.y.into()),
            ("z", p.z.into()),
            ("yaw", p.yaw.into()),
            ("vx", self.velocity[0].into()),
            ("vy", self.velocity[1].into()),
            ("vz", self.velocity[2].into()),
            ("yaw_rate", self.yaw_rate.into()),
            ("phase", self.phase.as_str().into()),
            ("time", self.time.into()),
        ])
    }

    pub fn from_value(v: &Value) -> Option<Self> {
        let f = |k| v.f64_field(k);
        let phase = match v.str_field("phase")? {
            "LANDED" => FlightPhase::Landed,
            "FLYING" => FlightPhase::Flying,
            _ => return None,
        };
        Some(Self {
            pose: Pose {
                x: f("x")?,
                y: f("y")?,
                z: f("z")?,
                yaw: f("yaw")?,
            },
            velocity: [f("vx")?, f("vy")?, f("vz")?],
            yaw_rate: f("yaw_rate")?,
            phase,
            time: f("time")?,
        })
    }
}

/// Target velocity in the world frame plus yaw rate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MotionCommand {
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
    pub yaw_rate: f64,
}

impl MotionCommand {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn velocity(vx: f64, vy: f64, vz: f64) -> Self {
        Self {
            vx,
            vy,
            vz,
            yaw_rate: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.vx, self.vy, self.vz, self.yaw_rate]
            .iter()
            .all(|f| f.is_finite())
    }

    pub fn speed(&self) -> f64 {
        (self.vx * self.vx + self.vy * self.vy + self.vz * self.vz).sqrt()
    }

    pub fn to_value(&self) -> Value {
        Value::map([
            ("vx", self.vx.into()),
            ("vy", self.vy.into()),
            ("vz", self.vz.into()),
            ("yaw_rate", self.yaw_rate.into()),
        ])
    }

    pub fn from_value(v: &Value) -> Option<Self> {
        Some(Self {
            vx: v.f64_field("vx")?,
            vy: v.f64_field("vy")?,
            vz: v.f64_field("vz")?,
            yaw_rate: v.f64_field("yaw_rate").unwrap_or(0.0),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionLimits {
    /// Bound on the norm of the velocity vector, m/s.
    pub max_speed: f64,
    pub max_yaw_rate: f64,
}

impl Default for MotionLimits {
    fn default() -> Self {
        Self {
            max_speed: 2.0,
            max_yaw_rate: 2.0,
        }
    }
}

impl MotionLimits {
    pub fn clamp(&self, cmd: MotionCommand) -> MotionCommand {
        let speed = cmd.speed();
        let scale = if speed > self.max_speed {
            self.max_speed / speed
        } else {
            1.0
        };
        MotionCommand {
            vx: cmd.vx * scale,
            vy: cmd.vy * scale,
            vz: cmd.vz * scale,
            yaw_rate: cmd.yaw_rate.clamp(-self.max_yaw_rate, self.max_yaw_rate),
        }
    }
}

struct Inner {
    state: WorldState,
    command: MotionCommand,
    invert_commands: bool,
    grid: Option<OccupancyGrid>,
}

/// The simulated world. Shared as `Arc<SimWorld>`.
pub struct SimWorld {
    bus: Bus,
    limits: MotionLimits,
    pose_topic: TopicId,
    grid_topic: TopicId,
    commands: Subscription,
    inner: Mutex<Inner>,
}

impl SimWorld {
    pub fn new(bus: &Bus) -> Arc<Self> {
        Self::with_limits(bus, MotionLimits::default())
    }

    pub fn with_limits(bus: &Bus, limits: MotionLimits) -> Arc<Self> {
        Arc::new(Self {
            bus: bus.clone(),
            limits,
            pose_topic: pose_topic(),
            grid_topic: grid_topic(),
            commands: bus.subscribe(&command_topic(), crate::bus::DEFAULT_QUEUE_CAPACITY),
            inner: Mutex::new(Inner {
                state: WorldState::initial(),
                command: MotionCommand::zero(),
                invert_commands: false,
                grid: None,
            }),
        })
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn limits(&self) -> MotionLimits {
        self.limits
    }

    pub fn snapshot(&self) -> WorldState {
        self.lock().state
    }

    pub fn command(&self) -> MotionCommand {
        self.lock().command
    }

    /// Stores the clamped command; non-finite commands are rejected and the
    /// previous one is kept.
    pub fn set_command(&self, cmd: MotionCommand) -> Result<MotionCommand, WorldError> {
        if !cmd.is_finite() {
            return Err(WorldError::NonFiniteCommand);
        }
        let clamped = self.limits.clamp(cmd);
        self.lock().command = clamped;
        Ok(clamped)
    }

    /// Advances the world by `dt` seconds (0 < dt ≤ 0.1) and publishes the
    /// new pose.
    pub fn step(&self, dt: f64) -> WorldState {
        assert!(
            dt > 0.0 && dt <= MAX_DT,
            "step dt must be in (0, {MAX_DT}], got {dt}"
        );
        let mut inner = self.lock();
        for envelope in self.commands.drain() {
            match MotionCommand::from_value(&envelope.payload).filter(MotionCommand::is_finite) {
                Some(cmd) => inner.command = self.limits.clamp(cmd),
                None => warn!("ignoring malformed motion command {}", envelope.payload),
            }
        }
        let mut cmd = inner.command;
        if inner.invert_commands {
            cmd = MotionCommand {
                vx: -cmd.vx,
                vy: -cmd.vy,
                vz: -cmd.vz,
                yaw_rate: -cmd.yaw_rate,
            };
        }
        let s = &mut inner.state;
        s.time += dt;
        if s.phase == FlightPhase::Landed && cmd.vz > 0.0 {
            s.phase = FlightPhase::Flying;
        }
        if s.phase == FlightPhase::Flying {
            let z = s.pose.z + cmd.vz * dt;
            if cmd.vz < 0.0 && z <= 0.0 {
                land(s);
            } else {
                s.pose.x += cmd.vx * dt;
                s.pose.y += cmd.vy * dt;
                s.pose.z = z.max(0.0);
                s.pose.yaw = normalize_angle(s.pose.yaw + cmd.yaw_rate * dt);
                s.velocity = [cmd.vx, cmd.vy, cmd.vz];
                s.yaw_rate = cmd.yaw_rate;
            }
        }
        let state = *s;
        drop(inner);
        if let Err(e) = self.bus.publish(&self.pose_topic, state.to_value()) {
            warn!("cannot publish pose: {e}");
        }
        state
    }

    /// Fault injection: the actuators apply the negated command.
    pub fn invert_commands(&self, on: bool) {
        self.lock().invert_commands = on;
    }

    /// Fault injection: displaces the robot instantly (z stays ≥ 0).
    pub fn push(&self, dx: f64, dy: f64, dz: f64) {
        let mut inner = self.lock();
        let s = &mut inner.state;
        if s.phase == FlightPhase::Flying {
            s.pose.x += dx;
            s.pose.y += dy;
            s.pose.z = (s.pose.z + dz).max(0.0);
        }
    }

    /// Fault injection: puts the robot on the ground where it is.
    pub fn force_land(&self) {
        land(&mut self.lock().state);
    }

    /// Parses grid text, stores it and publishes it once.
    pub fn load_grid(&self, text: &str) -> Result<OccupancyGrid, WorldError> {
        let grid = OccupancyGrid::parse(text)?;
        self.set_grid(grid.clone());
        Ok(grid)
    }

    pub fn set_grid(&self, grid: OccupancyGrid) {
        let payload = grid.to_value();
        self.lock().grid = Some(grid);
        if let Err(e) = self.bus.publish(&self.grid_topic, payload) {
            warn!("cannot publish occupancy grid: {e}");
        }
    }

    pub fn grid(&self) -> Option<OccupancyGrid> {
        self.lock().grid.clone()
    }
}

fn land(s: &mut WorldState) {
    s.phase = FlightPhase::Landed;
    s.pose.z = 0.0;
    s.velocity = [0.0; 3];
    s.yaw_rate = 0.0;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::VirtualClock;
    use proptest::prelude::*;

    fn world() -> (Bus, Arc<SimWorld>) {
        let bus = Bus::new(Arc::new(VirtualClock::new()));
        let w = SimWorld::new(&bus);
        (bus, w)
    }

    fn flying_world() -> (Bus, Arc<SimWorld>) {
        let (bus, w) = world();
        w.set_command(MotionCommand::velocity(0.0, 0.0, 1.0))
            .unwrap();
        w.step(0.01);
        w.set_command(MotionCommand::zero()).unwrap();
        (bus, w)
    }

    #[test]
    fn initial_state_is_landed_at_origin() {
        let (_, w) = world();
        let s = w.snapshot();
        assert_eq!(s.phase, FlightPhase::Landed);
        assert_eq!(s.pose, Pose::default());
        assert_eq!(w.snapshot(), s);
    }

    #[test]
    fn zero_command_keeps_pose() {
        let (_, w) = flying_world();
        let before = w.snapshot().pose;
        assert_eq!(w.step(0.01).pose, before);
    }

    #[test]
    fn climb_from_ground() {
        let (_, w) = world();
        w.set_command(MotionCommand::velocity(0.0, 0.0, 1.0))
            .unwrap();
        let s = w.step(0.05);
        assert_eq!(s.phase, FlightPhase::Flying);
        assert!((s.pose.z - 0.05).abs() < 1e-12);

        let (_, w) = flying_world();
        let z0 = w.snapshot().pose.z;
        w.set_command(MotionCommand::velocity(0.0, 0.0, 1.0))
            .unwrap();
        assert!((w.step(0.1).pose.z - z0 - 0.1).abs() < 1e-12);
    }

    #[test]
    fn half_second_climb_is_half_meter() {
        // A step of 0.5 s is out of range; five 0.1 s steps integrate the same way.
        let (_, w) = world();
        w.set_command(MotionCommand::velocity(0.0, 0.0, 1.0))
            .unwrap();
        for _ in 0..5 {
            w.step(0.1);
        }
        assert!((w.snapshot().pose.z - 0.5).abs() < 1e-12);
    }

    #[test]
    fn iterated_integration_matches_closed_form() {
        let (_, w) = flying_world();
        w.set_command(MotionCommand::velocity(1.0, 0.0, 0.0))
            .unwrap();
        let x0 = w.snapshot().pose.x;
        for _ in 0..100 {
            w.step(0.01);
        }
        assert!((w.snapshot().pose.x - x0 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn commands_are_clamped_and_validated() {
        let (_, w) = world();
        assert_eq!(
            w.set_command(MotionCommand::velocity(0.5, 0.0, 0.0))
                .unwrap()
                .vx,
            0.5
        );
        assert_eq!(
            w.set_command(MotionCommand::velocity(5.0, 0.0, 0.0))
                .unwrap()
                .vx,
            2.0
        );
        assert_eq!(
            w.set_command(MotionCommand::velocity(f64::NAN, 0.0, 0.0)),
            Err(WorldError::NonFiniteCommand)
        );
        assert_eq!(w.command().vx, 2.0);
        let c = MotionLimits::default().clamp(MotionCommand {
            yaw_rate: -9.0,
            ..MotionCommand::zero()
        });
        assert_eq!(c.yaw_rate, -2.0);
    }

    #[test]
    fn landed_world_ignores_horizontal_commands() {
        let (_, w) = world();
        w.set_command(MotionCommand::velocity(1.0, 1.0, 0.0))
            .unwrap();
        let s = w.step(0.01);
        assert_eq!(s.phase, FlightPhase::Landed);
        assert_eq!(s.pose, Pose::default());
        assert_eq!(s.velocity, [0.0; 3]);
    }

    #[test]
    fn descending_through_ground_lands() {
        let (_, w) = flying_world();
        w.set_command(MotionCommand::velocity(0.3, 0.0, -1.0))
            .unwrap();
        let s = w.step(0.05);
        assert_eq!(s.phase, FlightPhase::Landed);
        assert_eq!(s.pose.z, 0.0);
        assert_eq!(s.velocity, [0.0; 3]);
    }

    #[test]
    fn commands_arrive_over_the_bus() {
        let (bus, w) = world();
        let poses = bus.subscribe(&pose_topic(), 8);
        bus.publish(
            &command_topic(),
            MotionCommand::velocity(0.0, 0.0, 0.2).to_value(),
        )
        .unwrap();
        bus.publish(
            &command_topic(),
            MotionCommand::velocity(0.0, 0.0, 1.0).to_value(),
        )
        .unwrap();
        let s = w.step(0.01);
        assert!((s.pose.z - 0.01).abs() < 1e-12);
        let published = WorldState::from_value(&poses.try_recv().unwrap().payload).unwrap();
        assert_eq!(published, s);
    }

    #[test]
    fn faults() {
        let (_, w) = flying_world();
        w.invert_commands(true);
        w.set_command(MotionCommand::velocity(1.0, 0.0, 0.0))
            .unwrap();
        let x0 = w.snapshot().pose.x;
        assert!(w.step(0.1).pose.x < x0);
        w.invert_commands(false);
        w.push(5.0, 0.0, 0.0);
        assert!((w.snapshot().pose.x - x0 - 4.9).abs() < 1e-12);
        w.force_land();
        let s = w.snapshot();
        assert_eq!(
            (s.phase, s.pose.z, s.velocity),
            (FlightPhase::Landed, 0.0, [0.0; 3])
        );
    }

    #[test]
    fn grid_is_published_on_load() {
        let (bus, w) = world();
        let grids = bus.subscribe(&grid_topic(), 4);
        let g = w.load_grid("..\n.#\n").unwrap();
        let msg = grids.try_recv().unwrap();
        assert_eq!(OccupancyGrid::from_value(&msg.payload).unwrap(), g);
        assert_eq!(w.grid(), Some(g));
        assert!(matches!(
            w.load_grid("..\n."),
            Err(WorldError::Grid(GridError::RaggedRows { .. }))
        ));
    }

    #[test]
    fn angle_normalization() {
        assert_eq!(normalize_angle(PI), PI);
        assert!((normalize_angle(-PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((normalize_angle(0.1 + 4.0 * PI) - 0.1).abs() < 1e-9);
    }

    fn command() -> impl Strategy<Value = MotionCommand> {
        (-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64).prop_map(
            |(vx, vy, vz, yaw_rate)| MotionCommand {
                vx,
                vy,
                vz,
                yaw_rate,
            },
        )
    }

    proptest! {
        #[test]
        fn trajectories_are_deterministic_and_consistent(
            script in prop::collection::vec((command(), 0.001..0.1f64), 1..80)
        ) {
            let (_, a) = world();
            let (_, b) = world();
            let max = a.limits().max_speed;
            for (cmd, dt) in script {
                a.set_command(cmd).unwrap();
                b.set_command(cmd).unwrap();
                let before = a.snapshot().pose;
                let sa = a.step(dt);
                let sb = b.step(dt);
                prop_assert_eq!(sa, sb);
                if sa.phase == FlightPhase::Landed {
                    prop_assert_eq!(sa.pose.z, 0.0);
                    prop_assert_eq!(sa.velocity, [0.0; 3]);
                }
                let d = ((sa.pose.x - before.x).powi(2)
                    + (sa.pose.y - before.y).powi(2)
                    + (sa.pose.z - before.z).powi(2))
                .sqrt();
                prop_assert!(d <= max * dt + 1e-12);
                prop_assert!(sa.pose.yaw > -PI && sa.pose.yaw <= PI);
            }
        }
    }
}
