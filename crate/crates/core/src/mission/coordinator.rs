use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

use crate::bus::{Bus, ServiceDispatch, Subscription};
use crate::catalog::{self, CatalogError, CatalogOptions, SYSTEMS};
use crate::clock::{secs_to_ns, Clock, MonotonicClock, VirtualClock, NANOS_PER_MICRO};
use crate::runtime::{
    finish_topic, BehaviorClient, BehaviorConfig, FinishNotice, LoopMode, MetricsRecord, Runtime,
    RuntimeOptions, TerminationCause,
};
use crate::world::{GridError, OccupancyGrid, SimWorld, MAX_DT};

use super::parse::{Directive, Mission, MissionStep, OnFailure, StepMode};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimingMode {
    /// Deterministic stepping: every iteration advances a virtual clock
    /// by `dt` seconds.
    Virtual { dt: f64 },
    /// Behaviors tick on their own threads against the wall clock.
    RealTime { dt: f64 },
}

impl TimingMode {
    pub fn dt(self) -> f64 {
        match self {
            TimingMode::Virtual { dt } | TimingMode::RealTime { dt } => dt,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SessionOptions {
    pub timing: TimingMode,
    /// Time the monitoring checks with the wall clock even when the
    /// mission runs on virtual time.
    pub wall_timing: bool,
    pub systems: Vec<String>,
    pub catalog: CatalogOptions,
    /// Missions still running after this long are aborted.
    pub max_duration: Duration,
}

impl Default for SessionOptions {
    fn default() -> Self {
        Self {
            timing: TimingMode::Virtual { dt: 0.01 },
            wall_timing: false,
            systems: SYSTEMS.iter().map(|s| s.name.to_string()).collect(),
            catalog: CatalogOptions::default(),
            max_duration: Duration::from_secs(3600),
        }
    }
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("time step must be in (0, {MAX_DT}] seconds, got {0}")]
    InvalidDt(f64),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("occupancy grid: {0}")]
    Grid(#[from] GridError),
}

enum SessionClock {
    Virtual(Arc<VirtualClock>),
    Real(Arc<MonotonicClock>),
}

impl SessionClock {
    fn now_ns(&self) -> u64 {
        match self {
            SessionClock::Virtual(c) => c.now_ns(),
            SessionClock::Real(c) => c.now_ns(),
        }
    }
}

/// A simulated vehicle with its behavior systems registered, ready to run
/// missions.
pub struct Session {
    world: Arc<SimWorld>,
    runtime: Runtime,
    clock: SessionClock,
    timing: TimingMode,
    max_duration: Duration,
}

impl Session {
    pub fn new(opts: &SessionOptions) -> Result<Self, SessionError> {
        let dt = opts.timing.dt();
        if !(dt > 0.0 && dt <= MAX_DT) {
            return Err(SessionError::InvalidDt(dt));
        }
        let (clock, clock_dyn, dispatch, mode): (SessionClock, Arc<dyn Clock>, _, _) =
            match opts.timing {
                TimingMode::Virtual { .. } => {
                    let c = Arc::new(VirtualClock::new());
                    (
                        SessionClock::Virtual(c.clone()),
                        c,
                        ServiceDispatch::Inline,
                        LoopMode::Stepped,
                    )
                }
                TimingMode::RealTime { .. } => {
                    let c = Arc::new(MonotonicClock::new());
                    (
                        SessionClock::Real(c.clone()),
                        c,
                        ServiceDispatch::Threaded,
                        LoopMode::Threaded,
                    )
                }
            };
        let bus = Bus::with_dispatch(clock_dyn.clone(), dispatch);
        let mut options = RuntimeOptions::stepped(clock_dyn).with_mode(mode);
        if opts.wall_timing {
            options = options.with_timing(Arc::new(MonotonicClock::new()));
        }
        let world = SimWorld::new(&bus);
        let mut runtime = Runtime::new(bus, options);
        for system in &opts.systems {
            catalog::register_system(&mut runtime, system, &world, &opts.catalog)?;
        }
        Ok(Self {
            world,
            runtime,
            clock,
            timing: opts.timing,
            max_duration: opts.max_duration,
        })
    }

    pub fn world(&self) -> &Arc<SimWorld> {
        &self.world
    }

    pub fn runtime(&self) -> &Runtime {
        &self.runtime
    }

    pub fn bus(&self) -> &Bus {
        self.runtime.bus()
    }

    pub fn configs(&self) -> Vec<BehaviorConfig> {
        self.runtime
            .behaviors()
            .iter()
            .map(|b| b.config().clone())
            .collect()
    }

    /// Publishes the map. Behaviors only see grids published after they
    /// were registered.
    pub fn load_grid(&self, text: &str) -> Result<(), SessionError> {
        self.world.set_grid(OccupancyGrid::parse(text)?);
        Ok(())
    }

    /// Runs `mission` to completion or abort. Every event is passed to
    /// `sink` as it happens; `abort` is checked once per step.
    pub fn run(
        &self,
        mission: &Mission,
        sink: &mut dyn FnMut(&Event),
        abort: &AtomicBool,
    ) -> MissionReport {
        self.runtime.reset_metrics();
        let mut c = Coordinator::new(self, mission, sink);
        let dt = self.timing.dt();
        let dt_ns = secs_to_ns(dt);
        let limit_ns = self.max_duration.as_nanos() as u64;
        loop {
            let now = self.clock.now_ns();
            c.now_ns = now;
            c.drain_notices();
            if abort.load(Ordering::SeqCst) {
                c.begin_stop(Some("abort requested".into()));
            } else if now - c.start_ns >= limit_ns {
                c.begin_stop(Some(format!(
                    "mission exceeded {} s",
                    self.max_duration.as_secs_f64()
                )));
            }
            c.advance();
            if c.phase == Phase::Done {
                break;
            }
            self.runtime.poll(now);
            match &self.clock {
                SessionClock::Virtual(v) => v.advance_ns(dt_ns),
                SessionClock::Real(r) => r.sleep_until(c.start_ns + (c.ticks + 1) * dt_ns),
            }
            self.world.step(dt);
            c.ticks += 1;
        }
        let duration_s = match self.timing {
            TimingMode::Virtual { dt } => c.ticks as f64 * dt,
            TimingMode::RealTime { .. } => (self.clock.now_ns() - c.start_ns) as f64 / 1e9,
        };
        MissionReport {
            outcome: c.outcome,
            abort_reason: c.abort_reason,
            tolerated_failures: c.tolerated,
            steps: c.results,
            events: c.events,
            ticks: c.ticks,
            dt,
            duration_s,
            metrics: self.runtime.metrics(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    MissionStarted,
    Activated,
    Rejected,
    DeactivationRequested,
    Finished,
    FailureTolerated,
    Aborting,
    MissionFinished,
}

/// One line of the mission event log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Event {
    /// Microseconds since the mission started.
    pub t_us: u64,
    pub kind: EventKind,
    pub behavior: String,
    pub detail: String,
}

impl Event {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("events serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissionOutcome {
    Completed,
    Aborted,
}

impl MissionOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            MissionOutcome::Completed => "COMPLETED",
            MissionOutcome::Aborted => "ABORTED",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepStatus {
    NotReached,
    Rejected {
        reason: String,
        detail: String,
    },
    /// Accepted; still running when the log was last drained.
    Running,
    Finished(FinishNotice),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub line: usize,
    pub behavior: String,
    pub status: StepStatus,
}

#[derive(Debug, Clone)]
pub struct MissionReport {
    pub outcome: MissionOutcome,
    pub abort_reason: Option<String>,
    /// Failures passed over because of `continue-on-failure`.
    pub tolerated_failures: usize,
    /// One entry per activation directive, in mission order.
    pub steps: Vec<StepResult>,
    pub events: Vec<Event>,
    pub ticks: u64,
    pub dt: f64,
    pub duration_s: f64,
    pub metrics: Vec<MetricsRecord>,
}

impl MissionReport {
    /// The event log as JSON lines.
    pub fn event_log(&self) -> String {
        self.events.iter().map(|e| e.to_json() + "\n").collect()
    }

    pub fn finished(&self, behavior: &str) -> Vec<&FinishNotice> {
        self.steps
            .iter()
            .filter_map(|s| match &s.status {
                StepStatus::Finished(n) if n.behavior == behavior => Some(n),
                _ => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Running,
    /// Waiting for the deactivated behaviors to report.
    Stopping,
    Done,
}

/// How long a deactivated behavior may take to report.
const STOP_GRACE_NS: u64 = 5_000_000_000;

struct Running {
    step: Option<usize>,
    on_failure: OnFailure,
    stop_requested: bool,
}

struct Coordinator<'a> {
    session: &'a Session,
    mission: &'a Mission,
    sink: &'a mut dyn FnMut(&Event),
    notices: Subscription,
    start_ns: u64,
    now_ns: u64,
    ticks: u64,
    pc: usize,
    /// Index into `results` of each activation directive.
    step_of: Vec<Option<usize>>,
    waiting_for: Option<String>,
    active: BTreeMap<String, Running>,
    phase: Phase,
    stopping_since_ns: u64,
    outcome: MissionOutcome,
    abort_reason: Option<String>,
    tolerated: usize,
    results: Vec<StepResult>,
    events: Vec<Event>,
}

impl<'a> Coordinator<'a> {
    fn new(session: &'a Session, mission: &'a Mission, sink: &'a mut dyn FnMut(&Event)) -> Self {
        let mut results = Vec::new();
        let step_of = mission
            .directives
            .iter()
            .map(|d| match d {
                Directive::Activate(s) => {
                    results.push(StepResult {
                        line: s.line,
                        behavior: s.behavior.clone(),
                        status: StepStatus::NotReached,
                    });
                    Some(results.len() - 1)
                }
                Directive::Stop { .. } => None,
            })
            .collect();
        let start_ns = session.clock.now_ns();
        let mut c = Self {
            session,
            mission,
            sink,
            notices: session.bus().subscribe(&finish_topic(), 4096),
            start_ns,
            now_ns: start_ns,
            ticks: 0,
            pc: 0,
            step_of,
            waiting_for: None,
            active: BTreeMap::new(),
            phase: Phase::Running,
            stopping_since_ns: 0,
            outcome: MissionOutcome::Completed,
            abort_reason: None,
            tolerated: 0,
            results,
            events: Vec::new(),
        };
        let n = mission.directives.len();
        c.emit(EventKind::MissionStarted, "", format!("{n} directives"));
        c
    }

    fn emit(&mut self, kind: EventKind, behavior: &str, detail: String) {
        if kind == EventKind::FailureTolerated {
            self.tolerated += 1;
        }
        let event = Event {
            t_us: (self.now_ns - self.start_ns) / NANOS_PER_MICRO,
            kind,
            behavior: behavior.to_string(),
            detail,
        };
        (self.sink)(&event);
        self.events.push(event);
    }

    fn client(&self, behavior: &str) -> BehaviorClient {
        BehaviorClient::new(self.session.bus(), behavior)
    }

    fn drain_notices(&mut self) {
        for envelope in self.notices.drain() {
            match FinishNotice::from_value(&envelope.payload) {
                Ok(n) => self.on_notice(n),
                Err(e) => log::warn!("ignoring malformed finish notice: {e}"),
            }
        }
    }

    fn on_notice(&mut self, n: FinishNotice) {
        let name = n.behavior.clone();
        self.emit(
            EventKind::Finished,
            &name,
            format!("{} {}", n.cause.as_str(), n.detail)
                .trim_end()
                .to_string(),
        );
        if self.waiting_for.as_deref() == Some(name.as_str()) {
            self.waiting_for = None;
        }
        let Some(run) = self.active.remove(&name) else {
            return;
        };
        let failed = match n.cause {
            TerminationCause::GoalAchieved => false,
            TerminationCause::Interrupted => !run.stop_requested,
            _ => true,
        };
        if let Some(i) = run.step {
            self.results[i].status = StepStatus::Finished(n.clone());
        }
        if failed {
            match run.on_failure {
                OnFailure::Continue => self.emit(
                    EventKind::FailureTolerated,
                    &name,
                    n.cause.as_str().to_string(),
                ),
                OnFailure::Abort => {
                    self.begin_stop(Some(format!("{name} finished with {}", n.cause.as_str())))
                }
            }
        }
    }

    /// Requests deactivation; the behavior stays in `active` until its
    /// notice arrives.
    fn request_stop(&mut self, behavior: &str) {
        let Some(run) = self.active.get_mut(behavior) else {
            return;
        };
        if run.stop_requested {
            return;
        }
        run.stop_requested = true;
        match self.client(behavior).deactivate() {
            Ok(accepted) => {
                let detail = if accepted { "" } else { "already finishing" };
                self.emit(EventKind::DeactivationRequested, behavior, detail.into());
            }
            Err(e) => {
                // Nothing more will be heard from it.
                self.emit(
                    EventKind::DeactivationRequested,
                    behavior,
                    format!("failed: {e}"),
                );
                self.active.remove(behavior);
            }
        }
    }

    /// Stops issuing directives and deactivates everything still active.
    /// With a reason the mission is aborted.
    fn begin_stop(&mut self, abort_reason: Option<String>) {
        if self.phase != Phase::Running {
            return;
        }
        if let Some(reason) = abort_reason {
            self.emit(EventKind::Aborting, "", reason.clone());
            self.outcome = MissionOutcome::Aborted;
            self.abort_reason = Some(reason);
        }
        self.phase = Phase::Stopping;
        self.stopping_since_ns = self.now_ns;
        self.waiting_for = None;
        let names: Vec<String> = self.active.keys().cloned().collect();
        for name in names {
            self.request_stop(&name);
        }
    }

    fn advance(&mut self) {
        while self.phase == Phase::Running && self.waiting_for.is_none() {
            let Some(directive) = self.mission.directives.get(self.pc) else {
                self.begin_stop(None);
                break;
            };
            match directive {
                Directive::Stop { behavior, .. } => {
                    self.pc += 1;
                    if self.active.contains_key(behavior) {
                        self.request_stop(behavior);
                        if self.active.contains_key(behavior) {
                            self.waiting_for = Some(behavior.clone());
                        }
                    }
                }
                Directive::Activate(step) => {
                    if let Some(peer) = self.conflicting_peer(step) {
                        self.request_stop(&peer);
                        if self.active.contains_key(&peer) {
                            self.waiting_for = Some(peer);
                        }
                        continue;
                    }
                    let index = self.step_of[self.pc];
                    self.pc += 1;
                    self.activate(step, index);
                }
            }
        }
        if self.phase == Phase::Stopping
            && !self.active.is_empty()
            && self.now_ns - self.stopping_since_ns > STOP_GRACE_NS
        {
            let silent: Vec<String> = self.active.keys().cloned().collect();
            log::warn!("no finish notice from {silent:?}; giving up on them");
            self.active.clear();
        }
        if self.phase == Phase::Stopping && self.active.is_empty() {
            self.phase = Phase::Done;
            let detail = match (&self.abort_reason, self.tolerated) {
                (Some(r), _) => format!("{} ({r})", self.outcome.as_str()),
                (None, 0) => self.outcome.as_str().to_string(),
                (None, n) => format!("{} with {n} tolerated failure(s)", self.outcome.as_str()),
            };
            self.emit(EventKind::MissionFinished, "", detail);
        }
    }

    /// An active behavior sharing an exclusion group with the step.
    fn conflicting_peer(&self, step: &MissionStep) -> Option<String> {
        self.mission
            .groups_of(&step.behavior)
            .flat_map(|g| g.members.iter())
            .find(|m| **m != step.behavior && self.active.contains_key(*m))
            .cloned()
    }

    fn activate(&mut self, step: &MissionStep, index: Option<usize>) {
        let name = &step.behavior;
        let reply = self.client(name).activate(&step.params);
        let rejection = match reply {
            Ok(r) if r.accepted => None,
            Ok(r) => Some((
                r.reason.map_or("Rejected", |x| x.as_str()).to_string(),
                r.detail,
            )),
            Err(e) => Some(("ServiceCallFailed".to_string(), e.to_string())),
        };
        match rejection {
            None => {
                self.emit(
                    EventKind::Activated,
                    name,
                    step.params.to_value().to_string(),
                );
                if let Some(i) = index {
                    self.results[i].status = StepStatus::Running;
                }
                self.active.insert(
                    name.clone(),
                    Running {
                        step: index,
                        on_failure: step.on_failure,
                        stop_requested: false,
                    },
                );
                if step.mode == StepMode::AwaitFinish {
                    self.waiting_for = Some(name.clone());
                }
            }
            Some((reason, detail)) => {
                self.emit(
                    EventKind::Rejected,
                    name,
                    format!("{reason} {detail}").trim_end().into(),
                );
                if let Some(i) = index {
                    self.results[i].status = StepStatus::Rejected {
                        reason: reason.clone(),
                        detail,
                    };
                }
                match step.on_failure {
                    OnFailure::Continue => self.emit(EventKind::FailureTolerated, name, reason),
                    OnFailure::Abort => {
                        self.begin_stop(Some(format!("{name} was rejected: {reason}")))
                    }
                }
            }
        }
    }
}
