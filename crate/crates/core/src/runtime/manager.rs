use std::any::Any;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Arc, Mutex, MutexGuard, Weak};
use std::time::Duration;

use log::{debug, warn};

use crate::bus::{Bus, BusError, ServiceId, TopicId, Value};
use crate::clock::Clock;

use super::params::ActivationParameters;
use super::types::{
    finish_topic, BehaviorConfig, BehaviorState, ExecutionLimit, FinishNotice, MetricsRecord,
    SituationAssessment, TerminationCause,
};
use super::RuntimeError;

/// Which of the two uses of the situation check is being asked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckPhase {
    /// Before activation (activate request or the check_situation service
    /// while inactive).
    Activation,
    /// During an active execution, as part of each tick.
    Monitoring,
}

/// What a callback gets to see about the current execution.
pub struct Context<'a> {
    pub behavior: &'a str,
    pub bus: &'a Bus,
    pub now_ns: u64,
    /// Time since the current activation was accepted (zero when inactive).
    pub elapsed: Duration,
    pub params: &'a ActivationParameters,
    pub phase: CheckPhase,
}

impl Context<'_> {
    pub fn now_us(&self) -> u64 {
        self.now_ns / 1_000
    }
}

/// Behavior-specific execution monitoring and activation management.
///
/// Every method has a default: checks pass, hooks do nothing. A concrete
/// behavior overrides the ones it needs. Callbacks run one at a time per
/// behavior; they must not call their own behavior's services.
pub trait BehaviorCallbacks: Send {
    fn on_configure(&mut self, _ctx: &Context) -> Result<(), String> {
        Ok(())
    }

    fn on_activate(&mut self, _ctx: &Context) -> Result<(), String> {
        Ok(())
    }

    /// One iteration of the behavior's control loop.
    fn on_execute(&mut self, _ctx: &Context) {}

    fn on_deactivate(&mut self, _ctx: &Context) {}

    /// Must not change behavior state; see [`CheckPhase`] for the two uses.
    fn check_situation(&self, _ctx: &Context) -> SituationAssessment {
        SituationAssessment::optimal()
    }

    fn check_goal(&mut self, _ctx: &Context) -> bool {
        false
    }

    fn check_progress(&mut self, _ctx: &Context) -> Result<(), String> {
        Ok(())
    }

    fn check_processes(&mut self, _ctx: &Context) -> Result<(), String> {
        Ok(())
    }
}

/// A behavior with no behavior-specific logic at all.
#[derive(Debug, Default)]
pub struct DefaultCallbacks;

impl BehaviorCallbacks for DefaultCallbacks {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TickOutcome {
    Continue,
    Finish(TerminationCause),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    AlreadyActive,
    SituationCheckFailed,
    BadParameters,
    ActivateHookFailed,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::AlreadyActive => "AlreadyActive",
            RejectReason::SituationCheckFailed => "SituationCheckFailed",
            RejectReason::BadParameters => "BadParameters",
            RejectReason::ActivateHookFailed => "ActivateHookFailed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            RejectReason::AlreadyActive,
            RejectReason::SituationCheckFailed,
            RejectReason::BadParameters,
            RejectReason::ActivateHookFailed,
        ]
        .into_iter()
        .find(|r| r.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationReply {
    pub accepted: bool,
    pub reason: Option<RejectReason>,
    pub detail: String,
}

impl ActivationReply {
    fn accepted() -> Self {
        Self {
            accepted: true,
            reason: None,
            detail: String::new(),
        }
    }

    fn rejected(reason: RejectReason, detail: impl Into<String>) -> Self {
        Self {
            accepted: false,
            reason: Some(reason),
            detail: detail.into(),
        }
    }

    pub fn to_value(&self) -> Value {
        Value::map([
            ("accepted", self.accepted.into()),
            (
                "reason",
                self.reason.map_or("", RejectReason::as_str).into(),
            ),
            ("detail", self.detail.as_str().into()),
        ])
    }

    pub fn from_value(v: &Value) -> Option<Self> {
        let reason = v.str_field("reason")?;
        Some(Self {
            accepted: v.get("accepted")?.as_bool()?,
            reason: if reason.is_empty() {
                None
            } else {
                Some(RejectReason::parse(reason)?)
            },
            detail: v.str_field("detail").unwrap_or_default().to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationStatus {
    pub active: bool,
    pub params: Option<ActivationParameters>,
}

impl ActivationStatus {
    pub fn to_value(&self) -> Value {
        let mut entries = vec![("active", Value::Bool(self.active))];
        if let Some(params) = &self.params {
            entries.push(("params", params.to_value()));
        }
        Value::map(entries)
    }

    pub fn from_value(v: &Value) -> Option<Self> {
        Some(Self {
            active: v.get("active")?.as_bool()?,
            params: match v.get("params") {
                Some(p) => Some(ActivationParameters::from_value(p).ok()?),
                None => None,
            },
        })
    }
}

/// How active behaviors get their ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoopMode {
    /// The owner calls [`BehaviorHandle::poll`] (deterministic stepper).
    #[default]
    Stepped,
    /// Each accepted activation spawns a thread running
    /// [`BehaviorHandle::run_loop`].
    Threaded,
}

#[derive(Clone)]
pub struct RuntimeOptions {
    pub clock: Arc<dyn Clock>,
    /// Source used for the metrics stopwatch; usually the same as `clock`.
    pub timing: Arc<dyn Clock>,
    pub mode: LoopMode,
}

impl RuntimeOptions {
    pub fn stepped(clock: Arc<dyn Clock>) -> Self {
        Self {
            timing: clock.clone(),
            clock,
            mode: LoopMode::Stepped,
        }
    }

    pub fn with_timing(mut self, timing: Arc<dyn Clock>) -> Self {
        self.timing = timing;
        self
    }

    pub fn with_mode(mut self, mode: LoopMode) -> Self {
        self.mode = mode;
        self
    }
}

struct Activation {
    id: u64,
    params: ActivationParameters,
    started_ns: u64,
    ticks_done: u64,
}

#[derive(Debug, Default, Clone, Copy)]
struct Counters {
    activations: u64,
    ticks: u64,
    monitoring_ns: u64,
    management_ns: u64,
}

struct Core {
    state: BehaviorState,
    callbacks: Box<dyn BehaviorCallbacks>,
    activation: Option<Activation>,
    generation: u64,
    counters: Counters,
}

struct Shared {
    config: BehaviorConfig,
    bus: Bus,
    options: RuntimeOptions,
    finish_topic: TopicId,
    core: Mutex<Core>,
}

/// Handle to one registered behavior execution manager.
#[derive(Clone)]
pub struct BehaviorHandle {
    shared: Arc<Shared>,
}

impl std::fmt::Debug for BehaviorHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BehaviorHandle")
            .field("name", &self.shared.config.name)
            .finish_non_exhaustive()
    }
}

fn panic_message(payload: Box<dyn Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "unknown panic".to_string()
    }
}

fn guarded<T>(slot: &str, f: impl FnOnce() -> T) -> Result<T, String> {
    catch_unwind(AssertUnwindSafe(f)).map_err(|p| format!("panic in {slot}: {}", panic_message(p)))
}

pub const SERVICE_NAMES: [&str; 4] = [
    "activate",
    "deactivate",
    "check_activation",
    "check_situation",
];

pub fn service_id(behavior: &str, service: &str) -> ServiceId {
    ServiceId::new(format!("{behavior}/{service}")).expect("behavior names are validated")
}

/// Builds a behavior execution manager, runs its configure hook and
/// advertises its four services. Nothing is advertised if any step fails.
pub fn register_behavior(
    config: BehaviorConfig,
    mut callbacks: Box<dyn BehaviorCallbacks>,
    bus: &Bus,
    options: RuntimeOptions,
) -> Result<BehaviorHandle, RuntimeError> {
    config.validate().map_err(RuntimeError::InvalidConfig)?;
    let name = config.name.clone();
    if SERVICE_NAMES
        .iter()
        .any(|s| bus.is_advertised(&service_id(&name, s)))
    {
        return Err(RuntimeError::NameCollision(name));
    }

    let no_params = ActivationParameters::new();
    let ctx = Context {
        behavior: &name,
        bus,
        now_ns: options.clock.now_ns(),
        elapsed: Duration::ZERO,
        params: &no_params,
        phase: CheckPhase::Activation,
    };
    guarded("on_configure", || callbacks.on_configure(&ctx))
        .and_then(|r| r)
        .map_err(|detail| RuntimeError::ConfigureFailed {
            behavior: name.clone(),
            detail,
        })?;

    let shared = Arc::new(Shared {
        config,
        bus: bus.clone(),
        options,
        finish_topic: finish_topic(),
        core: Mutex::new(Core {
            state: BehaviorState::Inactive,
            callbacks,
            activation: None,
            generation: 0,
            counters: Counters::default(),
        }),
    });
    let handle = BehaviorHandle { shared };
    if let Err(e) = handle.advertise() {
        for s in SERVICE_NAMES {
            bus.withdraw_service(&service_id(&name, s));
        }
        return Err(match e {
            BusError::AlreadyAdvertised(_) => RuntimeError::NameCollision(name),
            other => RuntimeError::Bus(other),
        });
    }
    debug!("registered behavior {name}");
    Ok(handle)
}

fn upgrade(weak: &Weak<Shared>) -> Result<BehaviorHandle, String> {
    weak.upgrade()
        .map(|shared| BehaviorHandle { shared })
        .ok_or_else(|| "behavior manager no longer exists".to_string())
}

impl BehaviorHandle {
    fn advertise(&self) -> Result<(), BusError> {
        let bus = &self.shared.bus;
        let name = &self.shared.config.name;
        let weak = Arc::downgrade(&self.shared);

        let w = weak.clone();
        bus.advertise_service(&service_id(name, "activate"), move |req| {
            let handle = upgrade(&w)?;
            let params = match req.get("params") {
                Some(p) => ActivationParameters::from_value(p),
                None => Ok(ActivationParameters::new()),
            };
            let reply = match params {
                Ok(params) => handle.activate(params),
                Err(e) => ActivationReply::rejected(RejectReason::BadParameters, e),
            };
            Ok(reply.to_value())
        })?;

        let w = weak.clone();
        bus.advertise_service(&service_id(name, "deactivate"), move |_| {
            let accepted = upgrade(&w)?.deactivate();
            Ok(Value::map([("accepted", accepted.into())]))
        })?;

        let w = weak.clone();
        bus.advertise_service(&service_id(name, "check_activation"), move |_| {
            Ok(upgrade(&w)?.check_activation().to_value())
        })?;

        let w = weak;
        bus.advertise_service(&service_id(name, "check_situation"), move |_| {
            Ok(upgrade(&w)?.check_situation().to_value())
        })?;
        Ok(())
    }

    fn lock(&self) -> MutexGuard<'_, Core> {
        self.shared
            .core
            .lock()
            .unwrap_or_else(|poisoned| poisoned.into_inner())
    }

    pub fn name(&self) -> &str {
        &self.shared.config.name
    }

    pub fn config(&self) -> &BehaviorConfig {
        &self.shared.config
    }

    pub fn state(&self) -> BehaviorState {
        self.lock().state
    }

    pub fn is_active(&self) -> bool {
        self.state() == BehaviorState::Active
    }

    fn now_ns(&self) -> u64 {
        self.shared.options.clock.now_ns()
    }

    fn stopwatch(&self) -> u64 {
        self.shared.options.timing.now_ns()
    }

    /// The `activate` service.
    pub fn activate(&self, params: ActivationParameters) -> ActivationReply {
        let mut core = self.lock();
        let config = &self.shared.config;
        match core.state {
            BehaviorState::Active => {
                return ActivationReply::rejected(RejectReason::AlreadyActive, "already active")
            }
            BehaviorState::Unconfigured => {
                return ActivationReply::rejected(
                    RejectReason::ActivateHookFailed,
                    "not configured",
                )
            }
            BehaviorState::Inactive => {}
        }
        if let Err(e) = params.validate(&config.parameter_schema) {
            return ActivationReply::rejected(RejectReason::BadParameters, e);
        }

        let now_ns = self.now_ns();
        let ctx = Context {
            behavior: &config.name,
            bus: &self.shared.bus,
            now_ns,
            elapsed: Duration::ZERO,
            params: &params,
            phase: CheckPhase::Activation,
        };
        let situation = guarded("check_situation", || core.callbacks.check_situation(&ctx))
            .map(SituationAssessment::normalized)
            .unwrap_or_else(SituationAssessment::unsuitable);
        if !situation.ok {
            return ActivationReply::rejected(RejectReason::SituationCheckFailed, situation.reason);
        }

        let t0 = self.stopwatch();
        let activated = guarded("on_activate", || core.callbacks.on_activate(&ctx)).and_then(|r| r);
        if let Err(detail) = activated {
            // Keep hook pairing: release whatever on_activate acquired.
            if let Err(e) = guarded("on_deactivate", || core.callbacks.on_deactivate(&ctx)) {
                warn!("{}: {e}", config.name);
            }
            return ActivationReply::rejected(RejectReason::ActivateHookFailed, detail);
        }
        let t1 = self.stopwatch();

        core.generation += 1;
        let id = core.generation;
        core.activation = Some(Activation {
            id,
            params,
            started_ns: now_ns,
            ticks_done: 0,
        });
        core.state = BehaviorState::Active;
        core.counters.activations += 1;
        core.counters.management_ns += t1.saturating_sub(t0);
        drop(core);
        debug!("{} activated", config.name);

        if self.shared.options.mode == LoopMode::Threaded {
            let handle = self.clone();
            let spawned = std::thread::Builder::new()
                .name(format!("behavior:{}", config.name))
                .spawn(move || handle.run_activation(id));
            if let Err(e) = spawned {
                warn!("{}: cannot spawn execution loop: {e}", config.name);
                let mut core = self.lock();
                self.finish(
                    &mut core,
                    TerminationCause::ProcessFailure,
                    format!("cannot spawn execution loop: {e}"),
                    self.now_ns(),
                );
            }
        }
        ActivationReply::accepted()
    }

    /// The `deactivate` service. Returns whether an active execution was
    /// stopped.
    pub fn deactivate(&self) -> bool {
        let mut core = self.lock();
        if core.state != BehaviorState::Active {
            return false;
        }
        let now = self.now_ns();
        self.finish(
            &mut core,
            TerminationCause::Interrupted,
            "deactivation requested".into(),
            now,
        );
        true
    }

    /// The `check_activation` service.
    pub fn check_activation(&self) -> ActivationStatus {
        let core = self.lock();
        match (&core.state, &core.activation) {
            (BehaviorState::Active, Some(a)) => ActivationStatus {
                active: true,
                params: Some(a.params.clone()),
            },
            _ => ActivationStatus {
                active: false,
                params: None,
            },
        }
    }

    /// The `check_situation` service.
    pub fn check_situation(&self) -> SituationAssessment {
        let core = self.lock();
        let now_ns = self.now_ns();
        let empty = ActivationParameters::new();
        let (params, elapsed, phase) = match &core.activation {
            Some(a) => (
                &a.params,
                Duration::from_nanos(now_ns.saturating_sub(a.started_ns)),
                CheckPhase::Monitoring,
            ),
            None => (&empty, Duration::ZERO, CheckPhase::Activation),
        };
        let ctx = Context {
            behavior: &self.shared.config.name,
            bus: &self.shared.bus,
            now_ns,
            elapsed,
            params,
            phase,
        };
        guarded("check_situation", || core.callbacks.check_situation(&ctx))
            .map(SituationAssessment::normalized)
            .unwrap_or_else(SituationAssessment::unsuitable)
    }

    /// Runs one monitoring + execution step at time `now_ns`.
    pub fn execute_tick(&self, now_ns: u64) -> Result<TickOutcome, RuntimeError> {
        let mut core = self.lock();
        if core.state != BehaviorState::Active {
            return Err(RuntimeError::NotActive(self.name().to_string()));
        }
        Ok(self.tick_locked(&mut core, now_ns))
    }

    fn tick_locked(&self, core: &mut Core, now_ns: u64) -> TickOutcome {
        let config = &self.shared.config;
        let Core {
            callbacks,
            activation,
            counters,
            ..
        } = core;
        let activation = activation
            .as_mut()
            .expect("active behavior has an activation");
        activation.ticks_done += 1;
        let elapsed = Duration::from_nanos(now_ns.saturating_sub(activation.started_ns));
        let ctx = Context {
            behavior: &config.name,
            bus: &self.shared.bus,
            now_ns,
            elapsed,
            params: &activation.params,
            phase: CheckPhase::Monitoring,
        };

        let t0 = self.stopwatch();
        let verdict = monitor(callbacks.as_mut(), &ctx, config);
        let t1 = self.stopwatch();
        counters.ticks += 1;
        counters.monitoring_ns += t1.saturating_sub(t0);

        let verdict = match verdict {
            Some(v) => Some(v),
            None => guarded("on_execute", || callbacks.on_execute(&ctx))
                .err()
                .map(|detail| (TerminationCause::ProcessFailure, detail)),
        };
        match verdict {
            Some((cause, detail)) => {
                self.finish(core, cause, detail, now_ns);
                TickOutcome::Finish(cause)
            }
            None => TickOutcome::Continue,
        }
    }

    fn finish(&self, core: &mut Core, cause: TerminationCause, detail: String, now_ns: u64) {
        let config = &self.shared.config;
        let Some(activation) = core.activation.take() else {
            return;
        };
        let ctx = Context {
            behavior: &config.name,
            bus: &self.shared.bus,
            now_ns,
            elapsed: Duration::from_nanos(now_ns.saturating_sub(activation.started_ns)),
            params: &activation.params,
            phase: CheckPhase::Monitoring,
        };
        let t0 = self.stopwatch();
        if let Err(e) = guarded("on_deactivate", || core.callbacks.on_deactivate(&ctx)) {
            warn!("{}: {e}", config.name);
        }
        let t1 = self.stopwatch();
        core.counters.management_ns += t1.saturating_sub(t0);
        core.state = BehaviorState::Inactive;

        let notice = FinishNotice {
            behavior: config.name.clone(),
            cause,
            stamp_us: now_ns / 1_000,
            detail,
        };
        debug!("{} finished: {} {}", notice.behavior, cause, notice.detail);
        if let Err(e) = self
            .shared
            .bus
            .publish(&self.shared.finish_topic, notice.to_value())
        {
            warn!("{}: cannot publish finish notice: {e}", config.name);
        }
    }

    /// Deadline of the next tick of the current activation, if any.
    pub fn next_deadline_ns(&self) -> Option<u64> {
        let core = self.lock();
        core.activation.as_ref().map(|a| self.deadline(a))
    }

    /// Tick `k` is due at activation time + k/f, k = 0, 1, ...
    fn deadline(&self, activation: &Activation) -> u64 {
        let offset = (activation.ticks_done as f64 * self.shared.config.period_ns()).round();
        activation.started_ns + offset as u64
    }

    /// Runs every tick due at or before `now_ns`; returns how many ran.
    pub fn poll(&self, now_ns: u64) -> u32 {
        let mut core = self.lock();
        let mut ran = 0;
        while core.state == BehaviorState::Active {
            let deadline = self.deadline(core.activation.as_ref().expect("active"));
            if deadline > now_ns {
                break;
            }
            ran += 1;
            if let TickOutcome::Finish(_) = self.tick_locked(&mut core, deadline) {
                break;
            }
        }
        ran
    }

    /// Ticks the current activation on the injected clock until it
    /// finishes. Returns immediately when inactive.
    pub fn run_loop(&self) {
        let id = match &self.lock().activation {
            Some(a) => a.id,
            None => return,
        };
        self.run_activation(id);
    }

    fn run_activation(&self, id: u64) {
        loop {
            let deadline = {
                let core = self.lock();
                match &core.activation {
                    Some(a) if a.id == id => self.deadline(a),
                    _ => return,
                }
            };
            self.shared.options.clock.sleep_until(deadline);
            let mut core = self.lock();
            match &core.activation {
                Some(a) if a.id == id => {}
                _ => return,
            }
            if let TickOutcome::Finish(_) = self.tick_locked(&mut core, deadline) {
                return;
            }
        }
    }

    pub fn collect_metrics(&self) -> MetricsRecord {
        let c = self.lock().counters;
        MetricsRecord {
            behavior: self.name().to_string(),
            a: c.activations,
            ticks: c.ticks,
            t1_us: if c.ticks == 0 {
                0.0
            } else {
                c.monitoring_ns as f64 / c.ticks as f64 / 1e3
            },
            t2_ms: c.monitoring_ns as f64 / 1e6,
            t3_ms: if c.activations == 0 {
                0.0
            } else {
                c.management_ns as f64 / c.activations as f64 / 1e6
            },
        }
    }

    pub fn reset_metrics(&self) {
        self.lock().counters = Counters::default();
    }

    /// Ticks executed in the current activation (0 when inactive).
    pub fn ticks_in_activation(&self) -> u64 {
        self.lock().activation.as_ref().map_or(0, |a| a.ticks_done)
    }
}

/// Evaluates the finish conditions in priority order: processes,
/// situation, goal, timeout, progress. Returns the first one that holds.
fn monitor(
    callbacks: &mut dyn BehaviorCallbacks,
    ctx: &Context,
    config: &BehaviorConfig,
) -> Option<(TerminationCause, String)> {
    use TerminationCause::*;

    match guarded("check_processes", || callbacks.check_processes(ctx)) {
        Ok(Ok(())) => {}
        Ok(Err(detail)) | Err(detail) => return Some((ProcessFailure, detail)),
    }
    match guarded("check_situation", || callbacks.check_situation(ctx)) {
        Ok(s) if s.ok => {}
        Ok(s) => return Some((SituationChange, s.normalized().reason)),
        Err(detail) => return Some((ProcessFailure, detail)),
    }
    match guarded("check_goal", || callbacks.check_goal(ctx)) {
        Ok(true) => return Some((GoalAchieved, String::new())),
        Ok(false) => {}
        Err(detail) => return Some((ProcessFailure, detail)),
    }
    if let ExecutionLimit::Bounded(limit) = config.maximum_execution_time {
        if ctx.elapsed >= limit {
            return Some((
                TimeOut,
                format!("exceeded maximum execution time {limit:?}"),
            ));
        }
    }
    match guarded("check_progress", || callbacks.check_progress(ctx)) {
        Ok(Ok(())) => None,
        Ok(Err(detail)) => Some((WrongProgress, detail)),
        Err(detail) => Some((ProcessFailure, detail)),
    }
}
