use std::sync::{Arc, Mutex};
use std::time::Duration;

use proptest::prelude::*;

use super::*;
use crate::bus::{ServiceDispatch, Subscription, Value};
use crate::clock::{Clock, VirtualClock};

#[derive(Default)]
struct Script {
    processes_ok: bool,
    situation_ok: bool,
    goal: bool,
    goal_after: Option<Duration>,
    progress_ok: bool,
    fail_activate: bool,
    fail_configure: bool,
    panic_in_goal: bool,
    hooks: Vec<&'static str>,
    executes: u32,
}

#[derive(Clone)]
struct Scripted(Arc<Mutex<Script>>);

impl Scripted {
    fn new() -> Self {
        Scripted(Arc::new(Mutex::new(Script {
            processes_ok: true,
            situation_ok: true,
            progress_ok: true,
            ..Script::default()
        })))
    }

    fn with(&self, f: impl FnOnce(&mut Script)) -> &Self {
        f(&mut self.0.lock().unwrap());
        self
    }

    fn hooks(&self) -> Vec<&'static str> {
        self.0.lock().unwrap().hooks.clone()
    }

    fn executes(&self) -> u32 {
        self.0.lock().unwrap().executes
    }
}

impl BehaviorCallbacks for Scripted {
    fn on_configure(&mut self, _ctx: &Context) -> Result<(), String> {
        let mut s = self.0.lock().unwrap();
        s.hooks.push("configure");
        if s.fail_configure {
            Err("cannot read configuration".into())
        } else {
            Ok(())
        }
    }

    fn on_activate(&mut self, _ctx: &Context) -> Result<(), String> {
        let mut s = self.0.lock().unwrap();
        s.hooks.push("activate");
        if s.fail_activate {
            Err("hook failed".into())
        } else {
            Ok(())
        }
    }

    fn on_execute(&mut self, _ctx: &Context) {
        self.0.lock().unwrap().executes += 1;
    }

    fn on_deactivate(&mut self, _ctx: &Context) {
        self.0.lock().unwrap().hooks.push("deactivate");
    }

    fn check_situation(&self, _ctx: &Context) -> SituationAssessment {
        if self.0.lock().unwrap().situation_ok {
            SituationAssessment::optimal()
        } else {
            SituationAssessment::unsuitable("scripted situation change")
        }
    }

    fn check_goal(&mut self, ctx: &Context) -> bool {
        let s = self.0.lock().unwrap();
        if s.panic_in_goal {
            drop(s);
            panic!("goal check exploded");
        }
        s.goal || s.goal_after.is_some_and(|t| ctx.elapsed >= t)
    }

    fn check_progress(&mut self, _ctx: &Context) -> Result<(), String> {
        if self.0.lock().unwrap().progress_ok {
            Ok(())
        } else {
            Err("scripted wrong progress".into())
        }
    }

    fn check_processes(&mut self, _ctx: &Context) -> Result<(), String> {
        if self.0.lock().unwrap().processes_ok {
            Ok(())
        } else {
            Err("scripted process failure".into())
        }
    }
}

struct Fixture {
    clock: VirtualClock,
    runtime: Runtime,
    notices: Subscription,
}

impl Fixture {
    fn new() -> Self {
        let clock = VirtualClock::new();
        let shared: Arc<dyn Clock> = Arc::new(clock.clone());
        let bus = Bus::with_dispatch(shared.clone(), ServiceDispatch::Inline);
        let notices = bus.subscribe(&finish_topic(), 1024);
        Self {
            clock,
            runtime: Runtime::new(bus, RuntimeOptions::stepped(shared)),
            notices,
        }
    }

    fn register(&mut self, config: BehaviorConfig, script: &Scripted) -> BehaviorHandle {
        self.runtime
            .register(config, Box::new(script.clone()))
            .unwrap()
    }

    fn notices(&self) -> Vec<FinishNotice> {
        self.notices
            .drain()
            .iter()
            .map(|e| FinishNotice::from_value(&e.payload).unwrap())
            .collect()
    }

    /// Advances in 10 ms steps, polling after each, until `until` seconds.
    fn run_until(&self, until: f64) {
        let target = crate::clock::secs_to_ns(until);
        loop {
            self.runtime.poll(self.clock.now_ns());
            if self.clock.now_ns() >= target {
                break;
            }
            self.clock.advance(Duration::from_millis(10));
        }
    }
}

fn goal_cfg(name: &str, max: Duration) -> BehaviorConfig {
    BehaviorConfig::goal_based(name, max)
}

#[test]
fn register_advertises_four_services_and_configures_once() {
    let mut fx = Fixture::new();
    let script = Scripted::new();
    let handle = fx.register(goal_cfg("TAKE_OFF", Duration::from_secs(30)), &script);
    assert_eq!(handle.state(), BehaviorState::Inactive);
    for s in SERVICE_NAMES {
        assert!(
            fx.runtime.bus().is_advertised(&service_id("TAKE_OFF", s)),
            "{s}"
        );
    }
    assert_eq!(script.hooks(), vec!["configure"]);
    let client = BehaviorClient::new(fx.runtime.bus(), "TAKE_OFF");
    assert!(!client.check_activation().unwrap().active);
    assert!(client.check_situation().unwrap().ok);
}

#[test]
fn duplicate_name_collides() {
    let mut fx = Fixture::new();
    let script = Scripted::new();
    fx.register(goal_cfg("TAKE_OFF", Duration::from_secs(1)), &script);
    let err = fx
        .runtime
        .register(
            goal_cfg("TAKE_OFF", Duration::from_secs(1)),
            Box::new(script.clone()),
        )
        .unwrap_err();
    assert_eq!(err, RuntimeError::NameCollision("TAKE_OFF".into()));
    // Also detected directly against the bus, without the registry.
    let err = register_behavior(
        goal_cfg("TAKE_OFF", Duration::from_secs(1)),
        Box::new(DefaultCallbacks),
        fx.runtime.bus(),
        fx.runtime.options().clone(),
    )
    .unwrap_err();
    assert_eq!(err, RuntimeError::NameCollision("TAKE_OFF".into()));
}

#[test]
fn failed_configure_advertises_nothing() {
    let mut fx = Fixture::new();
    let script = Scripted::new();
    script.with(|s| s.fail_configure = true);
    let err = fx
        .runtime
        .register(
            goal_cfg("BROKEN", Duration::from_secs(1)),
            Box::new(script.clone()),
        )
        .unwrap_err();
    assert!(matches!(err, RuntimeError::ConfigureFailed { .. }));
    for s in SERVICE_NAMES {
        assert!(!fx.runtime.bus().is_advertised(&service_id("BROKEN", s)));
    }
    assert!(fx.runtime.get("BROKEN").is_none());
}

#[test]
fn invalid_config_rejected() {
    let mut fx = Fixture::new();
    let mut cfg = goal_cfg("X", Duration::from_secs(1));
    cfg.maximum_execution_time = ExecutionLimit::Unbounded;
    assert!(matches!(
        fx.runtime.register(cfg, Box::new(DefaultCallbacks)),
        Err(RuntimeError::InvalidConfig(_))
    ));
}

#[test]
fn activation_via_service_reports_parameters() {
    let mut fx = Fixture::new();
    let script = Scripted::new();
    let cfg = goal_cfg("ROTATE", Duration::from_secs(30))
        .with_schema(ParamSchema::new().required("angle", ParamType::Real));
    fx.register(cfg, &script);
    let client = BehaviorClient::new(fx.runtime.bus(), "ROTATE");
    let params = ActivationParameters::new().real("angle", 90.0);
    let reply = client.activate(&params).unwrap();
    assert!(reply.accepted, "{reply:?}");
    let status = client.check_activation().unwrap();
    assert!(status.active);
    assert_eq!(status.params, Some(params.clone()));

    let again = client.activate(&params).unwrap();
    assert_eq!(again.reason, Some(RejectReason::AlreadyActive));

    assert!(client.deactivate().unwrap());
    assert!(!client.check_activation().unwrap().active);
    assert!(!client.deactivate().unwrap());
    let notices = fx.notices();
    assert_eq!(notices.len(), 1);
    assert_eq!(notices[0].cause, TerminationCause::Interrupted);
}

#[test]
fn bad_parameters_rejected() {
    let mut fx = Fixture::new();
    let script = Scripted::new();
    let cfg = goal_cfg("ROTATE", Duration::from_secs(30))
        .with_schema(ParamSchema::new().required("angle", ParamType::Real));
    let handle = fx.register(cfg, &script);
    let reply = handle.activate(ActivationParameters::new());
    assert_eq!(reply.reason, Some(RejectReason::BadParameters));
    let reply = handle.activate(
        ActivationParameters::new()
            .real("angle", 1.0)
            .real("extra", 1.0),
    );
    assert_eq!(reply.reason, Some(RejectReason::BadParameters));
    assert_eq!(script.hooks(), vec!["configure"]);
}

#[test]
fn situation_failure_blocks_activation() {
    let mut fx = Fixture::new();
    let script = Scripted::new();
    script.with(|s| s.situation_ok = false);
    let handle = fx.register(goal_cfg("TAKE_OFF", Duration::from_secs(1)), &script);
    let reply = handle.activate(ActivationParameters::new());
    assert_eq!(reply.reason, Some(RejectReason::SituationCheckFailed));
    assert_eq!(reply.detail, "scripted situation change");
    let s = handle.check_situation();
    assert!(!s.ok);
    assert!(!s.reason.is_empty());
}

#[test]
fn failed_activate_hook_publishes_nothing_and_keeps_pairing() {
    let mut fx = Fixture::new();
    let script = Scripted::new();
    script.with(|s| s.fail_activate = true);
    let handle = fx.register(goal_cfg("X", Duration::from_secs(1)), &script);
    let reply = handle.activate(ActivationParameters::new());
    assert_eq!(reply.reason, Some(RejectReason::ActivateHookFailed));
    assert_eq!(handle.state(), BehaviorState::Inactive);
    assert!(fx.notices().is_empty());
    assert_eq!(script.hooks(), vec!["configure", "activate", "deactivate"]);
    assert_eq!(handle.collect_metrics().a, 0);
}

#[test]
fn all_checks_pass_runs_one_execute() {
    let mut fx = Fixture::new();
    let script = Scripted::new();
    let handle = fx.register(goal_cfg("X", Duration::from_secs(10)), &script);
    assert!(handle.activate(ActivationParameters::new()).accepted);
    assert_eq!(handle.execute_tick(0), Ok(TickOutcome::Continue));
    assert_eq!(script.executes(), 1);
}

#[test]
fn tick_on_inactive_behavior_is_an_error() {
    let mut fx = Fixture::new();
    let handle = fx.register(goal_cfg("X", Duration::from_secs(10)), &Scripted::new());
    assert_eq!(
        handle.execute_tick(0),
        Err(RuntimeError::NotActive("X".into()))
    );
}

/// Independent statement of the documented priority order.
fn expected_cause(
    processes_fail: bool,
    situation_fail: bool,
    goal: bool,
    timed_out: bool,
    progress_fail: bool,
) -> Option<TerminationCause> {
    let ordered = [
        (processes_fail, TerminationCause::ProcessFailure),
        (situation_fail, TerminationCause::SituationChange),
        (goal, TerminationCause::GoalAchieved),
        (timed_out, TerminationCause::TimeOut),
        (progress_fail, TerminationCause::WrongProgress),
    ];
    ordered.iter().find(|(holds, _)| *holds).map(|(_, c)| *c)
}

#[test]
fn every_combination_of_finish_conditions_follows_priority_order() {
    let started = std::time::Instant::now();
    for mask in 0u32..32 {
        let bit = |i: u32| mask & (1 << i) != 0;
        let (pf, sf, goal, to, gf) = (bit(0), bit(1), bit(2), bit(3), bit(4));
        let mut fx = Fixture::new();
        let script = Scripted::new();
        let handle = fx.register(goal_cfg("X", Duration::from_secs(1)), &script);
        assert!(handle.activate(ActivationParameters::new()).accepted);
        script.with(|s| {
            s.processes_ok = !pf;
            s.situation_ok = !sf;
            s.goal = goal;
            s.progress_ok = !gf;
        });
        let now = if to { 1_000_000_000 } else { 500_000_000 };
        let outcome = handle.execute_tick(now).unwrap();
        let notices = fx.notices();
        match expected_cause(pf, sf, goal, to, gf) {
            Some(cause) => {
                assert_eq!(outcome, TickOutcome::Finish(cause), "mask {mask:05b}");
                assert_eq!(notices.len(), 1);
                assert_eq!(notices[0].cause, cause);
                assert_eq!(script.executes(), 0);
            }
            None => {
                assert_eq!(outcome, TickOutcome::Continue, "mask {mask:05b}");
                assert!(notices.is_empty());
                assert_eq!(script.executes(), 1);
            }
        }
    }
    assert!(started.elapsed() < Duration::from_secs(1));
}

#[test]
fn timeout_fires_on_tick_101_at_100_hz() {
    let mut fx = Fixture::new();
    let script = Scripted::new();
    let handle = fx.register(goal_cfg("X", Duration::from_secs(1)), &script);
    assert!(handle.activate(ActivationParameters::new()).accepted);
    let mut tick = 0;
    let cause = loop {
        tick += 1;
        fx.runtime.poll(fx.clock.now_ns());
        if !handle.is_active() {
            break fx.notices()[0].cause;
        }
        fx.clock.advance(Duration::from_millis(10));
    };
    assert_eq!(cause, TerminationCause::TimeOut);
    assert_eq!(tick, 101);
    assert_eq!(handle.collect_metrics().ticks, 101);
    assert_eq!(fx.clock.now_ns(), 1_000_000_000);
}

#[test]
fn goal_at_half_second_after_fifty_ticks() {
    let mut fx = Fixture::new();
    let script = Scripted::new();
    script.with(|s| s.goal_after = Some(Duration::from_millis(500)));
    let handle = fx.register(goal_cfg("X", Duration::from_secs(5)), &script);
    assert!(handle.activate(ActivationParameters::new()).accepted);
    fx.run_until(2.0);
    let notices = fx.notices();
    assert_eq!(notices.len(), 1);
    assert_eq!(notices[0].cause, TerminationCause::GoalAchieved);
    assert_eq!(notices[0].stamp_us, 500_000);
    assert_eq!(script.executes(), 50);
}

#[test]
fn recurrent_all_pass_never_finishes() {
    let mut fx = Fixture::new();
    let script = Scripted::new();
    let handle = fx.register(BehaviorConfig::recurrent("LOOP"), &script);
    assert!(handle.activate(ActivationParameters::new()).accepted);
    for _ in 0..10_000 {
        fx.runtime.poll(fx.clock.now_ns());
        fx.clock.advance(Duration::from_millis(10));
    }
    assert!(handle.is_active());
    assert_eq!(script.executes(), 10_000);
    assert!(fx.notices().is_empty());
}

#[test]
fn lower_frequency_ticks_less_often() {
    let mut fx = Fixture::new();
    let script = Scripted::new();
    let cfg = BehaviorConfig::recurrent("SLOW").with_frequency(25.0);
    let handle = fx.register(cfg, &script);
    assert!(handle.activate(ActivationParameters::new()).accepted);
    fx.run_until(0.99);
    // ticks at 0, 40, ..., 960 ms
    assert_eq!(script.executes(), 25);
}

#[test]
fn late_poll_catches_up_without_drift() {
    let mut fx = Fixture::new();
    let script = Scripted::new();
    let handle = fx.register(BehaviorConfig::recurrent("X"), &script);
    assert!(handle.activate(ActivationParameters::new()).accepted);
    fx.clock.advance(Duration::from_millis(95));
    assert_eq!(handle.poll(fx.clock.now_ns()), 10);
    assert_eq!(handle.next_deadline_ns(), Some(100_000_000));
}

#[test]
fn panicking_callback_is_a_process_failure() {
    let mut fx = Fixture::new();
    let script = Scripted::new();
    let handle = fx.register(goal_cfg("X", Duration::from_secs(1)), &script);
    assert!(handle.activate(ActivationParameters::new()).accepted);
    script.with(|s| s.panic_in_goal = true);
    assert_eq!(
        handle.execute_tick(0),
        Ok(TickOutcome::Finish(TerminationCause::ProcessFailure))
    );
    let notices = fx.notices();
    assert!(
        notices[0].detail.contains("goal check exploded"),
        "{}",
        notices[0].detail
    );
    assert_eq!(script.hooks().last(), Some(&"deactivate"));
}

#[test]
fn deactivate_before_goal_tick_interrupts() {
    let mut fx = Fixture::new();
    let script = Scripted::new();
    let handle = fx.register(goal_cfg("X", Duration::from_secs(1)), &script);
    assert!(handle.activate(ActivationParameters::new()).accepted);
    script.with(|s| s.goal = true);
    assert!(handle.deactivate());
    assert_eq!(handle.poll(0), 0);
    let notices = fx.notices();
    assert_eq!(notices.len(), 1);
    assert_eq!(notices[0].cause, TerminationCause::Interrupted);
}

#[test]
fn goal_tick_before_deactivate_wins() {
    let mut fx = Fixture::new();
    let script = Scripted::new();
    let handle = fx.register(goal_cfg("X", Duration::from_secs(1)), &script);
    assert!(handle.activate(ActivationParameters::new()).accepted);
    script.with(|s| s.goal = true);
    assert_eq!(handle.poll(0), 1);
    assert!(!handle.deactivate());
    let notices = fx.notices();
    assert_eq!(notices.len(), 1);
    assert_eq!(notices[0].cause, TerminationCause::GoalAchieved);
}

#[test]
fn concurrent_deactivate_and_goal_yield_one_notice() {
    for round in 0..200 {
        let mut fx = Fixture::new();
        let script = Scripted::new();
        let handle = fx.register(goal_cfg("X", Duration::from_secs(1)), &script);
        assert!(handle.activate(ActivationParameters::new()).accepted);
        script.with(|s| s.goal = true);
        let other = handle.clone();
        let t = std::thread::spawn(move || other.deactivate());
        handle.poll(0);
        let deactivated = t.join().unwrap();
        let notices = fx.notices();
        assert_eq!(notices.len(), 1, "round {round}");
        let expected = if deactivated {
            TerminationCause::Interrupted
        } else {
            TerminationCause::GoalAchieved
        };
        assert_eq!(notices[0].cause, expected);
    }
}

#[test]
fn run_loop_at_one_hz_interrupted_midway() {
    let mut fx = Fixture::new();
    let script = Scripted::new();
    let cfg = BehaviorConfig::recurrent("SLOW").with_frequency(1.0);
    let handle = fx.register(cfg, &script);
    assert!(handle.activate(ActivationParameters::new()).accepted);
    let looper = handle.clone();
    let t = std::thread::spawn(move || looper.run_loop());
    std::thread::sleep(Duration::from_millis(20));
    fx.clock.advance(Duration::from_millis(500));
    assert!(handle.deactivate());
    fx.clock.advance(Duration::from_secs(2));
    t.join().unwrap();
    assert!(script.executes() <= 1);
    let notices = fx.notices();
    assert_eq!(notices.len(), 1);
    assert_eq!(notices[0].cause, TerminationCause::Interrupted);
}

#[test]
fn threaded_mode_runs_its_own_loop() {
    let clock = VirtualClock::new();
    let shared: Arc<dyn Clock> = Arc::new(clock.clone());
    let bus = Bus::new(shared.clone());
    let notices = bus.subscribe(&finish_topic(), 16);
    let mut runtime = Runtime::new(
        bus,
        RuntimeOptions::stepped(shared).with_mode(LoopMode::Threaded),
    );
    let script = Scripted::new();
    script.with(|s| s.goal_after = Some(Duration::from_millis(100)));
    runtime
        .register(
            goal_cfg("X", Duration::from_secs(5)),
            Box::new(script.clone()),
        )
        .unwrap();
    let client = BehaviorClient::new(runtime.bus(), "X");
    assert!(
        client
            .activate(&ActivationParameters::new())
            .unwrap()
            .accepted
    );
    let mut notice = None;
    for _ in 0..200 {
        clock.advance(Duration::from_millis(10));
        if let Some(e) = notices.recv_timeout(Duration::from_millis(5)) {
            notice = Some(FinishNotice::from_value(&e.payload).unwrap());
            break;
        }
    }
    let notice = notice.expect("threaded loop finished");
    assert_eq!(notice.cause, TerminationCause::GoalAchieved);
    assert!(!client.check_activation().unwrap().active);
}

#[test]
fn metrics_count_ticks_and_activations() {
    let mut fx = Fixture::new();
    let script = Scripted::new();
    let handle = fx.register(goal_cfg("X", Duration::from_secs(10)), &script);
    let m = handle.collect_metrics();
    assert_eq!(
        (m.a, m.ticks, m.t1_us, m.t2_ms, m.t3_ms),
        (0, 0, 0.0, 0.0, 0.0)
    );

    assert!(handle.activate(ActivationParameters::new()).accepted);
    for i in 0..50 {
        handle.execute_tick(i * 10_000_000).unwrap();
    }
    handle.deactivate();
    let m = handle.collect_metrics();
    assert_eq!(m.a, 1);
    assert_eq!(m.ticks, 50);
    assert!((m.t2_ms * 1e3 - m.t1_us * 50.0).abs() < 1e-9);

    for _ in 0..40 {
        assert!(handle.activate(ActivationParameters::new()).accepted);
        handle.deactivate();
    }
    assert_eq!(handle.collect_metrics().a, 41);
    handle.reset_metrics();
    assert_eq!(handle.collect_metrics().a, 0);
}

#[test]
fn stopwatch_measures_monitoring_time() {
    // A timing clock that jumps 1 µs per reading gives exact counters.
    struct Ticker(std::sync::atomic::AtomicU64);
    impl Clock for Ticker {
        fn now_ns(&self) -> u64 {
            self.0.fetch_add(1_000, std::sync::atomic::Ordering::SeqCst)
        }
        fn sleep_until(&self, _: u64) {}
    }
    let clock = VirtualClock::new();
    let shared: Arc<dyn Clock> = Arc::new(clock.clone());
    let bus = Bus::with_dispatch(shared.clone(), ServiceDispatch::Inline);
    let options = RuntimeOptions::stepped(shared)
        .with_timing(Arc::new(Ticker(std::sync::atomic::AtomicU64::new(0))));
    let mut runtime = Runtime::new(bus, options);
    let handle = runtime
        .register(
            goal_cfg("X", Duration::from_secs(10)),
            Box::new(DefaultCallbacks),
        )
        .unwrap();
    assert!(handle.activate(ActivationParameters::new()).accepted);
    for i in 0..10 {
        handle.execute_tick(i).unwrap();
    }
    handle.deactivate();
    let m = handle.collect_metrics();
    assert!((m.t1_us - 1.0).abs() < 1e-12);
    assert!((m.t2_ms - 0.01).abs() < 1e-12);
    // one activate + one deactivate bracket, 1 µs each
    assert!((m.t3_ms - 0.002).abs() < 1e-12);
}

#[test]
fn finish_notices_use_the_wire_schema() {
    let mut fx = Fixture::new();
    let handle = fx.register(goal_cfg("X", Duration::from_secs(1)), &Scripted::new());
    fx.clock.advance(Duration::from_micros(1234));
    handle.activate(ActivationParameters::new());
    handle.deactivate();
    let raw = fx.notices.try_recv().expect("one notice");
    assert_eq!(
        raw.payload.to_string(),
        r#"{"behavior":"X","cause":"INTERRUPTED","detail":"deactivation requested","stamp_us":1234}"#
    );
}

#[derive(Debug, Clone)]
enum Op {
    Activate,
    Deactivate,
    Tick { goal: bool, fail: bool },
    Advance(u64),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        Just(Op::Activate),
        Just(Op::Deactivate),
        (any::<bool>(), prop::bool::weighted(0.1)).prop_map(|(goal, fail)| Op::Tick { goal, fail }),
        (1u64..200).prop_map(Op::Advance),
    ]
}

proptest! {
    #[test]
    fn lifecycle_invariants_hold_for_any_sequence(ops in prop::collection::vec(op(), 1..60)) {
        let mut fx = Fixture::new();
        let script = Scripted::new();
        let handle = fx.register(goal_cfg("X", Duration::from_millis(300)), &script);
        let mut accepted = 0usize;
        let mut seen = 0usize;
        for op in ops {
            match op {
                Op::Activate => {
                    if handle.activate(ActivationParameters::new()).accepted {
                        accepted += 1;
                    }
                }
                Op::Deactivate => { handle.deactivate(); }
                Op::Tick { goal, fail } => {
                    script.with(|s| { s.goal = goal; s.processes_ok = !fail; });
                    handle.poll(fx.clock.now_ns());
                }
                Op::Advance(ms) => fx.clock.advance(Duration::from_millis(ms)),
            }
            seen += fx.notices().len();
            // State soundness: active iff an accepted activation has no notice yet.
            prop_assert_eq!(handle.check_activation().active, accepted > seen);
            prop_assert!(accepted - seen <= 1);
        }
        handle.deactivate();
        seen += fx.notices().len();
        prop_assert_eq!(accepted, seen);
        // Re-activation always possible after a finish.
        script.with(|s| { s.goal = false; s.processes_ok = true; });
        prop_assert!(handle.activate(ActivationParameters::new()).accepted);
        handle.deactivate();

        let hooks: Vec<_> = script.hooks().into_iter().filter(|h| *h != "configure").collect();
        for pair in hooks.chunks(2) {
            prop_assert_eq!(pair, &["activate", "deactivate"][..]);
        }
    }
}

#[test]
fn wire_payload_for_check_activation_omits_params_when_inactive() {
    let status = ActivationStatus {
        active: false,
        params: None,
    };
    assert_eq!(
        status.to_value(),
        Value::map([("active", Value::Bool(false))])
    );
}
