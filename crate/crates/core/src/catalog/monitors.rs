use std::collections::VecDeque;
use std::time::Duration;

use crate::bus::{Bus, Envelope, Subscription, TopicId};

/// Monitoring thresholds shared by the catalog behaviors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    /// Position error accepted as "arrived", meters.
    pub goal_tolerance: f64,
    /// Yaw error accepted as "arrived", radians.
    pub yaw_tolerance: f64,
    /// Distance at which an intermediate path waypoint counts as passed.
    pub waypoint_radius: f64,
    /// Hover error beyond which the hold is considered lost, meters.
    pub progress_epsilon: f64,
    pub progress_window: Duration,
    /// Longest accepted gap between ground-truth messages.
    pub staleness_window: Duration,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            goal_tolerance: 0.05,
            yaw_tolerance: 0.03,
            waypoint_radius: 0.05,
            progress_epsilon: 0.5,
            progress_window: Duration::from_secs(1),
            staleness_window: Duration::from_millis(200),
        }
    }
}

/// Liveness of a topic, judged by the age of its latest message.
pub struct Heartbeat {
    topic: TopicId,
    window: Duration,
    sub: Option<Subscription>,
    last_us: u64,
    latest: Option<Envelope>,
}

impl Heartbeat {
    pub fn new(topic: TopicId, window: Duration) -> Self {
        Self {
            topic,
            window,
            sub: None,
            last_us: 0,
            latest: None,
        }
    }

    /// Starts listening; the activation instant counts as the first beat.
    pub fn start(&mut self, bus: &Bus, now_us: u64) {
        self.sub = Some(bus.subscribe(&self.topic, 16));
        self.last_us = now_us;
    }

    pub fn stop(&mut self) {
        self.sub = None;
        self.latest = None;
    }

    /// Consumes pending messages, keeping the newest one.
    pub fn poll(&mut self) {
        if let Some(latest) = self.sub.as_ref().and_then(|s| s.drain().pop()) {
            self.last_us = self.last_us.max(latest.stamp_us);
            self.latest = Some(latest);
        }
    }

    /// The newest message not yet taken.
    pub fn take_latest(&mut self) -> Option<Envelope> {
        self.poll();
        self.latest.take()
    }

    /// Fails once no message has arrived for longer than the window.
    pub fn check(&mut self, now_us: u64) -> Result<(), String> {
        self.poll();
        let age = now_us.saturating_sub(self.last_us);
        if age as u128 > self.window.as_micros() {
            Err(format!(
                "no message on {} for {:.3} s",
                self.topic,
                age as f64 / 1e6
            ))
        } else {
            Ok(())
        }
    }
}

/// Detects an error signal that grows monotonically over a full window.
#[derive(Debug, Clone)]
pub struct DivergenceMonitor {
    window_ns: u64,
    samples: VecDeque<(u64, f64)>,
}

impl DivergenceMonitor {
    pub fn new(window: Duration) -> Self {
        Self {
            window_ns: window.as_nanos() as u64,
            samples: VecDeque::new(),
        }
    }

    pub fn reset(&mut self) {
        self.samples.clear();
    }

    /// Records `error` at `now_ns`. Returns true when every sample in the
    /// last window is no smaller than the one before and the error grew.
    pub fn diverging(&mut self, now_ns: u64, error: f64) -> bool {
        self.samples.push_back((now_ns, error));
        let horizon = now_ns.saturating_sub(self.window_ns);
        while self.samples.len() > 1 && self.samples[1].0 <= horizon {
            self.samples.pop_front();
        }
        let (oldest, first) = self.samples[0];
        if now_ns.saturating_sub(oldest) < self.window_ns {
            return false;
        }
        let monotone = self
            .samples
            .iter()
            .zip(self.samples.iter().skip(1))
            .all(|(a, b)| b.1 >= a.1);
        monotone && error > first
    }
}

/// Detects an error that stays above a bound for longer than a window.
#[derive(Debug, Clone)]
pub struct ExceedanceMonitor {
    bound: f64,
    window_ns: u64,
    since: Option<u64>,
}

impl ExceedanceMonitor {
    pub fn new(bound: f64, window: Duration) -> Self {
        Self {
            bound,
            window_ns: window.as_nanos() as u64,
            since: None,
        }
    }

    pub fn reset(&mut self) {
        self.since = None;
    }

    pub fn exceeded(&mut self, now_ns: u64, error: f64) -> bool {
        if error <= self.bound {
            self.since = None;
            return false;
        }
        let since = *self.since.get_or_insert(now_ns);
        now_ns - since > self.window_ns
    }
}
