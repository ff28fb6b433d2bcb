//! Injected monotonic time sources.
//!
//! Everything time-dependent in the runtime (envelope stamps, tick
//! deadlines, timeouts, metrics) reads a [`Clock`]. Tests and
//! deterministic missions use [`VirtualClock`], which only moves when it
//! is told to; the CLI's real-time mode uses [`MonotonicClock`].

use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

pub const NANOS_PER_MICRO: u64 = 1_000;
pub const NANOS_PER_SEC: u64 = 1_000_000_000;

/// Monotonic time in nanoseconds since an arbitrary origin.
pub trait Clock: Send + Sync {
    fn now_ns(&self) -> u64;

    /// Blocks the calling thread until `now_ns() >= deadline_ns`.
    fn sleep_until(&self, deadline_ns: u64);

    fn now_us(&self) -> u64 {
        self.now_ns() / NANOS_PER_MICRO
    }
}

/// Wall-clock backed monotonic time.
#[derive(Debug, Clone)]
pub struct MonotonicClock {
    origin: Instant,
}

impl MonotonicClock {
    pub fn new() -> Self {
        Self {
            origin: Instant::now(),
        }
    }
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for MonotonicClock {
    fn now_ns(&self) -> u64 {
        self.origin.elapsed().as_nanos() as u64
    }

    fn sleep_until(&self, deadline_ns: u64) {
        let now = self.now_ns();
        if deadline_ns > now {
            std::thread::sleep(Duration::from_nanos(deadline_ns - now));
        }
    }
}

/// A clock that advances only through [`VirtualClock::advance`] or
/// [`VirtualClock::set`]. Clones share the same time.
#[derive(Debug, Clone, Default)]
pub struct VirtualClock {
    inner: Arc<(Mutex<u64>, Condvar)>,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn starting_at(ns: u64) -> Self {
        let clock = Self::default();
        clock.set(ns);
        clock
    }

    pub fn advance(&self, by: Duration) {
        self.advance_ns(by.as_nanos() as u64);
    }

    pub fn advance_ns(&self, ns: u64) {
        let (lock, cvar) = &*self.inner;
        let mut now = lock.lock().unwrap();
        *now += ns;
        cvar.notify_all();
    }

    /// Moves time forward to `ns`. Setting an earlier time is ignored.
    pub fn set(&self, ns: u64) {
        let (lock, cvar) = &*self.inner;
        let mut now = lock.lock().unwrap();
        if ns > *now {
            *now = ns;
        }
        cvar.notify_all();
    }
}

impl Clock for VirtualClock {
    fn now_ns(&self) -> u64 {
        *self.inner.0.lock().unwrap()
    }

    fn sleep_until(&self, deadline_ns: u64) {
        let (lock, cvar) = &*self.inner;
        let mut now = lock.lock().unwrap();
        while *now < deadline_ns {
            now = cvar.wait(now).unwrap();
        }
    }
}

pub fn secs_to_ns(secs: f64) -> u64 {
    (secs * NANOS_PER_SEC as f64).round() as u64
}

pub fn ns_to_secs(ns: u64) -> f64 {
    ns as f64 / NANOS_PER_SEC as f64
}
