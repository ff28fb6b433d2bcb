//! In-process common data channel.
//!
//! Topics are fire-and-forget with bounded per-subscription queues
//! (drop-oldest on overflow). Services are request-reply endpoints with at
//! most one provider each. All operations are thread-safe; with
//! [`ServiceDispatch::Inline`] and a virtual clock the whole bus is also
//! fully deterministic on a single thread.

mod names;
mod value;

pub use names::{ServiceId, TopicId};
pub use value::Value;

use std::collections::{HashMap, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Condvar, Mutex, RwLock, Weak};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::clock::Clock;

pub const DEFAULT_QUEUE_CAPACITY: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BusError {
    #[error("invalid name: {0}")]
    InvalidName(String),
    #[error("invalid payload: {0}")]
    InvalidPayload(String),
    #[error("unknown subscription handle {0}")]
    UnknownHandle(u64),
    #[error("service `{0}` is already advertised")]
    AlreadyAdvertised(ServiceId),
    #[error("no provider for service `{0}`")]
    NoProvider(ServiceId),
    #[error("service `{service}` did not answer within {timeout:?}")]
    Timeout {
        service: ServiceId,
        timeout: Duration,
    },
    #[error("service `{service}` failed: {detail}")]
    HandlerFailure { service: ServiceId, detail: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// One published message as seen by a subscriber.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub topic: TopicId,
    pub seq: u64,
    pub payload: Value,
    pub stamp_us: u64,
}

/// How `call_service` runs the provider's handler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ServiceDispatch {
    /// On a dedicated thread; the caller waits at most `timeout`.
    #[default]
    Threaded,
    /// On the calling thread; a late answer is discarded and reported as
    /// a timeout.
    Inline,
}

type ServiceHandler = dyn Fn(Value) -> Result<Value, String> + Send + Sync;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SubscriptionHandle {
    pub id: u64,
    pub topic: TopicId,
}

struct QueueState {
    items: VecDeque<Envelope>,
    closed: bool,
}

struct SubQueue {
    capacity: usize,
    state: Mutex<QueueState>,
    ready: Condvar,
    dropped: AtomicU64,
}

impl SubQueue {
    fn push(&self, envelope: Envelope) {
        let mut state = self.state.lock().unwrap();
        if state.closed {
            return;
        }
        if state.items.len() == self.capacity {
            state.items.pop_front();
            self.dropped.fetch_add(1, Ordering::Relaxed);
        }
        state.items.push_back(envelope);
        self.ready.notify_one();
    }

    fn close(&self) {
        let mut state = self.state.lock().unwrap();
        state.closed = true;
        self.ready.notify_all();
    }
}

#[derive(Default)]
struct TopicState {
    next_seq: u64,
    subscribers: Vec<(u64, Weak<SubQueue>)>,
}

struct BusInner {
    clock: Arc<dyn Clock>,
    dispatch: ServiceDispatch,
    topics: RwLock<HashMap<TopicId, Arc<Mutex<TopicState>>>>,
    live: Mutex<HashMap<u64, TopicId>>,
    next_subscription: AtomicU64,
    services: Mutex<HashMap<ServiceId, Arc<ServiceHandler>>>,
}

impl BusInner {
    fn topic(&self, topic: &TopicId) -> Arc<Mutex<TopicState>> {
        if let Some(state) = self.topics.read().unwrap().get(topic) {
            return state.clone();
        }
        self.topics
            .write()
            .unwrap()
            .entry(topic.clone())
            .or_default()
            .clone()
    }

    fn remove_subscription(&self, handle: &SubscriptionHandle) -> bool {
        if self.live.lock().unwrap().remove(&handle.id).is_none() {
            return false;
        }
        let state = self.topic(&handle.topic);
        state
            .lock()
            .unwrap()
            .subscribers
            .retain(|(id, _)| *id != handle.id);
        true
    }
}

/// Cheaply cloneable handle to a shared bus.
#[derive(Clone)]
pub struct Bus {
    inner: Arc<BusInner>,
}

impl std::fmt::Debug for Bus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Bus")
            .field("dispatch", &self.inner.dispatch)
            .finish_non_exhaustive()
    }
}

impl Bus {
    pub fn new(clock: Arc<dyn Clock>) -> Self {
        Self::with_dispatch(clock, ServiceDispatch::default())
    }

    pub fn with_dispatch(clock: Arc<dyn Clock>, dispatch: ServiceDispatch) -> Self {
        Self {
            inner: Arc::new(BusInner {
                clock,
                dispatch,
                topics: RwLock::new(HashMap::new()),
                live: Mutex::new(HashMap::new()),
                next_subscription: AtomicU64::new(1),
                services: Mutex::new(HashMap::new()),
            }),
        }
    }

    pub fn clock(&self) -> Arc<dyn Clock> {
        self.inner.clock.clone()
    }

    pub fn dispatch(&self) -> ServiceDispatch {
        self.inner.dispatch
    }

    /// Publishes `payload` to every current subscriber of `topic` and
    /// returns the sequence number assigned to it (starting at 1).
    pub fn publish(&self, topic: &TopicId, payload: Value) -> Result<u64, BusError> {
        payload.validate().map_err(BusError::InvalidPayload)?;
        let state = self.inner.topic(topic);
        // Seq assignment and fan-out share one critical section so that
        // every subscriber sees a topic's messages in seq order.
        let mut state = state.lock().unwrap();
        state.next_seq += 1;
        let seq = state.next_seq;
        let envelope = Envelope {
            topic: topic.clone(),
            seq,
            payload,
            stamp_us: self.inner.clock.now_us(),
        };
        state
            .subscribers
            .retain(|(_, queue)| match queue.upgrade() {
                Some(queue) => {
                    queue.push(envelope.clone());
                    true
                }
                None => false,
            });
        Ok(seq)
    }

    pub fn subscribe(&self, topic: &TopicId, queue_capacity: usize) -> Subscription {
        assert!(queue_capacity >= 1, "queue capacity must be at least 1");
        let id = self.inner.next_subscription.fetch_add(1, Ordering::Relaxed);
        let queue = Arc::new(SubQueue {
            capacity: queue_capacity,
            state: Mutex::new(QueueState {
                items: VecDeque::new(),
                closed: false,
            }),
            ready: Condvar::new(),
            dropped: AtomicU64::new(0),
        });
        let state = self.inner.topic(topic);
        let mut state = state.lock().unwrap();
        self.inner.live.lock().unwrap().insert(id, topic.clone());
        state.subscribers.push((id, Arc::downgrade(&queue)));
        Subscription {
            handle: SubscriptionHandle {
                id,
                topic: topic.clone(),
            },
            queue,
            bus: Arc::downgrade(&self.inner),
        }
    }

    pub fn unsubscribe(&self, handle: &SubscriptionHandle) -> Result<(), BusError> {
        if self.inner.remove_subscription(handle) {
            Ok(())
        } else {
            Err(BusError::UnknownHandle(handle.id))
        }
    }

    pub fn advertise_service<F>(&self, service: &ServiceId, handler: F) -> Result<(), BusError>
    where
        F: Fn(Value) -> Result<Value, String> + Send + Sync + 'static,
    {
        let mut services = self.inner.services.lock().unwrap();
        if services.contains_key(service) {
            return Err(BusError::AlreadyAdvertised(service.clone()));
        }
        services.insert(service.clone(), Arc::new(handler));
        Ok(())
    }

    pub fn withdraw_service(&self, service: &ServiceId) -> bool {
        self.inner
            .services
            .lock()
            .unwrap()
            .remove(service)
            .is_some()
    }

    pub fn is_advertised(&self, service: &ServiceId) -> bool {
        self.inner.services.lock().unwrap().contains_key(service)
    }

    pub fn call_service(
        &self,
        service: &ServiceId,
        request: Value,
        timeout: Duration,
    ) -> Result<Value, BusError> {
        if timeout.is_zero() {
            return Err(BusError::InvalidArgument("timeout must be positive".into()));
        }
        request.validate().map_err(BusError::InvalidPayload)?;
        let handler = self
            .inner
            .services
            .lock()
            .unwrap()
            .get(service)
            .cloned()
            .ok_or_else(|| BusError::NoProvider(service.clone()))?;
        let failure = |detail: String| BusError::HandlerFailure {
            service: service.clone(),
            detail,
        };
        let timed_out = || BusError::Timeout {
            service: service.clone(),
            timeout,
        };
        match self.inner.dispatch {
            ServiceDispatch::Inline => {
                let started = Instant::now();
                let result = catch_unwind(AssertUnwindSafe(|| handler(request)))
                    .map_err(|_| failure("handler panicked".into()))?;
                if started.elapsed() > timeout {
                    return Err(timed_out());
                }
                result.map_err(failure)
            }
            ServiceDispatch::Threaded => {
                let (tx, rx) = mpsc::sync_channel(1);
                std::thread::Builder::new()
                    .name(format!("svc:{service}"))
                    .spawn(move || {
                        let _ = tx.send(handler(request));
                    })
                    .map_err(|e| failure(format!("cannot spawn handler: {e}")))?;
                match rx.recv_timeout(timeout) {
                    Ok(result) => result.map_err(failure),
                    Err(mpsc::RecvTimeoutError::Timeout) => Err(timed_out()),
                    Err(mpsc::RecvTimeoutError::Disconnected) => {
                        Err(failure("handler panicked".into()))
                    }
                }
            }
        }
    }
}

/// Receiving end of one topic subscription. Dropping it unsubscribes.
pub struct Subscription {
    handle: SubscriptionHandle,
    queue: Arc<SubQueue>,
    bus: Weak<BusInner>,
}

impl std::fmt::Debug for Subscription {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Subscription")
            .field("handle", &self.handle)
            .finish_non_exhaustive()
    }
}

impl Subscription {
    pub fn handle(&self) -> &SubscriptionHandle {
        &self.handle
    }

    pub fn try_recv(&self) -> Option<Envelope> {
        self.queue.state.lock().unwrap().items.pop_front()
    }

    /// Waits up to `timeout` of real time for the next message.
    pub fn recv_timeout(&self, timeout: Duration) -> Option<Envelope> {
        let deadline = Instant::now() + timeout;
        let mut state = self.queue.state.lock().unwrap();
        loop {
            if let Some(envelope) = state.items.pop_front() {
                return Some(envelope);
            }
            let now = Instant::now();
            if state.closed || now >= deadline {
                return None;
            }
            state = self
                .queue
                .ready
                .wait_timeout(state, deadline - now)
                .unwrap()
                .0;
        }
    }

    pub fn drain(&self) -> Vec<Envelope> {
        self.queue.state.lock().unwrap().items.drain(..).collect()
    }

    pub fn pending(&self) -> usize {
        self.queue.state.lock().unwrap().items.len()
    }

    /// Messages discarded because the queue was full.
    pub fn dropped(&self) -> u64 {
        self.queue.dropped.load(Ordering::Relaxed)
    }
}

impl Drop for Subscription {
    fn drop(&mut self) {
        self.queue.close();
        if let Some(bus) = self.bus.upgrade() {
            bus.remove_subscription(&self.handle);
        }
    }
}
