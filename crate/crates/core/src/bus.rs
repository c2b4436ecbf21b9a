//! In-process publish/subscribe bus carrying the pipeline events.
//!
//! Every subscriber owns a small pool of worker lanes. An event is routed to
//! the lane picked by its correlation id, so events of one run reach a given
//! subscriber one at a time and in sequence order, while different runs are
//! handled in parallel. Publishing only enqueues; handlers never run on the
//! publisher's thread.
//!
//! The bus also keeps the per-run trace (every envelope in sequence order)
//! and any annotations recorded when a handler failed.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::mpsc::{channel, Sender};
use std::sync::{Arc, Condvar, Mutex, Weak};
use std::thread;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::inputs::AnalysisRequest;
use crate::interpretation::InterpretedRun;
use crate::persistence::PersistedRun;
use crate::validation::{FailedRun, ValidatedRequest};

pub const DEFAULT_LANES: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CorrelationId(String);

impl CorrelationId {
    pub fn generate() -> Self {
        CorrelationId(uuid::Uuid::new_v4().to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for CorrelationId {
    type Error = BusError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        if s.trim().is_empty() {
            Err(BusError::EmptyCorrelationId)
        } else {
            Ok(CorrelationId(s))
        }
    }
}

impl TryFrom<&str> for CorrelationId {
    type Error = BusError;

    fn try_from(s: &str) -> Result<Self, Self::Error> {
        CorrelationId::try_from(s.to_string())
    }
}

impl fmt::Display for CorrelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventKind {
    AnalysisRequested,
    ValidationCompleted,
    ValidationFailed,
    InterpretationCompleted,
    PersistenceCompleted,
}

impl EventKind {
    pub const ALL: [EventKind; 5] = [
        EventKind::AnalysisRequested,
        EventKind::ValidationCompleted,
        EventKind::ValidationFailed,
        EventKind::InterpretationCompleted,
        EventKind::PersistenceCompleted,
    ];

    /// The happy path, in order.
    pub const CHAIN: [EventKind; 4] = [
        EventKind::AnalysisRequested,
        EventKind::ValidationCompleted,
        EventKind::InterpretationCompleted,
        EventKind::PersistenceCompleted,
    ];

    pub fn is_terminal(self) -> bool {
        matches!(self, EventKind::ValidationFailed | EventKind::PersistenceCompleted)
    }

    /// Whether `next` may directly follow `self` in one run's trace.
    /// `ValidationFailed` may also end a run after a later stage faulted.
    pub fn may_precede(self, next: EventKind) -> bool {
        use EventKind::*;
        matches!(
            (self, next),
            (AnalysisRequested, ValidationCompleted)
                | (AnalysisRequested, ValidationFailed)
                | (ValidationCompleted, InterpretationCompleted)
                | (ValidationCompleted, ValidationFailed)
                | (InterpretationCompleted, PersistenceCompleted)
                | (InterpretationCompleted, ValidationFailed)
        )
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EventPayload {
    AnalysisRequested(Arc<AnalysisRequest>),
    ValidationCompleted(Arc<ValidatedRequest>),
    ValidationFailed(Arc<FailedRun>),
    InterpretationCompleted(Arc<InterpretedRun>),
    PersistenceCompleted(Arc<PersistedRun>),
}

impl EventPayload {
    pub fn kind(&self) -> EventKind {
        match self {
            EventPayload::AnalysisRequested(_) => EventKind::AnalysisRequested,
            EventPayload::ValidationCompleted(_) => EventKind::ValidationCompleted,
            EventPayload::ValidationFailed(_) => EventKind::ValidationFailed,
            EventPayload::InterpretationCompleted(_) => EventKind::InterpretationCompleted,
            EventPayload::PersistenceCompleted(_) => EventKind::PersistenceCompleted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventEnvelope {
    pub correlation_id: CorrelationId,
    pub sequence: u64,
    pub kind: EventKind,
    pub payload: EventPayload,
    pub emitted_at: DateTime<Utc>,
}

/// A handler failure recorded against the event that triggered it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub subscriber_id: String,
    pub sequence: u64,
    pub message: String,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BusError {
    #[error("correlation id must not be empty")]
    EmptyCorrelationId,
    #[error("unknown correlation id `{0}`")]
    UnknownCorrelation(CorrelationId),
    #[error("correlation id `{0}` already has an AnalysisRequested event")]
    DuplicateCorrelation(CorrelationId),
    #[error("run `{0}` already ended with {1}")]
    Terminated(CorrelationId, EventKind),
    #[error("{next} cannot follow {last} in run `{id}`")]
    OutOfOrder { id: CorrelationId, last: EventKind, next: EventKind },
    #[error("subscriber id `{0}` is already in use")]
    DuplicateSubscriber(String),
}

pub type HandlerResult = Result<(), Box<dyn std::error::Error + Send + Sync>>;

type Handler = dyn Fn(&SmellBus, &EventEnvelope) -> HandlerResult + Send + Sync;

/// Handle describing a live subscription.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subscription {
    pub subscriber_id: String,
    pub kinds: BTreeSet<EventKind>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct BusStats {
    pub published: u64,
    /// Sum over published events of the matching subscribers at publish time.
    pub enqueued: u64,
    /// Handler invocations that have returned (successfully or not).
    pub delivered: u64,
    pub handler_failures: u64,
}

struct Subscriber {
    kinds: BTreeSet<EventKind>,
    lanes: Vec<Sender<EventEnvelope>>,
}

#[derive(Default)]
struct RunTrace {
    events: Vec<EventEnvelope>,
    annotations: Vec<Annotation>,
}

#[derive(Default)]
struct State {
    subscribers: HashMap<String, Subscriber>,
    traces: HashMap<CorrelationId, RunTrace>,
    stats: BusStats,
}

struct Inner {
    state: Mutex<State>,
    idle: Condvar,
    lanes: usize,
}

/// Cheaply cloneable handle to one bus.
#[derive(Clone)]
pub struct SmellBus {
    inner: Arc<Inner>,
}

impl Default for SmellBus {
    fn default() -> Self {
        Self::new()
    }
}

impl SmellBus {
    pub fn new() -> Self {
        Self::with_lanes(DEFAULT_LANES)
    }

    /// `lanes` worker threads per subscriber (at least one).
    pub fn with_lanes(lanes: usize) -> Self {
        SmellBus {
            inner: Arc::new(Inner { state: Mutex::new(State::default()), idle: Condvar::new(), lanes: lanes.max(1) }),
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, State> {
        self.inner.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Appends the event to the run's trace and enqueues it for every
    /// matching subscriber. Returns the assigned sequence number.
    pub fn publish(&self, correlation_id: &CorrelationId, payload: EventPayload) -> Result<u64, BusError> {
        let kind = payload.kind();
        let mut state = self.lock();
        let sequence = match (kind, state.traces.get(correlation_id)) {
            (EventKind::AnalysisRequested, None) => 1,
            (EventKind::AnalysisRequested, Some(_)) => {
                return Err(BusError::DuplicateCorrelation(correlation_id.clone()))
            }
            (_, None) => return Err(BusError::UnknownCorrelation(correlation_id.clone())),
            (_, Some(trace)) => {
                let last = trace.events.last().expect("traces are created with their first event");
                if last.kind.is_terminal() {
                    return Err(BusError::Terminated(correlation_id.clone(), last.kind));
                }
                if !last.kind.may_precede(kind) {
                    return Err(BusError::OutOfOrder { id: correlation_id.clone(), last: last.kind, next: kind });
                }
                last.sequence + 1
            }
        };

        let envelope = EventEnvelope {
            correlation_id: correlation_id.clone(),
            sequence,
            kind,
            payload,
            emitted_at: Utc::now(),
        };
        state.traces.entry(correlation_id.clone()).or_default().events.push(envelope.clone());
        state.stats.published += 1;

        let lane = lane_for(correlation_id, self.inner.lanes);
        let mut enqueued = 0;
        for sub in state.subscribers.values() {
            if sub.kinds.contains(&kind) && sub.lanes[lane].send(envelope.clone()).is_ok() {
                enqueued += 1;
            }
        }
        state.stats.enqueued += enqueued;
        tracing::debug!(correlation_id = %correlation_id, %kind, sequence, subscribers = enqueued, "published");
        Ok(sequence)
    }

    pub fn subscribe<H>(
        &self,
        subscriber_id: impl Into<String>,
        kinds: impl IntoIterator<Item = EventKind>,
        handler: H,
    ) -> Result<Subscription, BusError>
    where
        H: Fn(&SmellBus, &EventEnvelope) -> HandlerResult + Send + Sync + 'static,
    {
        let subscriber_id = subscriber_id.into();
        let kinds: BTreeSet<EventKind> = kinds.into_iter().collect();
        let mut state = self.lock();
        if state.subscribers.contains_key(&subscriber_id) {
            return Err(BusError::DuplicateSubscriber(subscriber_id));
        }
        let handler: Arc<Handler> = Arc::new(handler);
        let mut lanes = Vec::with_capacity(self.inner.lanes);
        for lane in 0..self.inner.lanes {
            let (tx, rx) = channel::<EventEnvelope>();
            let weak = Arc::downgrade(&self.inner);
            let handler = Arc::clone(&handler);
            let id = subscriber_id.clone();
            thread::Builder::new()
                .name(format!("bus-{id}-{lane}"))
                .spawn(move || {
                    for envelope in rx {
                        let Some(inner) = weak.upgrade() else { break };
                        deliver(&SmellBus { inner }, &id, handler.as_ref(), &envelope);
                    }
                })
                .expect("spawning a bus worker thread");
            lanes.push(tx);
        }
        state.subscribers.insert(subscriber_id.clone(), Subscriber { kinds: kinds.clone(), lanes });
        Ok(Subscription { subscriber_id, kinds })
    }

    /// Stops future deliveries; events already enqueued are still handled.
    pub fn unsubscribe(&self, subscriber_id: &str) -> bool {
        self.lock().subscribers.remove(subscriber_id).is_some()
    }

    /// All events of one run in sequence order; empty for unknown ids.
    pub fn trace(&self, correlation_id: &CorrelationId) -> Vec<EventEnvelope> {
        self.lock().traces.get(correlation_id).map(|t| t.events.clone()).unwrap_or_default()
    }

    pub fn annotations(&self, correlation_id: &CorrelationId) -> Vec<Annotation> {
        self.lock().traces.get(correlation_id).map(|t| t.annotations.clone()).unwrap_or_default()
    }

    /// Records a note against a run's trace without emitting an event.
    pub fn annotate(&self, correlation_id: &CorrelationId, subscriber_id: &str, sequence: u64, message: impl Into<String>) {
        let message = message.into();
        tracing::warn!(correlation_id = %correlation_id, subscriber_id, sequence, %message, "annotation");
        if let Some(trace) = self.lock().traces.get_mut(correlation_id) {
            trace.annotations.push(Annotation {
                subscriber_id: subscriber_id.to_string(),
                sequence,
                message,
                at: Utc::now(),
            });
        }
    }

    pub fn correlation_ids(&self) -> Vec<CorrelationId> {
        let mut ids: Vec<_> = self.lock().traces.keys().cloned().collect();
        ids.sort();
        ids
    }

    pub fn stats(&self) -> BusStats {
        self.lock().stats
    }

    /// Blocks until every enqueued delivery has been handled (including the
    /// events those handlers published), or the timeout passes.
    pub fn wait_idle(&self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        let mut state = self.lock();
        loop {
            if state.stats.delivered == state.stats.enqueued {
                return true;
            }
            let now = Instant::now();
            if now >= deadline {
                return false;
            }
            state = self
                .inner
                .idle
                .wait_timeout(state, deadline - now)
                .unwrap_or_else(|p| p.into_inner())
                .0;
        }
    }
}

fn lane_for(id: &CorrelationId, lanes: usize) -> usize {
    let mut hasher = DefaultHasher::new();
    id.hash(&mut hasher);
    (hasher.finish() % lanes as u64) as usize
}

fn deliver(bus: &SmellBus, subscriber_id: &str, handler: &Handler, envelope: &EventEnvelope) {
    let outcome = catch_unwind(AssertUnwindSafe(|| handler(bus, envelope)));
    let failure = match outcome {
        Ok(Ok(())) => None,
        Ok(Err(e)) => Some(format!("handler error: {e}")),
        Err(panic) => Some(format!("handler panicked: {}", panic_message(&panic))),
    };
    if let Some(message) = &failure {
        bus.annotate(&envelope.correlation_id, subscriber_id, envelope.sequence, message.clone());
    }
    let mut state = bus.lock();
    state.stats.delivered += 1;
    if failure.is_some() {
        state.stats.handler_failures += 1;
    }
    if state.stats.delivered == state.stats.enqueued {
        bus.inner.idle.notify_all();
    }
}

fn panic_message(panic: &Box<dyn std::any::Any + Send>) -> String {
    panic
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| panic.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "non-string panic payload".into())
}

impl fmt::Debug for SmellBus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmellBus").field("stats", &self.stats()).finish()
    }
}

/// Keeps a weak reference so long-lived helpers don't keep the bus alive.
#[derive(Clone)]
pub struct WeakBus(Weak<Inner>);

impl WeakBus {
    pub fn upgrade(&self) -> Option<SmellBus> {
        self.0.upgrade().map(|inner| SmellBus { inner })
    }
}

impl SmellBus {
    pub fn downgrade(&self) -> WeakBus {
        WeakBus(Arc::downgrade(&self.inner))
    }
}
