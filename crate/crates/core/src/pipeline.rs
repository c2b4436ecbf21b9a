//! Wires the three services onto one bus and tracks runs to completion.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::bus::{BusError, CorrelationId, EventEnvelope, EventKind, EventPayload, SmellBus, WeakBus};
use crate::dsl::Detection;
use crate::inputs::AnalysisRequest;
use crate::interpretation;
use crate::persistence::{self, HistoryStore, RecordId};
use crate::validation::{self, FailedRun, FailureStage, ValidationReport};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Requested,
    Validated,
    Interpreted,
    Persisted,
    Failed,
}

impl Stage {
    pub fn of(kind: EventKind) -> Stage {
        match kind {
            EventKind::AnalysisRequested => Stage::Requested,
            EventKind::ValidationCompleted => Stage::Validated,
            EventKind::InterpretationCompleted => Stage::Interpreted,
            EventKind::PersistenceCompleted => Stage::Persisted,
            EventKind::ValidationFailed => Stage::Failed,
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Stage::Persisted | Stage::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSummary {
    pub sequence: u64,
    pub kind: EventKind,
    pub emitted_at: DateTime<Utc>,
}

/// What a client sees when polling one run. Everything is derived from the
/// run's bus trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusView {
    pub correlation_id: CorrelationId,
    pub stage: Stage,
    pub terminal: bool,
    pub events: Vec<EventSummary>,
    /// Present once interpreted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detections: Option<Vec<Detection>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_ids: Option<Vec<RecordId>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_stage: Option<FailureStage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<ValidationReport>,
}

/// `None` for an empty trace.
pub fn status_from_trace(trace: &[EventEnvelope]) -> Option<StatusView> {
    let last = trace.last()?;
    let stage = Stage::of(last.kind);
    let mut view = StatusView {
        correlation_id: last.correlation_id.clone(),
        stage,
        terminal: stage.is_terminal(),
        events: trace
            .iter()
            .map(|e| EventSummary { sequence: e.sequence, kind: e.kind, emitted_at: e.emitted_at })
            .collect(),
        detections: None,
        record_ids: None,
        failure_stage: None,
        diagnostics: None,
    };
    for event in trace {
        match &event.payload {
            EventPayload::InterpretationCompleted(run) => view.detections = Some(run.result.detections.clone()),
            EventPayload::PersistenceCompleted(run) => view.record_ids = Some(run.record_ids.clone()),
            EventPayload::ValidationFailed(run) => {
                view.failure_stage = Some(run.stage);
                view.diagnostics = Some(run.report.clone());
            }
            _ => {}
        }
    }
    Some(view)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineConfig {
    /// A run not terminal this long after submission is failed with stage
    /// `timeout`.
    pub timeout: Duration,
    pub lanes: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig { timeout: DEFAULT_TIMEOUT, lanes: crate::bus::DEFAULT_LANES }
    }
}

pub struct Pipeline {
    bus: SmellBus,
    store: Arc<HistoryStore>,
    watchdog: Arc<Watchdog>,
    config: PipelineConfig,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline").field("bus", &self.bus).field("config", &self.config).finish()
    }
}

impl Pipeline {
    pub fn start(store: Arc<HistoryStore>, config: PipelineConfig) -> Result<Self, BusError> {
        let bus = SmellBus::with_lanes(config.lanes);
        Self::on_bus(bus, store, config)
    }

    /// Registers the services on an existing bus, e.g. one that already has
    /// observers subscribed.
    pub fn on_bus(bus: SmellBus, store: Arc<HistoryStore>, config: PipelineConfig) -> Result<Self, BusError> {
        validation::register(&bus)?;
        interpretation::register(&bus)?;
        persistence::register(&bus, Arc::clone(&store))?;
        let watchdog = Watchdog::spawn(bus.downgrade());
        Ok(Pipeline { bus, store, watchdog, config })
    }

    pub fn bus(&self) -> &SmellBus {
        &self.bus
    }

    pub fn store(&self) -> &Arc<HistoryStore> {
        &self.store
    }

    pub fn config(&self) -> PipelineConfig {
        self.config
    }

    pub fn submit(&self, request: AnalysisRequest) -> Result<CorrelationId, BusError> {
        let id = CorrelationId::generate();
        self.submit_as(&id, request)?;
        Ok(id)
    }

    pub fn submit_as(&self, id: &CorrelationId, request: AnalysisRequest) -> Result<(), BusError> {
        self.bus.publish(id, EventPayload::AnalysisRequested(Arc::new(request)))?;
        self.watchdog.watch(id.clone(), Instant::now() + self.config.timeout);
        Ok(())
    }

    pub fn status(&self, id: &CorrelationId) -> Option<StatusView> {
        status_from_trace(&self.bus.trace(id))
    }

    /// Polls until the run is terminal; returns the last status seen.
    pub fn wait_terminal(&self, id: &CorrelationId, timeout: Duration) -> Option<StatusView> {
        let deadline = Instant::now() + timeout;
        loop {
            let status = self.status(id);
            if status.as_ref().is_none_or(|s| s.terminal) || Instant::now() >= deadline {
                return status;
            }
            thread::sleep(Duration::from_millis(2));
        }
    }
}

impl Drop for Pipeline {
    fn drop(&mut self) {
        self.watchdog.stop();
    }
}

struct Watchdog {
    state: Mutex<WatchState>,
    wake: Condvar,
}

#[derive(Default)]
struct WatchState {
    deadlines: BinaryHeap<Reverse<(Instant, CorrelationId)>>,
    stopped: bool,
}

impl Watchdog {
    fn spawn(bus: WeakBus) -> Arc<Self> {
        let dog = Arc::new(Watchdog { state: Mutex::new(WatchState::default()), wake: Condvar::new() });
        let worker = Arc::clone(&dog);
        thread::Builder::new()
            .name("pipeline-watchdog".into())
            .spawn(move || worker.run(bus))
            .expect("spawning the watchdog thread");
        dog
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, WatchState> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn watch(&self, id: CorrelationId, deadline: Instant) {
        self.lock().deadlines.push(Reverse((deadline, id)));
        self.wake.notify_one();
    }

    fn stop(&self) {
        self.lock().stopped = true;
        self.wake.notify_one();
    }

    fn run(&self, bus: WeakBus) {
        let mut state = self.lock();
        loop {
            if state.stopped {
                return;
            }
            let now = Instant::now();
            match state.deadlines.peek() {
                Some(Reverse((at, _))) if *at <= now => {
                    let Reverse((_, id)) = state.deadlines.pop().expect("peeked");
                    drop(state);
                    match bus.upgrade() {
                        Some(bus) => expire(&bus, &id),
                        None => return,
                    }
                    state = self.lock();
                }
                Some(Reverse((at, _))) => {
                    let wait = *at - now;
                    state = self.wake.wait_timeout(state, wait).unwrap_or_else(|p| p.into_inner()).0;
                }
                None => {
                    state = self.wake.wait(state).unwrap_or_else(|p| p.into_inner());
                }
            }
        }
    }
}

fn expire(bus: &SmellBus, id: &CorrelationId) {
    let trace = bus.trace(id);
    if trace.last().is_none_or(|e| e.kind.is_terminal()) {
        return;
    }
    let Some(EventPayload::AnalysisRequested(request)) = trace.first().map(|e| &e.payload) else {
        return;
    };
    let failed = FailedRun::for_request(FailureStage::Timeout, ValidationReport::internal("run timed out"), request);
    // the run may have finished since the trace was read
    if let Err(err) = bus.publish(id, EventPayload::ValidationFailed(Arc::new(failed))) {
        tracing::debug!(correlation_id = %id, error = %err, "timeout raced with completion");
    }
}
