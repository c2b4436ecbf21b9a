//! Third pipeline stage: files interpretation results and failed runs in the
//! context history.

mod query;
mod store;

use std::sync::Arc;

use chrono::Utc;
use serde::{Deserialize, Serialize};

pub use query::{history_query_from_pairs, BoundingBox, DetectionFilter, Page, QueryError, TimeRange, DEFAULT_LIMIT, MAX_LIMIT};
pub use store::{
    read_format_tag, DetectionPage, DetectionRecord, ExecutionPage, ExecutionRecord, FileJournal, HistoryStore, Journal,
    NewDetection, RecordId, RunResult, RunStatus, StoreError, FORMAT_NAME, FORMAT_VERSION, JOURNAL_FILE,
};

use crate::bus::{BusError, EventEnvelope, EventKind, EventPayload, HandlerResult, SmellBus, Subscription};
use crate::interpretation::InterpretedRun;
use crate::validation::{FailedRun, FailureStage, ValidationReport};

pub const SUBSCRIBER_ID: &str = "persistence-service";

/// Payload of the terminal `PersistenceCompleted` event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistedRun {
    pub correlation_id: crate::bus::CorrelationId,
    pub record_ids: Vec<RecordId>,
}

/// Stores the detections and a completed execution record, then publishes
/// `PersistenceCompleted`. If the store refuses the write, a failed execution
/// record is attempted and the run ends with `ValidationFailed` from the
/// persistence stage instead.
pub fn on_interpretation_completed(store: &HistoryStore, bus: &SmellBus, event: &EventEnvelope) -> HandlerResult {
    let EventPayload::InterpretationCompleted(run) = &event.payload else {
        return Ok(());
    };
    let id = &event.correlation_id;
    let detections = new_detections(run);
    let execution = ExecutionRecord::completed(
        id.clone(),
        Utc::now(),
        run.script_name.clone(),
        run.context.project_id.clone(),
        detections.len(),
    );
    match store.commit(detections, execution) {
        Ok(record_ids) => {
            bus.publish(id, EventPayload::PersistenceCompleted(Arc::new(PersistedRun { correlation_id: id.clone(), record_ids })))?;
        }
        Err(StoreError::DuplicateExecution(_)) => {
            bus.annotate(id, SUBSCRIBER_ID, event.sequence, "run already has an execution record");
        }
        Err(err) => {
            tracing::error!(correlation_id = %id, error = %err, "persisting detections failed");
            bus.annotate(id, SUBSCRIBER_ID, event.sequence, format!("persistence failed: {err}"));
            let failed = ExecutionRecord::failed(id.clone(), Utc::now(), run.script_name.clone(), run.context.project_id.clone());
            if let Err(second) = store.commit(vec![], failed) {
                bus.annotate(id, SUBSCRIBER_ID, event.sequence, format!("recording the failure also failed: {second}"));
            }
            bus.publish(
                id,
                EventPayload::ValidationFailed(Arc::new(FailedRun {
                    stage: FailureStage::Persistence,
                    report: ValidationReport::internal(format!("persistence failed: {err}")),
                    context: run.context.clone(),
                    script_name: run.script_name.clone(),
                })),
            )?;
        }
    }
    Ok(())
}

/// Writes a failed execution record for a run that ended early. Runs that
/// already have a record (including persistence failures) are left alone.
pub fn on_validation_failed(store: &HistoryStore, bus: &SmellBus, event: &EventEnvelope) -> HandlerResult {
    let EventPayload::ValidationFailed(run) = &event.payload else {
        return Ok(());
    };
    let id = &event.correlation_id;
    if run.stage == FailureStage::Persistence || store.has_execution(id) {
        return Ok(());
    }
    let record = ExecutionRecord::failed(id.clone(), Utc::now(), run.script_name.clone(), run.context.project_id.clone());
    match store.commit(vec![], record) {
        Ok(_) | Err(StoreError::DuplicateExecution(_)) => Ok(()),
        Err(err) => {
            bus.annotate(id, SUBSCRIBER_ID, event.sequence, format!("recording the failure failed: {err}"));
            Err(err.into())
        }
    }
}

fn new_detections(run: &InterpretedRun) -> Vec<NewDetection> {
    run.result
        .detections
        .iter()
        .map(|d| NewDetection {
            entity_id: d.entity_id.clone(),
            smell_name: d.smell_name.clone(),
            severity: d.severity,
            context: run.context.clone(),
            detected_at: run.result.finished_at,
        })
        .collect()
}

/// One subscriber for both kinds, so events of a run are handled in order.
pub fn register(bus: &SmellBus, store: Arc<HistoryStore>) -> Result<Subscription, BusError> {
    bus.subscribe(
        SUBSCRIBER_ID,
        [EventKind::InterpretationCompleted, EventKind::ValidationFailed],
        move |bus, event| match event.kind {
            EventKind::InterpretationCompleted => on_interpretation_completed(&store, bus, event),
            EventKind::ValidationFailed => on_validation_failed(&store, bus, event),
            _ => Ok(()),
        },
    )
}
