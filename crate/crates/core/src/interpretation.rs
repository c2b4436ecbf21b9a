//! Second pipeline stage: runs detection on validated requests.

use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::bus::{BusError, CorrelationId, EventEnvelope, EventKind, EventPayload, HandlerResult, SmellBus, Subscription};
use crate::dsl::{detect, Detection};
use crate::inputs::ContextMetadata;
use crate::validation::{FailedRun, FailureStage, ValidatedRequest, ValidationReport};

pub const SUBSCRIBER_ID: &str = "interpretation-service";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpretationResult {
    pub correlation_id: CorrelationId,
    pub detections: Vec<Detection>,
    pub evaluated_entities: usize,
    pub evaluated_rules: usize,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
}

/// Payload of `InterpretationCompleted`: the result plus what persistence
/// needs to file it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpretedRun {
    pub result: InterpretationResult,
    pub context: ContextMetadata,
    pub script_name: String,
}

pub fn interpret(correlation_id: &CorrelationId, validated: &ValidatedRequest) -> Result<InterpretationResult, String> {
    let started_at = Utc::now();
    let request = &validated.request;
    let detections = detect(&validated.script, &request.table, &request.thresholds).map_err(|e| e.to_string())?;
    Ok(InterpretationResult {
        correlation_id: correlation_id.clone(),
        detections,
        evaluated_entities: request.table.rows().len(),
        evaluated_rules: validated.script.definitions().len(),
        started_at,
        finished_at: Utc::now().max(started_at),
    })
}

/// Handles `ValidationCompleted`. Interpreter faults end the run with a
/// `ValidationFailed` event from the interpretation stage.
pub fn on_validation_completed(bus: &SmellBus, event: &EventEnvelope) -> HandlerResult {
    let EventPayload::ValidationCompleted(validated) = &event.payload else {
        return Ok(());
    };
    let payload = match interpret(&event.correlation_id, validated) {
        Ok(result) => EventPayload::InterpretationCompleted(Arc::new(InterpretedRun {
            result,
            context: validated.request.context.clone(),
            script_name: validated.script_name(),
        })),
        Err(fault) => {
            tracing::error!(correlation_id = %event.correlation_id, %fault, "interpretation failed");
            EventPayload::ValidationFailed(Arc::new(FailedRun {
                stage: FailureStage::Interpretation,
                report: ValidationReport::internal(fault),
                context: validated.request.context.clone(),
                script_name: validated.script_name(),
            }))
        }
    };
    bus.publish(&event.correlation_id, payload)?;
    Ok(())
}

pub fn register(bus: &SmellBus) -> Result<Subscription, BusError> {
    bus.subscribe(SUBSCRIBER_ID, [EventKind::ValidationCompleted], on_validation_completed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inputs::parse_metric_table;
    use crate::testutil::god_class_request;
    use crate::validation::validate;

    #[test]
    fn counts_are_honest() {
        let validated = validate(god_class_request()).unwrap();
        let id = CorrelationId::generate();
        let result = interpret(&id, &validated).unwrap();
        assert_eq!(result.evaluated_entities, 3);
        assert_eq!(result.evaluated_rules, 1);
        assert_eq!(result.detections.len(), 1);
        assert_eq!(result.detections[0].entity_id, "OrderManager");
        assert!(result.finished_at >= result.started_at);
    }

    #[test]
    fn no_match_is_still_a_result() {
        let mut req = god_class_request();
        req.table = parse_metric_table(b"entity_id,wmc,atfd,tcc\nTiny,1,0,0.9\n").unwrap();
        let result = interpret(&CorrelationId::generate(), &validate(req).unwrap()).unwrap();
        assert!(result.detections.is_empty());
    }
}
