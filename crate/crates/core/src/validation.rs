//! First pipeline stage: decides whether a structurally parsed request can be
//! interpreted.
//!
//! A request is accepted iff
//! 1. the script parses,
//! 2. every `$NAME` it references exists in the threshold configuration,
//! 3. every metric it references is a column of the metric table, and
//! 4. the context metadata is well-formed.
//!
//! Failures from all four checks are gathered into a single report.

use std::collections::BTreeSet;
use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bus::{EventEnvelope, EventKind, EventPayload, HandlerResult, SmellBus, Subscription};
use crate::dsl::{first_smell_name, parse_partial, SmellScript};
use crate::inputs::{AnalysisRequest, ContextMetadata, Position};

pub const SUBSCRIBER_ID: &str = "validation-service";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum DiagnosticSource {
    Script,
    Metrics,
    Thresholds,
    Metadata,
    CrossRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub source: DiagnosticSource,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<Position>,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let source = serde_json::to_value(self.source).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        match &self.position {
            Some(p) => write!(f, "[{source}] {p}: {}", self.detail),
            None => write!(f, "[{source}] {}", self.detail),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub outcome: Outcome,
    pub diagnostics: Vec<Diagnostic>,
}

impl ValidationReport {
    /// Rejected iff there is at least one diagnostic.
    pub fn from_diagnostics(diagnostics: Vec<Diagnostic>) -> Self {
        let outcome = if diagnostics.is_empty() { Outcome::Accepted } else { Outcome::Rejected };
        ValidationReport { outcome, diagnostics }
    }

    pub fn internal(detail: impl Into<String>) -> Self {
        Self::from_diagnostics(vec![Diagnostic {
            source: DiagnosticSource::CrossRef,
            detail: format!("internal: {}", detail.into()),
            position: None,
        }])
    }
}

/// A request that passed all four checks, with the parsed script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidatedRequest {
    pub request: Arc<AnalysisRequest>,
    pub script: SmellScript,
    pub referenced_metrics: BTreeSet<String>,
    pub referenced_thresholds: BTreeSet<String>,
}

impl ValidatedRequest {
    /// Name shown in execution history.
    pub fn script_name(&self) -> String {
        self.request.label.clone().unwrap_or_else(|| self.script.first_name().to_string())
    }
}

/// Which stage ended a run without success.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailureStage {
    Validation,
    Interpretation,
    Persistence,
    Timeout,
}

/// Payload of the terminal `ValidationFailed` event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedRun {
    pub stage: FailureStage,
    pub report: ValidationReport,
    pub context: ContextMetadata,
    pub script_name: String,
}

impl FailedRun {
    pub fn for_request(stage: FailureStage, report: ValidationReport, request: &AnalysisRequest) -> Self {
        let script_name = request
            .label
            .clone()
            .or_else(|| first_smell_name(&request.script_source))
            .unwrap_or_else(|| "<unnamed>".into());
        FailedRun { stage, report, context: request.context.clone(), script_name }
    }
}

/// Pure check of one request; see the module docs for the acceptance rule.
pub fn validate(request: impl Into<Arc<AnalysisRequest>>) -> Result<ValidatedRequest, ValidationReport> {
    let request = request.into();
    let mut diagnostics = Vec::new();

    let parsed = parse_partial(&request.script_source);
    diagnostics.extend(parsed.diagnostics.iter().map(|d| Diagnostic {
        source: DiagnosticSource::Script,
        position: Some(Position::Source { line: d.line, column: d.column }),
        detail: d.message.clone(),
    }));

    // Cross-references are checked for every definition that parsed, so a
    // syntax error elsewhere does not hide them.
    let mut reported = BTreeSet::new();
    for (name, pos) in &parsed.map.thresholds {
        if !request.thresholds.contains(name) && reported.insert(("t", name.as_str())) {
            diagnostics.push(Diagnostic {
                source: DiagnosticSource::CrossRef,
                detail: format!("threshold `${name}` is not defined in the threshold configuration"),
                position: Some(Position::Source { line: pos.line, column: pos.column }),
            });
        }
    }
    for (name, pos) in &parsed.map.metrics {
        if !request.table.has_column(name) && reported.insert(("m", name.as_str())) {
            diagnostics.push(Diagnostic {
                source: DiagnosticSource::CrossRef,
                detail: format!("metric `{name}` is not a column of the metric table"),
                position: Some(Position::Source { line: pos.line, column: pos.column }),
            });
        }
    }

    diagnostics.extend(request.context.check().into_iter().map(|e| Diagnostic {
        source: DiagnosticSource::Metadata,
        detail: e.message,
        position: e.position,
    }));

    if !diagnostics.is_empty() {
        return Err(ValidationReport::from_diagnostics(diagnostics));
    }
    let script = SmellScript::new(parsed.definitions).expect("a diagnostic-free parse yields a valid script");
    Ok(ValidatedRequest {
        referenced_metrics: script.metric_names(),
        referenced_thresholds: script.threshold_names(),
        script,
        request,
    })
}

/// Handles `AnalysisRequested`: publishes `ValidationCompleted` or
/// `ValidationFailed` for the same run.
pub fn on_analysis_requested(bus: &SmellBus, event: &EventEnvelope) -> HandlerResult {
    let EventPayload::AnalysisRequested(request) = &event.payload else {
        return Ok(());
    };
    let outcome = catch_unwind(AssertUnwindSafe(|| validate(Arc::clone(request))));
    let payload = match outcome {
        Ok(Ok(validated)) => EventPayload::ValidationCompleted(Arc::new(validated)),
        Ok(Err(report)) => {
            EventPayload::ValidationFailed(Arc::new(FailedRun::for_request(FailureStage::Validation, report, request)))
        }
        Err(_) => EventPayload::ValidationFailed(Arc::new(FailedRun::for_request(
            FailureStage::Validation,
            ValidationReport::internal("validator fault"),
            request,
        ))),
    };
    bus.publish(&event.correlation_id, payload)?;
    Ok(())
}

pub fn register(bus: &SmellBus) -> Result<Subscription, crate::bus::BusError> {
    bus.subscribe(SUBSCRIBER_ID, [EventKind::AnalysisRequested], on_analysis_requested)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inputs::{parse_thresholds, GeoPoint};
    use crate::testutil::god_class_request;

    fn sources(report: &ValidationReport) -> Vec<DiagnosticSource> {
        report.diagnostics.iter().map(|d| d.source).collect()
    }

    #[test]
    fn accepts_god_class_payload() {
        let validated = validate(god_class_request()).unwrap();
        assert_eq!(validated.script.first_name(), "GodClass");
        assert_eq!(validated.referenced_metrics, ["atfd", "tcc", "wmc"].map(String::from).into());
        assert_eq!(validated.referenced_thresholds, ["FEW", "ONE_THIRD", "WMC_VERY_HIGH"].map(String::from).into());
        assert_eq!(validated.script_name(), "GodClass");
    }

    #[test]
    fn missing_metric_column_is_a_cross_ref() {
        let mut req = god_class_request();
        req.script_source = "smell Long { when loc > 100 }".into();
        let report = validate(req).unwrap_err();
        assert_eq!(report.outcome, Outcome::Rejected);
        assert_eq!(sources(&report), vec![DiagnosticSource::CrossRef]);
        assert!(report.diagnostics[0].detail.contains("`loc`"));
        assert_eq!(report.diagnostics[0].position, Some(Position::Source { line: 1, column: 19 }));
    }

    #[test]
    fn syntax_error_and_missing_threshold_accumulate() {
        let mut req = god_class_request();
        req.script_source = "smell A { when x > }\nsmell B { when wmc > $NOPE }".into();
        let report = validate(req).unwrap_err();
        assert_eq!(sources(&report), vec![DiagnosticSource::Script, DiagnosticSource::CrossRef]);
        assert!(report.diagnostics[1].detail.contains("$NOPE"));

        // a broken script plus a separate threshold defect in another artifact
        let mut req = god_class_request();
        req.script_source = "smell A { when wmc > $NOPE ".into();
        req.context.location = Some(GeoPoint { latitude: 91.0, longitude: 0.0 });
        let report = validate(req).unwrap_err();
        assert_eq!(sources(&report), vec![DiagnosticSource::Script, DiagnosticSource::Metadata]);
    }

    #[test]
    fn missing_threshold_is_positioned() {
        let mut req = god_class_request();
        req.thresholds = parse_thresholds(br#"{"WMC_VERY_HIGH": 47, "ONE_THIRD": 0.33}"#).unwrap();
        let report = validate(req).unwrap_err();
        assert_eq!(sources(&report), vec![DiagnosticSource::CrossRef]);
        assert!(report.diagnostics[0].detail.contains("$FEW"));
        assert!(report.diagnostics[0].position.is_some());
    }

    #[test]
    fn extra_metrics_and_thresholds_are_fine() {
        let mut req = god_class_request();
        req.thresholds = parse_thresholds(br#"{"WMC_VERY_HIGH": 47, "FEW": 5, "ONE_THIRD": 0.33, "UNUSED": 1}"#).unwrap();
        assert!(validate(req).is_ok());
    }

    #[test]
    fn empty_user_id_is_rejected() {
        let mut req = god_class_request();
        req.context.user_id.clear();
        let report = validate(req).unwrap_err();
        assert_eq!(sources(&report), vec![DiagnosticSource::Metadata]);
    }

    #[test]
    fn report_outcome_tracks_diagnostics() {
        assert_eq!(ValidationReport::from_diagnostics(vec![]).outcome, Outcome::Accepted);
        assert_eq!(ValidationReport::internal("x").outcome, Outcome::Rejected);
    }

    #[test]
    fn failed_run_names_broken_script() {
        let mut req = god_class_request();
        req.script_source = "smell Broken { when".into();
        let run = FailedRun::for_request(FailureStage::Validation, ValidationReport::internal("x"), &req);
        assert_eq!(run.script_name, "Broken");
    }
}
