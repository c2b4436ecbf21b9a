use std::io;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use smellhunter_core::bus::{EventKind, EventPayload};
use smellhunter_core::dsl::Severity;
use smellhunter_core::inputs::parse_thresholds;
use smellhunter_core::persistence::{DetectionFilter, HistoryStore, Journal, Page, RunResult, RunStatus};
use smellhunter_core::pipeline::{Pipeline, PipelineConfig, Stage};
use smellhunter_core::samples::god_class_request;
use smellhunter_core::validation::FailureStage;

const WAIT: Duration = Duration::from_secs(5);

fn kinds(pipeline: &Pipeline, id: &smellhunter_core::bus::CorrelationId) -> Vec<EventKind> {
    pipeline.bus().trace(id).iter().map(|e| e.kind).collect()
}

#[test]
fn god_class_runs_to_persisted() {
    let pipeline = Pipeline::start(Arc::new(HistoryStore::in_memory()), PipelineConfig::default()).unwrap();
    let id = pipeline.submit(god_class_request()).unwrap();
    let status = pipeline.wait_terminal(&id, WAIT).unwrap();
    assert_eq!(status.stage, Stage::Persisted);
    assert_eq!(status.detections.as_ref().map(Vec::len), Some(1));
    assert_eq!(status.record_ids.as_ref().map(Vec::len), Some(1));
    assert_eq!(kinds(&pipeline, &id), EventKind::CHAIN.to_vec());

    let page = pipeline.store().query_detections(&DetectionFilter::default(), Page::default()).unwrap();
    assert_eq!(page.total, 1);
    let record = &page.items[0];
    assert_eq!((record.entity_id.as_str(), record.smell_name.as_str(), record.severity), ("OrderManager", "GodClass", Severity::High));
    assert_eq!(record.correlation_id, id);

    let history = pipeline.store().execution_history(None, Page::default()).unwrap();
    assert_eq!(history.items[0].result, RunResult::SmellDetected);
    assert_eq!(history.items[0].script_name, "GodClass");
}

#[test]
fn invalid_request_stops_at_validation() {
    let pipeline = Pipeline::start(Arc::new(HistoryStore::in_memory()), PipelineConfig::default()).unwrap();
    let mut request = god_class_request();
    request.thresholds = parse_thresholds(br#"{"WMC_VERY_HIGH": 47}"#).unwrap();
    let id = pipeline.submit(request).unwrap();
    let status = pipeline.wait_terminal(&id, WAIT).unwrap();
    assert_eq!(status.stage, Stage::Failed);
    assert_eq!(status.failure_stage, Some(FailureStage::Validation));
    assert_eq!(status.diagnostics.unwrap().diagnostics.len(), 2);
    assert_eq!(kinds(&pipeline, &id), vec![EventKind::AnalysisRequested, EventKind::ValidationFailed]);

    assert!(pipeline.bus().wait_idle(WAIT));
    let history = pipeline.store().execution_history(None, Page::default()).unwrap();
    assert_eq!(history.total, 1);
    assert_eq!((history.items[0].status, history.items[0].result), (RunStatus::Failed, RunResult::Failed));
    assert_eq!(pipeline.store().detection_count(), 0);
}

#[test]
fn label_names_the_execution() {
    let pipeline = Pipeline::start(Arc::new(HistoryStore::in_memory()), PipelineConfig::default()).unwrap();
    let mut request = god_class_request();
    request.label = Some("nightly".into());
    let id = pipeline.submit(request).unwrap();
    pipeline.wait_terminal(&id, WAIT).unwrap();
    assert_eq!(pipeline.store().execution_history(None, Page::default()).unwrap().items[0].script_name, "nightly");
}

struct Failing;

impl Journal for Failing {
    fn append(&self, _line: &str) -> io::Result<()> {
        Err(io::Error::other("disk full"))
    }
}

struct FailOnce(AtomicUsize);

impl Journal for FailOnce {
    fn append(&self, _line: &str) -> io::Result<()> {
        if self.0.fetch_add(1, Ordering::SeqCst) == 0 {
            Err(io::Error::other("transient"))
        } else {
            Ok(())
        }
    }
}

#[test]
fn store_failure_ends_the_run_without_persistence_completed() {
    let pipeline = Pipeline::start(Arc::new(HistoryStore::with_journal(Box::new(Failing))), PipelineConfig::default()).unwrap();
    let id = pipeline.submit(god_class_request()).unwrap();
    let status = pipeline.wait_terminal(&id, WAIT).unwrap();
    assert_eq!(status.failure_stage, Some(FailureStage::Persistence));
    assert_eq!(
        kinds(&pipeline, &id),
        vec![EventKind::AnalysisRequested, EventKind::ValidationCompleted, EventKind::InterpretationCompleted, EventKind::ValidationFailed]
    );
    assert!(pipeline.bus().wait_idle(WAIT));
    assert_eq!(pipeline.bus().annotations(&id).len(), 2);
    assert_eq!(pipeline.store().execution_count(), 0);
}

#[test]
fn store_failure_is_recorded_when_possible() {
    let journal = FailOnce(AtomicUsize::new(0));
    let pipeline = Pipeline::start(Arc::new(HistoryStore::with_journal(Box::new(journal))), PipelineConfig::default()).unwrap();
    let id = pipeline.submit(god_class_request()).unwrap();
    pipeline.wait_terminal(&id, WAIT).unwrap();
    assert!(pipeline.bus().wait_idle(WAIT));
    let history = pipeline.store().execution_history(None, Page::default()).unwrap();
    assert_eq!(history.total, 1);
    assert_eq!(history.items[0].status, RunStatus::Failed);
    assert_eq!(pipeline.store().detection_count(), 0);
}

struct Slow;

impl Journal for Slow {
    fn append(&self, _line: &str) -> io::Result<()> {
        std::thread::sleep(Duration::from_millis(300));
        Ok(())
    }
}

#[test]
fn watchdog_fails_stalled_runs() {
    let config = PipelineConfig { timeout: Duration::from_millis(50), ..Default::default() };
    let pipeline = Pipeline::start(Arc::new(HistoryStore::with_journal(Box::new(Slow))), config).unwrap();
    let id = pipeline.submit(god_class_request()).unwrap();
    let status = pipeline.wait_terminal(&id, WAIT).unwrap();
    assert_eq!(status.failure_stage, Some(FailureStage::Timeout));
    assert!(pipeline.bus().wait_idle(WAIT));
    // the late PersistenceCompleted is refused and noted
    assert_eq!(kinds(&pipeline, &id).last(), Some(&EventKind::ValidationFailed));
    assert!(pipeline.bus().annotations(&id).iter().any(|a| a.message.contains("already ended")));
    // the run still has exactly one execution record
    assert_eq!(pipeline.store().execution_count(), 1);
}

#[test]
fn history_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let id = {
        let pipeline = Pipeline::start(Arc::new(HistoryStore::open(dir.path()).unwrap()), PipelineConfig::default()).unwrap();
        let id = pipeline.submit(god_class_request()).unwrap();
        pipeline.wait_terminal(&id, WAIT).unwrap();
        assert!(pipeline.bus().wait_idle(WAIT));
        id
    };
    let store = HistoryStore::open(dir.path()).unwrap();
    let page = store.query_detections(&DetectionFilter::default(), Page::default()).unwrap();
    assert_eq!(page.total, 1);
    assert_eq!(page.items[0].correlation_id, id);
    assert_eq!(store.execution_count(), 1);
}

#[test]
fn trace_payloads_match_their_kinds() {
    let pipeline = Pipeline::start(Arc::new(HistoryStore::in_memory()), PipelineConfig::default()).unwrap();
    let id = pipeline.submit(god_class_request()).unwrap();
    pipeline.wait_terminal(&id, WAIT).unwrap();
    for (i, event) in pipeline.bus().trace(&id).iter().enumerate() {
        assert_eq!(event.sequence, i as u64 + 1);
        assert_eq!(event.payload.kind(), event.kind);
        assert_eq!(event.correlation_id, id);
    }
    assert!(matches!(pipeline.bus().trace(&id)[0].payload, EventPayload::AnalysisRequested(_)));
}
