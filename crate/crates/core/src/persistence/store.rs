//! Embedded context-history store.
//!
//! On disk the store is a directory holding one append-only journal,
//! `history.jsonl`. The first line is a format tag; every following line is
//! one committed batch (all detection records of a run plus its execution
//! record), so a run is either fully present or absent after a crash. An
//! unterminated final line is a torn write and is ignored on load.
//!
//! Records are also kept in memory; queries never touch the journal.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::query::{DetectionFilter, Page, QueryError};
use crate::bus::CorrelationId;
use crate::dsl::Severity;
use crate::inputs::ContextMetadata;

pub const FORMAT_NAME: &str = "smellhunter-history";
pub const FORMAT_VERSION: u32 = 1;
pub const JOURNAL_FILE: &str = "history.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RecordId(pub u64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub record_id: RecordId,
    pub correlation_id: CorrelationId,
    pub entity_id: String,
    pub smell_name: String,
    pub severity: Severity,
    pub context: ContextMetadata,
    pub detected_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum RunResult {
    SmellDetected,
    NoSmell,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionRecord {
    pub correlation_id: CorrelationId,
    pub executed_at: DateTime<Utc>,
    pub script_name: String,
    pub project_id: String,
    pub result: RunResult,
    pub status: RunStatus,
    pub detection_count: usize,
}

impl ExecutionRecord {
    pub fn completed(
        correlation_id: CorrelationId,
        executed_at: DateTime<Utc>,
        script_name: String,
        project_id: String,
        detection_count: usize,
    ) -> Self {
        let result = if detection_count > 0 { RunResult::SmellDetected } else { RunResult::NoSmell };
        ExecutionRecord {
            correlation_id,
            executed_at,
            script_name,
            project_id,
            result,
            status: RunStatus::Completed,
            detection_count,
        }
    }

    pub fn failed(correlation_id: CorrelationId, executed_at: DateTime<Utc>, script_name: String, project_id: String) -> Self {
        ExecutionRecord {
            correlation_id,
            executed_at,
            script_name,
            project_id,
            result: RunResult::Failed,
            status: RunStatus::Failed,
            detection_count: 0,
        }
    }

    fn is_consistent(&self) -> bool {
        let detected = self.result == RunResult::SmellDetected;
        let expect_detected = self.detection_count > 0 && self.status == RunStatus::Completed;
        let failed_ok = self.status != RunStatus::Failed || self.detection_count == 0;
        detected == expect_detected && failed_ok
    }
}

/// A detection waiting for its record id.
#[derive(Debug, Clone, PartialEq)]
pub struct NewDetection {
    pub entity_id: String,
    pub smell_name: String,
    pub severity: Severity,
    pub context: ContextMetadata,
    pub detected_at: DateTime<Utc>,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("store I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("store journal is corrupt at line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("unsupported store format `{0}`")]
    UnsupportedFormat(String),
    #[error("run `{0}` already has an execution record")]
    DuplicateExecution(CorrelationId),
    #[error("execution record for `{0}` is inconsistent with its detections")]
    InconsistentExecution(CorrelationId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct FormatTag {
    format: String,
    version: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Batch {
    correlation_id: CorrelationId,
    detections: Vec<DetectionRecord>,
    execution: ExecutionRecord,
}

/// Where committed batches are written.
pub trait Journal: Send + Sync {
    fn append(&self, line: &str) -> io::Result<()>;
}

/// Appends to `<dir>/history.jsonl`, syncing after each batch.
pub struct FileJournal {
    path: PathBuf,
}

impl Journal for FileJournal {
    fn append(&self, line: &str) -> io::Result<()> {
        let mut file = OpenOptions::new().append(true).open(&self.path)?;
        file.write_all(line.as_bytes())?;
        file.write_all(b"\n")?;
        file.sync_data()
    }
}

struct NullJournal;

impl Journal for NullJournal {
    fn append(&self, _line: &str) -> io::Result<()> {
        Ok(())
    }
}

#[derive(Default)]
struct State {
    detections: Vec<DetectionRecord>,
    executions: Vec<ExecutionRecord>,
    executed: HashSet<CorrelationId>,
    next_record_id: u64,
}

impl State {
    fn apply(&mut self, batch: Batch) {
        if let Some(last) = batch.detections.iter().map(|d| d.record_id.0).max() {
            self.next_record_id = self.next_record_id.max(last + 1);
        }
        self.executed.insert(batch.correlation_id);
        self.detections.extend(batch.detections);
        self.executions.push(batch.execution);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionPage {
    pub total: usize,
    pub items: Vec<DetectionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionPage {
    pub total: usize,
    pub items: Vec<ExecutionRecord>,
}

pub struct HistoryStore {
    journal: Box<dyn Journal>,
    state: RwLock<State>,
    writer: Mutex<()>,
    location: Option<PathBuf>,
}

impl std::fmt::Debug for HistoryStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HistoryStore").field("location", &self.location).finish_non_exhaustive()
    }
}

impl HistoryStore {
    /// Opens (creating if needed) a store directory and replays its journal.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let path = dir.join(JOURNAL_FILE);
        let tag = FormatTag { format: FORMAT_NAME.into(), version: FORMAT_VERSION };
        let state = if path.exists() && fs::metadata(&path)?.len() > 0 {
            load(&path, &tag)?
        } else {
            let mut file = File::create(&path)?;
            writeln!(file, "{}", serde_json::to_string(&tag).expect("tag serializes"))?;
            file.sync_all()?;
            State::default()
        };
        Ok(HistoryStore {
            journal: Box::new(FileJournal { path }),
            state: RwLock::new(state),
            writer: Mutex::new(()),
            location: Some(dir.to_path_buf()),
        })
    }

    /// A store that keeps nothing on disk.
    pub fn in_memory() -> Self {
        Self::with_journal(Box::new(NullJournal))
    }

    /// An empty store writing through a custom journal.
    pub fn with_journal(journal: Box<dyn Journal>) -> Self {
        HistoryStore { journal, state: RwLock::new(State::default()), writer: Mutex::new(()), location: None }
    }

    pub fn location(&self) -> Option<&Path> {
        self.location.as_deref()
    }

    /// Atomically stores one run: its detections and its execution record.
    /// Returns the assigned record ids in input order.
    pub fn commit(&self, detections: Vec<NewDetection>, execution: ExecutionRecord) -> Result<Vec<RecordId>, StoreError> {
        if !execution.is_consistent() || execution.detection_count != detections.len() {
            return Err(StoreError::InconsistentExecution(execution.correlation_id));
        }
        let _writer = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        let first_id = {
            let state = self.state.read().unwrap_or_else(|p| p.into_inner());
            if state.executed.contains(&execution.correlation_id) {
                return Err(StoreError::DuplicateExecution(execution.correlation_id));
            }
            state.next_record_id
        };
        let correlation_id = execution.correlation_id.clone();
        let records: Vec<DetectionRecord> = detections
            .into_iter()
            .enumerate()
            .map(|(i, d)| DetectionRecord {
                record_id: RecordId(first_id + i as u64),
                correlation_id: correlation_id.clone(),
                entity_id: d.entity_id,
                smell_name: d.smell_name,
                severity: d.severity,
                context: d.context,
                detected_at: d.detected_at,
            })
            .collect();
        let ids = records.iter().map(|r| r.record_id).collect();
        let batch = Batch { correlation_id, detections: records, execution };
        let line = serde_json::to_string(&batch).expect("records serialize");
        self.journal.append(&line)?;
        self.state.write().unwrap_or_else(|p| p.into_inner()).apply(batch);
        Ok(ids)
    }

    pub fn has_execution(&self, correlation_id: &CorrelationId) -> bool {
        self.read().executed.contains(correlation_id)
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, State> {
        self.state.read().unwrap_or_else(|p| p.into_inner())
    }

    /// Matching records, newest first (ties broken by higher record id).
    pub fn query_detections(&self, filter: &DetectionFilter, page: Page) -> Result<DetectionPage, QueryError> {
        filter.check()?;
        page.check()?;
        let state = self.read();
        let mut matches: Vec<&DetectionRecord> = state.detections.iter().filter(|r| matches(filter, r)).collect();
        matches.sort_by(|a, b| b.detected_at.cmp(&a.detected_at).then(b.record_id.cmp(&a.record_id)));
        Ok(DetectionPage {
            total: matches.len(),
            items: matches.into_iter().skip(page.offset).take(page.limit).cloned().collect(),
        })
    }

    /// Count per smell name over matching records; names with no match are absent.
    pub fn histogram(&self, filter: &DetectionFilter) -> Result<BTreeMap<String, usize>, QueryError> {
        filter.check()?;
        let state = self.read();
        let mut counts = BTreeMap::new();
        for record in state.detections.iter().filter(|r| matches(filter, r)) {
            *counts.entry(record.smell_name.clone()).or_insert(0) += 1;
        }
        Ok(counts)
    }

    /// Execution records newest first, optionally restricted to one project.
    pub fn execution_history(&self, project_id: Option<&str>, page: Page) -> Result<ExecutionPage, QueryError> {
        page.check()?;
        let state = self.read();
        // insertion order breaks timestamp ties: later commit first
        let mut matches: Vec<(usize, &ExecutionRecord)> = state
            .executions
            .iter()
            .enumerate()
            .filter(|(_, e)| project_id.is_none_or(|p| e.project_id == p))
            .collect();
        matches.sort_by(|(ia, a), (ib, b)| b.executed_at.cmp(&a.executed_at).then(ib.cmp(ia)));
        let items: Vec<ExecutionRecord> = matches.iter().map(|(_, e)| (*e).clone()).collect();
        Ok(ExecutionPage { total: items.len(), items: page.slice(&items) })
    }

    pub fn detection_count(&self) -> usize {
        self.read().detections.len()
    }

    pub fn execution_count(&self) -> usize {
        self.read().executions.len()
    }

    /// Every record, as one key-value document tagged with the store format.
    pub fn export(&self) -> serde_json::Value {
        let state = self.read();
        serde_json::json!({
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "detections": state.detections,
            "executions": state.executions,
        })
    }
}

pub(crate) fn matches(filter: &DetectionFilter, record: &DetectionRecord) -> bool {
    filter.smell_name.as_ref().is_none_or(|s| *s == record.smell_name)
        && filter.severity.is_none_or(|s| s == record.severity)
        && filter.org_id.as_ref().is_none_or(|o| *o == record.context.org_id)
        && filter.project_id.as_ref().is_none_or(|p| *p == record.context.project_id)
        && filter
            .bounding_box
            .as_ref()
            .is_none_or(|b| record.context.location.as_ref().is_some_and(|loc| b.contains(loc)))
        && filter.time_range.as_ref().is_none_or(|r| r.contains(&record.detected_at))
}

fn load(path: &Path, expected: &FormatTag) -> Result<State, StoreError> {
    let text = fs::read_to_string(path)?;
    let complete = text.ends_with('\n');
    let mut lines: Vec<&str> = text.lines().collect();
    if !complete {
        // torn final write
        if let Some(torn) = lines.pop() {
            tracing::warn!(bytes = torn.len(), "dropping unterminated journal line");
        }
    }
    let mut iter = lines.into_iter().enumerate();
    let tag: FormatTag = match iter.next() {
        Some((_, line)) => serde_json::from_str(line).map_err(|e| StoreError::Corrupt { line: 1, message: e.to_string() })?,
        None => return Ok(State::default()),
    };
    if tag.format != expected.format || tag.version != expected.version {
        return Err(StoreError::UnsupportedFormat(format!("{} v{}", tag.format, tag.version)));
    }
    let mut state = State::default();
    for (i, line) in iter {
        if line.trim().is_empty() {
            continue;
        }
        let batch: Batch =
            serde_json::from_str(line).map_err(|e| StoreError::Corrupt { line: i + 1, message: e.to_string() })?;
        state.apply(batch);
    }
    if !complete {
        // rewrite without the torn tail so later appends start on a fresh line
        let keep = text.rfind('\n').map_or(0, |i| i + 1);
        let file = OpenOptions::new().write(true).open(path)?;
        file.set_len(keep as u64)?;
        file.sync_all()?;
    }
    Ok(state)
}

/// Reads the format tag of a store directory without loading it.
pub fn read_format_tag(dir: impl AsRef<Path>) -> Result<(String, u32), StoreError> {
    let file = File::open(dir.as_ref().join(JOURNAL_FILE))?;
    let mut first = String::new();
    BufReader::new(file).read_line(&mut first)?;
    let tag: FormatTag =
        serde_json::from_str(first.trim_end()).map_err(|e| StoreError::Corrupt { line: 1, message: e.to_string() })?;
    Ok((tag.format, tag.version))
}
