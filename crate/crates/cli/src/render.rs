//! Text rendering of gateway responses. Every function here is pure.

use std::collections::BTreeMap;

use chrono::{DateTime, SecondsFormat, Utc};

use smellhunter_core::dsl::ParseDiagnostic;
use smellhunter_core::inputs::ArtifactError;
use smellhunter_core::persistence::{DetectionPage, ExecutionPage, RunResult, RunStatus};
use smellhunter_core::pipeline::{Stage, StatusView};

/// Left-aligned columns separated by two spaces; trailing spaces trimmed.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    for row in rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    out
}

fn timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

fn showing(shown: usize, total: usize, noun: &str) -> String {
    if shown == total {
        format!("{total} {noun}\n")
    } else {
        format!("showing {shown} of {total} {noun}\n")
    }
}

pub fn detections(page: &DetectionPage) -> String {
    if page.total == 0 {
        return "no detections\n".into();
    }
    let rows: Vec<Vec<String>> = page
        .items
        .iter()
        .map(|r| {
            vec![
                timestamp(&r.detected_at),
                r.smell_name.clone(),
                r.severity.to_string(),
                r.entity_id.clone(),
                format!("{}/{}", r.context.org_id, r.context.project_id),
                r.context
                    .location
                    .as_ref()
                    .map(|l| format!("{},{}", l.latitude, l.longitude))
                    .unwrap_or_else(|| "-".into()),
            ]
        })
        .collect();
    let mut out = table(&["DETECTED", "SMELL", "SEVERITY", "ENTITY", "PROJECT", "LOCATION"], &rows);
    out.push_str(&showing(page.items.len(), page.total, "detections"));
    out
}

pub fn histogram(counts: &BTreeMap<String, usize>) -> String {
    if counts.is_empty() {
        return "no detections\n".into();
    }
    let max = counts.values().copied().max().unwrap_or(1).max(1);
    let rows: Vec<Vec<String>> = counts
        .iter()
        .map(|(name, n)| vec![name.clone(), n.to_string(), "#".repeat((n * 40).div_ceil(max))])
        .collect();
    let mut out = table(&["SMELL", "COUNT", ""], &rows);
    out.push_str(&format!("{} detections\n", counts.values().sum::<usize>()));
    out
}

fn result_name(r: RunResult) -> &'static str {
    match r {
        RunResult::SmellDetected => "smellDetected",
        RunResult::NoSmell => "noSmell",
        RunResult::Failed => "failed",
    }
}

fn status_name(s: RunStatus) -> &'static str {
    match s {
        RunStatus::Completed => "completed",
        RunStatus::Failed => "failed",
    }
}

pub fn history(page: &ExecutionPage) -> String {
    if page.total == 0 {
        return "no executions\n".into();
    }
    let rows: Vec<Vec<String>> = page
        .items
        .iter()
        .map(|e| {
            vec![
                timestamp(&e.executed_at),
                e.script_name.clone(),
                result_name(e.result).into(),
                status_name(e.status).into(),
                e.detection_count.to_string(),
            ]
        })
        .collect();
    let mut out = table(&["TIMESTAMP", "SCRIPT", "RESULT", "STATUS", "DETECTIONS"], &rows);
    out.push_str(&showing(page.items.len(), page.total, "executions"));
    out
}

fn stage_name(s: Stage) -> &'static str {
    match s {
        Stage::Requested => "requested",
        Stage::Validated => "validated",
        Stage::Interpreted => "interpreted",
        Stage::Persisted => "persisted",
        Stage::Failed => "failed",
    }
}

/// Verdict for a run that has reached a terminal stage.
pub fn verdict(view: &StatusView) -> String {
    let mut out = String::new();
    match view.stage {
        Stage::Failed => {
            let stage = view
                .failure_stage
                .and_then(|s| serde_json::to_value(s).ok())
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_else(|| "unknown".into());
            out.push_str(&format!("run {} failed ({stage})\n", view.correlation_id));
            for d in view.diagnostics.iter().flat_map(|r| &r.diagnostics) {
                out.push_str(&format!("  {d}\n"));
            }
        }
        stage => {
            let detections = view.detections.as_deref().unwrap_or_default();
            out.push_str(&format!("run {} {}: {} detections\n", view.correlation_id, stage_name(stage), detections.len()));
            let rows: Vec<Vec<String>> =
                detections.iter().map(|d| vec![d.smell_name.clone(), d.severity.to_string(), d.entity_id.clone()]).collect();
            if !rows.is_empty() {
                out.push_str(&table(&["SMELL", "SEVERITY", "ENTITY"], &rows));
            }
        }
    }
    out
}

pub fn progress(view: &StatusView) -> String {
    format!("stage: {}\n", stage_name(view.stage))
}

pub fn input_errors(errors: &[ArtifactError]) -> String {
    errors.iter().map(|e| format!("{}: {}\n", e.part.as_str(), e.error)).collect()
}

pub fn script_diagnostics(path: &str, diagnostics: &[ParseDiagnostic]) -> String {
    diagnostics
        .iter()
        .map(|d| {
            let kind = serde_json::to_value(d.kind).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
            format!("script: {path}:{d} [{kind}]\n")
        })
        .collect()
}
