//! Typed parsing of the analysis inputs: metric table (CSV), threshold
//! configuration and context metadata (key-value documents).

mod document;
mod error;
mod metadata;
mod metrics;
mod thresholds;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use error::{InputError, InputErrorKind, Position};
pub use metadata::{parse_metadata, ContextMetadata, GeoPoint, METADATA_KEYS};
pub use metrics::{parse_metric_table, EntityRow, MetricTable, ENTITY_ID_COLUMN};
pub use thresholds::{parse_thresholds, ThresholdConfig};

/// Everything one analysis run needs. The script stays as text here; it is
/// parsed during validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRequest {
    pub script_source: String,
    pub table: MetricTable,
    pub thresholds: ThresholdConfig,
    pub context: ContextMetadata,
    pub submitted_at: DateTime<Utc>,
    /// Optional client label used as the script name in execution history.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// Which of the uploaded artifacts an error belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Artifact {
    Script,
    Metrics,
    Thresholds,
    Metadata,
}

impl Artifact {
    pub const ALL: [Artifact; 4] = [Artifact::Script, Artifact::Metrics, Artifact::Thresholds, Artifact::Metadata];

    pub fn as_str(self) -> &'static str {
        match self {
            Artifact::Script => "script",
            Artifact::Metrics => "metrics",
            Artifact::Thresholds => "thresholds",
            Artifact::Metadata => "metadata",
        }
    }
}

/// An input error tagged with the artifact it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactError {
    pub part: Artifact,
    #[serde(flatten)]
    pub error: InputError,
}

/// Structural parsing of the three data artifacts plus the script text.
/// The script is only checked for UTF-8 here; its grammar is checked by
/// validation.
pub fn parse_request(
    script: &[u8],
    metrics: &[u8],
    thresholds: &[u8],
    metadata: &[u8],
    label: Option<String>,
) -> Result<AnalysisRequest, Vec<ArtifactError>> {
    let mut errors = Vec::new();
    let mut tag = |part: Artifact, errs: Vec<InputError>| {
        errors.extend(errs.into_iter().map(|error| ArtifactError { part, error }));
    };
    let script_source = match std::str::from_utf8(script) {
        Ok(s) => Some(s.to_string()),
        Err(e) => {
            tag(
                Artifact::Script,
                vec![InputError::new(
                    InputErrorKind::InvalidUtf8,
                    None,
                    format!("script is not valid UTF-8 (byte offset {})", e.valid_up_to()),
                )],
            );
            None
        }
    };
    let table = parse_metric_table(metrics).map_err(|e| tag(Artifact::Metrics, e)).ok();
    let thresholds = parse_thresholds(thresholds).map_err(|e| tag(Artifact::Thresholds, e)).ok();
    let context = parse_metadata(metadata).map_err(|e| tag(Artifact::Metadata, e)).ok();

    match (script_source, table, thresholds, context) {
        (Some(script_source), Some(table), Some(thresholds), Some(context)) => Ok(AnalysisRequest {
            script_source,
            table,
            thresholds,
            context,
            submitted_at: Utc::now(),
            label,
        }),
        _ => Err(errors),
    }
}
