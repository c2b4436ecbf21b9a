//! Rule evaluation and per-entity detection.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::ast::{Expr, Operand, Severity, SmellScript};
use super::transform::{resolve_thresholds, ResolutionError};
use crate::inputs::{EntityRow, MetricTable, ThresholdConfig};

/// Anything that can answer "what is metric X for this entity".
pub trait MetricSource {
    fn metric(&self, name: &str) -> Option<f64>;
}

impl MetricSource for HashMap<String, f64> {
    fn metric(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl MetricSource for BTreeMap<String, f64> {
    fn metric(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(rename_all = "camelCase")]
pub enum EvalError {
    #[error("metric `{0}` has no value")]
    UnknownMetric(String),
    #[error("threshold `${0}` was not resolved before evaluation")]
    UnresolvedThreshold(String),
}

/// Evaluates a threshold-free condition. Every child is evaluated, so a
/// missing metric is reported even where short-circuiting would skip it.
pub fn evaluate(condition: &Expr, metrics: &impl MetricSource) -> Result<bool, EvalError> {
    match condition {
        Expr::Or(children) => {
            let mut any = false;
            for child in children {
                any |= evaluate(child, metrics)?;
            }
            Ok(any)
        }
        Expr::And(children) => {
            let mut all = true;
            for child in children {
                all &= evaluate(child, metrics)?;
            }
            Ok(all)
        }
        Expr::Not(inner) => evaluate(inner, metrics).map(|v| !v),
        Expr::Compare { lhs, op, rhs } => {
            let l = operand_value(lhs, metrics)?;
            let r = operand_value(rhs, metrics)?;
            Ok(op.apply(l, r))
        }
    }
}

fn operand_value(operand: &Operand, metrics: &impl MetricSource) -> Result<f64, EvalError> {
    match operand {
        Operand::Literal(v) => Ok(*v),
        Operand::MetricRef(name) => metrics.metric(name).ok_or_else(|| EvalError::UnknownMetric(name.clone())),
        Operand::ThresholdRef(name) => Err(EvalError::UnresolvedThreshold(name.clone())),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Detection {
    pub entity_id: String,
    pub smell_name: String,
    pub severity: Severity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(rename_all = "camelCase", tag = "type", content = "detail")]
pub enum DetectError {
    #[error("unresolved thresholds: {}", .0.iter().map(|e| e.name.as_str()).collect::<Vec<_>>().join(", "))]
    Resolution(Vec<ResolutionError>),
    #[error("entity `{entity_id}`, smell `{smell}`: {error}")]
    Eval { entity_id: String, smell: String, error: EvalError },
}

struct RowView<'a> {
    table: &'a MetricTable,
    row: &'a EntityRow,
}

impl MetricSource for RowView<'_> {
    fn metric(&self, name: &str) -> Option<f64> {
        self.table.value(self.row, name)
    }
}

/// One detection per (entity, definition) whose condition holds, in table
/// row order then script definition order.
pub fn detect(
    script: &SmellScript,
    table: &MetricTable,
    thresholds: &ThresholdConfig,
) -> Result<Vec<Detection>, DetectError> {
    let resolved = resolve_thresholds(script, thresholds).map_err(DetectError::Resolution)?;
    let mut detections = Vec::new();
    for row in table.rows() {
        let view = RowView { table, row };
        for def in resolved.definitions() {
            let hit = evaluate(&def.condition, &view).map_err(|error| DetectError::Eval {
                entity_id: row.entity_id.clone(),
                smell: def.name.clone(),
                error,
            })?;
            if hit {
                detections.push(Detection {
                    entity_id: row.entity_id.clone(),
                    smell_name: def.name.clone(),
                    severity: def.severity,
                });
            }
        }
    }
    Ok(detections)
}
