use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::ast::{Expr, Operand, SmellScript};
use crate::inputs::ThresholdConfig;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize, thiserror::Error)]
#[error("threshold `${name}` is not defined in the threshold configuration")]
pub struct ResolutionError {
    pub name: String,
}

/// Replaces every `$NAME` with its configured value. All missing names are
/// reported, once each, in order of first appearance.
pub fn resolve_thresholds(
    script: &SmellScript,
    thresholds: &ThresholdConfig,
) -> Result<SmellScript, Vec<ResolutionError>> {
    let mut missing = Vec::new();
    let mut reported = BTreeSet::new();
    for def in script.definitions() {
        def.condition.for_each_operand(&mut |op| {
            if let Operand::ThresholdRef(name) = op {
                if thresholds.get(name).is_none() && reported.insert(name.clone()) {
                    missing.push(ResolutionError { name: name.clone() });
                }
            }
        });
    }
    if !missing.is_empty() {
        return Err(missing);
    }
    script.map_conditions(|cond| Ok(resolve_expr(cond, thresholds)))
}

fn resolve_expr(expr: &Expr, thresholds: &ThresholdConfig) -> Expr {
    match expr {
        Expr::Or(children) => Expr::Or(children.iter().map(|c| resolve_expr(c, thresholds)).collect()),
        Expr::And(children) => Expr::And(children.iter().map(|c| resolve_expr(c, thresholds)).collect()),
        Expr::Not(inner) => Expr::not(resolve_expr(inner, thresholds)),
        Expr::Compare { lhs, op, rhs } => Expr::Compare {
            lhs: resolve_operand(lhs, thresholds),
            op: *op,
            rhs: resolve_operand(rhs, thresholds),
        },
    }
}

fn resolve_operand(operand: &Operand, thresholds: &ThresholdConfig) -> Operand {
    match operand {
        Operand::ThresholdRef(name) => {
            Operand::Literal(thresholds.get(name).expect("missing thresholds rejected before rewriting"))
        }
        other => other.clone(),
    }
}
