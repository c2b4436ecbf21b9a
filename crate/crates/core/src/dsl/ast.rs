//! Syntax tree for SmellDSL scripts.
//!
//! Equality on every node is structural; source positions are kept out of the
//! tree (see [`SourceMap`](super::SourceMap)) so a re-parsed pretty-print
//! compares equal to the original.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Low,
    #[default]
    Medium,
    High,
    Critical,
}

impl Severity {
    pub const ALL: [Severity; 4] = [Severity::Low, Severity::Medium, Severity::High, Severity::Critical];

    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Low => "low",
            Severity::Medium => "medium",
            Severity::High => "high",
            Severity::Critical => "critical",
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown severity `{0}` (expected low, medium, high or critical)")]
pub struct UnknownSeverity(pub String);

impl FromStr for Severity {
    type Err = UnknownSeverity;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "low" => Ok(Severity::Low),
            "medium" => Ok(Severity::Medium),
            "high" => Ok(Severity::High),
            "critical" => Ok(Severity::Critical),
            other => Err(UnknownSeverity(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
}

impl CmpOp {
    pub const ALL: [CmpOp; 6] = [CmpOp::Gt, CmpOp::Ge, CmpOp::Lt, CmpOp::Le, CmpOp::Eq, CmpOp::Ne];

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }

    /// Exact binary-float comparison; no epsilon.
    #[allow(clippy::float_cmp)]
    pub fn apply(self, lhs: f64, rhs: f64) -> bool {
        match self {
            CmpOp::Gt => lhs > rhs,
            CmpOp::Ge => lhs >= rhs,
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Eq => lhs == rhs,
            CmpOp::Ne => lhs != rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", content = "value")]
pub enum Operand {
    MetricRef(String),
    ThresholdRef(String),
    Literal(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    /// At least two children.
    Or(Vec<Expr>),
    /// At least two children.
    And(Vec<Expr>),
    Not(Box<Expr>),
    Compare { lhs: Operand, op: CmpOp, rhs: Operand },
}

impl Expr {
    pub fn compare(lhs: Operand, op: CmpOp, rhs: Operand) -> Self {
        Expr::Compare { lhs, op, rhs }
    }

    /// Builds an `And`, collapsing a single child to itself.
    pub fn and(mut children: Vec<Expr>) -> Self {
        if children.len() == 1 {
            children.pop().unwrap()
        } else {
            Expr::And(children)
        }
    }

    /// Builds an `Or`, collapsing a single child to itself.
    pub fn or(mut children: Vec<Expr>) -> Self {
        if children.len() == 1 {
            children.pop().unwrap()
        } else {
            Expr::Or(children)
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(inner: Expr) -> Self {
        Expr::Not(Box::new(inner))
    }

    /// Visits every operand in left-to-right source order.
    pub fn for_each_operand<'a>(&'a self, f: &mut impl FnMut(&'a Operand)) {
        match self {
            Expr::Or(children) | Expr::And(children) => {
                for child in children {
                    child.for_each_operand(f);
                }
            }
            Expr::Not(inner) => inner.for_each_operand(f),
            Expr::Compare { lhs, rhs, .. } => {
                f(lhs);
                f(rhs);
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Or(children) | Expr::And(children) => {
                1 + children.iter().map(Expr::depth).max().unwrap_or(0)
            }
            Expr::Not(inner) => 1 + inner.depth(),
            Expr::Compare { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmellDefinition {
    pub name: String,
    pub severity: Severity,
    pub condition: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScriptShapeError {
    #[error("a script needs at least one smell definition")]
    Empty,
    #[error("smell `{0}` is defined more than once")]
    DuplicateDefinition(String),
}

/// A non-empty, ordered list of uniquely named smell definitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<SmellDefinition>", into = "Vec<SmellDefinition>")]
pub struct SmellScript {
    definitions: Vec<SmellDefinition>,
}

impl SmellScript {
    pub fn new(definitions: Vec<SmellDefinition>) -> Result<Self, ScriptShapeError> {
        if definitions.is_empty() {
            return Err(ScriptShapeError::Empty);
        }
        let mut seen = BTreeSet::new();
        for def in &definitions {
            if !seen.insert(def.name.as_str()) {
                return Err(ScriptShapeError::DuplicateDefinition(def.name.clone()));
            }
        }
        Ok(SmellScript { definitions })
    }

    pub fn definitions(&self) -> &[SmellDefinition] {
        &self.definitions
    }

    pub fn first_name(&self) -> &str {
        &self.definitions[0].name
    }

    pub fn metric_names(&self) -> BTreeSet<String> {
        self.collect_names(|op| match op {
            Operand::MetricRef(name) => Some(name),
            _ => None,
        })
    }

    pub fn threshold_names(&self) -> BTreeSet<String> {
        self.collect_names(|op| match op {
            Operand::ThresholdRef(name) => Some(name),
            _ => None,
        })
    }

    fn collect_names(&self, pick: impl Fn(&Operand) -> Option<&String>) -> BTreeSet<String> {
        let mut names = BTreeSet::new();
        for def in &self.definitions {
            def.condition.for_each_operand(&mut |op| {
                if let Some(name) = pick(op) {
                    names.insert(name.clone());
                }
            });
        }
        names
    }

    /// Rebuilds the script with every condition mapped through `f`.
    pub(crate) fn map_conditions<E>(
        &self,
        mut f: impl FnMut(&Expr) -> Result<Expr, E>,
    ) -> Result<SmellScript, E> {
        let definitions = self
            .definitions
            .iter()
            .map(|def| {
                Ok(SmellDefinition {
                    name: def.name.clone(),
                    severity: def.severity,
                    condition: f(&def.condition)?,
                })
            })
            .collect::<Result<Vec<_>, E>>()?;
        Ok(SmellScript { definitions })
    }
}

impl TryFrom<Vec<SmellDefinition>> for SmellScript {
    type Error = ScriptShapeError;

    fn try_from(definitions: Vec<SmellDefinition>) -> Result<Self, Self::Error> {
        SmellScript::new(definitions)
    }
}

impl From<SmellScript> for Vec<SmellDefinition> {
    fn from(script: SmellScript) -> Self {
        script.definitions
    }
}

/// Checks the `[A-Za-z_][A-Za-z0-9_]*` identifier rule.
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[cfg(test)]
mod tests {
    use super::*;

    fn def(name: &str) -> SmellDefinition {
        SmellDefinition {
            name: name.into(),
            severity: Severity::default(),
            condition: Expr::compare(Operand::MetricRef("x".into()), CmpOp::Gt, Operand::Literal(1.0)),
        }
    }

    #[test]
    fn script_shape_is_enforced() {
        assert_eq!(SmellScript::new(vec![]), Err(ScriptShapeError::Empty));
        assert_eq!(
            SmellScript::new(vec![def("A"), def("A")]),
            Err(ScriptShapeError::DuplicateDefinition("A".into()))
        );
        // names are case-sensitive
        assert!(SmellScript::new(vec![def("A"), def("a")]).is_ok());
    }

    #[test]
    fn identifiers() {
        assert!(is_identifier("_x9"));
        assert!(is_identifier("WMC_VERY_HIGH"));
        assert!(!is_identifier("9x"));
        assert!(!is_identifier(""));
        assert!(!is_identifier("a-b"));
        assert!(!is_identifier("é"));
    }

    #[test]
    fn single_child_builders_collapse() {
        let c = Expr::compare(Operand::Literal(1.0), CmpOp::Eq, Operand::Literal(1.0));
        assert_eq!(Expr::and(vec![c.clone()]), c);
        assert_eq!(Expr::or(vec![c.clone()]), c);
    }

    #[test]
    fn cmp_is_exact() {
        assert!(CmpOp::Eq.apply(0.1 + 0.2, 0.30000000000000004));
        assert!(CmpOp::Ne.apply(0.1 + 0.2, 0.3));
        assert!(CmpOp::Ge.apply(1.0, 1.0));
        assert!(!CmpOp::Gt.apply(1.0, 1.0));
    }
}
