//! SmellDSL: parse scripts, resolve `$THRESHOLD` references and evaluate
//! rules against metric values.

mod ast;
mod interp;
mod lexer;
mod parser;
mod printer;
mod transform;

pub use ast::{is_identifier, CmpOp, Expr, Operand, ScriptShapeError, Severity, SmellDefinition, SmellScript, UnknownSeverity};
pub use interp::{detect, evaluate, DetectError, Detection, EvalError, MetricSource};
pub use lexer::{is_keyword, SourcePos, KEYWORDS};
pub use parser::{
    first_smell_name, parse_partial, parse_script, parse_script_with_map, PartialParse, DiagnosticKind, ParseDiagnostic, SourceMap, MAX_NESTING,
};
pub use printer::{expr_to_string, pretty_print};
pub use transform::{resolve_thresholds, ResolutionError};
