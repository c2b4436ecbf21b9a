use std::fmt;

use serde::{Deserialize, Serialize};

/// Where in an input artifact a problem was found.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Position {
    /// Line/column in a text artifact (1-based).
    Source { line: usize, column: usize },
    /// A metric-table cell; `row` is the 1-based line, header being row 1.
    Cell { row: usize, column: String },
    /// A whole metric-table row.
    Row { row: usize },
    /// A key of a key-value document.
    Key { key: String },
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Position::Source { line, column } => write!(f, "{line}:{column}"),
            Position::Cell { row, column } => write!(f, "row {row}, column `{column}`"),
            Position::Row { row } => write!(f, "row {row}"),
            Position::Key { key } => write!(f, "key `{key}`"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum InputErrorKind {
    InvalidUtf8,
    Malformed,
    MissingHeader,
    MissingEntityIdColumn,
    InvalidColumnName,
    DuplicateColumn,
    RaggedRow,
    NonNumeric,
    NonFinite,
    EmptyEntityId,
    DuplicateEntity,
    InvalidIdentifier,
    DuplicateKey,
    MissingKey,
    EmptyValue,
    UnknownKey,
    WrongType,
    OutOfRange,
    LoneCoordinate,
    MissingPart,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{}{message}", .position.as_ref().map(|p| format!("{p}: ")).unwrap_or_default())]
pub struct InputError {
    pub kind: InputErrorKind,
    pub position: Option<Position>,
    pub message: String,
}

impl InputError {
    pub(crate) fn new(kind: InputErrorKind, position: Option<Position>, message: impl Into<String>) -> Self {
        InputError { kind, position, message: message.into() }
    }

    pub(crate) fn at_key(kind: InputErrorKind, key: &str, message: impl Into<String>) -> Self {
        Self::new(kind, Some(Position::Key { key: key.to_string() }), message)
    }
}
