//! Metric tables: one row per code entity, one column per metric.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::error::{InputError, InputErrorKind, Position};
use crate::dsl::is_identifier;

pub const ENTITY_ID_COLUMN: &str = "entity_id";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityRow {
    pub entity_id: String,
    /// Aligned with [`MetricTable::columns`].
    pub values: Vec<f64>,
}

/// A rectangular table of finite metric values keyed by unique entity ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTable", into = "RawTable")]
pub struct MetricTable {
    columns: Vec<String>,
    rows: Vec<EntityRow>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct RawTable {
    columns: Vec<String>,
    rows: Vec<EntityRow>,
}

impl TryFrom<RawTable> for MetricTable {
    type Error = String;

    fn try_from(raw: RawTable) -> Result<Self, Self::Error> {
        MetricTable::new(raw.columns, raw.rows)
            .map_err(|errs| errs.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))
    }
}

impl From<MetricTable> for RawTable {
    fn from(t: MetricTable) -> Self {
        RawTable { columns: t.columns, rows: t.rows }
    }
}

impl MetricTable {
    pub fn new(columns: Vec<String>, rows: Vec<EntityRow>) -> Result<Self, Vec<InputError>> {
        let mut errors = Vec::new();
        let mut index = HashMap::new();
        for (i, col) in columns.iter().enumerate() {
            if !is_identifier(col) || col == ENTITY_ID_COLUMN {
                errors.push(InputError::new(
                    InputErrorKind::InvalidColumnName,
                    Some(Position::Cell { row: 1, column: col.clone() }),
                    format!("`{col}` is not a valid metric name"),
                ));
            } else if index.insert(col.clone(), i).is_some() {
                errors.push(InputError::new(
                    InputErrorKind::DuplicateColumn,
                    Some(Position::Cell { row: 1, column: col.clone() }),
                    format!("metric column `{col}` appears more than once"),
                ));
            }
        }
        let mut seen = HashSet::new();
        for (i, row) in rows.iter().enumerate() {
            let line = i + 2;
            if row.entity_id.is_empty() {
                errors.push(InputError::new(
                    InputErrorKind::EmptyEntityId,
                    Some(Position::Cell { row: line, column: ENTITY_ID_COLUMN.into() }),
                    "entity id is empty",
                ));
            } else if !seen.insert(row.entity_id.as_str()) {
                errors.push(InputError::new(
                    InputErrorKind::DuplicateEntity,
                    Some(Position::Cell { row: line, column: ENTITY_ID_COLUMN.into() }),
                    format!("entity `{}` appears more than once", row.entity_id),
                ));
            }
            if row.values.len() != columns.len() {
                errors.push(InputError::new(
                    InputErrorKind::RaggedRow,
                    Some(Position::Row { row: line }),
                    format!("expected {} metric values, found {}", columns.len(), row.values.len()),
                ));
            }
            for (col, v) in columns.iter().zip(&row.values) {
                if !v.is_finite() {
                    errors.push(InputError::new(
                        InputErrorKind::NonFinite,
                        Some(Position::Cell { row: line, column: col.clone() }),
                        format!("value {v} is not finite"),
                    ));
                }
            }
        }
        if errors.is_empty() {
            Ok(MetricTable { columns, rows, index })
        } else {
            Err(errors)
        }
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[EntityRow] {
        &self.rows
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn value(&self, row: &EntityRow, metric: &str) -> Option<f64> {
        self.index.get(metric).and_then(|&i| row.values.get(i).copied())
    }

    /// Same table without `metric`; a no-op when the column is absent.
    pub fn without_column(&self, metric: &str) -> MetricTable {
        let Some(&drop) = self.index.get(metric) else {
            return self.clone();
        };
        let columns: Vec<String> = self.columns.iter().filter(|c| *c != metric).cloned().collect();
        let rows = self
            .rows
            .iter()
            .map(|r| EntityRow {
                entity_id: r.entity_id.clone(),
                values: r.values.iter().enumerate().filter(|(i, _)| *i != drop).map(|(_, v)| *v).collect(),
            })
            .collect();
        MetricTable::new(columns, rows).expect("removing a column keeps a valid table valid")
    }

    /// CSV wire form accepted by [`parse_metric_table`].
    pub fn to_csv(&self) -> String {
        let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let header = std::iter::once(ENTITY_ID_COLUMN).chain(self.columns.iter().map(String::as_str));
        writer.write_record(header).expect("writing to a Vec cannot fail");
        for row in &self.rows {
            let mut record = vec![row.entity_id.clone()];
            record.extend(row.values.iter().map(|v| v.to_string()));
            writer.write_record(&record).expect("writing to a Vec cannot fail");
        }
        String::from_utf8(writer.into_inner().expect("flush to Vec")).expect("csv of UTF-8 fields is UTF-8")
    }
}

/// Parses the metric-table CSV: header `entity_id,<metric>...`, one entity
/// per data row. All independent defects are reported in one pass.
pub fn parse_metric_table(bytes: &[u8]) -> Result<MetricTable, Vec<InputError>> {
    let text = match std::str::from_utf8(bytes) {
        Ok(t) => t.strip_prefix('\u{feff}').unwrap_or(t),
        Err(e) => {
            return Err(vec![InputError::new(
                InputErrorKind::InvalidUtf8,
                None,
                format!("metric table is not valid UTF-8 (byte offset {})", e.valid_up_to()),
            )])
        }
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();

    let header = match records.next() {
        None => {
            return Err(vec![InputError::new(InputErrorKind::MissingHeader, None, "metric table is empty; expected a header row")])
        }
        Some(Err(e)) => return Err(vec![csv_error(&e)]),
        Some(Ok(h)) => h,
    };
    let header_line = header.position().map_or(1, |p| p.line() as usize);
    if header.get(0) != Some(ENTITY_ID_COLUMN) {
        return Err(vec![InputError::new(
            InputErrorKind::MissingEntityIdColumn,
            Some(Position::Source { line: header_line, column: 1 }),
            format!("first header cell must be `{ENTITY_ID_COLUMN}`"),
        )]);
    }
    let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();

    let mut errors = Vec::new();
    let mut rows = Vec::new();
    for record in records {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                errors.push(csv_error(&e));
                continue;
            }
        };
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record.get(0) == Some("") {
            // blank line
            continue;
        }
        if record.len() != columns.len() + 1 {
            errors.push(InputError::new(
                InputErrorKind::RaggedRow,
                Some(Position::Row { row: line }),
                format!("expected {} cells, found {}", columns.len() + 1, record.len()),
            ));
            continue;
        }
        let entity_id = record[0].to_string();
        let mut values = Vec::with_capacity(columns.len());
        let mut row_ok = true;
        for (col, cell) in columns.iter().zip(record.iter().skip(1)) {
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                Ok(_) => {
                    row_ok = false;
                    errors.push(InputError::new(
                        InputErrorKind::NonFinite,
                        Some(Position::Cell { row: line, column: col.clone() }),
                        format!("`{cell}` is not a finite number"),
                    ));
                }
                Err(_) => {
                    row_ok = false;
                    errors.push(InputError::new(
                        InputErrorKind::NonNumeric,
                        Some(Position::Cell { row: line, column: col.clone() }),
                        format!("`{cell}` is not a number"),
                    ));
                }
            }
        }
        if row_ok {
            rows.push((line, EntityRow { entity_id, values }));
        } else {
            // keep the id so duplicate detection still sees it
            rows.push((line, EntityRow { entity_id, values: vec![0.0; columns.len()] }));
        }
    }

    // Table-level invariants, reported against the original line numbers.
    let lines: Vec<usize> = rows.iter().map(|(l, _)| *l).collect();
    let rows: Vec<EntityRow> = rows.into_iter().map(|(_, r)| r).collect();
    match MetricTable::new(columns, rows) {
        Ok(table) if errors.is_empty() => Ok(table),
        Ok(_) => Err(errors),
        Err(table_errors) => {
            errors.extend(table_errors.into_iter().map(|e| relocate(e, &lines)));
            errors.sort_by_key(sort_key);
            Err(errors)
        }
    }
}

/// `MetricTable::new` numbers rows densely from 2; map back to file lines.
fn relocate(mut err: InputError, lines: &[usize]) -> InputError {
    let fix = |row: &mut usize| {
        if *row >= 2 {
            if let Some(line) = lines.get(*row - 2) {
                *row = *line;
            }
        }
    };
    match &mut err.position {
        Some(Position::Cell { row, .. }) | Some(Position::Row { row }) => fix(row),
        _ => {}
    }
    err
}

fn sort_key(e: &InputError) -> usize {
    match &e.position {
        Some(Position::Cell { row, .. }) | Some(Position::Row { row }) => *row,
        Some(Position::Source { line, .. }) => *line,
        _ => usize::MAX,
    }
}

fn csv_error(e: &csv::Error) -> InputError {
    let position = e.position().map(|p| Position::Row { row: p.line() as usize });
    InputError::new(InputErrorKind::Malformed, position, format!("malformed CSV: {e}"))
}
