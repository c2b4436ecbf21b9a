//! Query types for the context history, plus their query-string encoding.
//!
//! Query keys (all optional):
//!
//! | key        | value                                              |
//! |------------|----------------------------------------------------|
//! | `smell`    | smell name, exact match                            |
//! | `severity` | `low`, `medium`, `high` or `critical`              |
//! | `org`      | organization id, exact match                       |
//! | `project`  | project id, exact match                            |
//! | `bbox`     | `minLat,maxLat,minLon,maxLon` in degrees, inclusive |
//! | `from`     | RFC 3339 timestamp, inclusive lower bound          |
//! | `to`       | RFC 3339 timestamp, exclusive upper bound          |
//! | `offset`   | non-negative integer, default 0                    |
//! | `limit`    | integer in 1..=1000, default 50                    |

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::dsl::Severity;
use crate::inputs::GeoPoint;

pub const MAX_LIMIT: usize = 1000;
pub const DEFAULT_LIMIT: usize = 50;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QueryError {
    #[error("limit must be between 1 and {MAX_LIMIT}, got {0}")]
    InvalidLimit(usize),
    #[error("invalid bounding box: {0}")]
    InvalidBoundingBox(String),
    #[error("invalid time range: `from` must be earlier than `to`")]
    InvalidTimeRange,
    #[error("invalid value for `{key}`: {message}")]
    InvalidParameter { key: String, message: String },
    #[error("unknown query parameter `{0}`")]
    UnknownParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Page {
    pub offset: usize,
    pub limit: usize,
}

impl Default for Page {
    fn default() -> Self {
        Page { offset: 0, limit: DEFAULT_LIMIT }
    }
}

impl Page {
    pub fn new(offset: usize, limit: usize) -> Result<Self, QueryError> {
        let page = Page { offset, limit };
        page.check()?;
        Ok(page)
    }

    pub fn check(&self) -> Result<(), QueryError> {
        if (1..=MAX_LIMIT).contains(&self.limit) {
            Ok(())
        } else {
            Err(QueryError::InvalidLimit(self.limit))
        }
    }

    pub(crate) fn slice<T: Clone>(&self, items: &[T]) -> Vec<T> {
        items.iter().skip(self.offset).take(self.limit).cloned().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_lat: f64,
    pub max_lat: f64,
    pub min_lon: f64,
    pub max_lon: f64,
}

impl BoundingBox {
    pub fn check(&self) -> Result<(), QueryError> {
        let lat_ok = |v: f64| v.is_finite() && (-90.0..=90.0).contains(&v);
        let lon_ok = |v: f64| v.is_finite() && (-180.0..=180.0).contains(&v);
        if !(lat_ok(self.min_lat) && lat_ok(self.max_lat)) {
            return Err(QueryError::InvalidBoundingBox("latitudes must be within [-90, 90]".into()));
        }
        if !(lon_ok(self.min_lon) && lon_ok(self.max_lon)) {
            return Err(QueryError::InvalidBoundingBox("longitudes must be within [-180, 180]".into()));
        }
        if self.min_lat > self.max_lat || self.min_lon > self.max_lon {
            return Err(QueryError::InvalidBoundingBox("minimum exceeds maximum".into()));
        }
        Ok(())
    }

    /// Inclusive on every edge.
    pub fn contains(&self, point: &GeoPoint) -> bool {
        (self.min_lat..=self.max_lat).contains(&point.latitude) && (self.min_lon..=self.max_lon).contains(&point.longitude)
    }

    pub fn encode(&self) -> String {
        format!("{},{},{},{}", self.min_lat, self.max_lat, self.min_lon, self.max_lon)
    }

    pub fn decode(s: &str) -> Result<Self, QueryError> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(QueryError::InvalidBoundingBox(format!(
                "expected 4 comma-separated numbers (minLat,maxLat,minLon,maxLon), got {}",
                parts.len()
            )));
        }
        let mut nums = [0.0; 4];
        for (slot, part) in nums.iter_mut().zip(&parts) {
            *slot = part
                .parse()
                .map_err(|_| QueryError::InvalidBoundingBox(format!("`{part}` is not a number")))?;
        }
        let bbox = BoundingBox { min_lat: nums[0], max_lat: nums[1], min_lon: nums[2], max_lon: nums[3] };
        bbox.check()?;
        Ok(bbox)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeRange {
    pub from: Option<DateTime<Utc>>,
    pub to: Option<DateTime<Utc>>,
}

impl TimeRange {
    pub fn contains(&self, t: &DateTime<Utc>) -> bool {
        self.from.is_none_or(|from| *t >= from) && self.to.is_none_or(|to| *t < to)
    }
}

/// Conjunction of the present clauses; an empty filter matches everything.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionFilter {
    pub smell_name: Option<String>,
    pub severity: Option<Severity>,
    pub org_id: Option<String>,
    pub project_id: Option<String>,
    pub bounding_box: Option<BoundingBox>,
    pub time_range: Option<TimeRange>,
}

impl DetectionFilter {
    pub fn check(&self) -> Result<(), QueryError> {
        if let Some(bbox) = &self.bounding_box {
            bbox.check()?;
        }
        if let Some(TimeRange { from: Some(from), to: Some(to) }) = &self.time_range {
            if from >= to {
                return Err(QueryError::InvalidTimeRange);
            }
        }
        Ok(())
    }

    /// Query-string pairs in the documented encoding, in a fixed key order.
    pub fn to_query_pairs(&self) -> Vec<(String, String)> {
        let mut pairs = Vec::new();
        let mut push = |k: &str, v: String| pairs.push((k.to_string(), v));
        if let Some(v) = &self.smell_name {
            push("smell", v.clone());
        }
        if let Some(v) = &self.severity {
            push("severity", v.to_string());
        }
        if let Some(v) = &self.org_id {
            push("org", v.clone());
        }
        if let Some(v) = &self.project_id {
            push("project", v.clone());
        }
        if let Some(v) = &self.bounding_box {
            push("bbox", v.encode());
        }
        if let Some(range) = &self.time_range {
            if let Some(from) = range.from {
                push("from", from.to_rfc3339_opts(SecondsFormat::AutoSi, true));
            }
            if let Some(to) = range.to {
                push("to", to.to_rfc3339_opts(SecondsFormat::AutoSi, true));
            }
        }
        pairs
    }

    /// Decodes filter and pagination keys; any other key is rejected.
    pub fn from_query_pairs<'a>(
        pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<(DetectionFilter, Page), QueryError> {
        let mut filter = DetectionFilter::default();
        let mut page = Page::default();
        let mut range = TimeRange { from: None, to: None };
        for (key, value) in pairs {
            match key {
                "smell" => filter.smell_name = Some(value.to_string()),
                "severity" => {
                    filter.severity = Some(value.parse().map_err(|e: crate::dsl::UnknownSeverity| {
                        QueryError::InvalidParameter { key: key.into(), message: e.to_string() }
                    })?)
                }
                "org" => filter.org_id = Some(value.to_string()),
                "project" => filter.project_id = Some(value.to_string()),
                "bbox" => filter.bounding_box = Some(BoundingBox::decode(value)?),
                "from" => range.from = Some(parse_time(key, value)?),
                "to" => range.to = Some(parse_time(key, value)?),
                "offset" | "limit" => apply_page_key(&mut page, key, value)?,
                other => return Err(QueryError::UnknownParameter(other.to_string())),
            }
        }
        if range.from.is_some() || range.to.is_some() {
            filter.time_range = Some(range);
        }
        filter.check()?;
        page.check()?;
        Ok((filter, page))
    }
}

pub(crate) fn apply_page_key(page: &mut Page, key: &str, value: &str) -> Result<(), QueryError> {
    let n: usize = value.parse().map_err(|_| QueryError::InvalidParameter {
        key: key.into(),
        message: format!("`{value}` is not a non-negative integer"),
    })?;
    if key == "offset" {
        page.offset = n;
    } else {
        page.limit = n;
    }
    Ok(())
}

/// Decodes `project`, `offset` and `limit` for execution history.
pub fn history_query_from_pairs<'a>(
    pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
) -> Result<(Option<String>, Page), QueryError> {
    let mut project = None;
    let mut page = Page::default();
    for (key, value) in pairs {
        match key {
            "project" => project = Some(value.to_string()),
            "offset" | "limit" => apply_page_key(&mut page, key, value)?,
            other => return Err(QueryError::UnknownParameter(other.to_string())),
        }
    }
    page.check()?;
    Ok((project, page))
}

fn parse_time(key: &str, value: &str) -> Result<DateTime<Utc>, QueryError> {
    DateTime::parse_from_rfc3339(value)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| QueryError::InvalidParameter { key: key.into(), message: format!("`{value}`: {e}") })
}
