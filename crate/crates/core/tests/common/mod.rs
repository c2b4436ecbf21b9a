//! Test-side models and oracles shared by the property tests and the
//! acceptance suite. Nothing here calls into the crate's evaluator or query
//! code; the oracles are written from the language and query definitions.

#![allow(dead_code)]

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, TimeZone, Utc};
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

use smellhunter_core::dsl::Severity;
use smellhunter_core::inputs::{ContextMetadata, GeoPoint};
use smellhunter_core::persistence::{BoundingBox, DetectionFilter, Page, RecordId, TimeRange};

pub const VALUES: [f64; 5] = [-1.0, 0.0, 0.5, 1.0, 2.0];
pub const METRICS: [&str; 4] = ["m0", "m1", "m2", "m3"];
pub const THRESHOLDS: [&str; 4] = ["T0", "T1", "T2", "T3"];
pub const CMP: [&str; 6] = [">", ">=", "<", "<=", "==", "!="];

#[derive(Debug, Clone)]
pub enum Term {
    Metric(usize),
    Threshold(usize),
    Num(f64),
}

#[derive(Debug, Clone)]
pub enum Node {
    Cmp(Term, &'static str, Term),
    Not(Box<Node>),
    And(Vec<Node>),
    Or(Vec<Node>),
    /// Redundant parentheses.
    Group(Box<Node>),
}

pub fn term() -> impl Strategy<Value = Term> {
    prop_oneof![
        (0..METRICS.len()).prop_map(Term::Metric),
        (0..THRESHOLDS.len()).prop_map(Term::Threshold),
        prop::sample::select(VALUES.to_vec()).prop_map(Term::Num),
    ]
}

pub fn node() -> impl Strategy<Value = Node> {
    let leaf = (term(), prop::sample::select(CMP.to_vec()), term()).prop_map(|(l, op, r)| Node::Cmp(l, op, r));
    leaf.prop_recursive(5, 32, 4, |inner| {
        prop_oneof![
            inner.clone().prop_map(|n| Node::Not(Box::new(n))),
            prop::collection::vec(inner.clone(), 2..4).prop_map(Node::And),
            prop::collection::vec(inner.clone(), 2..4).prop_map(Node::Or),
            inner.prop_map(|n| Node::Group(Box::new(n))),
        ]
    })
}

pub fn term_value(term: &Term, metrics: &[f64], thresholds: &[f64]) -> f64 {
    match term {
        Term::Metric(i) => metrics[*i],
        Term::Threshold(i) => thresholds[*i],
        Term::Num(v) => *v,
    }
}

/// Truth value straight from the operator definitions.
pub fn truth(node: &Node, metrics: &[f64], thresholds: &[f64]) -> bool {
    match node {
        Node::Cmp(l, op, r) => {
            let (a, b) = (term_value(l, metrics, thresholds), term_value(r, metrics, thresholds));
            match *op {
                ">" => a > b,
                ">=" => a >= b,
                "<" => a < b,
                "<=" => a <= b,
                "==" => a == b,
                "!=" => a != b,
                other => unreachable!("operator {other}"),
            }
        }
        Node::Not(n) => !truth(n, metrics, thresholds),
        Node::And(ns) => ns.iter().all(|n| truth(n, metrics, thresholds)),
        Node::Or(ns) => ns.iter().any(|n| truth(n, metrics, thresholds)),
        Node::Group(n) => truth(n, metrics, thresholds),
    }
}

pub fn uses_threshold(node: &Node, index: usize) -> bool {
    let term = |t: &Term| matches!(t, Term::Threshold(i) if *i == index);
    match node {
        Node::Cmp(l, _, r) => term(l) || term(r),
        Node::Not(n) | Node::Group(n) => uses_threshold(n, index),
        Node::And(ns) | Node::Or(ns) => ns.iter().any(|n| uses_threshold(n, index)),
    }
}

fn render_term(term: &Term) -> String {
    match term {
        Term::Metric(i) => METRICS[*i].to_string(),
        Term::Threshold(i) => format!("${}", THRESHOLDS[*i]),
        Term::Num(v) => format!("{v}"),
    }
}

/// Source text with only the parentheses precedence requires (plus any
/// explicit groups).
pub fn render(node: &Node) -> String {
    match node {
        Node::Cmp(l, op, r) => format!("{} {op} {}", render_term(l), render_term(r)),
        Node::Not(n) => match **n {
            Node::And(_) | Node::Or(_) => format!("not ({})", render(n)),
            _ => format!("not {}", render(n)),
        },
        Node::And(ns) => ns
            .iter()
            .map(|n| match n {
                Node::Or(_) => format!("({})", render(n)),
                _ => render(n),
            })
            .collect::<Vec<_>>()
            .join(" and "),
        Node::Or(ns) => ns.iter().map(render).collect::<Vec<_>>().join(" or "),
        Node::Group(n) => format!("({})", render(n)),
    }
}

pub fn assignment() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    let value = prop::sample::select(VALUES.to_vec());
    (prop::collection::vec(value.clone(), METRICS.len()), prop::collection::vec(value, THRESHOLDS.len()))
}

/// Identifiers that are not keywords.
pub fn ident() -> impl Strategy<Value = String> {
    "[A-Za-z_][A-Za-z0-9_]{0,8}".prop_filter("keyword", |s| !smellhunter_core::dsl::is_keyword(s))
}

fn literal() -> impl Strategy<Value = String> {
    prop_oneof![
        (0u32..1000).prop_map(|n| n.to_string()),
        (0u32..100, 0u32..100).prop_map(|(a, b)| format!("{a}.{b:02}")),
        (0u32..100).prop_map(|n| format!("-{n}")),
        (0u32..100).prop_map(|n| format!("+{n}.5")),
    ]
}

fn operand_text() -> impl Strategy<Value = String> {
    prop_oneof![ident(), ident().prop_map(|s| format!("${s}")), literal()]
}

fn expr_text() -> impl Strategy<Value = String> {
    let leaf = (operand_text(), prop::sample::select(CMP.to_vec()), operand_text())
        .prop_map(|(l, op, r)| format!("{l} {op} {r}"));
    leaf.prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(|e| format!("not ({e})")),
            prop::collection::vec(inner.clone(), 2..4).prop_map(|es| es.join(" and ")),
            prop::collection::vec(inner.clone(), 2..4).prop_map(|es| es.join(" or ")),
            prop::collection::vec(inner, 2..3).prop_map(|es| format!("({}) and ({})", es[0], es[1])),
        ]
    })
}

fn severity_text() -> impl Strategy<Value = Option<&'static str>> {
    prop::option::of(prop::sample::select(vec!["low", "medium", "high", "critical"]))
}

/// Script source with 1 to 3 uniquely named definitions, comments and
/// irregular whitespace.
pub fn script_text() -> impl Strategy<Value = String> {
    prop::collection::btree_map(ident(), (severity_text(), expr_text(), any::<bool>()), 1..4).prop_map(|defs| {
        let mut out = String::from("# generated\n");
        for (name, (severity, expr, compact)) in defs {
            let sev = severity.map(|s| format!("severity {s} ")).unwrap_or_default();
            if compact {
                out.push_str(&format!("smell {name}{{{sev}when {expr}}}\n"));
            } else {
                out.push_str(&format!("smell   {name} {{\n\t{sev}\n  # rule\n  when\n    {expr}\n}}\n\n"));
            }
        }
        out
    })
}

/// Draws one value from a strategy with a seeded runner.
pub struct Sampler {
    runner: TestRunner,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        let mut bytes = [0u8; 32];
        bytes[..8].copy_from_slice(&seed.to_le_bytes());
        let rng = TestRng::from_seed(RngAlgorithm::ChaCha, &bytes);
        Sampler { runner: TestRunner::new_with_rng(Config::default(), rng) }
    }

    pub fn draw<S: Strategy>(&mut self, strategy: &S) -> S::Value {
        strategy.new_tree(&mut self.runner).expect("strategy produces a value").current()
    }
}

// ---- context history ----

pub const SMELLS: [&str; 4] = ["GodClass", "LongMethod", "DataClass", "FeatureEnvy"];
pub const ORGS: [&str; 2] = ["acme", "globex"];
pub const PROJECTS: [&str; 3] = ["shop", "billing", "infra"];

pub fn epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2026, 3, 1, 12, 0, 0).unwrap()
}

#[derive(Debug, Clone)]
pub struct SeedRecord {
    pub smell: &'static str,
    pub severity: Severity,
    pub org: &'static str,
    pub project: &'static str,
    pub location: Option<GeoPoint>,
    pub offset_secs: i64,
}

impl SeedRecord {
    pub fn context(&self) -> ContextMetadata {
        ContextMetadata {
            user_id: "u".into(),
            org_id: self.org.into(),
            project_id: self.project.into(),
            file_path: "F.java".into(),
            language: "java".into(),
            location: self.location,
        }
    }

    pub fn detected_at(&self) -> DateTime<Utc> {
        epoch() + Duration::seconds(self.offset_secs)
    }
}

fn location() -> impl Strategy<Value = Option<GeoPoint>> {
    prop_oneof![
        1 => Just(None),
        2 => (-30.5..-29.5f64, -51.5..-50.5f64).prop_map(|(latitude, longitude)| Some(GeoPoint { latitude, longitude })),
        2 => (48.0..49.0f64, 2.0..3.0f64).prop_map(|(latitude, longitude)| Some(GeoPoint { latitude, longitude })),
        1 => (-90.0..=90.0f64, -180.0..=180.0f64).prop_map(|(latitude, longitude)| Some(GeoPoint { latitude, longitude })),
    ]
}

pub fn severity() -> impl Strategy<Value = Severity> {
    prop::sample::select(Severity::ALL.to_vec())
}

pub fn seed_record() -> impl Strategy<Value = SeedRecord> {
    (
        prop::sample::select(SMELLS.to_vec()),
        severity(),
        prop::sample::select(ORGS.to_vec()),
        prop::sample::select(PROJECTS.to_vec()),
        location(),
        0i64..600,
    )
        .prop_map(|(smell, severity, org, project, location, offset_secs)| SeedRecord {
            smell,
            severity,
            org,
            project,
            location,
            offset_secs,
        })
}

/// Runs of 0 to 5 records each, ≤500 records in total.
pub fn seed_runs(max_records: usize) -> impl Strategy<Value = Vec<Vec<SeedRecord>>> {
    prop::collection::vec(prop::collection::vec(seed_record(), 0..6), 0..=max_records / 3).prop_map(move |mut runs| {
        let mut total = 0;
        runs.retain(|r| {
            total += r.len();
            total <= max_records
        });
        runs
    })
}

fn bounding_box() -> impl Strategy<Value = BoundingBox> {
    prop_oneof![
        Just(BoundingBox { min_lat: -31.0, max_lat: -29.0, min_lon: -52.0, max_lon: -50.0 }),
        Just(BoundingBox { min_lat: 47.5, max_lat: 49.5, min_lon: 1.5, max_lon: 3.5 }),
        (-90.0..=90.0f64, -90.0..=90.0f64, -180.0..=180.0f64, -180.0..=180.0f64).prop_map(|(a, b, c, d)| BoundingBox {
            min_lat: a.min(b),
            max_lat: a.max(b),
            min_lon: c.min(d),
            max_lon: c.max(d),
        }),
    ]
}

fn time_range() -> impl Strategy<Value = TimeRange> {
    (prop::option::of(0i64..600), prop::option::of(1i64..601)).prop_map(|(from, to)| {
        let from = from.map(|s| epoch() + Duration::seconds(s));
        let mut to = to.map(|s| epoch() + Duration::seconds(s));
        if let (Some(f), Some(t)) = (from, to) {
            if t <= f {
                to = Some(f + Duration::seconds(1));
            }
        }
        TimeRange { from, to }
    })
    .prop_filter("unbounded range", |r| r.from.is_some() || r.to.is_some())
}

pub fn filter() -> impl Strategy<Value = DetectionFilter> {
    (
        prop::option::of(prop::sample::select(SMELLS.to_vec()).prop_map(String::from)),
        prop::option::of(severity()),
        prop::option::of(prop::sample::select(ORGS.to_vec()).prop_map(String::from)),
        prop::option::of(prop::sample::select(PROJECTS.to_vec()).prop_map(String::from)),
        prop::option::weighted(0.3, bounding_box()),
        prop::option::weighted(0.4, time_range()),
    )
        .prop_map(|(smell_name, severity, org_id, project_id, bounding_box, time_range)| DetectionFilter {
            smell_name,
            severity,
            org_id,
            project_id,
            bounding_box,
            time_range,
        })
}

pub fn page() -> impl Strategy<Value = Page> {
    (prop_oneof![Just(0usize), 0usize..600], prop_oneof![Just(1000usize), 1usize..=60])
        .prop_map(|(offset, limit)| Page { offset, limit })
}

/// Linear scan: which stored records a filter selects, in result order.
pub fn scan(records: &[(RecordId, SeedRecord)], filter: &DetectionFilter) -> Vec<RecordId> {
    let mut hits: Vec<&(RecordId, SeedRecord)> = records
        .iter()
        .filter(|(_, r)| {
            let mut keep = true;
            if let Some(s) = &filter.smell_name {
                keep &= r.smell == s;
            }
            if let Some(s) = filter.severity {
                keep &= r.severity == s;
            }
            if let Some(o) = &filter.org_id {
                keep &= r.org == o;
            }
            if let Some(p) = &filter.project_id {
                keep &= r.project == p;
            }
            if let Some(b) = &filter.bounding_box {
                keep &= match &r.location {
                    Some(l) => {
                        b.min_lat <= l.latitude && l.latitude <= b.max_lat && b.min_lon <= l.longitude && l.longitude <= b.max_lon
                    }
                    None => false,
                };
            }
            if let Some(t) = &filter.time_range {
                let at = r.detected_at();
                if let Some(from) = t.from {
                    keep &= at >= from;
                }
                if let Some(to) = t.to {
                    keep &= at < to;
                }
            }
            keep
        })
        .collect();
    hits.sort_by(|(ia, a), (ib, b)| (b.offset_secs, ib.0).cmp(&(a.offset_secs, ia.0)));
    hits.into_iter().map(|(id, _)| *id).collect()
}

pub fn scan_histogram(records: &[(RecordId, SeedRecord)], filter: &DetectionFilter) -> BTreeMap<String, usize> {
    let selected = scan(records, filter);
    let mut counts = BTreeMap::new();
    for (id, r) in records {
        if selected.contains(id) {
            *counts.entry(r.smell.to_string()).or_insert(0) += 1;
        }
    }
    counts
}

/// Commits each run with a matching execution record; returns the stored
/// records with their assigned ids.
pub fn populate(
    store: &smellhunter_core::persistence::HistoryStore,
    runs: &[Vec<SeedRecord>],
) -> Vec<(RecordId, SeedRecord)> {
    use smellhunter_core::bus::CorrelationId;
    use smellhunter_core::persistence::{ExecutionRecord, NewDetection};

    let mut stored = Vec::new();
    for (i, run) in runs.iter().enumerate() {
        let id = CorrelationId::try_from(format!("seed-{i}")).unwrap();
        let detections = run
            .iter()
            .map(|r| NewDetection {
                entity_id: format!("E{i}"),
                smell_name: r.smell.into(),
                severity: r.severity,
                context: r.context(),
                detected_at: r.detected_at(),
            })
            .collect();
        let execution = ExecutionRecord::completed(id, epoch(), "seed".into(), "shop".into(), run.len());
        let ids = store.commit(detections, execution).expect("seed commit");
        stored.extend(ids.into_iter().zip(run.iter().cloned()));
    }
    stored
}
