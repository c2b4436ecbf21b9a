use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::document::{parse_entries, quote};
use super::error::{InputError, InputErrorKind};
use crate::dsl::is_identifier;

/// Named threshold values referenced from scripts as `$NAME`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, f64>", into = "BTreeMap<String, f64>")]
pub struct ThresholdConfig {
    entries: BTreeMap<String, f64>,
}

impl ThresholdConfig {
    pub fn new(entries: impl IntoIterator<Item = (String, f64)>) -> Result<Self, Vec<InputError>> {
        let mut map = BTreeMap::new();
        let mut errors = Vec::new();
        for (name, value) in entries {
            if let Err(e) = check_entry(&name, value) {
                errors.push(e);
            } else if map.insert(name.clone(), value).is_some() {
                errors.push(InputError::at_key(InputErrorKind::DuplicateKey, &name, format!("threshold `{name}` is defined more than once")));
            }
        }
        if errors.is_empty() {
            Ok(ThresholdConfig { entries: map })
        } else {
            Err(errors)
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn without(&self, name: &str) -> ThresholdConfig {
        let mut entries = self.entries.clone();
        entries.remove(name);
        ThresholdConfig { entries }
    }

    /// Document form accepted by [`parse_thresholds`].
    pub fn to_json(&self) -> String {
        let body: Vec<String> = self.entries.iter().map(|(k, v)| format!("{}: {}", quote(k), v)).collect();
        format!("{{{}}}", body.join(", "))
    }
}

fn check_entry(name: &str, value: f64) -> Result<(), InputError> {
    if !is_identifier(name) {
        return Err(InputError::at_key(
            InputErrorKind::InvalidIdentifier,
            name,
            format!("`{name}` is not a valid threshold name"),
        ));
    }
    if !value.is_finite() {
        return Err(InputError::at_key(InputErrorKind::NonFinite, name, format!("threshold `{name}` is not finite")));
    }
    Ok(())
}

impl TryFrom<BTreeMap<String, f64>> for ThresholdConfig {
    type Error = String;

    fn try_from(map: BTreeMap<String, f64>) -> Result<Self, Self::Error> {
        ThresholdConfig::new(map).map_err(|errs| errs.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))
    }
}

impl From<ThresholdConfig> for BTreeMap<String, f64> {
    fn from(c: ThresholdConfig) -> Self {
        c.entries
    }
}

/// Parses `{"NAME": number, ...}`.
pub fn parse_thresholds(bytes: &[u8]) -> Result<ThresholdConfig, Vec<InputError>> {
    let entries = parse_entries(bytes, "threshold").map_err(|e| vec![e])?;
    let mut errors = Vec::new();
    let mut numeric = Vec::with_capacity(entries.len());
    for (key, value) in entries {
        match value.as_f64() {
            Some(v) if value.is_number() => numeric.push((key, v)),
            _ => errors.push(InputError::at_key(
                InputErrorKind::NonNumeric,
                &key,
                format!("threshold `{key}` must be a number, found {value}"),
            )),
        }
    }
    match ThresholdConfig::new(numeric) {
        Ok(config) if errors.is_empty() => Ok(config),
        Ok(_) => Err(errors),
        Err(more) => {
            errors.extend(more);
            Err(errors)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inputs::error::Position;

    #[test]
    fn parses_three_thresholds() {
        let cfg = parse_thresholds(br#"{"WMC_VERY_HIGH": 47, "FEW": 5, "ONE_THIRD": 0.33}"#).unwrap();
        assert_eq!(cfg.len(), 3);
        assert_eq!(cfg.get("WMC_VERY_HIGH"), Some(47.0));
        assert_eq!(cfg.get("FEW"), Some(5.0));
        assert_eq!(cfg.get("ONE_THIRD"), Some(0.33));
    }

    #[test]
    fn empty_document() {
        assert!(parse_thresholds(b"{}").unwrap().is_empty());
    }

    #[test]
    fn non_numeric_value() {
        let errs = parse_thresholds(br#"{"FEW": "five"}"#).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].kind, InputErrorKind::NonNumeric);
        assert_eq!(errs[0].position, Some(Position::Key { key: "FEW".into() }));
    }

    #[test]
    fn duplicate_and_invalid_keys_accumulate() {
        let errs = parse_thresholds(br#"{"A": 1, "A": 2, "bad key": 3, "B": null}"#).unwrap_err();
        let kinds: Vec<_> = errs.iter().map(|e| e.kind).collect();
        assert_eq!(kinds, vec![InputErrorKind::NonNumeric, InputErrorKind::DuplicateKey, InputErrorKind::InvalidIdentifier]);
    }

    #[test]
    fn malformed_document_is_positioned() {
        let errs = parse_thresholds(b"{\n  \"A\": 1,\n  oops\n}").unwrap_err();
        assert_eq!(errs[0].kind, InputErrorKind::Malformed);
        assert!(matches!(errs[0].position, Some(Position::Source { line: 3, .. })));
        assert_eq!(parse_thresholds(b"[1,2]").unwrap_err()[0].kind, InputErrorKind::Malformed);
        assert_eq!(parse_thresholds(b"").unwrap_err()[0].kind, InputErrorKind::Malformed);
    }

    #[test]
    fn overflowing_number_is_rejected() {
        assert!(parse_thresholds(br#"{"A": 1e400}"#).is_err());
    }

    #[test]
    fn document_round_trip() {
        let cfg = parse_thresholds(br#"{"A": -0.5, "B": 1e21, "C": 0.1}"#).unwrap();
        assert_eq!(parse_thresholds(cfg.to_json().as_bytes()).unwrap(), cfg);
    }
}
