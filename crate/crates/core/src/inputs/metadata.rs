use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::document::{parse_entries, quote};
use super::error::{InputError, InputErrorKind};

pub const METADATA_KEYS: [&str; 7] = ["user_id", "org_id", "project_id", "file_path", "language", "latitude", "longitude"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub latitude: f64,
    pub longitude: f64,
}

/// Who ran an analysis, on what, and where. Coordinates are client-supplied
/// and come as a pair or not at all.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextMetadata {
    pub user_id: String,
    pub org_id: String,
    pub project_id: String,
    pub file_path: String,
    pub language: String,
    #[serde(flatten, default, skip_serializing_if = "Option::is_none")]
    pub location: Option<GeoPoint>,
}

impl ContextMetadata {
    /// Invariant violations; empty when the value is well-formed.
    pub fn check(&self) -> Vec<InputError> {
        let mut errors = Vec::new();
        for (key, value) in [("user_id", &self.user_id), ("org_id", &self.org_id), ("project_id", &self.project_id)] {
            if value.trim().is_empty() {
                errors.push(InputError::at_key(InputErrorKind::EmptyValue, key, format!("`{key}` must not be empty")));
            }
        }
        if let Some(loc) = &self.location {
            errors.extend(check_coordinate("latitude", loc.latitude, 90.0));
            errors.extend(check_coordinate("longitude", loc.longitude, 180.0));
        }
        errors
    }

    /// Document form accepted by [`parse_metadata`].
    pub fn to_json(&self) -> String {
        let mut fields = vec![
            format!("\"user_id\": {}", quote(&self.user_id)),
            format!("\"org_id\": {}", quote(&self.org_id)),
            format!("\"project_id\": {}", quote(&self.project_id)),
            format!("\"file_path\": {}", quote(&self.file_path)),
            format!("\"language\": {}", quote(&self.language)),
        ];
        if let Some(loc) = &self.location {
            fields.push(format!("\"latitude\": {}", loc.latitude));
            fields.push(format!("\"longitude\": {}", loc.longitude));
        }
        format!("{{{}}}", fields.join(", "))
    }
}

fn check_coordinate(key: &str, value: f64, bound: f64) -> Option<InputError> {
    (!(value.is_finite() && (-bound..=bound).contains(&value))).then(|| {
        InputError::at_key(
            InputErrorKind::OutOfRange,
            key,
            format!("`{key}` must be within [-{bound}, {bound}] degrees, found {value}"),
        )
    })
}

/// Parses the context metadata document. Unknown keys are rejected.
pub fn parse_metadata(bytes: &[u8]) -> Result<ContextMetadata, Vec<InputError>> {
    let entries = parse_entries(bytes, "metadata").map_err(|e| vec![e])?;
    let mut errors = Vec::new();
    let mut strings: [Option<String>; 5] = Default::default();
    let mut coords: [Option<f64>; 2] = [None, None];
    let mut seen = std::collections::HashSet::new();

    for (key, value) in entries {
        if !seen.insert(key.clone()) {
            errors.push(InputError::at_key(InputErrorKind::DuplicateKey, &key, format!("`{key}` appears more than once")));
            continue;
        }
        match METADATA_KEYS.iter().position(|k| *k == key) {
            Some(i @ 0..=4) => match value {
                Value::String(s) => strings[i] = Some(s),
                other => errors.push(InputError::at_key(
                    InputErrorKind::WrongType,
                    &key,
                    format!("`{key}` must be a string, found {other}"),
                )),
            },
            Some(i) => match value {
                Value::Null => {}
                Value::Number(n) => coords[i - 5] = n.as_f64(),
                other => errors.push(InputError::at_key(
                    InputErrorKind::WrongType,
                    &key,
                    format!("`{key}` must be a number in degrees, found {other}"),
                )),
            },
            None => errors.push(InputError::at_key(
                InputErrorKind::UnknownKey,
                &key,
                format!("unknown metadata key `{key}` (expected one of {})", METADATA_KEYS.join(", ")),
            )),
        }
    }

    for (i, key) in METADATA_KEYS[..5].iter().enumerate() {
        if strings[i].is_none() && !errors.iter().any(|e| e.position == Some(super::Position::Key { key: key.to_string() })) {
            errors.push(InputError::at_key(InputErrorKind::MissingKey, key, format!("missing required key `{key}`")));
        }
    }

    let location = match coords {
        [Some(latitude), Some(longitude)] => Some(GeoPoint { latitude, longitude }),
        [None, None] => None,
        [Some(_), None] | [None, Some(_)] => {
            let (have, missing) = if coords[0].is_some() { ("latitude", "longitude") } else { ("longitude", "latitude") };
            errors.push(InputError::at_key(
                InputErrorKind::LoneCoordinate,
                have,
                format!("`{have}` given without `{missing}`; supply both or neither"),
            ));
            None
        }
    };

    if !errors.is_empty() {
        // still report range problems of the pieces we have
        if let [Some(lat), _] = coords {
            errors.extend(check_coordinate("latitude", lat, 90.0));
        }
        if let [_, Some(lon)] = coords {
            errors.extend(check_coordinate("longitude", lon, 180.0));
        }
        return Err(errors);
    }

    let [user_id, org_id, project_id, file_path, language] = strings.map(Option::unwrap_or_default);
    let meta = ContextMetadata { user_id, org_id, project_id, file_path, language, location };
    let problems = meta.check();
    if problems.is_empty() {
        Ok(meta)
    } else {
        Err(problems)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inputs::Position;

    const FULL: &[u8] = br#"{"user_id": "u1", "org_id": "acme", "project_id": "shop", "file_path": "src/OrderManager.java", "language": "Java", "latitude": -29.79, "longitude": -51.15}"#;

    fn kinds(errs: &[InputError]) -> Vec<InputErrorKind> {
        errs.iter().map(|e| e.kind).collect()
    }

    #[test]
    fn full_document() {
        let meta = parse_metadata(FULL).unwrap();
        assert_eq!(meta.user_id, "u1");
        assert_eq!(meta.org_id, "acme");
        assert_eq!(meta.project_id, "shop");
        assert_eq!(meta.file_path, "src/OrderManager.java");
        assert_eq!(meta.language, "Java");
        assert_eq!(meta.location, Some(GeoPoint { latitude: -29.79, longitude: -51.15 }));
    }

    #[test]
    fn coordinates_are_optional() {
        let meta = parse_metadata(br#"{"user_id":"u","org_id":"o","project_id":"p","file_path":"f","language":"Rust"}"#).unwrap();
        assert_eq!(meta.location, None);
    }

    #[test]
    fn latitude_out_of_range() {
        let errs = parse_metadata(
            br#"{"user_id":"u","org_id":"o","project_id":"p","file_path":"f","language":"l","latitude":95,"longitude":0}"#,
        )
        .unwrap_err();
        assert_eq!(kinds(&errs), vec![InputErrorKind::OutOfRange]);
        assert_eq!(errs[0].position, Some(Position::Key { key: "latitude".into() }));
    }

    #[test]
    fn lone_coordinate_and_missing_keys_accumulate() {
        let errs = parse_metadata(br#"{"user_id":"","org_id":"o","latitude":10,"colour":"red"}"#).unwrap_err();
        assert_eq!(
            kinds(&errs),
            vec![
                InputErrorKind::UnknownKey,
                InputErrorKind::MissingKey,
                InputErrorKind::MissingKey,
                InputErrorKind::MissingKey,
                InputErrorKind::LoneCoordinate
            ]
        );
    }

    #[test]
    fn empty_required_value() {
        let errs = parse_metadata(br#"{"user_id":" ","org_id":"o","project_id":"p","file_path":"f","language":"l"}"#).unwrap_err();
        assert_eq!(kinds(&errs), vec![InputErrorKind::EmptyValue]);
    }

    #[test]
    fn wrong_types() {
        let errs = parse_metadata(br#"{"user_id":1,"org_id":"o","project_id":"p","file_path":"f","language":"l","latitude":"n","longitude":2}"#)
            .unwrap_err();
        assert_eq!(kinds(&errs), vec![InputErrorKind::WrongType, InputErrorKind::WrongType, InputErrorKind::LoneCoordinate]);
    }

    #[test]
    fn document_round_trip() {
        let meta = parse_metadata(FULL).unwrap();
        assert_eq!(parse_metadata(meta.to_json().as_bytes()).unwrap(), meta);
    }
}
