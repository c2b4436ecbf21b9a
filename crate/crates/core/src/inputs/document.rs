//! Flat key-value documents (`{"KEY": value, ...}`) with duplicate keys kept,
//! so the parsers above can report them instead of silently keeping the last.

use std::fmt;

use serde::de::{self, Deserializer, MapAccess, Visitor};
use serde_json::Value;

use super::error::{InputError, InputErrorKind, Position};

pub(crate) struct Entries(pub Vec<(String, Value)>);

impl<'de> de::Deserialize<'de> for Entries {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct EntriesVisitor;

        impl<'de> Visitor<'de> for EntriesVisitor {
            type Value = Entries;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an object of key-value pairs")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Entries, A::Error> {
                let mut entries = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, Value>()? {
                    entries.push((k, v));
                }
                Ok(Entries(entries))
            }
        }

        deserializer.deserialize_map(EntriesVisitor)
    }
}

pub(crate) fn parse_entries(bytes: &[u8], what: &str) -> Result<Vec<(String, Value)>, InputError> {
    serde_json::from_slice::<Entries>(bytes).map(|e| e.0).map_err(|e| {
        let position = (e.line() > 0).then(|| Position::Source { line: e.line(), column: e.column().max(1) });
        let kind = if std::str::from_utf8(bytes).is_err() {
            InputErrorKind::InvalidUtf8
        } else {
            InputErrorKind::Malformed
        };
        InputError::new(kind, position, format!("malformed {what} document: {e}"))
    })
}

/// JSON string with the same escaping the parser accepts.
pub(crate) fn quote(s: &str) -> String {
    Value::String(s.to_string()).to_string()
}
