//! Plain-text `key = value` documents with an optional whitespace table.
//!
//! Used for calibration records, scenario scripts and capture configs:
//!
//! ```text
//! # comment
//! key = value
//!
//! [stations]
//! L1  74.3010  31.5120  5.33  25.9  200
//! ```
//!
//! Blank lines and `#` comments are ignored everywhere. Keys are unique.
//! Every line after a `[section]` header is a table row of whitespace
//! separated cells.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KvError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("bad value for `{key}`: {msg}")]
    Value { key: String, msg: String },
}

impl KvError {
    pub fn value(key: &str, err: impl Display) -> Self {
        KvError::Value {
            key: key.to_string(),
            msg: err.to_string(),
        }
    }
}

/// One table row with the line it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub line: usize,
    pub cells: Vec<String>,
}

impl Row {
    pub fn cell<T>(&self, idx: usize, name: &str) -> Result<T, KvError>
    where
        T: FromStr,
        T::Err: Display,
    {
        let raw = self.cells.get(idx).ok_or_else(|| KvError::Syntax {
            line: self.line,
            msg: format!("missing column `{name}`"),
        })?;
        raw.parse().map_err(|e: T::Err| KvError::Syntax {
            line: self.line,
            msg: format!("column `{name}`: {e}"),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvDocument {
    values: BTreeMap<String, String>,
    sections: BTreeMap<String, Vec<Row>>,
}

impl KvDocument {
    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut doc = KvDocument::default();
        let mut section: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| KvError::Syntax {
                    line,
                    msg: "unterminated section header".into(),
                })?;
                let name = name.trim().to_string();
                doc.sections.entry(name.clone()).or_default();
                section = Some(name);
                continue;
            }
            if let Some(name) = &section {
                let cells = content.split_whitespace().map(str::to_string).collect();
                doc.sections
                    .get_mut(name)
                    .expect("section registered at header")
                    .push(Row { line, cells });
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| KvError::Syntax {
                line,
                msg: format!("expected `key = value`, got {content:?}"),
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(KvError::Syntax {
                    line,
                    msg: "empty key".into(),
                });
            }
            if doc
                .values
                .insert(key.to_string(), value.trim().to_string())
                .is_some()
            {
                return Err(KvError::Syntax {
                    line,
                    msg: format!("duplicate key `{key}`"),
                });
            }
        }
        Ok(doc)
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn require_str(&self, key: &str) -> Result<&str, KvError> {
        self.get_str(key)
            .ok_or_else(|| KvError::Missing(key.to_string()))
    }

    pub fn get<T>(&self, key: &str) -> Result<Option<T>, KvError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.get_str(key)
            .map(|v| v.parse().map_err(|e| KvError::value(key, e)))
            .transpose()
    }

    pub fn get_or<T>(&self, key: &str, default: T) -> Result<T, KvError>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T>(&self, key: &str) -> Result<T, KvError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.get(key)?
            .ok_or_else(|| KvError::Missing(key.to_string()))
    }

    /// Rows of `[name]`; empty if the section is absent.
    pub fn section(&self, name: &str) -> &[Row] {
        self.sections.get(name).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn has_section(&self, name: &str) -> bool {
        self.sections.contains_key(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_values_and_table() {
        let doc = KvDocument::parse(
            "# header\nseed = 42\nname = lahore canal  # trailing\n\n[stations]\nL1 1.0 2.0\nL2 3 4\n",
        )
        .unwrap();
        assert_eq!(doc.require::<u64>("seed").unwrap(), 42);
        assert_eq!(doc.get_str("name"), Some("lahore canal"));
        let rows = doc.section("stations");
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].line, 7);
        assert_eq!(rows[0].cell::<f64>(2, "lat").unwrap(), 2.0);
        assert!(rows[1].cell::<f64>(3, "ph").is_err());
    }

    #[test]
    fn rejects_duplicates_and_garbage() {
        assert!(matches!(
            KvDocument::parse("a = 1\na = 2\n"),
            Err(KvError::Syntax { line: 2, .. })
        ));
        assert!(KvDocument::parse("just words\n").is_err());
        assert!(KvDocument::parse("[open\n").is_err());
        assert!(KvDocument::parse(" = 3\n").is_err());
    }

    #[test]
    fn typed_lookup_errors_name_the_key() {
        let doc = KvDocument::parse("rate = fast\n").unwrap();
        let err = doc.get::<f64>("rate").unwrap_err();
        assert!(matches!(err, KvError::Value { ref key, .. } if key == "rate"));
        assert_eq!(doc.require::<f64>("nope"), Err(KvError::Missing("nope".into())));
        assert_eq!(doc.get_or("other", 1.5).unwrap(), 1.5);
    }
}
