//! `key=value` properties files, as used by the splitter defaults, the
//! pipeline configuration and the `.meta` slide sidecar.
//!
//! Blank lines and lines starting with `#` or `!` are ignored. Keys are
//! case-sensitive, whitespace around keys and values is trimmed, and a key
//! may appear only once.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PropsError {
    #[error("line {line}: expected key=value, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: duplicate key {key:?} (first defined on line {first})")]
    Duplicate { line: usize, first: usize, key: String },
    #[error("missing required key {0:?}")]
    MissingKey(String),
    #[error("unknown key {key:?} on line {line}")]
    UnknownKey { key: String, line: usize },
    #[error("key {key:?} (line {line}): invalid value {value:?}: {reason}")]
    InvalidValue {
        key: String,
        line: usize,
        value: String,
        reason: String,
    },
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Debug, Clone, Default)]
pub struct Properties {
    entries: BTreeMap<String, (String, usize)>,
}

impl Properties {
    pub fn parse(text: &str) -> Result<Self, PropsError> {
        let mut entries: BTreeMap<String, (String, usize)> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with('!') {
                continue;
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                return Err(PropsError::Syntax {
                    line,
                    text: raw.to_string(),
                });
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(PropsError::Syntax {
                    line,
                    text: raw.to_string(),
                });
            }
            if let Some((_, first)) = entries.get(key) {
                return Err(PropsError::Duplicate {
                    line,
                    first: *first,
                    key: key.to_string(),
                });
            }
            entries.insert(key.to_string(), (value.trim().to_string(), line));
        }
        Ok(Properties { entries })
    }

    pub fn load(path: &Path) -> Result<Self, PropsError> {
        let text = std::fs::read_to_string(path).map_err(|e| PropsError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    pub fn line_of(&self, key: &str) -> usize {
        self.entries.get(key).map(|(_, l)| *l).unwrap_or(0)
    }

    pub fn require(&self, key: &str) -> Result<&str, PropsError> {
        self.get(key)
            .ok_or_else(|| PropsError::MissingKey(key.to_string()))
    }

    /// Parse an optional typed value.
    pub fn parse_opt<T>(&self, key: &str) -> Result<Option<T>, PropsError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((value, line)) => value.parse::<T>().map(Some).map_err(|e| {
                PropsError::InvalidValue {
                    key: key.to_string(),
                    line: *line,
                    value: value.clone(),
                    reason: e.to_string(),
                }
            }),
        }
    }

    pub fn invalid(&self, key: &str, reason: impl Into<String>) -> PropsError {
        PropsError::InvalidValue {
            key: key.to_string(),
            line: self.line_of(key),
            value: self.get(key).unwrap_or_default().to_string(),
            reason: reason.into(),
        }
    }

    /// Fails on the first key (in file order) not present in `allowed`.
    pub fn reject_unknown(&self, allowed: &[&str]) -> Result<(), PropsError> {
        let mut unknown: Vec<(&String, usize)> = self
            .entries
            .iter()
            .filter(|(k, _)| !allowed.contains(&k.as_str()))
            .map(|(k, (_, line))| (k, *line))
            .collect();
        unknown.sort_by_key(|(_, line)| *line);
        match unknown.first() {
            Some((key, line)) => Err(PropsError::UnknownKey {
                key: (*key).clone(),
                line: *line,
            }),
            None => Ok(()),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|k| k.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_whitespace() {
        let p = Properties::parse("# comment\n! also\n\n a = 1 \nb=two=2\n").unwrap();
        assert_eq!(p.get("a"), Some("1"));
        assert_eq!(p.get("b"), Some("two=2"));
        assert_eq!(p.line_of("b"), 5);
    }

    #[test]
    fn duplicate_key_reports_line() {
        let err = Properties::parse("a=1\nb=2\na=3\n").unwrap_err();
        assert_eq!(
            err,
            PropsError::Duplicate {
                line: 3,
                first: 1,
                key: "a".into()
            }
        );
    }

    #[test]
    fn syntax_error_without_equals() {
        assert!(matches!(
            Properties::parse("novalue\n"),
            Err(PropsError::Syntax { line: 1, .. })
        ));
    }

    #[test]
    fn keys_are_case_sensitive() {
        let p = Properties::parse("Key=1\nkey=2\n").unwrap();
        assert_eq!(p.get("Key"), Some("1"));
        assert_eq!(p.get("key"), Some("2"));
    }

    #[test]
    fn typed_values() {
        let p = Properties::parse("n=12\nbad=x\n").unwrap();
        assert_eq!(p.parse_opt::<u32>("n").unwrap(), Some(12));
        assert_eq!(p.parse_opt::<u32>("missing").unwrap(), None);
        assert!(matches!(
            p.parse_opt::<u32>("bad"),
            Err(PropsError::InvalidValue { line: 2, .. })
        ));
    }

    #[test]
    fn unknown_keys_rejected_in_file_order() {
        let p = Properties::parse("z=1\nok=2\ny=3\n").unwrap();
        assert_eq!(
            p.reject_unknown(&["ok"]).unwrap_err(),
            PropsError::UnknownKey {
                key: "z".into(),
                line: 1
            }
        );
    }
}
