//! Flat `key = value` configuration text with `#` comments.

use std::collections::BTreeSet;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
struct Entry {
    key: String,
    value: String,
    line: usize,
}

/// Parsed key/value pairs, remembering the source line of each.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyValues {
    entries: Vec<Entry>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<Entry> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((k, v)) = content.split_once('=') else {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected key=value, got {content:?}"),
                });
            };
            let key = k.trim();
            if key.is_empty() {
                return Err(Error::Parse {
                    line,
                    msg: "empty key".into(),
                });
            }
            if let Some(prev) = entries.iter().find(|e| e.key == key) {
                return Err(Error::Parse {
                    line,
                    msg: format!("duplicate key {key:?} (first set on line {})", prev.line),
                });
            }
            entries.push(Entry {
                key: key.to_string(),
                value: v.trim().to_string(),
                line,
            });
        }
        Ok(Self { entries })
    }

    fn entry(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entry(key).is_some()
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entry(key).map(|e| e.value.as_str())
    }

    /// Parses `key` if present.
    pub fn get<V: FromStr>(&self, key: &str) -> Result<Option<V>> {
        let Some(e) = self.entry(key) else {
            return Ok(None);
        };
        e.value.parse().map(Some).map_err(|_| Error::Parse {
            line: e.line,
            msg: format!("invalid value {:?} for {key}", e.value),
        })
    }

    /// Parses a comma-separated list if present.
    pub fn get_list<V: FromStr>(&self, key: &str) -> Result<Option<Vec<V>>> {
        let Some(e) = self.entry(key) else {
            return Ok(None);
        };
        let parsed: std::result::Result<Vec<V>, _> = e
            .value
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect();
        parsed.map(Some).map_err(|_| Error::Parse {
            line: e.line,
            msg: format!("invalid list {:?} for {key}", e.value),
        })
    }

    /// Line on which `key` was set, for follow-up validation messages.
    pub fn line_of(&self, key: &str) -> Option<usize> {
        self.entry(key).map(|e| e.line)
    }

    /// Fails on the first key outside `known`.
    pub fn reject_unknown(&self, known: &BTreeSet<&str>) -> Result<()> {
        match self.entries.iter().find(|e| !known.contains(e.key.as_str())) {
            Some(e) => Err(Error::Parse {
                line: e.line,
                msg: format!("unknown key {:?}", e.key),
            }),
            None => Ok(()),
        }
    }
}
