use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Supported source metadata layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dialect {
    /// `KEY = VALUE` lines inside `GROUP = ...` / `END_GROUP = ...` blocks.
    #[serde(rename = "landsat-mtl")]
    LandsatMtl,
    /// `Key-Name: value` lines.
    #[serde(rename = "zy3-kv")]
    Zy3Kv,
}

impl Dialect {
    pub fn name(self) -> &'static str {
        match self {
            Dialect::LandsatMtl => "landsat-mtl",
            Dialect::Zy3Kv => "zy3-kv",
        }
    }

    /// Guesses the dialect from the separator of the first entry line.
    pub fn sniff(text: &str) -> Option<Dialect> {
        let line = text.lines().map(str::trim).find(|l| !l.is_empty() && !l.starts_with('#'))?;
        match (line.find('='), line.find(':')) {
            (Some(eq), Some(colon)) if colon < eq => Some(Dialect::Zy3Kv),
            (Some(_), _) => Some(Dialect::LandsatMtl),
            (None, Some(_)) => Some(Dialect::Zy3Kv),
            (None, None) => None,
        }
    }
}

impl fmt::Display for Dialect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Dialect {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "landsat-mtl" => Ok(Dialect::LandsatMtl),
            "zy3-kv" => Ok(Dialect::Zy3Kv),
            other => Err(Error::domain(format!("unsupported metadata dialect {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceMetadataDocument {
    pub dialect: Dialect,
    pub entries: Vec<(String, String)>,
}

impl SourceMetadataDocument {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

/// Splits `text` into key/value entries according to `dialect`.
pub fn parse_source(text: &str, dialect: Dialect) -> Result<SourceMetadataDocument> {
    let separator = match dialect {
        Dialect::LandsatMtl => '=',
        Dialect::Zy3Kv => ':',
    };
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if dialect == Dialect::LandsatMtl && line == "END" {
            continue;
        }
        let Some((key, value)) = line.split_once(separator) else {
            return Err(Error::Parse { line: line_no, message: format!("expected '{separator}' in {line:?}") });
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Parse { line: line_no, message: "empty key".into() });
        }
        if dialect == Dialect::LandsatMtl && (key == "GROUP" || key == "END_GROUP") {
            continue;
        }
        if !seen.insert(key.to_owned()) {
            return Err(Error::Parse { line: line_no, message: format!("duplicate key {key}") });
        }
        entries.push((key.to_owned(), unquote(value.trim()).to_owned()));
    }
    Ok(SourceMetadataDocument { dialect, entries })
}

fn unquote(v: &str) -> &str {
    v.strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .or_else(|| v.strip_prefix('\'').and_then(|s| s.strip_suffix('\'')))
        .map(str::trim)
        .unwrap_or(v)
}
