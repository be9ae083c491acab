//! Flat `key = value` text shared by manifests, run configs and reports.
//! Blank lines and lines starting with `#` are ignored.

use crate::error::FormatError;

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

pub fn parse(text: &str) -> Result<Vec<Entry>, FormatError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| FormatError::Text {
            line: i + 1,
            message: format!("expected `key = value`, got `{}`", line),
        })?;
        out.push(Entry {
            line: i + 1,
            key: k.trim().to_string(),
            value: v.trim().to_string(),
        });
    }
    Ok(out)
}

/// Looks a key up, failing with `MissingField` if it is absent.
pub fn lookup<'a>(entries: &'a [Entry], key: &str) -> Result<&'a Entry, FormatError> {
    entries
        .iter()
        .find(|e| e.key == key)
        .ok_or_else(|| FormatError::MissingField(key.to_string()))
}

pub fn value<T: std::str::FromStr>(entry: &Entry) -> Result<T, FormatError> {
    entry.value.parse().map_err(|_| FormatError::Text {
        line: entry.line,
        message: format!("cannot parse `{}` for `{}`", entry.value, entry.key),
    })
}

pub fn field<T: std::str::FromStr>(entries: &[Entry], key: &str) -> Result<T, FormatError> {
    value(lookup(entries, key)?)
}

pub fn words(entries: &[Entry], key: &str) -> Result<Vec<String>, FormatError> {
    Ok(lookup(entries, key)?.value.split_whitespace().map(str::to_string).collect())
}
