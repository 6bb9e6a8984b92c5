//! Config loading with errors anchored to a line of the source file.

use std::fmt;
use std::path::Path;

use invfilter::ConfigError;
use serde::de::DeserializeOwned;

/// A config that failed to parse or validate.
#[derive(Debug)]
pub struct LoadError {
    pub source: String,
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for LoadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.source)?;
        if let Some(line) = self.line {
            write!(f, ":{line}")?;
        }
        write!(f, ": ")?;
        if let Some(key) = &self.key {
            write!(f, "{key}: ")?;
        }
        write!(f, "{}", self.message)
    }
}

pub struct Loaded<T> {
    pub value: T,
    pub text: String,
    pub source: String,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<Loaded<T>, LoadError> {
    let source = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| LoadError {
        source: source.clone(),
        line: None,
        key: None,
        message: e.to_string(),
    })?;
    let value = serde_json::from_str(&text).map_err(|e| LoadError {
        source: source.clone(),
        line: Some(e.line()),
        key: None,
        message: e.to_string(),
    })?;
    Ok(Loaded { value, text, source })
}

/// Attach the line where `err.key` appears in `text`.
pub fn anchor(err: ConfigError, text: Option<&str>, source: &str) -> LoadError {
    LoadError {
        source: source.to_string(),
        line: text.map(|t| key_line(t, &err.key)),
        key: Some(err.key),
        message: err.message,
    }
}

/// Line of the last segment of a dotted key such as `model.process_var`,
/// searching for each segment after the previous one. Array indices are
/// dropped; falls back to the last segment found, or line 1.
pub fn key_line(text: &str, key: &str) -> usize {
    let mut offset = 0;
    for seg in key.split('.') {
        let name = seg.split('[').next().unwrap_or(seg);
        let quoted = format!("\"{name}\"");
        match text[offset..].find(&quoted) {
            Some(i) => offset += i,
            None => break,
        }
    }
    text[..offset].matches('\n').count() + 1
}
