//! Shared reading and writing of the versioned TOML files (checkpoints,
//! threshold tables, run configs and reports).

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{JamError, Result};

pub(crate) fn to_text<T: Serialize>(value: &T, kind: &'static str) -> Result<String> {
    toml::to_string(value).map_err(|e| JamError::Format {
        kind,
        field: "<root>".into(),
        message: e.to_string(),
    })
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| JamError::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| JamError::io(path, e))
}

/// Parses `text`, checks `format_version == supported`, then deserializes.
pub(crate) fn parse_versioned<T: DeserializeOwned>(
    text: &str,
    kind: &'static str,
    supported: u32,
) -> Result<T> {
    let table: toml::Table = toml::from_str(text).map_err(|e| format_error(kind, text, &e))?;
    match table.get("format_version") {
        None => {
            return Err(JamError::Format {
                kind,
                field: "format_version".into(),
                message: "missing".into(),
            })
        }
        Some(toml::Value::Integer(v)) if *v == i64::from(supported) => {}
        Some(toml::Value::Integer(v)) => {
            return Err(JamError::UnsupportedVersion {
                kind,
                found: *v,
                supported,
            })
        }
        Some(other) => {
            return Err(JamError::Format {
                kind,
                field: "format_version".into(),
                message: format!("expected an integer, found {}", other.type_str()),
            })
        }
    }
    parse_plain(text, kind)
}

/// Deserializes without a version gate.
pub(crate) fn parse_plain<T: DeserializeOwned>(text: &str, kind: &'static str) -> Result<T> {
    toml::from_str(text).map_err(|e| format_error(kind, text, &e))
}

/// Builds a [`JamError::Format`] naming the offending key where the parser
/// points at one.
fn format_error(kind: &'static str, text: &str, e: &toml::de::Error) -> JamError {
    let message = e.message().trim().to_string();
    let at = e.span().map(|span| span.start);
    let field = if message.starts_with("missing field") {
        // The span covers the table that lacks the key.
        let table = at.and_then(|p| header_at(text, p));
        backticked(&message).map(|name| match table {
            Some(t) => format!("{t}.{name}"),
            None => name,
        })
    } else {
        at.and_then(|p| key_at(text, p))
            .or_else(|| backticked(&message))
    }
    .unwrap_or_else(|| "<document>".into());
    JamError::Format {
        kind,
        field,
        message,
    }
}

fn backticked(message: &str) -> Option<String> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(message[start..start + len].to_string())
}

/// Table name when `pos` sits on a `[table]` header line.
fn header_at(text: &str, pos: usize) -> Option<String> {
    let pos = pos.min(text.len());
    let line_start = text[..pos].rfind('\n').map_or(0, |i| i + 1);
    let line = text[line_start..].lines().next()?.trim();
    line.starts_with('[')
        .then(|| line.trim_matches(['[', ']']).trim().to_string())
}

/// Key of the `key = value` line containing byte offset `pos`, qualified by
/// the nearest preceding table header.
fn key_at(text: &str, pos: usize) -> Option<String> {
    let pos = pos.min(text.len());
    let line_start = text[..pos].rfind('\n').map_or(0, |i| i + 1);
    let line = text[line_start..].lines().next().unwrap_or("");
    let key = line.split('=').next()?.trim();
    if key.is_empty() || key.starts_with('[') {
        return Some(key.trim_matches(['[', ']']).to_string()).filter(|k| !k.is_empty());
    }
    let header = text[..line_start]
        .lines()
        .rev()
        .find(|l| l.trim_start().starts_with('['))
        .map(|l| l.trim().trim_matches(['[', ']']).to_string());
    Some(match header {
        Some(h) => format!("{h}.{key}"),
        None => key.to_string(),
    })
}
