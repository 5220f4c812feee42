//! Flat `key = value` configuration files.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Error, Result};

pub type Entries = BTreeMap<String, String>;

/// Parse `key = value` lines; blank lines and `#` comments are ignored and
/// a repeated key is an error.
pub fn parse_key_values(text: &str) -> Result<Entries> {
    let mut entries = Entries::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!(
                "line {}: expected `key = value`, got {line:?}",
                n + 1
            ))
        })?;
        let key = k.trim().to_string();
        if entries.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!(
                "line {}: duplicate key {key}",
                n + 1
            )));
        }
    }
    Ok(entries)
}

/// Remove `key` from `entries` and parse it into `slot` when present.
pub(crate) fn take<T>(entries: &mut Entries, key: &str, slot: &mut T) -> Result<()>
where
    T: FromStr,
    T::Err: Display,
{
    if let Some(v) = entries.remove(key) {
        *slot = v
            .parse()
            .map_err(|e| Error::Config(format!("{key}: cannot parse {v:?}: {e}")))?;
    }
    Ok(())
}

/// Comma-separated list variant of [`take`].
pub(crate) fn take_list<T>(entries: &mut Entries, key: &str, slot: &mut Vec<T>) -> Result<()>
where
    T: FromStr,
    T::Err: Display,
{
    if let Some(v) = entries.remove(key) {
        *slot = v
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|e| Error::Config(format!("{key}: cannot parse {s:?}: {e}")))
            })
            .collect::<Result<_>>()?;
    }
    Ok(())
}

pub(crate) fn ensure_consumed(entries: &Entries) -> Result<()> {
    match entries.keys().next() {
        Some(k) => Err(Error::Config(format!("unknown configuration key {k}"))),
        None => Ok(()),
    }
}

pub(crate) fn push(out: &mut String, key: &str, value: impl Display) {
    out.push_str(&format!("{key} = {value}\n"));
}

pub(crate) fn join_list<T: Display>(values: &[T]) -> String {
    values
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}
