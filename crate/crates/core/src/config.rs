//! Flat `key = value` text configs. `#` starts a comment; blank lines are
//! ignored. Keys may appear at most once.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

pub fn parse_kv(text: &str, path: &Path) -> Result<Vec<Entry>> {
    let mut out: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let Some((k, v)) = line.split_once('=') else {
            return Err(err(format!("expected `key = value`, found `{line}`")));
        };
        let key = k.trim().to_string();
        if key.is_empty() {
            return Err(err("empty key".into()));
        }
        if let Some(prev) = out.iter().find(|e| e.key == key) {
            return Err(err(format!("duplicate key `{key}` (first set on line {})", prev.line)));
        }
        out.push(Entry {
            line: i + 1,
            key,
            value: v.trim().to_string(),
        });
    }
    Ok(out)
}

/// Parses `entry.value` as `T`, reporting the entry's line on failure.
pub fn parse_value<T: std::str::FromStr>(entry: &Entry, path: &Path) -> Result<T> {
    entry.value.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line: entry.line,
        msg: format!("invalid value `{}` for `{}`", entry.value, entry.key),
    })
}

pub fn parse_usize_list(entry: &Entry, path: &Path) -> Result<Vec<usize>> {
    if entry.value.is_empty() {
        return Ok(Vec::new());
    }
    entry
        .value
        .split(',')
        .map(|s| {
            s.trim().parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: entry.line,
                msg: format!("invalid list `{}` for `{}`", entry.value, entry.key),
            })
        })
        .collect()
}
