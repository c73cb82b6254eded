//! `key = value` text: one pair per line, `#` starts a comment.

use crate::error::{format_err, Result};

pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(format_err(format!("line {}: expected `key = value`, got `{line}`", n + 1)));
        };
        let key = k.trim().to_string();
        if key.is_empty() {
            return Err(format_err(format!("line {}: empty key", n + 1)));
        }
        if out.iter().any(|(k, _)| *k == key) {
            return Err(format_err(format!("line {}: duplicate key `{key}`", n + 1)));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

pub fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| format_err(format!("bad value `{value}` for `{key}`")))
}

pub fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split_whitespace().map(|v| parse_value(key, v)).collect()
}

pub fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format_err(format!("bad boolean `{value}` for `{key}`"))),
    }
}
