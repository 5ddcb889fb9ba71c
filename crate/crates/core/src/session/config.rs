//! Plain-text configuration: `[section]` headers followed by `key = value`
//! lines. `#` starts a comment. Keys are checked against a schema.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Allowed keys per section.
pub type Schema = &'static [(&'static str, &'static [&'static str])];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<(String, String), String>,
}

fn valid_keys(schema: Schema) -> String {
    schema
        .iter()
        .flat_map(|(s, keys)| keys.iter().map(move |k| format!("{s}.{k}")))
        .collect::<Vec<_>>()
        .join(", ")
}

fn check_key(schema: Schema, section: &str, key: &str) -> Result<()> {
    let known = schema.iter().any(|(s, keys)| *s == section && keys.contains(&key));
    if known {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "unknown config key '{section}.{key}'; valid keys: {}",
            valid_keys(schema)
        )))
    }
}

impl Config {
    pub fn parse(text: &str, schema: Schema) -> Result<Self> {
        let mut cfg = Config::default();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                if !schema.iter().any(|(s, _)| *s == section) {
                    return Err(Error::Validation(format!(
                        "line {}: unknown section [{section}]; valid keys: {}",
                        i + 1,
                        valid_keys(schema)
                    )));
                }
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Validation(format!("line {}: expected key = value", i + 1)))?;
            let k = k.trim();
            check_key(schema, &section, k).map_err(|e| Error::Validation(format!("line {}: {e}", i + 1)))?;
            cfg.values.insert((section.clone(), k.to_string()), v.trim().to_string());
        }
        Ok(cfg)
    }

    /// Applies a `section.key=value` override.
    pub fn set_override(&mut self, spec: &str, schema: Schema) -> Result<()> {
        let (path, v) = spec
            .split_once('=')
            .ok_or_else(|| Error::Validation(format!("override '{spec}' must be section.key=value")))?;
        let (s, k) = path
            .trim()
            .split_once('.')
            .ok_or_else(|| Error::Validation(format!("override '{spec}' must be section.key=value")))?;
        check_key(schema, s, k)?;
        self.values.insert((s.to_string(), k.to_string()), v.trim().to_string());
        Ok(())
    }

    pub fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.values.get(&(section.to_string(), key.to_string())).map(String::as_str)
    }

    pub fn get_or<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T> {
        match self.raw(section, key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Validation(format!("config {section}.{key}: cannot parse '{v}'"))),
        }
    }

    /// Canonical text form: sorted sections and keys. Hashing this gives a
    /// stable identity for manifests.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        let mut current = None;
        for ((s, k), v) in &self.values {
            if current != Some(s) {
                out.push_str(&format!("[{s}]\n"));
                current = Some(s);
            }
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}
