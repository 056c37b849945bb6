//! Flat key-value experiment configs.
//!
//! Grammar: one `key = value` pair per line, `#` starts a comment (full-line
//! or trailing), blank lines ignored, lists are comma-separated values.
//! Keys are checked against the active subcommand's allow-list so typos
//! fail loudly instead of silently running defaults.

use std::collections::BTreeMap;

use anyhow::{anyhow, bail, Context, Result};

#[derive(Debug, Clone)]
pub struct Config {
    values: BTreeMap<String, String>,
    /// Keys actually read; used to report unknown keys.
    allowed: Vec<&'static str>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`: {raw:?}", lineno + 1))?;
            let key = key.trim().to_string();
            if key.is_empty() {
                bail!("line {}: empty key", lineno + 1);
            }
            if values
                .insert(key.clone(), value.trim().to_string())
                .is_some()
            {
                bail!("line {}: duplicate key `{key}`", lineno + 1);
            }
        }
        Ok(Self {
            values,
            allowed: Vec::new(),
        })
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text)
    }

    /// Declares the keys this subcommand understands; any other key in the
    /// file is an error.
    pub fn restrict_keys(&mut self, allowed: &[&'static str]) -> Result<()> {
        self.allowed = allowed.to_vec();
        for key in self.values.keys() {
            if !allowed.contains(&key.as_str()) {
                bail!(
                    "unknown config key `{key}`; this command accepts: {}",
                    allowed.join(", ")
                );
            }
        }
        Ok(())
    }

    /// Forces a value (CLI overrides such as `--seed`).
    pub fn set(&mut self, key: &str, value: String) {
        self.values.insert(key.to_string(), value);
    }

    pub fn get_str(&self, key: &str, default: &str) -> String {
        self.values
            .get(key)
            .cloned()
            .unwrap_or_else(|| default.to_string())
    }

    pub fn get_f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .with_context(|| format!("key `{key}`: expected a number, got {v:?}")),
        }
    }

    pub fn get_u32(&self, key: &str, default: u32) -> Result<u32> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .with_context(|| format!("key `{key}`: expected an integer, got {v:?}")),
        }
    }

    pub fn get_u64(&self, key: &str, default: u64) -> Result<u64> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .with_context(|| format!("key `{key}`: expected an integer, got {v:?}")),
        }
    }

    pub fn get_usize(&self, key: &str, default: usize) -> Result<usize> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .with_context(|| format!("key `{key}`: expected an integer, got {v:?}")),
        }
    }

    pub fn get_f64_list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.values.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|item| {
                    item.trim()
                        .parse()
                        .with_context(|| format!("key `{key}`: bad list entry {item:?}"))
                })
                .collect(),
        }
    }

    pub fn get_str_list(&self, key: &str, default: &[&str]) -> Vec<String> {
        match self.values.get(key) {
            None => default.iter().map(|s| s.to_string()).collect(),
            Some(v) => v.split(',').map(|s| s.trim().to_string()).collect(),
        }
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    /// Canonical `key = value` rendering of the effective configuration;
    /// artifact hashes are computed over this, so every output is a
    /// deterministic function of it.
    pub fn canonical(&self, command: &str) -> String {
        let mut out = format!("command = {command}\n");
        for (k, v) in &self.values {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}
