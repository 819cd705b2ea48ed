//! Flat `section.key = value` configuration files.
//!
//! One key per line. `#` starts a comment. Values are plain strings; typed
//! accessors parse them on demand and fall back to documented defaults. Every
//! lookup is recorded, so the resolved configuration (explicit values plus
//! defaults) can be written into the report, and keys that no experiment read
//! can be rejected as typos.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

#[derive(Debug, Default)]
pub struct Config {
    entries: BTreeMap<String, String>,
    resolved: RefCell<BTreeMap<String, String>>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("line {}: expected `key = value`, got {raw:?}", no + 1)))?;
            let key = key.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(CliError::Usage(format!("line {}: bad key {key:?}", no + 1)));
            }
            if entries.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(CliError::Usage(format!("line {}: duplicate key `{key}`", no + 1)));
            }
        }
        Ok(Self { entries, resolved: RefCell::default() })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, CliError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let cfg = Self::parse(&text)?;
        if cfg.is_empty() {
            return Err(CliError::Usage(format!("config {} sets no keys", path.display())));
        }
        Ok(cfg)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Overrides (or adds) a key, as done for `--seed`.
    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    fn record(&self, key: &str, value: String) {
        self.resolved.borrow_mut().insert(key.to_string(), value);
    }

    fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T, CliError> {
        raw.parse().map_err(|_| CliError::Usage(format!("`{key}`: cannot parse {raw:?}")))
    }

    /// Typed value with a default.
    pub fn get<T: FromStr + Display>(&self, key: &str, default: T) -> Result<T, CliError> {
        let v = match self.entries.get(key) {
            Some(raw) => Self::parse_value(key, raw)?,
            None => default,
        };
        self.record(key, v.to_string());
        Ok(v)
    }

    /// Typed value without a default.
    pub fn optional<T: FromStr + Display>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.entries.get(key) {
            Some(raw) => {
                let v: T = Self::parse_value(key, raw)?;
                self.record(key, v.to_string());
                Ok(Some(v))
            }
            None => Ok(None),
        }
    }

    pub fn string(&self, key: &str, default: &str) -> String {
        let v = self.entries.get(key).cloned().unwrap_or_else(|| default.to_string());
        self.record(key, v.clone());
        v
    }

    /// Comma-separated list.
    pub fn list<T: FromStr + Display + Clone>(&self, key: &str, default: &[T]) -> Result<Vec<T>, CliError> {
        let v = match self.entries.get(key) {
            Some(raw) => raw
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| Self::parse_value(key, s))
                .collect::<Result<Vec<T>, _>>()?,
            None => default.to_vec(),
        };
        self.record(key, v.iter().map(ToString::to_string).collect::<Vec<_>>().join(","));
        Ok(v)
    }

    /// Every key read so far with the value used.
    pub fn resolved(&self) -> BTreeMap<String, String> {
        self.resolved.borrow().clone()
    }

    /// Keys present in the file that nothing has read.
    pub fn unused(&self) -> Vec<String> {
        let seen = self.resolved.borrow();
        self.entries.keys().filter(|k| !seen.contains_key(*k)).cloned().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_resolves() {
        let cfg = Config::parse("# comment\nmodel.alpha = 0.25  # trailing\n\nsim.ns = 1, 2,3\n").unwrap();
        assert_eq!(cfg.get("model.alpha", 0.5).unwrap(), 0.25);
        assert_eq!(cfg.get("sim.dt", 0.01).unwrap(), 0.01);
        assert_eq!(cfg.list::<usize>("sim.ns", &[]).unwrap(), vec![1, 2, 3]);
        assert!(cfg.unused().is_empty());
        let r = cfg.resolved();
        assert_eq!(r["sim.dt"], "0.01");
        assert_eq!(r["sim.ns"], "1,2,3");
    }

    #[test]
    fn rejects_malformed() {
        assert!(Config::parse("alpha 0.5").is_err());
        assert!(Config::parse("a = 1\na = 2").is_err());
        let cfg = Config::parse("a = x").unwrap();
        assert!(cfg.get("a", 1.0).is_err());
    }

    #[test]
    fn reports_unused_keys() {
        let cfg = Config::parse("model.alhpa = 0.3").unwrap();
        cfg.get("model.alpha", 0.5).unwrap();
        assert_eq!(cfg.unused(), vec!["model.alhpa".to_string()]);
    }
}
