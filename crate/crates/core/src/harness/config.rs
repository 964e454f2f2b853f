//! Flat `key = value` run configuration with namespaced keys
//! (`model.d`, `train.stage1.steps`, `loss.variant`, `data.sigma`, ...).
//! CLI flags override file values with `--key=value`.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct Config {
    map: BTreeMap<String, String>,
}

impl Config {
    pub fn new() -> Config {
        Config::default()
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Config> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::invalid("config", format!("{}: {e}", path.as_ref().display())))?;
        let mut cfg = Config::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::invalid("config", format!("line {}: `{raw}` is not `key = value`", lineno + 1))
            })?;
            cfg.map.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.map.insert(key.into(), value.into());
    }

    /// Apply a `key=value` override (the CLI strips the leading `--`).
    pub fn apply_override(&mut self, arg: &str) -> Result<()> {
        let (k, v) = arg
            .split_once('=')
            .ok_or_else(|| Error::invalid("flag", format!("`{arg}` is not key=value")))?;
        if k.trim().is_empty() {
            return Err(Error::invalid("flag", format!("`{arg}` has an empty key")));
        }
        self.map.insert(k.trim().to_string(), v.trim().to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|s| s.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::invalid("config", format!("missing required key `{key}`")))
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::invalid("config", format!("`{key} = {v}` is not an integer"))),
        }
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::invalid("config", format!("`{key} = {v}` is not an integer"))),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::invalid("config", format!("`{key} = {v}` is not a number"))),
        }
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(v) => Err(Error::invalid("config", format!("`{key} = {v}` is not true/false"))),
        }
    }

    pub fn string_or(&self, key: &str, default: &str) -> String {
        self.get(key).unwrap_or(default).to_string()
    }

    /// Comma-separated floats, e.g. `0.5,0.75,0.875`.
    pub fn f64_list_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse()
                        .map_err(|_| Error::invalid("config", format!("`{key}`: `{p}` is not a number")))
                })
                .collect(),
        }
    }

    /// Sorted snapshot for logging/meta.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.map {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_override() {
        let dir = std::env::temp_dir().join(format!("rdst-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.cfg");
        std::fs::write(&path, "# comment\nmodel.d = 24\ntrain.batch = 8\n\n").unwrap();
        let mut cfg = Config::from_file(&path).unwrap();
        assert_eq!(cfg.usize_or("model.d", 60).unwrap(), 24);
        cfg.apply_override("model.d=12").unwrap();
        assert_eq!(cfg.usize_or("model.d", 60).unwrap(), 12);
        assert_eq!(cfg.usize_or("model.g", 30).unwrap(), 30);
        assert!(cfg.apply_override("no-equals").is_err());
        assert!(Config::from_file(dir.join("missing.cfg")).is_err());
        std::fs::write(&path, "bad line\n").unwrap();
        assert!(Config::from_file(&path).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn list_parsing() {
        let mut cfg = Config::new();
        cfg.set("m", "0.5, 0.75,0.875");
        assert_eq!(cfg.f64_list_or("m", &[]).unwrap(), vec![0.5, 0.75, 0.875]);
        assert_eq!(cfg.f64_list_or("absent", &[0.5]).unwrap(), vec![0.5]);
    }
}
