//! Flat `key = value` experiment configuration.
//!
//! One entry per line, `#` starts a comment. Numeric values may be
//! expressions such as `3*pi/4` or `1/128`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentConfig {
    entries: BTreeMap<String, String>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            if entries.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {key}", lineno + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.str(key).unwrap_or(default)
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.str(key).map(|v| eval_number(key, v)).transpose()
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.f64(key)?.unwrap_or(default))
    }

    pub fn require_f64(&self, key: &str) -> Result<f64> {
        self.f64(key)?.ok_or_else(|| Error::Config(format!("missing key {key}")))
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.str(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("{key}: expected a non-negative integer, got {v:?}"))),
        }
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        match self.str(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("{key}: expected a non-negative integer, got {v:?}"))),
        }
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.str(key) {
            None => Ok(default),
            Some("true" | "yes" | "1") => Ok(true),
            Some("false" | "no" | "0") => Ok(false),
            Some(v) => Err(Error::Config(format!("{key}: expected a boolean, got {v:?}"))),
        }
    }

    /// Comma-separated list of numeric expressions.
    pub fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.str(key)
            .map(|v| v.split(',').map(|item| eval_number(key, item.trim())).collect())
            .transpose()
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.str(key).map(PathBuf::from)
    }
}

fn eval_number(key: &str, expr: &str) -> Result<f64> {
    let v = meval::eval_str(expr).map_err(|e| Error::Config(format!("{key}: cannot evaluate {expr:?}: {e}")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Config(format!("{key}: {expr:?} is not finite")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn parses_expressions_and_comments() {
        let cfg = ExperimentConfig::parse("# header\ntheta = 3*pi/4  # phase\nspacing=1/128\nn = 3\nsvg = yes\n").unwrap();
        assert!((cfg.require_f64("theta").unwrap() - 0.75 * PI).abs() < 1e-15);
        assert_eq!(cfg.f64("spacing").unwrap(), Some(1.0 / 128.0));
        assert_eq!(cfg.usize_or("n", 2).unwrap(), 3);
        assert!(cfg.bool_or("svg", false).unwrap());
        assert_eq!(cfg.usize_or("missing", 7).unwrap(), 7);
    }

    #[test]
    fn lists() {
        let cfg = ExperimentConfig::parse("thetas = pi/12, pi/6 ,pi/4").unwrap();
        let v = cfg.f64_list("thetas").unwrap().unwrap();
        assert_eq!(v.len(), 3);
        assert!((v[2] - PI / 4.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(matches!(ExperimentConfig::parse("theta"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::parse("a=1\na=2"), Err(Error::Config(_))));
        let cfg = ExperimentConfig::parse("theta = pi/0\nn = -1\nflag = maybe\nx = foo(").unwrap();
        assert!(cfg.f64("theta").is_err());
        assert!(cfg.usize_or("n", 0).is_err());
        assert!(cfg.bool_or("flag", false).is_err());
        assert!(cfg.f64("x").is_err());
    }
}
