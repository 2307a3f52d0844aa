//! Flat `key=value` probe settings.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use orlicz_risk::{Error, Result};

const KEYS: &[&str] = &[
    "trials",
    "population",
    "min_n",
    "max_n",
    "count",
    "schemes",
    "partitions",
    "max_blocks",
    "base_levels",
    "k",
    "witnesses",
];

#[derive(Debug, Default)]
pub struct ProbeConfig(BTreeMap<String, String>);

impl ProbeConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(ProbeConfig::default());
        };
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("config line {}: expected key=value", i + 1)))?;
            let k = k.trim();
            if !KEYS.contains(&k) {
                return Err(Error::Parse(format!("config line {}: unknown key `{k}`", i + 1)));
            }
            map.insert(k.to_string(), v.trim().to_string());
        }
        Ok(ProbeConfig(map))
    }

    pub fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.0.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Parse(format!("config key `{key}`: cannot parse `{v}`"))),
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_defaults() {
        let c = ProbeConfig::parse("# comment\ntrials = 12\n\nschemes=oscillating\n").unwrap();
        assert_eq!(c.get("trials", 1usize).unwrap(), 12);
        assert_eq!(c.get("count", 7usize).unwrap(), 7);
        assert_eq!(c.raw("schemes"), Some("oscillating"));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ProbeConfig::parse("bogus=1").is_err());
        assert!(ProbeConfig::parse("trials").is_err());
        assert!(ProbeConfig::parse("trials=x").unwrap().get("trials", 0usize).is_err());
    }
}
