//! Flat `key=value` configuration files.

use std::path::Path;

use dmtl_core::{Error, Result};

/// Ordered `key=value` pairs with the line each came from (0 for flags).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    entries: Vec<(String, String, usize)>,
}

impl ConfigFile {
    /// Parses `key=value` lines; `#` starts a comment. Section headers and
    /// dotted keys are rejected, as are keys outside `allowed` and keys given
    /// twice.
    pub fn parse(text: &str, allowed: &[&str]) -> Result<Self> {
        let mut out = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                return Err(Error::format(n, format!("sections are not supported: `{line}`")));
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::format(n, format!("expected `key=value`, found `{line}`")));
            };
            let key = key.trim();
            if out.get(key).is_some() {
                return Err(Error::format(n, format!("key `{key}` given twice")));
            }
            out.insert(key, value.trim(), n, allowed)?;
        }
        Ok(out)
    }

    pub fn load(path: &Path, allowed: &[&str]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text, allowed)
    }

    fn insert(&mut self, key: &str, value: &str, line: usize, allowed: &[&str]) -> Result<()> {
        if key.contains('.') {
            return Err(Error::format(line, format!("nested key `{key}` is not supported")));
        }
        if !allowed.contains(&key) {
            return Err(Error::format(
                line,
                format!("unknown key `{key}` (expected one of: {})", allowed.join(", ")),
            ));
        }
        match self.entries.iter_mut().find(|(k, _, _)| k == key) {
            Some(entry) => {
                entry.1 = value.to_string();
                entry.2 = line;
            }
            None => self.entries.push((key.to_string(), value.to_string(), line)),
        }
        Ok(())
    }

    /// Applies `key=value` overrides from the command line.
    pub fn apply_overrides(&mut self, overrides: &[String], allowed: &[&str]) -> Result<()> {
        for o in overrides {
            let Some((key, value)) = o.split_once('=') else {
                return Err(Error::format(0, format!("override `{o}` is not `key=value`")));
            };
            self.insert(key.trim(), value.trim(), 0, allowed)?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: String) {
        match self.entries.iter_mut().find(|(k, _, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key.to_string(), value, 0)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _, _)| k == key).map(|(_, v, _)| v.as_str())
    }

    pub fn line(&self, key: &str) -> usize {
        self.entries.iter().find(|(k, _, _)| k == key).map_or(0, |e| e.2)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str, usize)> {
        self.entries.iter().map(|(k, v, n)| (k.as_str(), v.as_str(), *n))
    }

    /// Parses the value of `key`, or returns `default` when it is absent.
    pub fn parse_or<V: std::str::FromStr>(&self, key: &str, default: V) -> Result<V> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::format(self.line(key), format!("`{key}`: cannot parse `{v}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const KEYS: [&str; 3] = ["eta", "seed", "trunk"];

    #[test]
    fn parses_comments_and_overrides() {
        let mut c = ConfigFile::parse("# header\neta = 0.5 # inline\n\nseed=3\n", &KEYS).unwrap();
        assert_eq!(c.get("eta"), Some("0.5"));
        assert_eq!(c.line("seed"), 4);
        c.apply_overrides(&["seed=9".into()], &KEYS).unwrap();
        assert_eq!(c.parse_or("seed", 0u64).unwrap(), 9);
        assert_eq!(c.parse_or("trunk", "x".to_string()).unwrap(), "x");
    }

    #[test]
    fn rejects_unknown_nested_and_duplicate_keys() {
        for text in ["etaa=1", "train.eta=1", "[train]\neta=1", "eta=1\neta=2", "eta"] {
            let err = ConfigFile::parse(text, &KEYS).unwrap_err();
            assert!(matches!(err, Error::Format { .. }), "{text}: {err}");
        }
    }
}
