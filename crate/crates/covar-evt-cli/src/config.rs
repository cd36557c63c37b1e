//! Flat `key=value` configuration files with command-line overrides.
//!
//! Every artifact echoes the fully resolved configuration, so any output
//! can be reproduced from its own header.

use std::collections::BTreeMap;
use std::path::Path;

/// Resolved configuration: file-provided defaults overlaid by CLI flags.
/// A `BTreeMap` keeps the echo ordering stable.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, String> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| format!("{}: cannot read config: {e}", path.display()))?;
        let mut values = BTreeMap::new();
        for (idx, line) in raw.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| {
                format!("{}:{}: expected key=value", path.display(), idx + 1)
            })?;
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(RunConfig { values })
    }

    /// Overlay a CLI-provided value (CLI wins over the file).
    pub fn set_override(&mut self, key: &str, value: Option<impl ToString>) {
        if let Some(v) = value {
            self.values.insert(key.to_string(), v.to_string());
        }
    }

    /// Record the effective value of a defaulted key so the echo is complete.
    pub fn record(&mut self, key: &str, value: impl ToString) {
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, String> {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| format!("config key '{key}': cannot parse '{raw}'")),
        }
    }

    pub fn parse_or<T: std::str::FromStr + ToString>(
        &mut self,
        key: &str,
        default: T,
    ) -> Result<T, String> {
        match self.parse::<T>(key)? {
            Some(v) => Ok(v),
            None => {
                self.record(key, default.to_string());
                Ok(default)
            }
        }
    }

    /// `# key=value` comment lines for CSV artifacts.
    pub fn echo_comments(&self) -> String {
        self.values
            .iter()
            .map(|(k, v)| format!("# {k}={v}\n"))
            .collect()
    }

    /// Key→value map for JSON artifacts.
    pub fn echo_map(&self) -> &BTreeMap<String, String> {
        &self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn file_then_override_precedence() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "# comment\nfamily=logistic\nm = 180").unwrap();
        let mut cfg = RunConfig::from_file(f.path()).unwrap();
        assert_eq!(cfg.get("family"), Some("logistic"));
        assert_eq!(cfg.parse::<usize>("m").unwrap(), Some(180));
        cfg.set_override("m", Some(200));
        assert_eq!(cfg.parse::<usize>("m").unwrap(), Some(200));
        cfg.set_override("m", Option::<usize>::None);
        assert_eq!(cfg.parse::<usize>("m").unwrap(), Some(200));
    }

    #[test]
    fn echo_contains_recorded_defaults() {
        let mut cfg = RunConfig::default();
        let p: f64 = cfg.parse_or("p", 0.05).unwrap();
        assert_eq!(p, 0.05);
        assert!(cfg.echo_comments().contains("# p=0.05"));
    }

    #[test]
    fn malformed_line_rejected() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "just-a-token").unwrap();
        assert!(RunConfig::from_file(f.path()).is_err());
    }
}
