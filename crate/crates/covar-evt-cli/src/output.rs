//! Artifact writing with configuration echo and failure cleanup.

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;

/// Tracks written artifacts so a failing run can remove partial outputs.
pub struct Artifacts {
    out_dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Artifacts {
    pub fn new(out_dir: &Path) -> Result<Self, String> {
        fs::create_dir_all(out_dir)
            .map_err(|e| format!("cannot create output directory {}: {e}", out_dir.display()))?;
        Ok(Artifacts {
            out_dir: out_dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    /// Write a CSV: `# key=value` config echo, then header, then rows.
    pub fn write_csv(
        &mut self,
        name: &str,
        config: &RunConfig,
        header: &str,
        rows: &[String],
    ) -> Result<PathBuf, String> {
        let path = self.path(name);
        let mut body = config.echo_comments();
        body.push_str(header);
        body.push('\n');
        for row in rows {
            body.push_str(row);
            body.push('\n');
        }
        fs::write(&path, body).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
        self.written.push(path.clone());
        Ok(path)
    }

    /// Write a JSON artifact with the resolved config embedded.
    pub fn write_json(
        &mut self,
        name: &str,
        config: &RunConfig,
        payload: serde_json::Value,
    ) -> Result<PathBuf, String> {
        let path = self.path(name);
        let wrapped = serde_json::json!({
            "config": config.echo_map(),
            "result": payload,
        });
        let body = serde_json::to_string_pretty(&wrapped).expect("serializable");
        fs::write(&path, body).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
        self.written.push(path.clone());
        Ok(path)
    }

    /// Remove everything written so far (used on command failure).
    pub fn cleanup(&self) {
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
    }
}

/// Locale-independent full-precision float formatting: Rust's shortest
/// round-trip representation.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Optional value for CSV cells; invalid rows keep their field empty.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}
