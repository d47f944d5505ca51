use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::field::ContinuumField;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
    pub columns: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub crate_version: &'static str,
    pub spec: serde_json::Value,
    pub seed: u64,
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
    pub threads: usize,
    pub status: &'static str,
    pub error: Option<String>,
    pub summary: serde_json::Value,
    pub files: Vec<FileEntry>,
}

/// Collects output files under one directory and writes the manifest last.
pub struct ArtifactWriter {
    dir: PathBuf,
    files: Vec<FileEntry>,
    started: Instant,
    started_unix: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl ArtifactWriter {
    pub fn create(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Ok(ArtifactWriter { dir, files: Vec::new(), started: Instant::now(), started_unix })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }

    /// Writes `bytes` to `name` and records its checksum.
    pub fn write(&mut self, name: &str, columns: &[&str], bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        self.files.retain(|f| f.path != name);
        self.files.push(FileEntry {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
        });
        Ok(path)
    }

    /// Writes a CSV built row by row.
    pub fn csv(&mut self, name: &str, columns: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<PathBuf> {
        let mut wr = csv::Writer::from_writer(Vec::new());
        wr.write_record(columns)?;
        for row in rows {
            wr.write_record(&row)?;
        }
        let bytes = wr.into_inner().map_err(|e| e.into_error())?;
        self.write(name, columns, &bytes)
    }

    pub fn field_series(&mut self, name: &str, series: &[(f64, ContinuumField)]) -> Result<PathBuf> {
        let d = series.first().map_or(1, |s| s.1.dim());
        let mut buf = Vec::new();
        ContinuumField::write_csv_series(&mut buf, series)?;
        self.write(name, ContinuumField::csv_header(d), &buf)
    }

    pub fn json(&mut self, name: &str, value: &impl Serialize) -> Result<PathBuf> {
        let bytes = serde_json::to_vec_pretty(value)?;
        self.write(name, &[], &bytes)
    }

    /// Writes `manifest.json` describing everything written so far.
    pub fn finish(
        self,
        experiment: &str,
        spec: serde_json::Value,
        seed: u64,
        threads: usize,
        outcome: std::result::Result<serde_json::Value, String>,
    ) -> Result<Manifest> {
        let (status, error, summary) = match outcome {
            Ok(s) => ("ok", None, s),
            Err(e) => ("failed", Some(e), serde_json::Value::Null),
        };
        let manifest = Manifest {
            experiment: experiment.to_string(),
            crate_version: env!("CARGO_PKG_VERSION"),
            spec,
            seed,
            started_unix: self.started_unix,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            threads,
            status,
            error,
            summary,
            files: self.files,
        };
        fs::write(self.dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
        Ok(manifest)
    }
}

/// Formats a float so that it round-trips exactly.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checksum_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn records_files_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = ArtifactWriter::create(dir.path().join("run")).unwrap();
        w.csv("a.csv", &["x", "y"], vec![vec!["1".into(), num(0.5)]]).unwrap();
        w.csv("a.csv", &["x", "y"], vec![vec!["2".into(), num(0.5)]]).unwrap();
        assert_eq!(w.files().len(), 1);
        let body = fs::read(dir.path().join("run/a.csv")).unwrap();
        assert_eq!(body, b"x,y\n2,5e-1\n");
        let m = w.finish("demo", serde_json::json!({}), 7, 1, Err("boom".into())).unwrap();
        assert_eq!(m.status, "failed");
        assert_eq!(m.files[0].sha256, sha256_hex(&body));
        let text = fs::read_to_string(dir.path().join("run/manifest.json")).unwrap();
        assert!(text.contains("\"boom\""));
    }
}
