use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::ExperimentConfig;

/// Version of every CSV layout written by this binary.
pub const SCHEMA_VERSION: u32 = 1;

/// First line of every CSV: `# rlqite-schema=1 manifest=<sha256>`.
pub fn manifest_line(hash: &str) -> String {
    format!("# rlqite-schema={SCHEMA_VERSION} manifest={hash}\n")
}

pub struct OutDir {
    pub root: PathBuf,
    pub hash: String,
    files: Vec<String>,
}

impl OutDir {
    pub fn create(cfg: &ExperimentConfig) -> Result<Self> {
        std::fs::create_dir_all(&cfg.out)
            .map_err(|e| crate::config::config_err(format!("output directory {}: {e}", cfg.out.display())))?;
        Ok(Self {
            root: cfg.out.clone(),
            hash: cfg.manifest_hash(),
            files: Vec::new(),
        })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Opens `rel` for writing with the manifest line already in place.
    pub fn csv_writer(&mut self, rel: &str) -> Result<BufWriter<File>> {
        let path = self.path(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut f = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        f.write_all(manifest_line(&self.hash).as_bytes())?;
        self.files.push(rel.to_string());
        Ok(f)
    }

    pub fn write_csv(&mut self, rel: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let f = self.csv_writer(rel)?;
        let mut w = csv::Writer::from_writer(f);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let path = self.path(rel);
        std::fs::write(&path, serde_json::to_string_pretty(value)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        self.files.push(rel.to_string());
        Ok(())
    }

    pub fn record(&mut self, rel: &str) {
        self.files.push(rel.to_string());
    }

    /// `manifest.json`: config, seed, hash and the files written.
    pub fn finish(mut self, cfg: &ExperimentConfig, command: &str, extra: serde_json::Value) -> Result<()> {
        self.files.sort();
        self.files.dedup();
        let manifest = serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "manifest": self.hash,
            "command": command,
            "seed": cfg.seed,
            "deterministic": cfg.deterministic,
            "config": cfg,
            "files": self.files,
            "results": extra,
        });
        std::fs::write(self.root.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(())
    }
}

pub fn fmt_f(v: f64) -> String {
    format!("{v:.12}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f).unwrap_or_default()
}

pub fn beta_tag(beta: f64) -> String {
    format!("{beta:.4}")
}
