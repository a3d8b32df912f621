//! Artifact emission. Every file goes through one [`OutputWriter`] so the
//! manifest can list it.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::warn;
use vastzones::signal::wav::{write_wav, WavFormat};

pub struct OutputWriter {
    root: PathBuf,
    files: Vec<String>,
}

impl OutputWriter {
    pub fn new(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("cannot create output directory {}", root.display()))?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new() })
    }

    fn register(&mut self, rel: &str) -> Result<PathBuf> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        self.files.push(rel.to_string());
        Ok(path)
    }

    pub fn csv(&mut self, rel: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let path = self.register(rel)?;
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("cannot write {}", path.display()))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn wav(&mut self, rel: &str, channels: &[&[f64]], sample_rate: u32) -> Result<()> {
        let path = self.register(rel)?;
        let clipped = write_wav(&path, channels, sample_rate, WavFormat::Float32)?;
        if clipped > 0 {
            warn!("{rel}: {clipped} samples outside [-1, 1]");
        }
        Ok(())
    }

    /// Writes the manifest, which lists itself last.
    pub fn manifest(mut self, rel: &str, mut text: String) -> Result<Vec<String>> {
        let path = self.register(rel)?;
        text.push_str("files:\n");
        for f in &self.files {
            text.push_str("  ");
            text.push_str(f);
            text.push('\n');
        }
        fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(self.files)
    }
}

/// Shortest round-trip representation, so reruns compare byte for byte.
/// Very small or large magnitudes switch to exponent notation.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e6).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}
