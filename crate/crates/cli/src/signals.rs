//! Zone programs from WAV files or seeded noise.

use anyhow::{bail, Context, Result};
use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use vastzones::room::Zone;
use vastzones::signal::wav::read_wav;

use crate::config::{LoadedConfig, ProgramSource};

#[derive(Debug, Clone, PartialEq)]
pub struct ZonePrograms {
    pub alpha: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
    /// Gain applied to beta by energy calibration.
    pub calibration_gain: Option<f64>,
}

fn source_of(cfg: &LoadedConfig, zone: Zone) -> Option<&ProgramSource> {
    match zone {
        Zone::Alpha => cfg.config.signals.alpha.as_ref(),
        Zone::Beta => cfg.config.signals.beta.as_ref(),
    }
}

fn load_one(cfg: &LoadedConfig, zone: Zone, src: &ProgramSource) -> Result<Vec<f64>> {
    let key = format!("signals.{}", zone.name());
    let fs = cfg.config.room.sample_rate;
    match (&src.wav, src.noise_seconds) {
        (Some(path), None) => {
            let full = cfg.resolve(path);
            if !full.is_file() {
                bail!("{key}.wav: file not found: {}", full.display());
            }
            let data = read_wav(&full).with_context(|| format!("{key}.wav"))?;
            if data.channels.len() != 1 {
                bail!("{key}.wav: {} has {} channels; a mono file is required", full.display(), data.channels.len());
            }
            if data.sample_rate != fs {
                bail!(
                    "{key}.wav: {} is sampled at {} Hz but room.sample_rate is {fs} Hz",
                    full.display(),
                    data.sample_rate
                );
            }
            let x = data.channels.into_iter().next().unwrap_or_default();
            if x.is_empty() {
                bail!("{key}.wav: {} is empty", full.display());
            }
            Ok(x)
        }
        (None, Some(seconds)) => {
            if !(seconds > 0.0 && seconds.is_finite()) {
                bail!("{key}.noise_seconds must be positive, got {seconds}");
            }
            if !(src.noise_rms > 0.0 && src.noise_rms.is_finite()) {
                bail!("{key}.noise_rms must be positive, got {}", src.noise_rms);
            }
            let len = (seconds * fs as f64).round() as usize;
            let stream = match zone {
                Zone::Alpha => 0,
                Zone::Beta => 1,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.config.seed);
            rng.set_stream(stream);
            let normal = Normal::new(0.0, src.noise_rms)?;
            Ok((0..len).map(|_| normal.sample(&mut rng)).collect())
        }
        _ => bail!("{key}: set exactly one of `wav` or `noise_seconds`"),
    }
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Loads both programs, trims them to a common length and optionally
/// calibrates beta to alpha's energy.
pub fn load_programs(cfg: &LoadedConfig) -> Result<ZonePrograms> {
    let mut alpha = source_of(cfg, Zone::Alpha).map(|s| load_one(cfg, Zone::Alpha, s)).transpose()?;
    let mut beta = source_of(cfg, Zone::Beta).map(|s| load_one(cfg, Zone::Beta, s)).transpose()?;
    if alpha.is_none() && beta.is_none() {
        bail!("signals: at least one of signals.alpha or signals.beta is required");
    }
    let mut calibration_gain = None;
    if let (Some(a), Some(b)) = (alpha.as_mut(), beta.as_mut()) {
        if a.len() != b.len() {
            let n = a.len().min(b.len());
            warn!("programs differ in length ({} vs {}); both trimmed to {n} samples", a.len(), b.len());
            a.truncate(n);
            b.truncate(n);
        }
        if cfg.config.signals.calibrate_energy {
            let (ea, eb) = (energy(a), energy(b));
            if ea == 0.0 || eb == 0.0 {
                bail!("signals: energy calibration needs two nonsilent programs");
            }
            let g = (ea / eb).sqrt();
            b.iter_mut().for_each(|v| *v *= g);
            calibration_gain = Some(g);
        }
    }
    Ok(ZonePrograms { alpha, beta, calibration_gain })
}

impl ZonePrograms {
    pub fn len(&self) -> usize {
        self.alpha.as_ref().or(self.beta.as_ref()).map_or(0, Vec::len)
    }
}
