//! Physical evaluation metrics on rendered sound fields.
//!
//! All energies are sums of squares over a [`MetricWindow`]. Infinite values
//! are returned as `f64` infinities; [`clamp_sentinel`] maps them to the
//! fixed +-200 dB used in tables.

use crate::{Error, Result};

pub const SENTINEL_DB: f64 = 200.0;

/// Sample range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MetricWindow {
    pub start: usize,
    pub end: usize,
}

impl MetricWindow {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn full(len: usize) -> Self {
        Self { start: 0, end: len }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn slice<'a>(&self, x: &'a [f64]) -> Result<&'a [f64]> {
        if self.is_empty() || self.end > x.len() {
            return Err(Error::EmptyWindow);
        }
        Ok(&x[self.start..self.end])
    }
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn ratio_db(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        if num == 0.0 {
            f64::NAN
        } else {
            f64::INFINITY
        }
    } else if num == 0.0 {
        f64::NEG_INFINITY
    } else {
        10.0 * (num / den).log10()
    }
}

/// `10 log10((M_D / M_B) sum |p_B|^2 / sum |p_D|^2)`; `+inf` for a silent dark zone.
pub fn acoustic_contrast_db<B: AsRef<[f64]>, D: AsRef<[f64]>>(bright: &[B], dark: &[D], window: MetricWindow) -> Result<f64> {
    if bright.is_empty() || dark.is_empty() {
        return Err(Error::InvalidArgument("contrast needs points in both zones".into()));
    }
    let mut e_b = 0.0;
    for p in bright {
        e_b += energy(window.slice(p.as_ref())?);
    }
    let mut e_d = 0.0;
    for p in dark {
        e_d += energy(window.slice(p.as_ref())?);
    }
    if e_d == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(ratio_db(dark.len() as f64 / bright.len() as f64 * e_b, e_d))
}

/// `10 log10(sum |p - d|^2 / sum |d|^2)` at one point; `-inf` when `p == d`.
pub fn nsdp_db(p: &[f64], d: &[f64], window: MetricWindow, point: usize) -> Result<f64> {
    let p = window.slice(p)?;
    let d = window.slice(d)?;
    let e_d = energy(d);
    if e_d == 0.0 {
        return Err(Error::ZeroDesiredEnergy(point));
    }
    let err: f64 = p.iter().zip(d).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(ratio_db(err, e_d))
}

/// Target-to-interferer ratio at one point; `+inf` without interference.
pub fn tir_db(target: &[f64], interferer: &[f64], window: MetricWindow) -> Result<f64> {
    let t = energy(window.slice(target)?);
    let i = energy(window.slice(interferer)?);
    if i == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(ratio_db(t, i))
}

pub fn clamp_sentinel(v: f64) -> f64 {
    v.clamp(-SENTINEL_DB, SENTINEL_DB)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    /// `1.96 s / sqrt(n)`; `None` with fewer than two values.
    pub ci_half_width: Option<f64>,
    pub n_points: usize,
    /// Infinite or NaN values left out of the statistics.
    pub excluded: usize,
}

/// Mean and normal-approximation 95% confidence half-width of the finite values.
pub fn aggregate(values: &[f64]) -> Aggregate {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let n = finite.len();
    let excluded = values.len() - n;
    if n == 0 {
        return Aggregate { mean: f64::NAN, ci_half_width: None, n_points: 0, excluded };
    }
    let mean = finite.iter().sum::<f64>() / n as f64;
    let ci_half_width = (n >= 2).then(|| {
        let var = finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        1.96 * var.sqrt() / (n as f64).sqrt()
    });
    Aggregate { mean, ci_half_width, n_points: n, excluded }
}
