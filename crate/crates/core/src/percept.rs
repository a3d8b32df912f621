//! Masking curves and the reciprocal weighting filters derived from them.
//!
//! The default [`BarkSpreadingModel`] maps the power spectrum of a windowed
//! frame to 1-Bark bands, spreads it with a triangular function, lowers it by
//! a fixed margin and floors the result at the threshold in quiet. Any other
//! model can be plugged in through [`MaskingModel`].

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{num_complex::Complex64, FftPlanner};

use crate::{Error, Result};

/// Level in dB SPL that corresponds to 0 dBFS.
pub const FULL_SCALE_SPL: f64 = 96.0;

pub const DEFAULT_WEIGHTING_TAPS: usize = 129;

/// Smallest frame accepted by the masking model.
pub const MIN_FRAME_LEN: usize = 64;

/// Critical-band rate in Bark.
pub fn bark(f: f64) -> f64 {
    13.0 * (0.00076 * f).atan() + 3.5 * (f / 7500.0).powi(2).atan()
}

/// Absolute threshold of hearing in dB SPL; frequencies below 20 Hz are
/// evaluated at 20 Hz.
pub fn threshold_in_quiet_db_spl(f: f64) -> f64 {
    let k = f.max(20.0) / 1000.0;
    3.64 * k.powf(-0.8) - 6.5 * (-0.6 * (k - 3.3).powi(2)).exp() + 1e-3 * k.powi(4)
}

fn bin_frequency(k: usize, fft_len: usize, sample_rate: u32) -> f64 {
    k as f64 * sample_rate as f64 / fft_len as f64
}

fn quiet_power(n_bins: usize, fft_len: usize, sample_rate: u32) -> Vec<f64> {
    (0..n_bins)
        .map(|k| {
            let db = threshold_in_quiet_db_spl(bin_frequency(k, fft_len, sample_rate)) - FULL_SCALE_SPL;
            10f64.powf(db / 10.0)
        })
        .collect()
}

/// Threshold in quiet as full-scale-relative amplitude for `n_bins` bins of
/// an FFT of length `2 (n_bins - 1)`.
pub fn threshold_in_quiet(n_bins: usize, sample_rate: u32) -> Vec<f64> {
    let fft_len = 2 * n_bins.saturating_sub(1);
    quiet_power(n_bins, fft_len.max(1), sample_rate).into_iter().map(f64::sqrt).collect()
}

/// Masking threshold per FFT bin as linear amplitude (full scale = 1).
#[derive(Debug, Clone, PartialEq)]
pub struct MaskingCurve {
    pub amplitude: Vec<f64>,
    pub segment_index: usize,
    pub sample_rate: u32,
}

impl MaskingCurve {
    pub fn n_bins(&self) -> usize {
        self.amplitude.len()
    }

    pub fn fft_len(&self) -> usize {
        2 * (self.amplitude.len() - 1)
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.n_bins()).map(|k| bin_frequency(k, self.fft_len(), self.sample_rate)).collect()
    }

    pub fn db(&self) -> Vec<f64> {
        self.amplitude.iter().map(|a| 20.0 * a.log10()).collect()
    }

    /// The threshold in quiet for this curve's bin grid.
    pub fn quiet(n_bins: usize, sample_rate: u32, segment_index: usize) -> Self {
        Self { amplitude: threshold_in_quiet(n_bins, sample_rate), segment_index, sample_rate }
    }
}

pub trait MaskingModel: Send + Sync {
    /// Masking curve of one windowed frame.
    fn masking_curve(&self, frame: &[f64], sample_rate: u32, segment_index: usize) -> Result<MaskingCurve>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarkSpreadingModel {
    /// Slope below the masker, dB per Bark.
    pub lower_slope_db: f64,
    /// Slope above the masker, dB per Bark.
    pub upper_slope_db: f64,
    /// Margin subtracted from the spread spectrum.
    pub offset_db: f64,
}

impl Default for BarkSpreadingModel {
    fn default() -> Self {
        Self { lower_slope_db: 25.0, upper_slope_db: 10.0, offset_db: 14.0 }
    }
}

/// Intermediate quantities of the Bark model, kept for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct BandAnalysis {
    /// Signal power per band.
    pub band_power: Vec<f64>,
    /// Spread and offset threshold per band, as power per bin.
    pub band_threshold: Vec<f64>,
    /// Band index of each bin.
    pub bin_band: Vec<usize>,
}

// Keeps the dB interpolation finite for silent bands.
const POWER_FLOOR: f64 = 1e-30;

fn power_spectrum(frame: &[f64]) -> Vec<f64> {
    let n = frame.len();
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut buf: Vec<Complex64> = frame.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.process(&mut buf);
    let scale = 4.0 / (n * n) as f64;
    buf[..n / 2 + 1].iter().map(|c| c.norm_sqr() * scale).collect()
}

impl BarkSpreadingModel {
    pub fn analyze(&self, frame: &[f64], sample_rate: u32) -> Result<BandAnalysis> {
        let n = frame.len();
        if n < MIN_FRAME_LEN || n % 2 != 0 {
            return Err(Error::InvalidArgument(format!("masking frame length {n} must be even and >= {MIN_FRAME_LEN}")));
        }
        let power = power_spectrum(frame);
        let bin_band: Vec<usize> = (0..power.len())
            .map(|k| bark(bin_frequency(k, n, sample_rate)).floor() as usize)
            .collect();
        let n_bands = bin_band.last().unwrap() + 1;
        let mut band_power = vec![0.0; n_bands];
        let mut band_bins = vec![0usize; n_bands];
        for (&b, &p) in bin_band.iter().zip(&power) {
            band_power[b] += p;
            band_bins[b] += 1;
        }
        let offset = 10f64.powf(-self.offset_db / 10.0);
        let band_threshold = (0..n_bands)
            .map(|j| {
                if band_bins[j] == 0 {
                    return 0.0;
                }
                let spread: f64 = band_power
                    .iter()
                    .enumerate()
                    .map(|(i, &e)| {
                        let att = if j < i {
                            self.lower_slope_db * (i - j) as f64
                        } else {
                            self.upper_slope_db * (j - i) as f64
                        };
                        e * 10f64.powf(-att / 10.0)
                    })
                    .sum();
                spread * offset / band_bins[j] as f64
            })
            .collect();
        Ok(BandAnalysis { band_power, band_threshold, bin_band })
    }
}

impl MaskingModel for BarkSpreadingModel {
    fn masking_curve(&self, frame: &[f64], sample_rate: u32, segment_index: usize) -> Result<MaskingCurve> {
        let n = frame.len();
        let bands = self.analyze(frame, sample_rate)?;
        // Band centres in Bark and the band thresholds in dB, nonempty bands only.
        let mut centres = Vec::new();
        let mut levels = Vec::new();
        for (b, &t) in bands.band_threshold.iter().enumerate() {
            if bands.bin_band.contains(&b) {
                centres.push(b as f64 + 0.5);
                levels.push(10.0 * t.max(POWER_FLOOR).log10());
            }
        }
        let quiet = quiet_power(n / 2 + 1, n, sample_rate);
        let amplitude = quiet
            .iter()
            .enumerate()
            .map(|(k, &q)| {
                let z = bark(bin_frequency(k, n, sample_rate));
                let db = interpolate(&centres, &levels, z);
                10f64.powf(db / 10.0).max(q).sqrt()
            })
            .collect();
        Ok(MaskingCurve { amplitude, segment_index, sample_rate })
    }
}

/// Piecewise-linear interpolation, constant beyond the ends.
fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    for i in 1..xs.len() {
        if x <= xs[i] {
            let t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
            return ys[i - 1] + t * (ys[i] - ys[i - 1]);
        }
    }
    *ys.last().unwrap()
}

/// Masking curve with the default model.
pub fn masking_curve(frame: &[f64], sample_rate: u32) -> Result<MaskingCurve> {
    BarkSpreadingModel::default().masking_curve(frame, sample_rate, 0)
}

/// Per-bin mean of the curves' power, returned as amplitude.
pub fn averaged_masking_curve(curves: &[MaskingCurve]) -> Result<MaskingCurve> {
    let first = curves.first().ok_or_else(|| Error::InvalidArgument("no masking curves to average".into()))?;
    if curves.iter().any(|c| c.n_bins() != first.n_bins()) {
        return Err(Error::DimensionMismatch("masking curves differ in bin count".into()));
    }
    let count = curves.len() as f64;
    let amplitude = (0..first.n_bins())
        .map(|k| {
            let a0 = first.amplitude[k];
            if curves.iter().all(|c| c.amplitude[k] == a0) {
                return a0;
            }
            (curves.iter().map(|c| c.amplitude[k] * c.amplitude[k]).sum::<f64>() / count).sqrt()
        })
        .collect();
    Ok(MaskingCurve { amplitude, segment_index: first.segment_index, sample_rate: first.sample_rate })
}

/// Linear-phase FIR with magnitude proportional to the reciprocal of a
/// masking curve and a peak gain of one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightingFilter {
    pub taps: Vec<f64>,
}

impl WeightingFilter {
    pub fn delta(n_taps: usize) -> Self {
        let mut taps = vec![0.0; n_taps];
        taps[(n_taps - 1) / 2] = 1.0;
        Self { taps }
    }

    /// Group delay in samples.
    pub fn delay(&self) -> usize {
        (self.taps.len() - 1) / 2
    }

    /// Magnitude response at the bins of an FFT of length `fft_len`.
    pub fn magnitude_response(&self, fft_len: usize) -> Vec<f64> {
        let fft = FftPlanner::new().plan_fft_forward(fft_len);
        let mut buf = vec![Complex64::new(0.0, 0.0); fft_len];
        for (b, &t) in buf.iter_mut().zip(&self.taps) {
            b.re = t;
        }
        fft.process(&mut buf);
        buf[..fft_len / 2 + 1].iter().map(|c| c.norm()).collect()
    }
}

/// Frequency-sampling design: zero-phase inverse DFT of the target
/// magnitude, centred and tapered with a Hann window. `n_taps` must be odd
/// and no longer than the curve's FFT.
pub fn weighting_filter(curve: &MaskingCurve, n_taps: usize) -> Result<WeightingFilter> {
    let fft_len = curve.fft_len();
    if n_taps % 2 == 0 || n_taps > fft_len {
        return Err(Error::InvalidArgument(format!(
            "weighting filter needs an odd tap count <= {fft_len}, got {n_taps}"
        )));
    }
    if curve.amplitude.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
        return Err(Error::InvalidArgument("masking curve must be positive and finite".into()));
    }
    let min = curve.amplitude.iter().copied().fold(f64::INFINITY, f64::min);
    let target: Vec<f64> = curve.amplitude.iter().map(|&a| min / a).collect();
    let half = fft_len / 2;
    let centre = (n_taps - 1) / 2;
    let taps = (0..n_taps)
        .map(|t| {
            let tau = t as f64 - centre as f64;
            let mut acc = target[0] + target[half] * (PI * tau).cos();
            for (k, &h) in target.iter().enumerate().take(half).skip(1) {
                acc += 2.0 * h * (2.0 * PI * k as f64 * tau / fft_len as f64).cos();
            }
            let taper = 0.5 * (1.0 - (2.0 * PI * (t + 1) as f64 / (n_taps + 1) as f64).cos());
            acc / fft_len as f64 * taper
        })
        .collect();
    Ok(WeightingFilter { taps })
}

/// Shared handle to a masking model.
pub type SharedMaskingModel = Arc<dyn MaskingModel>;
