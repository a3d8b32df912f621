//! Audio buffers, linear convolution and sine-window WOLA framing.

mod fft;
pub mod wav;

pub use fft::{next_pow2, FftConvolver};

use std::f64::consts::PI;

use crate::{Error, Result};

/// Kernels longer than this are convolved through the FFT.
pub const DIRECT_CONVOLUTION_MAX_TAPS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioSignal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("samples must be finite".into()));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Full linear convolution, length `x.len() + h.len() - 1`.
pub fn convolve(x: &[f64], h: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() || h.is_empty() {
        return Err(Error::InvalidArgument("convolution of an empty sequence".into()));
    }
    if h.len() > DIRECT_CONVOLUTION_MAX_TAPS {
        Ok(FftConvolver::new(x.len() + h.len() - 1).convolve(x, h))
    } else {
        Ok(convolve_direct(x, h))
    }
}

pub fn convolve_direct(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; x.len() + h.len() - 1];
    for (i, &xv) in x.iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        for (o, &hv) in out[i..].iter_mut().zip(h) {
            *o += xv * hv;
        }
    }
    out
}

/// `g[n] = sin(pi (n + 1/2) / N)`.
pub fn sine_window(n_len: usize) -> Result<Vec<f64>> {
    if n_len < 2 || n_len % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "sine window length must be even and >= 2, got {n_len}"
        )));
    }
    let n = n_len as f64;
    Ok((0..n_len).map(|i| (PI * (i as f64 + 0.5) / n).sin()).collect())
}

/// Frame length, overlap and the window used for analysis and synthesis.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmenter {
    segment_length: usize,
    overlap: usize,
    window: Vec<f64>,
}

/// One analysis frame. `start` is the global (0-based) index of its first
/// sample and may be negative when the signal is padded in front.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: usize,
    pub start: isize,
    pub samples: Vec<f64>,
}

impl Frame {
    /// Segment number as counted from 1.
    pub fn one_based(&self) -> usize {
        self.index + 1
    }
}

impl Segmenter {
    pub fn new(segment_length: usize, overlap: usize, window: Vec<f64>) -> Result<Self> {
        if segment_length == 0 || overlap >= segment_length {
            return Err(Error::InvalidArgument(format!(
                "overlap {overlap} must lie in [0, {})",
                segment_length
            )));
        }
        if window.len() != segment_length {
            return Err(Error::DimensionMismatch(format!(
                "window has {} gains for segment length {segment_length}",
                window.len()
            )));
        }
        Ok(Self { segment_length, overlap, window })
    }

    /// Sine window at the given overlap.
    pub fn sine(segment_length: usize, overlap: usize) -> Result<Self> {
        Self::new(segment_length, overlap, sine_window(segment_length)?)
    }

    /// Rectangular window, for tests and non-overlapping framing.
    pub fn rectangular(segment_length: usize, overlap: usize) -> Result<Self> {
        Self::new(segment_length, overlap, vec![1.0; segment_length])
    }

    pub fn segment_length(&self) -> usize {
        self.segment_length
    }

    pub fn overlap(&self) -> usize {
        self.overlap
    }

    pub fn hop(&self) -> usize {
        self.segment_length - self.overlap
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// Number of frames starting inside a signal of `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        len.div_ceil(self.hop())
    }

    /// Global start of frame `i` (0-based), offset by `first_start`.
    pub fn frame_start(&self, first_start: isize, i: usize) -> isize {
        first_start + (i * self.hop()) as isize
    }

    /// Raw (unwindowed) samples of `x` at `[start, start + N)`, zero outside.
    pub fn extract(&self, x: &[f64], start: isize) -> Vec<f64> {
        (0..self.segment_length)
            .map(|n| {
                let g = start + n as isize;
                if g >= 0 && (g as usize) < x.len() {
                    x[g as usize]
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn apply_window(&self, frame: &mut [f64]) {
        for (v, g) in frame.iter_mut().zip(&self.window) {
            *v *= g;
        }
    }

    /// Analysis frames covering `x` from sample 0; the tail is zero padded.
    pub fn segment(&self, x: &[f64]) -> Vec<Frame> {
        self.segment_from(x, 0, self.frame_count(x.len()))
    }

    /// `count` analysis frames whose first frame starts at `first_start`.
    pub fn segment_from(&self, x: &[f64], first_start: isize, count: usize) -> Vec<Frame> {
        (0..count)
            .map(|index| {
                let start = self.frame_start(first_start, index);
                let mut samples = self.extract(x, start);
                self.apply_window(&mut samples);
                Frame { index, start, samples }
            })
            .collect()
    }

    /// Synthesis-windows each frame and sums it into `out_len` samples.
    pub fn overlap_add(&self, frames: &[Frame], out_len: usize) -> Vec<f64> {
        let mut out = vec![0.0; out_len];
        for frame in frames {
            let mut windowed = frame.samples.clone();
            self.apply_window(&mut windowed);
            add_at(&mut out, frame.start, &windowed);
        }
        out
    }
}

/// `out[start + n] += block[n]`, ignoring indices outside `out`.
pub fn add_at(out: &mut [f64], start: isize, block: &[f64]) {
    for (n, &v) in block.iter().enumerate() {
        let g = start + n as isize;
        if g >= 0 && (g as usize) < out.len() {
            out[g as usize] += v;
        }
    }
}
