use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub fn next_pow2(n: usize) -> usize {
    n.max(1).next_power_of_two()
}

/// Zero-padded FFT convolution at a fixed transform size.
///
/// The size is the next power of two at or above the requested output
/// length, so products of spectra realize linear (not circular) convolution
/// as long as `a.len() + b.len() - 1 <= size`.
#[derive(Clone)]
pub struct FftConvolver {
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FftConvolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftConvolver").field("size", &self.size).finish()
    }
}

impl FftConvolver {
    pub fn new(min_len: usize) -> Self {
        let size = next_pow2(min_len);
        let mut planner = FftPlanner::new();
        Self {
            size,
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn spectrum(&self, x: &[f64]) -> Vec<Complex64> {
        assert!(x.len() <= self.size, "input longer than FFT size");
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        buf.resize(self.size, Complex64::new(0.0, 0.0));
        self.forward.process(&mut buf);
        buf
    }

    /// Inverse transform, returning the first `len` real samples.
    pub fn inverse(&self, mut spec: Vec<Complex64>, len: usize) -> Vec<f64> {
        self.inverse.process(&mut spec);
        let scale = 1.0 / self.size as f64;
        spec.iter().take(len).map(|c| c.re * scale).collect()
    }

    pub fn convolve(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        if a.is_empty() || b.is_empty() {
            return Vec::new();
        }
        let len = a.len() + b.len() - 1;
        assert!(len <= self.size, "output length {len} exceeds FFT size {}", self.size);
        let mut fa = self.spectrum(a);
        let fb = self.spectrum(b);
        for (x, y) in fa.iter_mut().zip(&fb) {
            *x *= y;
        }
        self.inverse(fa, len)
    }
}
