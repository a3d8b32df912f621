//! Spatial correlation statistics of the uncontrolled responses.
//!
//! For a receiver `m` and loudspeaker `l`, let `z_ml = w_m * x * h_ml` be the
//! (optionally weighted) pressure produced when the control filter is a
//! Kronecker delta. The stacked vector `y_m[n]` holds the `J` most recent
//! samples of every `z_ml`, loudspeaker-major:
//!
//! ```text
//! y_m[n] = [z_m1[n], z_m1[n-1], .., z_m1[n-J+1], z_m2[n], .., z_mL[n-J+1]]
//! ```
//!
//! so that the reproduced pressure is `p_m[n] = y_m[n]^T q`. Only the `N + J - 1`
//! samples of `z_ml` that the observation window touches are stored.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::room::RirSet;
use crate::signal::FftConvolver;
use rustfft::num_complex::Complex64;
use crate::{Error, Result};

/// Observation indices `n` in `[start, start + len)`, global sample time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObservationWindow {
    pub start: isize,
    pub len: usize,
}

impl ObservationWindow {
    pub fn new(start: isize, len: usize) -> Self {
        Self { start, len }
    }
}

/// Weighting FIR taps per receiver index. Taps are applied centred, i.e.
/// delayed by `-(len - 1) / 2`, so linear-phase filters add no latency.
pub type WeightingSet = BTreeMap<usize, Vec<f64>>;

#[derive(Debug, Clone, PartialEq)]
pub struct UncontrolledResponses {
    points: Vec<usize>,
    l_count: usize,
    j_len: usize,
    window: ObservationWindow,
    /// `[point][l][N + J - 1]`; entry `i` is `z_ml[window.start - (J-1) + i]`.
    z: Vec<f64>,
}

impl UncontrolledResponses {
    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn l_count(&self) -> usize {
        self.l_count
    }

    pub fn j_len(&self) -> usize {
        self.j_len
    }

    pub fn lj(&self) -> usize {
        self.l_count * self.j_len
    }

    pub fn window(&self) -> ObservationWindow {
        self.window
    }

    fn span(&self) -> usize {
        self.window.len + self.j_len - 1
    }

    /// Stored samples of `z_ml` for the `p`-th point of the set.
    pub fn z(&self, p: usize, l: usize) -> &[f64] {
        let span = self.span();
        let start = (p * self.l_count + l) * span;
        &self.z[start..start + span]
    }

    /// The stacked vector `y_m[n]` at local observation index `n`.
    pub fn y(&self, p: usize, n: usize) -> Vec<f64> {
        let c = self.j_len - 1;
        let mut out = Vec::with_capacity(self.lj());
        for l in 0..self.l_count {
            let z = self.z(p, l);
            out.extend((0..self.j_len).map(|j| z[n + c - j]));
        }
        out
    }

    /// `y_m[n]^T q` for every observation index of the window.
    pub fn project(&self, p: usize, q: &[f64]) -> Vec<f64> {
        assert_eq!(q.len(), self.lj(), "filter length mismatch");
        let c = self.j_len - 1;
        let mut out = vec![0.0; self.window.len];
        for l in 0..self.l_count {
            let z = self.z(p, l);
            let ql = &q[l * self.j_len..(l + 1) * self.j_len];
            for (n, o) in out.iter_mut().enumerate() {
                *o += ql.iter().enumerate().map(|(j, &qv)| qv * z[n + c - j]).sum::<f64>();
            }
        }
        out
    }
}

/// Samples `[start, start + len)` of `x` filtered by the centred `taps`
/// (`taps == None` means no weighting), zero outside the signal.
fn weighted_input(x: &[f64], taps: Option<&[f64]>, start: isize, len: usize) -> Vec<f64> {
    let sample = |g: isize| if g >= 0 && (g as usize) < x.len() { x[g as usize] } else { 0.0 };
    let Some(w) = taps else {
        return (0..len).map(|i| sample(start + i as isize)).collect();
    };
    let delay = ((w.len() - 1) / 2) as isize;
    // xw[n] = sum_t w[t] x[n + delay - t]
    let first = start + delay - (w.len() as isize - 1);
    let raw: Vec<f64> = (0..len + w.len() - 1).map(|i| sample(first + i as isize)).collect();
    let full = if w.len() > crate::signal::DIRECT_CONVOLUTION_MAX_TAPS {
        FftConvolver::new(raw.len() + w.len() - 1).convolve(&raw, w)
    } else {
        crate::signal::convolve_direct(&raw, w)
    };
    full[w.len() - 1..w.len() - 1 + len].to_vec()
}

/// `(h * xw)[n]` for `n` in `[out_start, out_start + out_len)`, given `xw`
/// samples starting at global index `out_start - (K - 1)`.
fn filter_block(fft: &FftConvolver, xw_spec: &[rustfft::num_complex::Complex64], h: &[f64], out_len: usize) -> Vec<f64> {
    let mut spec = fft.spectrum(h);
    for (s, x) in spec.iter_mut().zip(xw_spec) {
        *s *= x;
    }
    let k = h.len();
    let full = fft.inverse(spec, k - 1 + out_len);
    full[k - 1..].to_vec()
}

fn weighting_for<'a>(weighting: Option<&'a WeightingSet>, m: usize) -> Result<Option<&'a [f64]>> {
    match weighting {
        None => Ok(None),
        Some(set) => set.get(&m).map(|t| Some(t.as_slice())).ok_or(Error::MissingWeighting(m)),
    }
}

/// Uncontrolled (weighted) responses of the receivers in `points` over `window`.
pub fn build_uncontrolled(
    x: &[f64],
    rirs: &RirSet,
    points: &[usize],
    j_len: usize,
    weighting: Option<&WeightingSet>,
    window: ObservationWindow,
) -> Result<UncontrolledResponses> {
    if j_len == 0 {
        return Err(Error::InvalidArgument("filter length J must be >= 1".into()));
    }
    if window.len == 0 {
        return Err(Error::InvalidArgument("observation window is empty".into()));
    }
    if let Some(&bad) = points.iter().find(|&&m| m >= rirs.points()) {
        return Err(Error::DimensionMismatch(format!("point {bad} has no RIRs")));
    }
    for &m in points {
        weighting_for(weighting, m)?;
    }
    let l_count = rirs.sources();
    let k = rirs.taps();
    let span = window.len + j_len - 1;
    let out_start = window.start - (j_len as isize - 1);
    let in_len = span + k - 1;
    let fft = FftConvolver::new(in_len + k - 1);

    let shared = if weighting.is_none() {
        Some(fft.spectrum(&weighted_input(x, None, out_start - (k as isize - 1), in_len)))
    } else {
        None
    };
    let blocks: Vec<Vec<f64>> = points
        .par_iter()
        .map(|&m| {
            let own;
            let spec = match &shared {
                Some(s) => s,
                None => {
                    let taps = weighting_for(weighting, m).expect("checked above");
                    own = fft.spectrum(&weighted_input(x, taps, out_start - (k as isize - 1), in_len));
                    &own
                }
            };
            (0..l_count).flat_map(|l| filter_block(&fft, spec, rirs.h(m, l), span)).collect()
        })
        .collect();
    Ok(UncontrolledResponses {
        points: points.to_vec(),
        l_count,
        j_len,
        window,
        z: blocks.concat(),
    })
}

/// Weighted desired pressure `(w_m * h_mz * x)[n]` over `window` for each point.
pub fn weighted_desired(
    x: &[f64],
    rirs: &RirSet,
    points: &[usize],
    weighting: Option<&WeightingSet>,
    window: ObservationWindow,
) -> Result<Vec<Vec<f64>>> {
    let k = rirs.taps();
    let in_len = window.len + k - 1;
    let fft = FftConvolver::new(in_len + k - 1);
    points
        .par_iter()
        .map(|&m| {
            if m >= rirs.points() {
                return Err(Error::DimensionMismatch(format!("point {m} has no RIRs")));
            }
            let taps = weighting_for(weighting, m)?;
            let spec = fft.spectrum(&weighted_input(x, taps, window.start - (k as isize - 1), in_len));
            Ok(filter_block(&fft, &spec, rirs.h_virtual(m), window.len))
        })
        .collect()
}

/// `sigma_d^2`, `r_B`, `R_B`, `R_D` for one design problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialStats {
    pub sigma_d_sq: f64,
    pub r_b: DVector<f64>,
    pub r_bright: DMatrix<f64>,
    pub r_dark: DMatrix<f64>,
    pub m_b: usize,
    pub m_d: usize,
    pub n_obs: usize,
    pub l_count: usize,
    pub j_len: usize,
}

impl SpatialStats {
    pub fn lj(&self) -> usize {
        self.l_count * self.j_len
    }

    /// Weighted signal distortion power `sigma_d^2 - 2 q^T r_B + q^T R_B q`.
    pub fn distortion_power(&self, q: &DVector<f64>) -> f64 {
        self.sigma_d_sq - 2.0 * q.dot(&self.r_b) + q.dot(&(&self.r_bright * q))
    }

    /// Weighted residual power in the dark zone, `q^T R_D q`.
    pub fn residual_power(&self, q: &DVector<f64>) -> f64 {
        q.dot(&(&self.r_dark * q))
    }
}

/// Dot product with pairwise summation in blocks of 32.
fn dot_pairwise(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.len() <= 32 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    } else {
        let h = a.len() / 2;
        dot_pairwise(&a[..h], &b[..h]) + dot_pairwise(&a[h..], &b[h..])
    }
}

/// Observation windows at least this long take the lag correlations from
/// block FFTs instead of direct dot products.
pub const FFT_CORRELATION_MIN_OBS: usize = 4096;

/// Lag correlations summed over the points of a response set, `k in 0..J`:
///
/// * `pairs[a * L + b][k] = sum_p sum_n z_pa[n + c] z_pb[n + k]`,
/// * `desired[b][k] = sum_p sum_n d_p[n] z_pb[n + k]`.
struct LagCorrelations {
    pairs: Vec<Vec<f64>>,
    desired: Vec<Vec<f64>>,
}

fn mul_conj_acc(acc: &mut [Complex64], x: &[Complex64], y: &[Complex64]) {
    for ((a, u), v) in acc.iter_mut().zip(x).zip(y) {
        *a += u.conj() * v;
    }
}

/// Blocks of `B` observations are correlated at FFT size `P >= B + J - 1`,
/// which keeps lags `0..J` free of circular wrap-around. Spectra are summed
/// over points and blocks before a single inverse transform per output.
fn lag_correlations(resp: &UncontrolledResponses, desired: Option<&[Vec<f64>]>) -> LagCorrelations {
    let (l_count, j_len, n) = (resp.l_count, resp.j_len, resp.window.len);
    let c = j_len - 1;
    let fft = FftConvolver::new((8 * j_len).max(4096));
    let size = fft.size();
    let block = size - c;
    let width = l_count * l_count + if desired.is_some() { l_count } else { 0 };
    let zero = Complex64::new(0.0, 0.0);
    let empty = || vec![vec![zero; size]; width];
    let acc = (0..resp.points.len())
        .into_par_iter()
        .fold(empty, |mut acc, p| {
            for n0 in (0..n).step_by(block) {
                let len = block.min(n - n0);
                let full: Vec<Vec<Complex64>> =
                    (0..l_count).map(|l| fft.spectrum(&resp.z(p, l)[n0..n0 + len + c])).collect();
                for a in 0..l_count {
                    let seg = fft.spectrum(&resp.z(p, a)[c + n0..c + n0 + len]);
                    for (b, fb) in full.iter().enumerate() {
                        mul_conj_acc(&mut acc[a * l_count + b], &seg, fb);
                    }
                }
                if let Some(d) = desired {
                    let ds = fft.spectrum(&d[p][n0..n0 + len]);
                    for (b, fb) in full.iter().enumerate() {
                        mul_conj_acc(&mut acc[l_count * l_count + b], &ds, fb);
                    }
                }
            }
            acc
        })
        .reduce(empty, |mut x, y| {
            for (a, b) in x.iter_mut().zip(&y) {
                for (u, v) in a.iter_mut().zip(b) {
                    *u += v;
                }
            }
            x
        });
    let mut out: Vec<Vec<f64>> = acc.into_par_iter().map(|s| fft.inverse(s, j_len)).collect();
    let desired = out.split_off(l_count * l_count);
    LagCorrelations { pairs: out, desired }
}

/// `sum_p sum_n y_p[n] y_p[n]^T`, unnormalized, from the Toeplitz structure.
fn correlation_sum(resp: &UncontrolledResponses, lags: Option<&LagCorrelations>) -> DMatrix<f64> {
    let (l_count, j_len, n) = (resp.l_count, resp.j_len, resp.window.len);
    let lj = resp.lj();
    let c = j_len - 1;
    let pairs: Vec<(usize, usize)> = (0..l_count).flat_map(|a| (a..l_count).map(move |b| (a, b))).collect();
    let blocks: Vec<Vec<f64>> = pairs
        .par_iter()
        .map(|&(la, lb)| {
            // s[j * J + j'] = sum_p sum_n z_pa[n + c - j] z_pb[n + c - j']
            let mut s = vec![0.0; j_len * j_len];
            if n <= 2 * j_len {
                // Short windows: direct dot products are cheaper than the recursion.
                for j in 0..j_len {
                    for jp in 0..j_len {
                        s[j * j_len + jp] = (0..resp.points.len())
                            .map(|p| dot_pairwise(&resp.z(p, la)[c - j..c - j + n], &resp.z(p, lb)[c - jp..c - jp + n]))
                            .sum();
                    }
                }
                return s;
            }
            if let Some(lags) = lags {
                let (ab, ba) = (&lags.pairs[la * l_count + lb], &lags.pairs[lb * l_count + la]);
                for jp in 0..j_len {
                    s[jp] = ab[c - jp];
                }
                for j in 1..j_len {
                    s[j * j_len] = ba[c - j];
                }
            } else {
                for p in 0..resp.points.len() {
                    let a = resp.z(p, la);
                    let b = resp.z(p, lb);
                    for jp in 0..j_len {
                        s[jp] += dot_pairwise(&a[c..c + n], &b[c - jp..c - jp + n]);
                    }
                    for j in 1..j_len {
                        s[j * j_len] += dot_pairwise(&a[c - j..c - j + n], &b[c..c + n]);
                    }
                }
            }
            // s(j+1, j'+1) = s(j, j') + a[c-1-j] b[c-1-j'] - a[n-1+c-j] b[n-1+c-j']
            for j in 0..c {
                for jp in 0..c {
                    let mut delta = 0.0;
                    for p in 0..resp.points.len() {
                        let a = resp.z(p, la);
                        let b = resp.z(p, lb);
                        delta += a[c - 1 - j] * b[c - 1 - jp] - a[n - 1 + c - j] * b[n - 1 + c - jp];
                    }
                    s[(j + 1) * j_len + jp + 1] = s[j * j_len + jp] + delta;
                }
            }
            s
        })
        .collect();
    let mut r = DMatrix::zeros(lj, lj);
    for (&(la, lb), s) in pairs.iter().zip(&blocks) {
        for j in 0..j_len {
            for jp in 0..j_len {
                let v = s[j * j_len + jp];
                r[(la * j_len + j, lb * j_len + jp)] = v;
                r[(lb * j_len + jp, la * j_len + j)] = v;
            }
        }
    }
    r
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Builds the statistics from bright-zone responses with their desired
/// signals and dark-zone responses. `desired[p]` holds `N` samples for the
/// `p`-th bright point.
pub fn build_stats(
    desired: &[Vec<f64>],
    resp_b: &UncontrolledResponses,
    resp_d: &UncontrolledResponses,
) -> Result<SpatialStats> {
    let n = resp_b.window.len;
    if resp_b.l_count != resp_d.l_count || resp_b.j_len != resp_d.j_len {
        return Err(Error::DimensionMismatch(format!(
            "bright LJ = {}x{}, dark LJ = {}x{}",
            resp_b.l_count, resp_b.j_len, resp_d.l_count, resp_d.j_len
        )));
    }
    if resp_d.window.len != n {
        return Err(Error::DimensionMismatch("bright and dark windows differ in length".into()));
    }
    if desired.len() != resp_b.points.len() || desired.iter().any(|d| d.len() != n) {
        return Err(Error::DimensionMismatch(format!(
            "need {} desired signals of {n} samples",
            resp_b.points.len()
        )));
    }
    if resp_b.points.is_empty() || resp_d.points.is_empty() {
        return Err(Error::InvalidArgument("both zones need control points".into()));
    }
    let (m_b, m_d) = (resp_b.points.len(), resp_d.points.len());
    let norm_b = 1.0 / (m_b * n) as f64;
    let norm_d = 1.0 / (m_d * n) as f64;

    let sigma_d_sq = norm_b * desired.iter().map(|d| dot_pairwise(d, d)).sum::<f64>();

    let c = resp_b.j_len - 1;
    let fast = n >= FFT_CORRELATION_MIN_OBS;
    let lags_b = fast.then(|| lag_correlations(resp_b, Some(desired)));
    let lags_d = fast.then(|| lag_correlations(resp_d, None));
    let mut r_b = DVector::zeros(resp_b.lj());
    for l in 0..resp_b.l_count {
        for j in 0..resp_b.j_len {
            r_b[l * resp_b.j_len + j] = match &lags_b {
                Some(lags) => lags.desired[l][c - j],
                None => (0..desired.len()).map(|p| dot_pairwise(&resp_b.z(p, l)[c - j..c - j + n], &desired[p])).sum(),
            };
        }
    }
    r_b *= norm_b;

    let mut r_bright = correlation_sum(resp_b, lags_b.as_ref()) * norm_b;
    let mut r_dark = correlation_sum(resp_d, lags_d.as_ref()) * norm_d;
    symmetrize(&mut r_bright);
    symmetrize(&mut r_dark);

    Ok(SpatialStats {
        sigma_d_sq,
        r_b,
        r_bright,
        r_dark,
        m_b,
        m_d,
        n_obs: n,
        l_count: resp_b.l_count,
        j_len: resp_b.j_len,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankDiagnostic {
    /// `M_D * min(N, K + J - 1)`.
    pub available: usize,
    /// `L * J`.
    pub required: usize,
    pub satisfied: bool,
    /// Eigenvalues of `R_D` above `1e-10` times the largest.
    pub estimated_rank: Option<usize>,
}

/// Checks `M_D min(N, K + J - 1) >= LJ` and, when `stats` is given, the
/// numerical rank of `R_D`.
pub fn rank_condition(
    stats: Option<&SpatialStats>,
    m_d: usize,
    n_obs: usize,
    k_taps: usize,
    l_count: usize,
    j_len: usize,
) -> RankDiagnostic {
    let available = m_d * n_obs.min(k_taps + j_len - 1);
    let required = l_count * j_len;
    RankDiagnostic {
        available,
        required,
        satisfied: available >= required,
        estimated_rank: stats.map(|s| numerical_rank(&s.r_dark, 1e-10)),
    }
}

/// Rank of a symmetric matrix from its eigenvalue magnitudes.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let ev = m.clone().symmetric_eigenvalues();
    let max = ev.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if max == 0.0 {
        return 0;
    }
    ev.iter().filter(|v| v.abs() > rel_tol * max).count()
}
