//! Variable span trade-off control filters.
//!
//! With `(U, Lambda)` from [`crate::eig`], the rank-`V` filter is
//! `q = U_V (Lambda_V + mu I)^-1 U_V^T r_B`. `V = 1` approaches the contrast
//! maximizer, `V = LJ, mu = 1` is pressure matching and large `mu` trades
//! bright-zone accuracy for dark-zone suppression.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::eig::JointDiag;
use crate::stats::SpatialStats;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VastParams {
    pub v: usize,
    pub mu: f64,
}

impl VastParams {
    pub fn new(v: usize, mu: f64) -> Self {
        Self { v, mu }
    }

    /// Checks `1 <= v <= lj` and `mu >= 0`.
    pub fn validate(&self, lj: usize) -> Result<()> {
        if self.v == 0 || self.v > lj {
            return Err(Error::InvalidArgument(format!("V = {} outside [1, {lj}]", self.v)));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidArgument(format!("mu = {} must be finite and >= 0", self.mu)));
        }
        Ok(())
    }
}

/// `L` FIR filters of `J` taps, stacked loudspeaker-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlFilterBank {
    q: DVector<f64>,
    l_count: usize,
    j_len: usize,
    /// Eigenbasis coefficients `a_V`; empty for filters not built by [`solve_vast`].
    coefficients: DVector<f64>,
}

impl ControlFilterBank {
    pub fn from_stacked(q: DVector<f64>, l_count: usize, j_len: usize) -> Result<Self> {
        if q.len() != l_count * j_len {
            return Err(Error::DimensionMismatch(format!(
                "stacked filter has {} taps, expected {l_count}x{j_len}",
                q.len()
            )));
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("control filter taps must be finite".into()));
        }
        Ok(Self { q, l_count, j_len, coefficients: DVector::zeros(0) })
    }

    /// Kronecker delta on every loudspeaker.
    pub fn delta(l_count: usize, j_len: usize) -> Self {
        let mut q = DVector::zeros(l_count * j_len);
        for l in 0..l_count {
            q[l * j_len] = 1.0;
        }
        Self { q, l_count, j_len, coefficients: DVector::zeros(0) }
    }

    pub fn zeros(l_count: usize, j_len: usize) -> Self {
        Self { q: DVector::zeros(l_count * j_len), l_count, j_len, coefficients: DVector::zeros(0) }
    }

    pub fn l_count(&self) -> usize {
        self.l_count
    }

    pub fn j_len(&self) -> usize {
        self.j_len
    }

    pub fn stacked(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn coefficients(&self) -> &DVector<f64> {
        &self.coefficients
    }

    pub fn filter(&self, l: usize) -> &[f64] {
        &self.q.as_slice()[l * self.j_len..(l + 1) * self.j_len]
    }

    pub fn l2_norm(&self) -> f64 {
        self.q.norm()
    }
}

fn check_params(jd: &JointDiag, r_b: &DVector<f64>, params: VastParams) -> Result<()> {
    if r_b.len() != jd.dim() {
        return Err(Error::DimensionMismatch(format!("r_B has {} entries, JD has {}", r_b.len(), jd.dim())));
    }
    params.validate(jd.dim())?;
    for v in 0..params.v {
        if jd.lambda[v] + params.mu <= 0.0 {
            return Err(Error::SingularTradeOff { index: v + 1 });
        }
    }
    Ok(())
}

/// Projections `u_v^T r_B` for all `v`.
pub fn projections(jd: &JointDiag, r_b: &DVector<f64>) -> DVector<f64> {
    jd.u.tr_mul(r_b)
}

fn assemble(jd: &JointDiag, proj: &DVector<f64>, params: VastParams, l_count: usize) -> ControlFilterBank {
    let a = DVector::from_fn(params.v, |v, _| proj[v] / (jd.lambda[v] + params.mu));
    let q = jd.u.columns(0, params.v) * &a;
    ControlFilterBank { q, l_count, j_len: jd.dim() / l_count, coefficients: a }
}

pub fn solve_vast(jd: &JointDiag, r_b: &DVector<f64>, params: VastParams, l_count: usize) -> Result<ControlFilterBank> {
    check_params(jd, r_b, params)?;
    if l_count == 0 || jd.dim() % l_count != 0 {
        return Err(Error::DimensionMismatch(format!("LJ = {} is not a multiple of L = {l_count}", jd.dim())));
    }
    Ok(assemble(jd, &projections(jd, r_b), params, l_count))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContrastDb {
    Finite(f64),
    /// Dark-zone power is exactly zero.
    Infinite,
}

impl ContrastDb {
    pub fn value(self) -> f64 {
        match self {
            ContrastDb::Finite(v) => v,
            ContrastDb::Infinite => f64::INFINITY,
        }
    }
}

/// `10 log10((M_D / M_B) q^T R_B q / q^T R_D q)`.
pub fn acoustic_contrast(q: &DVector<f64>, stats: &SpatialStats) -> ContrastDb {
    let bright = q.dot(&(&stats.r_bright * q));
    let dark = stats.residual_power(q);
    if dark <= 0.0 {
        return ContrastDb::Infinite;
    }
    ContrastDb::Finite(10.0 * (stats.m_d as f64 / stats.m_b as f64 * bright / dark).log10())
}

/// Contrast from the eigenbasis coefficients:
/// `(M_D / M_B) a^T Lambda_V a / a^T a`.
pub fn contrast_from_coefficients(jd: &JointDiag, a: &DVector<f64>, m_b: usize, m_d: usize) -> ContrastDb {
    let den = a.norm_squared();
    if den <= 0.0 {
        return ContrastDb::Infinite;
    }
    let num: f64 = a.iter().zip(jd.lambda.iter()).map(|(a, l)| l * a * a).sum();
    ContrastDb::Finite(10.0 * (m_d as f64 / m_b as f64 * num / den).log10())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormPowers {
    pub s_b: f64,
    pub s_d: f64,
    /// Lagrangian without the constant `-mu epsilon` term.
    pub lagrangian: f64,
}

pub fn closed_form_powers(
    jd: &JointDiag,
    r_b: &DVector<f64>,
    sigma_d_sq: f64,
    params: VastParams,
) -> Result<ClosedFormPowers> {
    check_params(jd, r_b, params)?;
    Ok(powers_from_projections(jd, &projections(jd, r_b), sigma_d_sq, params))
}

fn powers_from_projections(jd: &JointDiag, proj: &DVector<f64>, sigma_d_sq: f64, params: VastParams) -> ClosedFormPowers {
    let mut gain_b = 0.0;
    let mut s_d = 0.0;
    let mut gain_l = 0.0;
    for v in 0..params.v {
        let p2 = proj[v] * proj[v];
        let den = jd.lambda[v] + params.mu;
        gain_b += (jd.lambda[v] + 2.0 * params.mu) / (den * den) * p2;
        s_d += p2 / (den * den);
        gain_l += p2 / den;
    }
    ClosedFormPowers { s_b: sigma_d_sq - gain_b, s_d, lagrangian: sigma_d_sq - gain_l }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub v: usize,
    pub mu: f64,
    /// `None` when the cell failed; see `error`.
    pub powers: Option<ClosedFormPowers>,
    pub contrast: Option<ContrastDb>,
    pub q_l2_norm: Option<f64>,
    pub error: Option<String>,
}

/// Evaluates every `(V, mu)` cell, row-major in `v_grid`. Contrast is
/// measured against `stats_eval`, which should hold unweighted statistics.
pub fn sweep(
    jd: &JointDiag,
    r_b: &DVector<f64>,
    sigma_d_sq: f64,
    stats_eval: &SpatialStats,
    v_grid: &[usize],
    mu_grid: &[f64],
) -> Result<Vec<SweepRow>> {
    if v_grid.is_empty() || mu_grid.is_empty() {
        return Err(Error::InvalidArgument("sweep grids must be nonempty".into()));
    }
    if stats_eval.lj() != jd.dim() || r_b.len() != jd.dim() {
        return Err(Error::DimensionMismatch("sweep inputs disagree on LJ".into()));
    }
    let proj = projections(jd, r_b);
    let cells: Vec<(usize, f64)> = v_grid.iter().flat_map(|&v| mu_grid.iter().map(move |&mu| (v, mu))).collect();
    Ok(cells
        .par_iter()
        .map(|&(v, mu)| {
            let params = VastParams::new(v, mu);
            match check_params(jd, r_b, params) {
                Ok(()) => {
                    let bank = assemble(jd, &proj, params, stats_eval.l_count);
                    SweepRow {
                        v,
                        mu,
                        powers: Some(powers_from_projections(jd, &proj, sigma_d_sq, params)),
                        contrast: Some(acoustic_contrast(bank.stacked(), stats_eval)),
                        q_l2_norm: Some(bank.l2_norm()),
                        error: None,
                    }
                }
                Err(e) => SweepRow { v, mu, powers: None, contrast: None, q_l2_norm: None, error: Some(e.to_string()) },
            }
        })
        .collect())
}

/// 18 roughly log-spaced ranks in `[1, lj]`, always including both ends.
pub fn default_v_grid(lj: usize) -> Vec<usize> {
    const POINTS: usize = 18;
    if lj <= POINTS {
        return (1..=lj).collect();
    }
    let mut grid = Vec::with_capacity(POINTS);
    for i in 0..POINTS {
        let v = (lj as f64).powf(i as f64 / (POINTS - 1) as f64).round() as usize;
        let floor = grid.last().map_or(1, |&p: &usize| p + 1);
        grid.push(v.max(floor));
    }
    grid
}

/// The trade-off weights shown by default in sweeps.
pub const DEFAULT_MU_GRID: [f64; 5] = [0.0, 0.1, 1.0, 10.0, 100.0];
