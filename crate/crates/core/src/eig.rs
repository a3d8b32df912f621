//! Joint diagonalization of the bright/dark correlation pair.
//!
//! Solves the symmetric-definite generalized eigenproblem
//! `R_B u = lambda R_D u` by Cholesky reduction: with `R_D + reg I = G G^T`,
//! the symmetric matrix `G^-1 R_B G^-T = Q Lambda Q^T` is diagonalized and
//! `U = G^-T Q`, so that `U^T R_B U = Lambda` and `U^T R_D U = I`.

use nalgebra::{DMatrix, DVector};

use crate::stats::SpatialStats;
use crate::{Error, Result};

/// Negative eigenvalues down to `-CLAMP_TOLERANCE * lambda_1` are set to zero.
pub const CLAMP_TOLERANCE: f64 = 1e-10;

/// Relative asymmetry tolerated in the inputs.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct JointDiag {
    /// Generalized eigenvectors as columns, ordered like `lambda`.
    pub u: DMatrix<f64>,
    /// Generalized eigenvalues, descending.
    pub lambda: DVector<f64>,
    /// Diagonal loading that was added to `R_D`.
    pub regularization: f64,
}

impl JointDiag {
    pub fn dim(&self) -> usize {
        self.lambda.len()
    }
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    let scale = m.amax();
    if scale == 0.0 {
        return Ok(());
    }
    let asym = (m - m.transpose()).amax() / scale;
    if asym > SYMMETRY_TOLERANCE {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

/// Generalized eigenpairs of `(r_bright, r_dark + regularization I)`.
pub fn joint_diagonalize(r_bright: &DMatrix<f64>, r_dark: &DMatrix<f64>, regularization: f64) -> Result<JointDiag> {
    let n = r_bright.nrows();
    if !r_bright.is_square() || r_dark.shape() != r_bright.shape() {
        return Err(Error::DimensionMismatch(format!(
            "R_B is {:?}, R_D is {:?}",
            r_bright.shape(),
            r_dark.shape()
        )));
    }
    if !(regularization >= 0.0 && regularization.is_finite()) {
        return Err(Error::InvalidArgument(format!("regularization must be >= 0, got {regularization}")));
    }
    check_symmetric(r_bright)?;
    check_symmetric(r_dark)?;

    let mut loaded = r_dark.clone();
    for i in 0..n {
        loaded[(i, i)] += regularization;
    }
    let chol = loaded.cholesky().ok_or(Error::CholeskyFailed { regularization })?;
    let g = chol.l();

    // C = G^-1 R_B G^-T, using the symmetry of R_B.
    let x = g
        .solve_lower_triangular(r_bright)
        .ok_or(Error::CholeskyFailed { regularization })?;
    let mut c = g
        .solve_lower_triangular(&x.transpose())
        .ok_or(Error::CholeskyFailed { regularization })?;
    let ct = c.transpose();
    c += ct;
    c *= 0.5;

    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let q = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    let mut lambda = DVector::from_fn(n, |j, _| eig.eigenvalues[order[j]]);
    let top = lambda.iter().copied().fold(0.0f64, f64::max);
    for v in lambda.iter_mut() {
        if *v < 0.0 && *v >= -CLAMP_TOLERANCE * top {
            *v = 0.0;
        }
    }
    let u = g
        .tr_solve_lower_triangular(&q)
        .ok_or(Error::CholeskyFailed { regularization })?;
    Ok(JointDiag { u, lambda, regularization })
}

/// [`joint_diagonalize`] on the matrices of `stats`.
pub fn joint_diagonalize_stats(stats: &SpatialStats, regularization: f64) -> Result<JointDiag> {
    joint_diagonalize(&stats.r_bright, &stats.r_dark, regularization)
}

/// Diagonal loading used when `R_D` is not numerically positive definite.
pub fn fallback_regularization(r_dark: &DMatrix<f64>) -> f64 {
    1e-10 * r_dark.trace() / r_dark.nrows() as f64
}

/// Tries without regularization first, then with [`fallback_regularization`].
/// The flag reports whether the fallback was needed.
pub fn joint_diagonalize_with_fallback(stats: &SpatialStats) -> Result<(JointDiag, bool)> {
    match joint_diagonalize_stats(stats, 0.0) {
        Ok(jd) => Ok((jd, false)),
        Err(Error::CholeskyFailed { .. }) => {
            let reg = fallback_regularization(&stats.r_dark);
            log::warn!("R_D is not positive definite; retrying with regularization {reg:.3e}");
            joint_diagonalize_stats(stats, reg).map(|jd| (jd, true))
        }
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    /// `||U^T R_B U - Lambda||_F / ||Lambda||_F`.
    pub bright_residual: f64,
    /// `||U^T R_D U - I||_F / sqrt(LJ)`.
    pub dark_residual: f64,
    /// `lambda_1 / lambda_LJ` (infinite when the last eigenvalue is zero).
    pub eigenvalue_spread: f64,
    /// Ratio of extreme eigenvalues of `R_D`.
    pub dark_condition: f64,
}

pub fn condition_report(jd: &JointDiag, r_bright: &DMatrix<f64>, r_dark: &DMatrix<f64>) -> ConditionReport {
    let n = jd.dim();
    let lam = DMatrix::from_diagonal(&jd.lambda);
    let ut = jd.u.transpose();
    let lam_norm = lam.norm();
    let bright = (&ut * r_bright * &jd.u - &lam).norm();
    let bright_residual = if lam_norm > 0.0 { bright / lam_norm } else { bright };
    let dark_residual = (&ut * r_dark * &jd.u - DMatrix::identity(n, n)).norm() / (n as f64).sqrt();
    let first = jd.lambda[0];
    let last = jd.lambda[n - 1];
    let eigenvalue_spread = if last > 0.0 { first / last } else { f64::INFINITY };
    let ev = r_dark.clone().symmetric_eigenvalues();
    let max = ev.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let min = ev.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    let dark_condition = if min > 0.0 { max / min } else { f64::INFINITY };
    ConditionReport { bright_residual, dark_residual, eigenvalue_spread, dark_condition }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(n, n) * shift
    }

    #[test]
    fn identity_pair() {
        let i = DMatrix::identity(5, 5);
        let jd = joint_diagonalize(&i, &i, 0.0).unwrap();
        assert!(jd.lambda.iter().all(|&v| (v - 1.0).abs() < 1e-14));
        assert!((jd.u.transpose() * &jd.u - &i).norm() < 1e-14);
        let rep = condition_report(&jd, &i, &i);
        assert!(rep.bright_residual < 1e-14 && rep.dark_residual < 1e-14);
    }

    #[test]
    fn diagonal_pair_orders_descending() {
        let rb = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0]));
        let jd = joint_diagonalize(&rb, &DMatrix::identity(2, 2), 0.0).unwrap();
        assert_eq!(jd.lambda.as_slice(), &[4.0, 1.0]);
        // axis permutation up to sign
        assert!((jd.u[(1, 0)].abs() - 1.0).abs() < 1e-14 && jd.u[(0, 0)].abs() < 1e-14);
        assert!((jd.u[(0, 1)].abs() - 1.0).abs() < 1e-14 && jd.u[(1, 1)].abs() < 1e-14);
    }

    #[test]
    fn random_pair_identities_and_rayleigh_quotient() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rb = random_spd(&mut rng, 12, 0.0);
        let rd = random_spd(&mut rng, 12, 0.5);
        let jd = joint_diagonalize(&rb, &rd, 0.0).unwrap();
        let rep = condition_report(&jd, &rb, &rd);
        assert!(rep.bright_residual < 1e-9, "{rep:?}");
        assert!(rep.dark_residual < 1e-9, "{rep:?}");
        let u1 = jd.u.column(0);
        let rq = u1.dot(&(&rb * u1)) / u1.dot(&(&rd * u1));
        assert!((rq - jd.lambda[0]).abs() < 1e-9 * jd.lambda[0]);
        for w in jd.lambda.as_slice().windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn eigenvalues_match_nonsymmetric_solver() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let rb = random_spd(&mut rng, 12, 0.0);
        let rd = random_spd(&mut rng, 12, 0.5);
        let jd = joint_diagonalize(&rb, &rd, 0.0).unwrap();
        // Oracle: eigenvalues of R_D^-1 R_B through a general (Schur) solver.
        let m = rd.clone().lu().solve(&rb).unwrap();
        let mut oracle: Vec<f64> = m.complex_eigenvalues().iter().map(|c| c.re).collect();
        oracle.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in jd.lambda.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9 * oracle[0], "{a} vs {b}");
        }
    }

    #[test]
    fn back_transform_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let rb = random_spd(&mut rng, 8, 0.0);
        let rd = random_spd(&mut rng, 8, 1.0);
        let jd = joint_diagonalize(&rb, &rd, 0.0).unwrap();
        // R_D U = U^-T, i.e. U^T R_D U = I recomputed through the factors.
        let v = DVector::from_fn(8, |i, _| i as f64 - 3.5);
        let direct = &rd * (&jd.u * &v);
        let via = jd.u.transpose().try_inverse().unwrap() * &v;
        assert!((direct - &via).norm() < 1e-10 * via.norm());
    }

    #[test]
    fn perturbation_grows_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let rb = random_spd(&mut rng, 6, 0.0);
        let rd = random_spd(&mut rng, 6, 1.0);
        let jd = joint_diagonalize(&rb, &rd, 0.0).unwrap();
        let noise = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
        let mut last = condition_report(&jd, &rb, &rd);
        for eps in [1e-8, 1e-6, 1e-4, 1e-2] {
            let mut p = jd.clone();
            p.u += &noise * eps;
            let rep = condition_report(&p, &rb, &rd);
            assert!(rep.bright_residual > last.bright_residual);
            assert!(rep.dark_residual > last.dark_residual);
            last = rep;
        }
    }

    #[test]
    fn singular_dark_matrix_fails_without_regularization() {
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let rd = &v * v.transpose();
        let rb = DMatrix::identity(3, 3);
        assert!(matches!(joint_diagonalize(&rb, &rd, 0.0), Err(Error::CholeskyFailed { .. })));
        assert!(joint_diagonalize(&rb, &rd, 1e-3).is_ok());
    }

    #[test]
    fn asymmetric_input_rejected() {
        let mut rb = DMatrix::identity(3, 3);
        rb[(0, 1)] = 0.5;
        assert!(matches!(
            joint_diagonalize(&rb, &DMatrix::identity(3, 3), 0.0),
            Err(Error::NotSymmetric(_))
        ));
    }

    #[test]
    fn tiny_negative_eigenvalues_clamped() {
        // R_B with an exact null direction has a zero eigenvalue that may come
        // out slightly negative.
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let a = DMatrix::from_fn(6, 4, |_, _| rng.random_range(-1.0..1.0));
        let rb = &a * a.transpose();
        let rd = random_spd(&mut rng, 6, 1.0);
        let jd = joint_diagonalize(&rb, &rd, 0.0).unwrap();
        assert!(jd.lambda.iter().all(|&v| v >= 0.0));
        assert!(jd.lambda[3] > 1e-6);
    }
}
