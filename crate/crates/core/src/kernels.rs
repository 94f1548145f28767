//! Gaussian correlation functions and covariance assembly for the data
//! process and the latent log-variance process.
//!
//! All inputs reaching this module are already rescaled to `[0,1]^d`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::model::{HyperParams, ModelState, TrainingSet};

/// Scale constant applied to squared displacements; suitable for unit-variance
/// responses on unit-cube inputs.
pub const DEFAULT_SCALE: f64 = 16.0;

/// Per-dimension correlation values `rho_j` in (0,1) and the scale constant `K`
/// of the product form `prod_j rho_j^(K h_j^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationParams {
    rho: Vec<f64>,
    scale_constant: f64,
}

impl CorrelationParams {
    pub fn new(rho: Vec<f64>, scale_constant: f64) -> Result<Self> {
        if let Some(r) = rho.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
            return Err(Error::InvalidParameter(format!("correlation {r} outside (0,1)")));
        }
        if !(scale_constant > 0.0) || !scale_constant.is_finite() {
            return Err(Error::InvalidParameter(format!("scale constant {scale_constant} must be > 0")));
        }
        Ok(Self { rho, scale_constant })
    }

    /// Skips validation; for hot loops where the caller has already checked
    /// the support.
    pub(crate) fn new_unchecked(rho: &[f64], scale_constant: f64) -> Self {
        Self { rho: rho.to_vec(), scale_constant }
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn scale_constant(&self) -> f64 {
        self.scale_constant
    }

    pub fn dim(&self) -> usize {
        self.rho.len()
    }

    /// `K * ln(rho_j)`, the per-dimension exponent weights.
    pub fn log_weights(&self) -> Vec<f64> {
        self.rho.iter().map(|r| self.scale_constant * libm::log(*r)).collect()
    }
}

/// `prod_j rho_j^(K h_j^2)`.
pub fn gauss_corr(h: &[f64], params: &CorrelationParams) -> f64 {
    debug_assert_eq!(h.len(), params.dim());
    let expo: f64 = h.iter().zip(&params.rho).map(|(hj, r)| params.scale_constant * hj * hj * libm::log(*r)).sum();
    libm::exp(expo)
}

#[inline]
fn corr_from_sq(sq: &[f64], log_weights: &[f64]) -> f64 {
    let expo: f64 = sq.iter().zip(log_weights).map(|(s, w)| s * w).sum();
    libm::exp(expo)
}

/// Cached squared coordinate differences between all pairs of a point set.
#[derive(Debug, Clone)]
pub struct SqDiffs {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl SqDiffs {
    pub fn new(points: &[Vec<f64>]) -> Self {
        let n = points.len();
        let d = points.first().map_or(0, Vec::len);
        let mut data = alloc::vec![0.0; n * n * d];
        for i in 0..n {
            for k in 0..i {
                for j in 0..d {
                    let h = points[i][j] - points[k][j];
                    data[(i * n + k) * d + j] = h * h;
                    data[(k * n + i) * d + j] = h * h;
                }
            }
        }
        Self { n, d, data }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn between(&self, i: usize, k: usize) -> &[f64] {
        let start = (i * self.n + k) * self.d;
        &self.data[start..start + self.d]
    }

    /// Squared differences restricted to the index subset `idx`.
    pub fn subset(&self, idx: &[usize]) -> SqDiffs {
        let m = idx.len();
        let mut data = alloc::vec![0.0; m * m * self.d];
        for (a, &i) in idx.iter().enumerate() {
            for (b, &k) in idx.iter().enumerate() {
                let start = (a * m + b) * self.d;
                data[start..start + self.d].copy_from_slice(self.between(i, k));
            }
        }
        SqDiffs { n: m, d: self.d, data }
    }
}

/// A symmetric covariance (or correlation) matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    entries: Matrix,
}

impl CovMatrix {
    pub fn from_matrix(entries: Matrix) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.rows()
    }

    /// Cholesky factor under the jitter policy of [`Cholesky::factor`].
    pub fn factor(&self) -> Result<Cholesky> {
        Cholesky::factor(&self.entries)
    }

    /// `C^{-1} b` without forming the inverse.
    pub fn pd_solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        Ok(self.factor()?.solve(b))
    }

    pub fn pd_solve_matrix(&self, b: &Matrix) -> Result<Matrix> {
        Ok(self.factor()?.solve_matrix(b))
    }

    pub fn pd_logdet(&self) -> Result<f64> {
        Ok(self.factor()?.logdet())
    }
}

/// Correlation matrix `R_ik = G(x_i - x_k | rho)` over a cached point set.
pub fn corr_matrix(sq: &SqDiffs, params: &CorrelationParams) -> CovMatrix {
    let n = sq.len();
    let w = params.log_weights();
    let mut m = Matrix::identity(n);
    for i in 0..n {
        for k in 0..i {
            let r = corr_from_sq(sq.between(i, k), &w);
            m[(i, k)] = r;
            m[(k, i)] = r;
        }
    }
    CovMatrix::from_matrix(m)
}

/// Correlations between one point and every member of `points`.
pub fn corr_vector(x: &[f64], points: &[Vec<f64>], params: &CorrelationParams) -> Vec<f64> {
    let w = params.log_weights();
    points
        .iter()
        .map(|p| {
            let expo: f64 = p.iter().zip(x).zip(&w).map(|((a, b), wj)| (a - b) * (a - b) * wj).sum();
            libm::exp(expo)
        })
        .collect()
}

/// `C_ik = s_i s_k [omega G + (1-omega) L] + delta_ik sigma2_eps` with `s = sqrt(V)`.
pub fn cov_matrix(
    sq: &SqDiffs,
    sd: &[f64],
    omega: f64,
    global: &CorrelationParams,
    local: &CorrelationParams,
    sigma2_eps: f64,
) -> CovMatrix {
    let n = sq.len();
    debug_assert_eq!(sd.len(), n);
    let wg = global.log_weights();
    let wl = local.log_weights();
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        // G = L = 1 at zero displacement, so the diagonal is exactly V_i + sigma2_eps.
        m[(i, i)] = sd[i] * sd[i] + sigma2_eps;
        for k in 0..i {
            let s = sq.between(i, k);
            let c = sd[i] * sd[k] * (omega * corr_from_sq(s, &wg) + (1.0 - omega) * corr_from_sq(s, &wl));
            m[(i, k)] = c;
            m[(k, i)] = c;
        }
    }
    CovMatrix::from_matrix(m)
}

/// Covariance matrix of the training responses for `state`.
pub fn build_cov_matrix(data: &TrainingSet, state: &ModelState, hp: &HyperParams) -> CovMatrix {
    let sd: Vec<f64> = state.log_v.iter().map(|w| libm::exp(0.5 * w)).collect();
    let (g, l) = data_corr_params(state, hp);
    cov_matrix(data.sq_diffs(), &sd, state.omega, &g, &l, state.sigma2_eps)
}

pub(crate) fn data_corr_params(state: &ModelState, hp: &HyperParams) -> (CorrelationParams, CorrelationParams) {
    (
        CorrelationParams::new_unchecked(&state.rho_g, hp.k_global),
        CorrelationParams::new_unchecked(&state.rho_l, hp.k_local),
    )
}

/// Global and local parts of the cross-covariance between `x_star` and the
/// training inputs; the full cross-covariance is their sum.
pub fn cross_cov_parts(
    x_star: &[f64],
    sigma_star: f64,
    points: &[Vec<f64>],
    sd: &[f64],
    omega: f64,
    global: &CorrelationParams,
    local: &CorrelationParams,
) -> (Vec<f64>, Vec<f64>) {
    let g = corr_vector(x_star, points, global);
    let l = corr_vector(x_star, points, local);
    let glob = g.iter().zip(sd).map(|(gi, si)| sigma_star * si * omega * gi).collect();
    let loc = l.iter().zip(sd).map(|(li, si)| sigma_star * si * (1.0 - omega) * li).collect();
    (glob, loc)
}

/// `C_*i = sigma(x_*) sigma(x_i) [omega G + (1-omega) L]`. No nugget term is
/// included, even when `x_star` coincides with a training input.
pub fn build_cross_cov(
    x_star: &[f64],
    sigma_star: f64,
    data: &TrainingSet,
    state: &ModelState,
    hp: &HyperParams,
) -> Vec<f64> {
    let sd: Vec<f64> = state.log_v.iter().map(|w| libm::exp(0.5 * w)).collect();
    let (g, l) = data_corr_params(state, hp);
    let (a, b) = cross_cov_parts(x_star, sigma_star, data.x(), &sd, state.omega, &g, &l);
    a.iter().zip(&b).map(|(u, v)| u + v).collect()
}

/// Solves `C x = b` through a symmetric positive-definite factorization.
pub fn pd_solve(c: &CovMatrix, b: &[f64]) -> Result<Vec<f64>> {
    c.pd_solve(b)
}

pub fn pd_logdet(c: &CovMatrix) -> Result<f64> {
    c.pd_logdet()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn cp(rho: &[f64]) -> CorrelationParams {
        CorrelationParams::new(rho.to_vec(), DEFAULT_SCALE).unwrap()
    }

    #[test]
    fn zero_displacement_is_one() {
        assert_eq!(gauss_corr(&[0.0, 0.0, 0.0], &cp(&[0.1, 0.5, 0.99])), 1.0);
    }

    #[test]
    fn hand_evaluated_corr() {
        // 16 * 0.25^2 = 1, so the result is rho itself
        let r = gauss_corr(&[0.25], &cp(&[0.5]));
        assert!((r - 0.5).abs() < 1e-15);
    }

    #[test]
    fn idle_coordinate_contributes_one() {
        let a = gauss_corr(&[0.3, 0.0], &cp(&[0.4, 0.8]));
        let b = gauss_corr(&[0.3], &cp(&[0.4]));
        assert_eq!(a, b);
    }

    #[test]
    fn params_reject_boundary_values() {
        assert!(CorrelationParams::new(vec![0.0], 16.0).is_err());
        assert!(CorrelationParams::new(vec![1.0], 16.0).is_err());
        assert!(CorrelationParams::new(vec![0.5], 0.0).is_err());
    }

    #[test]
    fn worked_two_point_covariance() {
        let pts = vec![vec![0.0], vec![0.25]];
        let sq = SqDiffs::new(&pts);
        let c = cov_matrix(&sq, &[1.0, 2.0], 0.6, &cp(&[0.9]), &cp(&[0.5]), 0.01);
        let m = c.entries();
        let off = 1.0 * 2.0 * (0.6 * 0.9 + 0.4 * 0.5);
        assert!((m[(0, 1)] - off).abs() < 1e-14);
        assert!((m[(1, 0)] - off).abs() < 1e-14);
        assert!((m[(0, 0)] - 1.01).abs() < 1e-15);
        assert!((m[(1, 1)] - 4.01).abs() < 1e-15);
    }

    #[test]
    fn single_point_matrix() {
        let sq = SqDiffs::new(&[vec![0.3, 0.7]]);
        let c = cov_matrix(&sq, &[1.5], 0.7, &cp(&[0.5, 0.5]), &cp(&[0.2, 0.2]), 0.02);
        assert_eq!(c.entries().as_slice(), &[1.5 * 1.5 + 0.02]);
    }

    #[test]
    fn weight_collapse_gives_global_correlation() {
        let pts = vec![vec![0.0, 0.1], vec![0.4, 0.3], vec![0.9, 0.8]];
        let sq = SqDiffs::new(&pts);
        let g = cp(&[0.7, 0.4]);
        let c = cov_matrix(&sq, &[1.0; 3], 1.0, &g, &cp(&[0.1, 0.1]), 0.0);
        for i in 0..3 {
            for k in 0..3 {
                let h: Vec<f64> = pts[i].iter().zip(&pts[k]).map(|(a, b)| a - b).collect();
                assert!((c.entries()[(i, k)] - gauss_corr(&h, &g)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn cross_cov_single_point() {
        // all variances one, omega one half, rho_G = rho_L
        let rho = 0.6;
        let h = 0.2;
        let (a, b) = cross_cov_parts(&[0.5 + h], 1.0, &[vec![0.5]], &[1.0], 0.5, &cp(&[rho]), &cp(&[rho]));
        let expect = libm::pow(rho, DEFAULT_SCALE * h * h);
        assert!((a[0] + b[0] - expect).abs() < 1e-14);
    }

    #[test]
    fn cross_cov_weight_collapse() {
        let pts = vec![vec![0.1], vec![0.6]];
        let (a, b) = cross_cov_parts(&[0.3], 1.3, &pts, &[0.8, 1.1], 1.0, &cp(&[0.8]), &cp(&[0.3]));
        assert!(b.iter().all(|v| *v == 0.0));
        for (i, p) in pts.iter().enumerate() {
            let e = 1.3 * [0.8, 1.1][i] * gauss_corr(&[0.3 - p[0]], &cp(&[0.8]));
            assert!((a[i] - e).abs() < 1e-14);
        }
    }
}
