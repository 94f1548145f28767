//! Ordinary and universal kriging with a Gaussian correlation, fitted by
//! maximum likelihood. Used as the comparison baseline.
//!
//! The regression coefficients and process variance are profiled out in
//! closed form; the correlation parameters are found by Nelder-Mead on the
//! logit scale from several quasi-random starts.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kernels::{corr_matrix, corr_vector, CorrelationParams, DEFAULT_SCALE};
use crate::linalg::{dot, Cholesky, Matrix};
use crate::model::{TrainingSet, Transform};
use crate::testbed::sobol_points;

/// Mean-function basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    Constant,
    /// `1, x_1, ..., x_d`.
    Linear,
    /// `1, x, x^2, x^3`; one input only.
    Cubic,
}

impl Basis {
    pub fn size(&self, d: usize) -> usize {
        match self {
            Basis::Constant => 1,
            Basis::Linear => d + 1,
            Basis::Cubic => 4,
        }
    }

    /// Regressors at `x` (unit-cube scale).
    pub fn row(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Basis::Constant => vec![1.0],
            Basis::Linear => core::iter::once(1.0).chain(x.iter().copied()).collect(),
            Basis::Cubic => vec![1.0, x[0], x[0] * x[0], x[0] * x[0] * x[0]],
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Basis::Constant => "constant",
            Basis::Linear => "linear",
            Basis::Cubic => "cubic",
        }
    }
}

/// Number of multi-start points.
pub const N_STARTS: usize = 16;
const START_LO: f64 = 0.05;
const START_HI: f64 = 0.95;
const LOGIT_BOUND: f64 = 12.0;

#[derive(Debug, Clone)]
pub struct KrigingModel {
    pub basis: Basis,
    pub beta_hat: Vec<f64>,
    /// Process variance on the standardized response scale.
    pub sigma2_hat: f64,
    pub rho_hat: Vec<f64>,
    /// Added to the diagonal of the correlation matrix.
    pub nugget: f64,
    /// Profile log-likelihood at `rho_hat` (additive constants dropped).
    pub profile_loglik: f64,
    x: Vec<Vec<f64>>,
    transform: Transform,
    params: CorrelationParams,
    chol: Cholesky,
    /// Rows of `L^{-1} F`, stored column-wise per basis function.
    f_white: Vec<Vec<f64>>,
    /// Factor of `F^T R^{-1} F`.
    ftrf: Cholesky,
    /// `R^{-1}(y - F beta)`.
    resid_solve: Vec<f64>,
}

struct Profile {
    beta: Vec<f64>,
    sigma2: f64,
    loglik: f64,
    chol: Cholesky,
    f_white: Vec<Vec<f64>>,
    ftrf: Cholesky,
    resid_solve: Vec<f64>,
}

fn profile(x: &[Vec<f64>], y: &[f64], basis: Basis, params: &CorrelationParams, nugget: f64) -> Result<Profile> {
    let n = y.len();
    let p = basis.size(x[0].len());
    let mut r = corr_matrix(&crate::kernels::SqDiffs::new(x), params).entries().clone();
    for i in 0..n {
        r[(i, i)] += nugget;
    }
    let chol = Cholesky::factor(&r)?;
    let rows: Vec<Vec<f64>> = x.iter().map(|xi| basis.row(xi)).collect();
    let f_white: Vec<Vec<f64>> = (0..p).map(|j| chol.whiten(&rows.iter().map(|r| r[j]).collect::<Vec<_>>())).collect();
    let y_white = chol.whiten(y);
    let ftrf_m = Matrix::from_fn(p, p, |a, b| dot(&f_white[a], &f_white[b]));
    let ftrf = Cholesky::factor_shifted(&ftrf_m, 0.0)
        .ok_or_else(|| Error::DegenerateData("basis matrix is singular on this design".into()))?;
    let fty: Vec<f64> = f_white.iter().map(|c| dot(c, &y_white)).collect();
    let beta = ftrf.solve(&fty);
    let resid: Vec<f64> = (0..n).map(|i| y[i] - dot(&rows[i], &beta)).collect();
    let resid_solve = chol.solve(&resid);
    let sigma2 = dot(&resid, &resid_solve) / n as f64;
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::DegenerateData("zero residual variance".into()));
    }
    let loglik = -0.5 * (n as f64 * libm::log(sigma2) + chol.logdet());
    Ok(Profile { beta, sigma2, loglik, chol, f_white, ftrf, resid_solve })
}

fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-t))
}

fn logit(r: f64) -> f64 {
    libm::log(r / (1.0 - r))
}

impl KrigingModel {
    /// Fits with the correlation parameters held at `rho`.
    pub fn fit_with_rho(data: &TrainingSet, basis: Basis, rho: &[f64], nugget: f64) -> Result<Self> {
        check_basis(data, basis)?;
        if !(nugget >= 0.0) {
            return Err(Error::InvalidParameter(format!("nugget must be non-negative, got {nugget}")));
        }
        let params = CorrelationParams::new(rho.to_vec(), DEFAULT_SCALE)?;
        let pr = profile(data.x(), data.y(), basis, &params, nugget)?;
        Ok(Self {
            basis,
            beta_hat: pr.beta,
            sigma2_hat: pr.sigma2,
            rho_hat: rho.to_vec(),
            nugget,
            profile_loglik: pr.loglik,
            x: data.x().to_vec(),
            transform: data.transform().clone(),
            params,
            chol: pr.chol,
            f_white: pr.f_white,
            ftrf: pr.ftrf,
            resid_solve: pr.resid_solve,
        })
    }

    /// Mean and variance at `x_raw` (original units).
    pub fn predict(&self, x_raw: &[f64]) -> (f64, f64) {
        let x = self.transform.scale_input(x_raw);
        let (m, v) = self.predict_scaled(&x);
        (self.transform.destandardize(m), v * self.transform.scale * self.transform.scale)
    }

    /// Mean and variance on the internal scales.
    pub fn predict_scaled(&self, x: &[f64]) -> (f64, f64) {
        let f = self.basis.row(x);
        let r = corr_vector(x, &self.x, &self.params);
        let mean = dot(&f, &self.beta_hat) + dot(&r, &self.resid_solve);
        let r_white = self.chol.whiten(&r);
        let u: Vec<f64> = f.iter().zip(&self.f_white).map(|(fj, col)| fj - dot(col, &r_white)).collect();
        let var = self.sigma2_hat * (1.0 - dot(&r_white, &r_white) + self.ftrf.quad_form(&u));
        (mean, var.max(0.0))
    }

    /// `mean -/+ z sd` interval at `level`.
    pub fn interval(&self, x_raw: &[f64], level: f64) -> Result<(f64, f64)> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::InvalidParameter(format!("interval level must lie in (0,1), got {level}")));
        }
        let (m, v) = self.predict(x_raw);
        let z = crate::priors::normal_quantile(0.5 + 0.5 * level);
        let h = z * libm::sqrt(v);
        Ok((m - h, m + h))
    }
}

fn check_basis(data: &TrainingSet, basis: Basis) -> Result<()> {
    if basis == Basis::Cubic && data.d() != 1 {
        return Err(Error::InvalidParameter("cubic basis needs exactly one input".into()));
    }
    if data.n() <= basis.size(data.d()) {
        return Err(Error::DegenerateData(format!(
            "{} points cannot support a {}-term mean",
            data.n(),
            basis.size(data.d())
        )));
    }
    Ok(())
}

/// Maximum likelihood fit with a multi-start Nelder-Mead search over `rho`.
pub fn fit_kriging(data: &TrainingSet, basis: Basis, nugget: f64) -> Result<KrigingModel> {
    check_basis(data, basis)?;
    let d = data.d();
    let starts = sobol_points(N_STARTS, d)?;
    let objective = |t: &[f64]| -> f64 {
        let rho: Vec<f64> = t.iter().map(|v| logistic(v.clamp(-LOGIT_BOUND, LOGIT_BOUND))).collect();
        let params = CorrelationParams::new_unchecked(&rho, DEFAULT_SCALE);
        match profile(data.x(), data.y(), basis, &params, nugget) {
            Ok(p) => -p.loglik,
            Err(_) => f64::INFINITY,
        }
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    for s in &starts {
        let t0: Vec<f64> = s.iter().map(|u| logit(START_LO + (START_HI - START_LO) * u)).collect();
        let (t, v) = nelder_mead(&objective, &t0, 1.0, 400 * d.max(1), 1e-9);
        if v.is_finite() && best.as_ref().is_none_or(|b| v < b.1) {
            best = Some((t, v));
        }
    }
    let (t, _) = best.ok_or_else(|| Error::Optimization("every kriging start failed".into()))?;
    let rho: Vec<f64> = t.iter().map(|v| logistic(v.clamp(-LOGIT_BOUND, LOGIT_BOUND))).collect();
    KrigingModel::fit_with_rho(data, basis, &rho, nugget)
}

/// Mean and variance at `x_raw` in original units.
pub fn kriging_predict(model: &KrigingModel, x_raw: &[f64]) -> (f64, f64) {
    model.predict(x_raw)
}

/// Minimizes `f` from `x0` with an axis-aligned initial simplex of size
/// `step`. Stops after `max_evals` evaluations or when the spread of simplex
/// values drops below `tol`. Returns the best vertex and its value.
pub fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], step: f64, max_evals: usize, tol: f64) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += step;
        simplex.push(v);
    }
    let mut vals: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    let mut evals = n + 1;
    while evals < max_evals {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|a, b| vals[*a].total_cmp(&vals[*b]));
        simplex = order.iter().map(|i| simplex[*i].clone()).collect();
        vals = order.iter().map(|i| vals[*i]).collect();
        if vals[n] - vals[0] <= tol * (1.0 + vals[0].abs()) {
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64).collect();
        let along = |c: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + c * (simplex[n][j] - centroid[j])).collect() };
        let xr = along(-1.0);
        let fr = f(&xr);
        evals += 1;
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            evals += 1;
            if fe < fr {
                simplex[n] = xe;
                vals[n] = fe;
            } else {
                simplex[n] = xr;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            simplex[n] = xr;
            vals[n] = fr;
        } else {
            let (xc, fc) = if fr < vals[n] {
                let x = along(-0.5);
                let v = f(&x);
                (x, v)
            } else {
                let x = along(0.5);
                let v = f(&x);
                (x, v)
            };
            evals += 1;
            if fc < vals[n].min(fr) {
                simplex[n] = xc;
                vals[n] = fc;
            } else {
                for i in 1..=n {
                    simplex[i] = (0..n).map(|j| simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j])).collect();
                    vals[i] = f(&simplex[i]);
                }
                evals += n;
            }
        }
    }
    let best = (0..=n).min_by(|a, b| vals[*a].total_cmp(&vals[*b])).unwrap_or(0);
    (simplex[best].clone(), vals[best])
}
