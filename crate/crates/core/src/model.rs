//! Training data handling, model state, hyperparameters and the log
//! densities that define the posterior.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kernels::{self, corr_matrix, CorrelationParams, CovMatrix, SqDiffs, DEFAULT_SCALE};
use crate::linalg::{dot, Cholesky};
use crate::priors::{self, Gamma, InverseGamma, Normal, TruncatedBeta, Univariate, LN_2PI};

/// Affine maps between original units and the internal scale: responses are
/// centered and scaled to unit sample variance, inputs are mapped to the unit
/// cube.
#[derive(Debug, Clone, PartialEq)]
pub struct Transform {
    pub center: f64,
    pub scale: f64,
    pub input_lo: Vec<f64>,
    pub input_hi: Vec<f64>,
}

impl Transform {
    pub fn destandardize(&self, v: f64) -> f64 {
        self.center + self.scale * v
    }

    /// For quantities that are differences of responses (components without
    /// the mean, widths, standard deviations).
    pub fn destandardize_delta(&self, v: f64) -> f64 {
        self.scale * v
    }

    pub fn standardize(&self, v: f64) -> f64 {
        (v - self.center) / self.scale
    }

    pub fn scale_input(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.input_lo.iter().zip(&self.input_hi)).map(|(v, (lo, hi))| (v - lo) / (hi - lo)).collect()
    }

    pub fn unscale_input(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(self.input_lo.iter().zip(&self.input_hi)).map(|(v, (lo, hi))| lo + v * (hi - lo)).collect()
    }
}

/// Centers by the sample mean and scales by the sample standard deviation
/// (`n - 1` denominator). Returns `(y, center, scale)`.
pub fn standardize(y_raw: &[f64]) -> Result<(Vec<f64>, f64, f64)> {
    let n = y_raw.len();
    if n < 2 {
        return Err(Error::DegenerateData(format!("need at least two responses, got {n}")));
    }
    let center = y_raw.iter().sum::<f64>() / n as f64;
    let ss: f64 = y_raw.iter().map(|v| (v - center) * (v - center)).sum();
    let scale = libm::sqrt(ss / (n - 1) as f64);
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::DegenerateData("response is constant".into()));
    }
    Ok((y_raw.iter().map(|v| (v - center) / scale).collect(), center, scale))
}

#[derive(Debug, Clone)]
pub struct TrainingSet {
    x_raw: Vec<Vec<f64>>,
    x: Vec<Vec<f64>>,
    y_raw: Vec<f64>,
    y: Vec<f64>,
    transform: Transform,
    sq: SqDiffs,
    extra_sites: Vec<Vec<f64>>,
    latent_sq: SqDiffs,
}

impl TrainingSet {
    /// `bounds` gives the input hyper-rectangle per dimension; when `None`
    /// the per-column range of the training inputs is used.
    pub fn new(x_raw: Vec<Vec<f64>>, y_raw: Vec<f64>, bounds: Option<Vec<(f64, f64)>>) -> Result<Self> {
        let n = x_raw.len();
        if n != y_raw.len() {
            return Err(Error::DimensionMismatch(format!("{n} input rows but {} responses", y_raw.len())));
        }
        let d = x_raw.first().map_or(0, Vec::len);
        if d == 0 {
            return Err(Error::DegenerateData("no input columns".into()));
        }
        if let Some(i) = x_raw.iter().position(|r| r.len() != d) {
            return Err(Error::DimensionMismatch(format!("row {i} has {} inputs, expected {d}", x_raw[i].len())));
        }
        if x_raw.iter().flatten().chain(&y_raw).any(|v| !v.is_finite()) {
            return Err(Error::DegenerateData("non-finite value in training data".into()));
        }
        let (lo, hi): (Vec<f64>, Vec<f64>) = match bounds {
            Some(b) => {
                if b.len() != d {
                    return Err(Error::DimensionMismatch(format!("{} bounds for {d} inputs", b.len())));
                }
                for (j, (a, c)) in b.iter().enumerate() {
                    let out = x_raw.iter().any(|r| r[j] < *a || r[j] > *c);
                    if out {
                        return Err(Error::OutOfDomain(format!("input column {} leaves [{a}, {c}]", j + 1)));
                    }
                }
                b.into_iter().unzip()
            }
            None => (0..d)
                .map(|j| {
                    let col = x_raw.iter().map(|r| r[j]);
                    (col.clone().fold(f64::INFINITY, f64::min), col.fold(f64::NEG_INFINITY, f64::max))
                })
                .unzip(),
        };
        if let Some(j) = (0..d).find(|&j| !(lo[j] < hi[j])) {
            return Err(Error::DegenerateData(format!("input column {} has an empty range", j + 1)));
        }
        let (y, center, scale) = standardize(&y_raw)?;
        let transform = Transform { center, scale, input_lo: lo, input_hi: hi };
        let x: Vec<Vec<f64>> = x_raw.iter().map(|r| transform.scale_input(r)).collect();
        let sq = SqDiffs::new(&x);
        Ok(Self { x_raw, latent_sq: sq.clone(), x, y_raw, y, transform, sq, extra_sites: Vec::new() })
    }

    /// Adds prediction locations (original units) at which the latent
    /// log-variance is sampled jointly with the training locations.
    pub fn with_latent_sites(mut self, sites_raw: &[Vec<f64>]) -> Result<Self> {
        if let Some(r) = sites_raw.iter().find(|r| r.len() != self.d()) {
            return Err(Error::DimensionMismatch(format!("latent site with {} inputs", r.len())));
        }
        self.extra_sites = sites_raw.iter().map(|r| self.transform.scale_input(r)).collect();
        let all: Vec<Vec<f64>> = self.x.iter().chain(&self.extra_sites).cloned().collect();
        self.latent_sq = SqDiffs::new(&all);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.x[0].len()
    }

    /// Inputs on the unit-cube scale.
    pub fn x(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn x_raw(&self) -> &[Vec<f64>] {
        &self.x_raw
    }

    /// Standardized responses.
    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn y_raw(&self) -> &[f64] {
        &self.y_raw
    }

    pub fn transform(&self) -> &Transform {
        &self.transform
    }

    pub fn sq_diffs(&self) -> &SqDiffs {
        &self.sq
    }

    /// Extra latent-variance sites (unit-cube scale).
    pub fn extra_sites(&self) -> &[Vec<f64>] {
        &self.extra_sites
    }

    /// Number of locations carried by the latent variance process.
    pub fn n_latent(&self) -> usize {
        self.n() + self.extra_sites.len()
    }

    pub(crate) fn latent_sq(&self) -> &SqDiffs {
        &self.latent_sq
    }

    /// Training inputs followed by the extra latent sites.
    pub fn latent_points(&self) -> Vec<Vec<f64>> {
        self.x.iter().chain(&self.extra_sites).cloned().collect()
    }
}

fn per_dim(v: &[f64], j: usize) -> f64 {
    if v.len() == 1 {
        v[0]
    } else {
        v[j]
    }
}

/// Fixed prior hyperparameters and structural constants.
///
/// Per-dimension shape vectors may have length one (shared across inputs) or
/// length `d`. `Gamma(a_eps, b_eps)` has mean `a_eps*b_eps`;
/// `IG(a_sigma2_v, b_sigma2_v)` has mean `1/((a-1) b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    pub alpha_omega: f64,
    pub beta_omega: f64,
    pub l_omega: f64,
    pub u_omega: f64,
    pub alpha_g: Vec<f64>,
    pub beta_g: Vec<f64>,
    pub alpha_l: Vec<f64>,
    pub beta_l: Vec<f64>,
    pub a_eps: f64,
    pub b_eps: f64,
    pub beta_v: f64,
    pub tau2_v: f64,
    pub a_sigma2_v: f64,
    pub b_sigma2_v: f64,
    pub alpha_rho_v: Vec<f64>,
    pub beta_rho_v: Vec<f64>,
    pub k_global: f64,
    pub k_local: f64,
    pub k_latent: f64,
    pub include_nugget: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        let r = libm::sqrt(0.1);
        Self {
            alpha_omega: 4.0,
            beta_omega: 6.0,
            l_omega: 0.5,
            u_omega: 1.0,
            alpha_g: vec![1.0],
            beta_g: vec![0.4],
            alpha_l: vec![1.0],
            beta_l: vec![1.0],
            a_eps: 1.0,
            b_eps: 1e-3,
            beta_v: -0.1,
            tau2_v: 0.1,
            a_sigma2_v: 2.0 + r,
            b_sigma2_v: 100.0 / (1.0 + r),
            alpha_rho_v: vec![1.0],
            beta_rho_v: vec![1.0],
            k_global: DEFAULT_SCALE,
            k_local: DEFAULT_SCALE,
            k_latent: DEFAULT_SCALE,
            include_nugget: true,
        }
    }
}

impl HyperParams {
    pub fn validate(&self, d: usize) -> Result<()> {
        if !(0.0 <= self.l_omega && self.l_omega < self.u_omega && self.u_omega <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "omega bounds [{}, {}] must satisfy 0 <= L < U <= 1",
                self.l_omega, self.u_omega
            )));
        }
        let scalars = [
            ("alpha_omega", self.alpha_omega),
            ("beta_omega", self.beta_omega),
            ("a_eps", self.a_eps),
            ("b_eps", self.b_eps),
            ("tau2_v", self.tau2_v),
            ("a_sigma2_v", self.a_sigma2_v),
            ("b_sigma2_v", self.b_sigma2_v),
            ("k_global", self.k_global),
            ("k_local", self.k_local),
            ("k_latent", self.k_latent),
        ];
        for (name, v) in scalars {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be positive")));
            }
        }
        if !self.beta_v.is_finite() {
            return Err(Error::InvalidParameter("beta_v must be finite".into()));
        }
        let vectors = [
            ("alpha_g", &self.alpha_g),
            ("beta_g", &self.beta_g),
            ("alpha_l", &self.alpha_l),
            ("beta_l", &self.beta_l),
            ("alpha_rho_v", &self.alpha_rho_v),
            ("beta_rho_v", &self.beta_rho_v),
        ];
        for (name, v) in vectors {
            if v.len() != 1 && v.len() != d {
                return Err(Error::DimensionMismatch(format!("{name} has {} entries for d = {d}", v.len())));
            }
            if v.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                return Err(Error::InvalidParameter(format!("{name} entries must be positive")));
            }
        }
        Ok(())
    }

    pub fn omega_prior(&self) -> TruncatedBeta {
        TruncatedBeta::new(self.alpha_omega, self.beta_omega, self.l_omega, self.u_omega)
            .expect("validated omega prior")
    }

    pub fn rho_g_prior(&self, j: usize) -> TruncatedBeta {
        priors::beta(per_dim(&self.alpha_g, j), per_dim(&self.beta_g, j)).expect("validated rho_G prior")
    }

    /// Conditional prior of `rho_L,j` given `rho_G,j`; `None` when `rho_g` is
    /// outside (0,1).
    pub fn rho_l_prior(&self, j: usize, rho_g: f64) -> Option<TruncatedBeta> {
        TruncatedBeta::new(per_dim(&self.alpha_l, j), per_dim(&self.beta_l, j), 0.0, rho_g).ok()
    }

    pub fn rho_v_prior(&self, j: usize) -> TruncatedBeta {
        priors::beta(per_dim(&self.alpha_rho_v, j), per_dim(&self.beta_rho_v, j)).expect("validated rho_V prior")
    }

    pub fn sigma2_eps_prior(&self) -> Gamma {
        Gamma::new(self.a_eps, self.b_eps).expect("validated nugget prior")
    }

    pub fn mu_v_prior(&self) -> Normal {
        Normal::new(self.beta_v, self.tau2_v).expect("validated mu_V prior")
    }

    pub fn sigma2_v_prior(&self) -> InverseGamma {
        InverseGamma::new(self.a_sigma2_v, self.b_sigma2_v).expect("validated sigma2_V prior")
    }
}

/// One complete draw of every unknown. The latent variance at the training
/// inputs is carried as `log_v = log V`; `log_v_extra` holds the latent
/// log-variance at any extra prediction sites attached to the training set.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub beta0: f64,
    pub omega: f64,
    pub rho_g: Vec<f64>,
    pub rho_l: Vec<f64>,
    pub sigma2_eps: f64,
    pub log_v: Vec<f64>,
    pub mu_v: f64,
    pub sigma2_v: f64,
    pub rho_v: Vec<f64>,
    pub log_v_extra: Vec<f64>,
}

impl ModelState {
    /// Default starting point: prior means for omega, the nugget and
    /// `sigma2_V`, `rho_G = 0.7`, `rho_L = 0.35`, `rho_V = 0.8`, `mu_V = beta_V`
    /// and unit latent variance everywhere.
    pub fn initial(data: &TrainingSet, hp: &HyperParams) -> Self {
        let d = data.d();
        Self {
            beta0: 0.0,
            omega: hp.omega_prior().mean(),
            rho_g: vec![0.7; d],
            rho_l: vec![0.35; d],
            sigma2_eps: if hp.include_nugget { hp.sigma2_eps_prior().mean() } else { 0.0 },
            log_v: vec![0.0; data.n()],
            mu_v: hp.beta_v,
            sigma2_v: hp.sigma2_v_prior().mean(),
            rho_v: vec![0.8; d],
            log_v_extra: vec![0.0; data.extra_sites().len()],
        }
    }

    /// `V = exp(log_v)` at the training inputs.
    pub fn v(&self) -> Vec<f64> {
        self.log_v.iter().map(|w| libm::exp(*w)).collect()
    }

    /// Latent log-variance at every latent site (training, then extra).
    pub fn latent_w(&self) -> Vec<f64> {
        self.log_v.iter().chain(&self.log_v_extra).copied().collect()
    }

    /// Checks the support constraints of the prior.
    pub fn check_invariants(&self, hp: &HyperParams) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if !(self.omega >= hp.l_omega && self.omega <= hp.u_omega) {
            return bad("omega outside its bounds");
        }
        if self.rho_g.len() != self.rho_l.len() || self.rho_g.len() != self.rho_v.len() {
            return bad("correlation vectors differ in length");
        }
        for j in 0..self.rho_g.len() {
            let (g, l, v) = (self.rho_g[j], self.rho_l[j], self.rho_v[j]);
            if !(0.0 < l && l < g && g < 1.0) {
                return bad("need 0 < rho_L < rho_G < 1");
            }
            if !(0.0 < v && v < 1.0) {
                return bad("rho_V outside (0,1)");
            }
        }
        if self.log_v.iter().chain(&self.log_v_extra).any(|w| !w.is_finite()) {
            return bad("latent variance must be positive and finite");
        }
        if !(self.sigma2_v > 0.0) || !(self.sigma2_eps >= 0.0) || !self.beta0.is_finite() || !self.mu_v.is_finite() {
            return bad("variance parameters out of range");
        }
        Ok(())
    }
}

/// Correlation matrix of the latent log-variance process over all latent
/// sites.
pub fn latent_corr(data: &TrainingSet, rho_v: &[f64], hp: &HyperParams) -> CovMatrix {
    corr_matrix(data.latent_sq(), &CorrelationParams::new_unchecked(rho_v, hp.k_latent))
}

/// `log N(w; mu 1, s2 R)` given the factor of `R`.
pub fn log_latent_density_with(r_chol: &Cholesky, w: &[f64], mu: f64, s2: f64) -> f64 {
    let n = w.len() as f64;
    let dev: Vec<f64> = w.iter().map(|v| v - mu).collect();
    -0.5 * (n * LN_2PI + n * libm::log(s2) + r_chol.logdet() + r_chol.quad_form(&dev) / s2)
}

/// `log N(y; beta0 1, C)` given the factor of `C`.
pub fn log_likelihood_with(c_chol: &Cholesky, y: &[f64], beta0: f64) -> f64 {
    let n = y.len() as f64;
    let dev: Vec<f64> = y.iter().map(|v| v - beta0).collect();
    -0.5 * (n * LN_2PI + c_chol.logdet() + c_chol.quad_form(&dev))
}

/// Multivariate normal log density of the standardized responses.
pub fn log_likelihood(state: &ModelState, data: &TrainingSet, hp: &HyperParams) -> Result<f64> {
    let c = kernels::build_cov_matrix(data, state, hp).factor()?;
    Ok(log_likelihood_with(&c, data.y(), state.beta0))
}

/// Log density of the latent log-variance `W` under
/// `N(mu_V 1, sigma2_V R(rho_V))`, evaluated on the `W` scale.
pub fn log_latent_variance_density(state: &ModelState, data: &TrainingSet, hp: &HyperParams) -> Result<f64> {
    let r = latent_corr(data, &state.rho_v, hp).factor()?;
    Ok(log_latent_density_with(&r, &state.latent_w(), state.mu_v, state.sigma2_v))
}

/// Log prior of every parameter except the latent variance vector.
pub fn log_prior_params(state: &ModelState, hp: &HyperParams) -> f64 {
    let mut lp = hp.omega_prior().ln_pdf(state.omega);
    for j in 0..state.rho_g.len() {
        let g = state.rho_g[j];
        lp += hp.rho_g_prior(j).ln_pdf(g);
        lp += match hp.rho_l_prior(j, g) {
            Some(d) => d.ln_pdf(state.rho_l[j]),
            None => f64::NEG_INFINITY,
        };
        lp += hp.rho_v_prior(j).ln_pdf(state.rho_v[j]);
    }
    if hp.include_nugget {
        lp += hp.sigma2_eps_prior().ln_pdf(state.sigma2_eps);
    } else if state.sigma2_eps != 0.0 {
        return f64::NEG_INFINITY;
    }
    lp += hp.mu_v_prior().ln_pdf(state.mu_v);
    lp += hp.sigma2_v_prior().ln_pdf(state.sigma2_v);
    if lp.is_nan() {
        f64::NEG_INFINITY
    } else {
        lp
    }
}

/// Full log prior; `-inf` outside the support.
pub fn log_prior(state: &ModelState, data: &TrainingSet, hp: &HyperParams) -> Result<f64> {
    let lp = log_prior_params(state, hp);
    if lp == f64::NEG_INFINITY {
        return Ok(lp);
    }
    Ok(lp + log_latent_variance_density(state, data, hp)?)
}

/// Unnormalized log posterior; the likelihood is skipped outside the support.
pub fn log_posterior(state: &ModelState, data: &TrainingSet, hp: &HyperParams) -> Result<f64> {
    let lp = log_prior(state, data, hp)?;
    if lp == f64::NEG_INFINITY {
        return Ok(lp);
    }
    Ok(lp + log_likelihood(state, data, hp)?)
}

/// Generalized least squares mean and variance of a constant under a
/// correlation factor: `((1'A^-1 1)^-1 1'A^-1 v, (1'A^-1 1)^-1)`.
pub(crate) fn gls_constant(chol: &Cholesky, v: &[f64]) -> (f64, f64) {
    let ones = vec![1.0; v.len()];
    let a_inv_one = chol.solve(&ones);
    let prec = a_inv_one.iter().sum::<f64>();
    (dot(&a_inv_one, v) / prec, 1.0 / prec)
}
