//! Metropolis-within-Gibbs sampler for the composite GP posterior.
//!
//! One iteration updates, in order: `beta0` (Gibbs), `omega`, each `rho_G,j`,
//! each `rho_L,j`, `sigma2_eps` (uniform-window Metropolis), `mu_V` and
//! `sigma2_V` (Gibbs), each `rho_V,j` (Metropolis) and finally the latent
//! log-variance vector, either as one block (small `n`) or by repeated
//! focal-point cluster updates.
//!
//! A run has three phases: calibration periods during which proposal widths
//! are rescaled toward a target acceptance rate, a burn-in with frozen
//! widths, and the stored production draws.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;

use crate::error::{Error, Result};
use crate::kernels;
use crate::linalg::{Cholesky, Matrix};
use crate::model::{
    gls_constant, latent_corr, log_latent_density_with, log_likelihood_with, log_posterior, log_prior_params,
    HyperParams, ModelState, TrainingSet,
};
use crate::priors::{std_normal, InverseGamma, Univariate};

/// Multiplier applied to a width whose parameter accepted nothing in a
/// calibration period (the proportional rule would zero it).
pub const ZERO_ACCEPT_SHRINK: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    /// Iterations per calibration period.
    pub n_adapt: usize,
    /// Number of calibration periods.
    pub num_updates: usize,
    pub n_burn: usize,
    /// Stored production draws.
    pub n_mcmc: usize,
    /// Production iterations per stored draw.
    pub thin: usize,
    pub target_lo: f64,
    pub target_hi: f64,
    pub target_c: f64,
    /// Initial variance scale of the latent log-variance proposals.
    pub tau2_proposal: f64,
    /// Rescale the latent proposal variance during calibration like the
    /// scalar widths; when false it stays at `tau2_proposal`.
    pub adapt_tau2: bool,
    /// Cluster size of the focal-point update.
    pub n_prop: usize,
    /// Focal points per iteration; `None` means `ceil(2 n / n_prop)`.
    pub m: Option<usize>,
    /// Below this many latent sites the whole vector is proposed at once.
    pub small_n_threshold: usize,
    pub seed: u64,
    /// When false the likelihood is dropped and `beta0` is held fixed, so
    /// the chain targets the prior.
    pub use_likelihood: bool,
    pub initial_widths: Option<ProposalWidths>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_adapt: 1000,
            num_updates: 60,
            n_burn: 4000,
            n_mcmc: 5000,
            thin: 1,
            target_lo: 0.25,
            target_hi: 0.40,
            target_c: 0.325,
            tau2_proposal: 0.1,
            adapt_tau2: true,
            n_prop: 15,
            m: None,
            small_n_threshold: 20,
            seed: 0,
            use_likelihood: true,
            initial_widths: None,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.target_lo
            && self.target_lo < self.target_c
            && self.target_c < self.target_hi
            && self.target_hi < 1.0)
        {
            return Err(Error::InvalidParameter(format!(
                "acceptance targets must satisfy 0 < lo < c < hi < 1, got {} {} {}",
                self.target_lo, self.target_c, self.target_hi
            )));
        }
        if self.n_prop == 0 || self.m == Some(0) || self.thin == 0 {
            return Err(Error::InvalidParameter("n_prop, m and thin must be at least 1".into()));
        }
        if !(self.tau2_proposal >= 0.0) || !self.tau2_proposal.is_finite() {
            return Err(Error::InvalidParameter("tau2_proposal must be non-negative".into()));
        }
        Ok(())
    }

    /// Focal points per iteration for `n` latent sites.
    pub fn clusters(&self, n: usize) -> usize {
        self.m.unwrap_or_else(|| (2 * n).div_ceil(self.n_prop).max(1))
    }
}

/// A parameter with a calibrated Metropolis proposal width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Param {
    Omega,
    RhoG(usize),
    RhoL(usize),
    Sigma2Eps,
    RhoV(usize),
}

impl Param {
    /// Update order within one sweep.
    pub fn all(d: usize, include_nugget: bool) -> Vec<Param> {
        let mut v = vec![Param::Omega];
        v.extend((0..d).map(Param::RhoG));
        v.extend((0..d).map(Param::RhoL));
        if include_nugget {
            v.push(Param::Sigma2Eps);
        }
        v.extend((0..d).map(Param::RhoV));
        v
    }

    /// Column-style name, 1-based for vector components.
    pub fn name(&self) -> String {
        match self {
            Param::Omega => "omega".into(),
            Param::RhoG(j) => format!("rho_g_{}", j + 1),
            Param::RhoL(j) => format!("rho_l_{}", j + 1),
            Param::Sigma2Eps => "sigma2_eps".into(),
            Param::RhoV(j) => format!("rho_v_{}", j + 1),
        }
    }

    pub fn get(&self, s: &ModelState) -> f64 {
        match *self {
            Param::Omega => s.omega,
            Param::RhoG(j) => s.rho_g[j],
            Param::RhoL(j) => s.rho_l[j],
            Param::Sigma2Eps => s.sigma2_eps,
            Param::RhoV(j) => s.rho_v[j],
        }
    }

    pub fn set(&self, s: &mut ModelState, v: f64) {
        match *self {
            Param::Omega => s.omega = v,
            Param::RhoG(j) => s.rho_g[j] = v,
            Param::RhoL(j) => s.rho_l[j] = v,
            Param::Sigma2Eps => s.sigma2_eps = v,
            Param::RhoV(j) => s.rho_v[j] = v,
        }
    }

    fn affects_likelihood(&self) -> bool {
        !matches!(self, Param::RhoV(_))
    }
}

/// Half-widths of the uniform Metropolis proposals.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalWidths {
    pub omega: f64,
    pub rho_g: Vec<f64>,
    pub rho_l: Vec<f64>,
    pub sigma2_eps: f64,
    pub rho_v: Vec<f64>,
    /// Variance scale of the latent log-variance proposals.
    pub tau2: f64,
}

impl ProposalWidths {
    /// 0.05 for the weight and correlations, 1e-4 for the nugget variance,
    /// `tau2` for the latent proposals.
    pub fn initial(d: usize, tau2: f64) -> Self {
        Self { omega: 0.05, rho_g: vec![0.05; d], rho_l: vec![0.05; d], sigma2_eps: 1e-4, rho_v: vec![0.05; d], tau2 }
    }

    /// Applies the calibration rule to the latent proposal variance.
    pub fn calibrate_tau2(&mut self, counts: &AcceptanceCounts, cfg: &ChainConfig) {
        if let Some(f) = rescale_factor(counts, cfg) {
            self.tau2 *= f;
        }
    }

    pub fn get(&self, p: Param) -> f64 {
        match p {
            Param::Omega => self.omega,
            Param::RhoG(j) => self.rho_g[j],
            Param::RhoL(j) => self.rho_l[j],
            Param::Sigma2Eps => self.sigma2_eps,
            Param::RhoV(j) => self.rho_v[j],
        }
    }

    pub fn get_mut(&mut self, p: Param) -> &mut f64 {
        match p {
            Param::Omega => &mut self.omega,
            Param::RhoG(j) => &mut self.rho_g[j],
            Param::RhoL(j) => &mut self.rho_l[j],
            Param::Sigma2Eps => &mut self.sigma2_eps,
            Param::RhoV(j) => &mut self.rho_v[j],
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AcceptanceCounts {
    pub proposed: u64,
    pub accepted: u64,
}

impl AcceptanceCounts {
    pub fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += u64::from(accepted);
    }

    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    fn add(&mut self, o: &AcceptanceCounts) {
        self.proposed += o.proposed;
        self.accepted += o.accepted;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phase {
    Calibration,
    BurnIn,
    Production,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Calibration, Phase::BurnIn, Phase::Production];

    pub fn name(&self) -> &'static str {
        match self {
            Phase::Calibration => "calibration",
            Phase::BurnIn => "burn_in",
            Phase::Production => "production",
        }
    }
}

/// Acceptance counts per updated quantity and phase. The latent variance
/// update is logged under the name `"log_v"`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AcceptanceLog {
    counts: BTreeMap<(Phase, String), AcceptanceCounts>,
    /// Proposals rejected because their covariance could not be factorized.
    pub ill_conditioned_rejections: u64,
}

impl AcceptanceLog {
    pub fn get(&self, phase: Phase, name: &str) -> AcceptanceCounts {
        self.counts.get(&(phase, String::from(name))).copied().unwrap_or_default()
    }

    fn merge(&mut self, phase: Phase, name: String, c: &AcceptanceCounts) {
        self.counts.entry((phase, name)).or_default().add(c);
    }

    /// `(phase, name, counts)` in a stable order.
    pub fn iter(&self) -> impl Iterator<Item = (Phase, &str, AcceptanceCounts)> + '_ {
        self.counts.iter().map(|((p, n), c)| (*p, n.as_str(), *c))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub states: Vec<ModelState>,
    pub acceptance: AcceptanceLog,
    pub initial_widths: ProposalWidths,
    pub final_widths: ProposalWidths,
}

/// Metropolis accept/reject on a log ratio. A uniform is drawn only when the
/// ratio is finite and negative.
pub fn mh_accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio >= 0.0 {
        return true;
    }
    if !log_ratio.is_finite() {
        return false;
    }
    let u: f64 = rng.random();
    u < libm::exp(log_ratio)
}

/// Uniform-window random-walk Metropolis step for a scalar.
///
/// Draws `u ~ U(0,1)` and proposes `current + width (2u - 1)`, then applies
/// [`mh_accept`] to `log_target(proposal) - current_log_target`.
pub fn mh_uniform_scalar<R: Rng + ?Sized>(
    current: f64,
    width: f64,
    current_log_target: f64,
    rng: &mut R,
    mut log_target: impl FnMut(f64) -> f64,
) -> (f64, bool) {
    let u: f64 = rng.random();
    let prop = current + width * (2.0 * u - 1.0);
    let lt = log_target(prop);
    if mh_accept(lt - current_log_target, rng) {
        (prop, true)
    } else {
        (current, false)
    }
}

/// One Metropolis update of `param` against the full log posterior.
pub fn mh_uniform_step<R: Rng + ?Sized>(
    param: Param,
    width: f64,
    state: &ModelState,
    data: &TrainingSet,
    hp: &HyperParams,
    rng: &mut R,
) -> Result<(f64, bool)> {
    let cur = log_posterior(state, data, hp)?;
    let mut prop = state.clone();
    Ok(mh_uniform_scalar(param.get(state), width, cur, rng, |v| {
        param.set(&mut prop, v);
        log_posterior(&prop, data, hp).unwrap_or(f64::NEG_INFINITY)
    }))
}

/// Draw of `beta0` from its normal full conditional (flat prior).
pub fn gibbs_beta0<R: Rng + ?Sized>(
    state: &ModelState,
    data: &TrainingSet,
    hp: &HyperParams,
    rng: &mut R,
) -> Result<f64> {
    let c = kernels::build_cov_matrix(data, state, hp).factor()?;
    Ok(draw_beta0(&c, data.y(), rng))
}

/// Mean and variance of the `beta0` full conditional.
pub fn beta0_conditional(c_chol: &Cholesky, y: &[f64]) -> (f64, f64) {
    gls_constant(c_chol, y)
}

fn draw_beta0<R: Rng + ?Sized>(c_chol: &Cholesky, y: &[f64], rng: &mut R) -> f64 {
    let (m, v) = beta0_conditional(c_chol, y);
    m + libm::sqrt(v) * std_normal(rng)
}

/// Mean and variance of the `mu_V` full conditional.
pub fn mu_v_conditional(r_chol: &Cholesky, w: &[f64], sigma2_v: f64, hp: &HyperParams) -> (f64, f64) {
    let ones = vec![1.0; w.len()];
    let r_inv_one = r_chol.solve(&ones);
    let a = r_inv_one.iter().sum::<f64>();
    let b = crate::linalg::dot(&r_inv_one, w);
    let v = 1.0 / (1.0 / hp.tau2_v + a / sigma2_v);
    (v * (hp.beta_v / hp.tau2_v + b / sigma2_v), v)
}

pub fn gibbs_mu_v<R: Rng + ?Sized>(
    state: &ModelState,
    data: &TrainingSet,
    hp: &HyperParams,
    rng: &mut R,
) -> Result<f64> {
    let r = latent_corr(data, &state.rho_v, hp).factor()?;
    let (m, v) = mu_v_conditional(&r, &state.latent_w(), state.sigma2_v, hp);
    Ok(m + libm::sqrt(v) * std_normal(rng))
}

/// Inverse-gamma full conditional of `sigma2_V`.
pub fn sigma2_v_conditional(r_chol: &Cholesky, w: &[f64], mu_v: f64, hp: &HyperParams) -> InverseGamma {
    let dev: Vec<f64> = w.iter().map(|v| v - mu_v).collect();
    let q = r_chol.quad_form(&dev);
    let shape = 0.5 * w.len() as f64 + hp.a_sigma2_v;
    let b = 1.0 / (0.5 * q + 1.0 / hp.b_sigma2_v);
    InverseGamma::new(shape, b).expect("positive inverse-gamma parameters")
}

pub fn gibbs_sigma2_v<R: Rng + ?Sized>(
    state: &ModelState,
    data: &TrainingSet,
    hp: &HyperParams,
    rng: &mut R,
) -> Result<f64> {
    let r = latent_corr(data, &state.rho_v, hp).factor()?;
    Ok(sigma2_v_conditional(&r, &state.latent_w(), state.mu_v, hp).sample(rng))
}

/// Rescales widths whose period acceptance rate falls outside the target
/// window: `width * rate / target_c`, or `width * ZERO_ACCEPT_SHRINK` when
/// nothing was accepted. Parameters without proposals are left alone.
pub fn calibrate_widths(
    widths: &ProposalWidths,
    counts: &[(Param, AcceptanceCounts)],
    cfg: &ChainConfig,
) -> ProposalWidths {
    let mut out = widths.clone();
    for (p, c) in counts {
        if let Some(f) = rescale_factor(c, cfg) {
            *out.get_mut(*p) *= f;
        }
    }
    out
}

/// Multiplier for a width given one period's counts; `None` leaves it as is.
pub fn rescale_factor(c: &AcceptanceCounts, cfg: &ChainConfig) -> Option<f64> {
    if c.proposed == 0 {
        return None;
    }
    let rate = c.rate();
    if rate >= cfg.target_lo && rate <= cfg.target_hi {
        return None;
    }
    Some(if c.accepted == 0 { ZERO_ACCEPT_SHRINK } else { rate / cfg.target_c })
}

/// Mutable chain state with the factorizations and density terms of the
/// current draw cached.
struct Sampler<'a> {
    data: &'a TrainingSet,
    hp: &'a HyperParams,
    cfg: &'a ChainConfig,
    state: ModelState,
    c_chol: Option<Cholesky>,
    loglik: f64,
    r_chol: Cholesky,
    latent: f64,
    prior_params: f64,
    widths: ProposalWidths,
    params: Vec<Param>,
    period: BTreeMap<Param, AcceptanceCounts>,
    v_counts: AcceptanceCounts,
    ill_conditioned: u64,
}

impl<'a> Sampler<'a> {
    fn new(
        data: &'a TrainingSet,
        hp: &'a HyperParams,
        cfg: &'a ChainConfig,
        state: ModelState,
        widths: ProposalWidths,
    ) -> Result<Self> {
        let prior_params = log_prior_params(&state, hp);
        if !prior_params.is_finite() {
            return Err(Error::ZeroDensityInit);
        }
        let r_chol = latent_corr(data, &state.rho_v, hp).factor().map_err(|_| Error::ZeroDensityInit)?;
        let latent = log_latent_density_with(&r_chol, &state.latent_w(), state.mu_v, state.sigma2_v);
        let (c_chol, loglik) = if cfg.use_likelihood {
            let c = kernels::build_cov_matrix(data, &state, hp).factor().map_err(|_| Error::ZeroDensityInit)?;
            let ll = log_likelihood_with(&c, data.y(), state.beta0);
            (Some(c), ll)
        } else {
            (None, 0.0)
        };
        if !(latent + loglik).is_finite() {
            return Err(Error::ZeroDensityInit);
        }
        let params = Param::all(data.d(), hp.include_nugget);
        Ok(Self {
            data,
            hp,
            cfg,
            state,
            c_chol,
            loglik,
            r_chol,
            latent,
            prior_params,
            widths,
            params,
            period: BTreeMap::new(),
            v_counts: AcceptanceCounts::default(),
            ill_conditioned: 0,
        })
    }

    fn likelihood_of(&mut self, s: &ModelState) -> Option<(Cholesky, f64)> {
        match kernels::build_cov_matrix(self.data, s, self.hp).factor() {
            Ok(c) => {
                let ll = log_likelihood_with(&c, self.data.y(), s.beta0);
                Some((c, ll))
            }
            Err(_) => {
                self.ill_conditioned += 1;
                None
            }
        }
    }

    fn latent_of(&mut self, s: &ModelState) -> Option<(Cholesky, f64)> {
        match latent_corr(self.data, &s.rho_v, self.hp).factor() {
            Ok(r) => {
                let lt = log_latent_density_with(&r, &s.latent_w(), s.mu_v, s.sigma2_v);
                Some((r, lt))
            }
            Err(_) => {
                self.ill_conditioned += 1;
                None
            }
        }
    }

    fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let use_lik = self.cfg.use_likelihood;

        // Step 1
        if use_lik {
            let c = self.c_chol.as_ref().expect("likelihood factor");
            self.state.beta0 = draw_beta0(c, self.data.y(), rng);
            self.loglik = log_likelihood_with(c, self.data.y(), self.state.beta0);
        }

        // Steps 2-5 and 8 share the scalar Metropolis kernel; 6-7 sit between.
        let params = self.params.clone();
        let mut latent_hyper_done = false;
        for p in params {
            if matches!(p, Param::RhoV(_)) && !latent_hyper_done {
                self.update_latent_hyper(rng);
                latent_hyper_done = true;
            }
            self.metropolis(p, rng);
        }
        if !latent_hyper_done {
            self.update_latent_hyper(rng);
        }

        // Step 9
        if self.data.n_latent() < self.cfg.small_n_threshold {
            self.update_v_block(rng);
        } else {
            self.update_v_clusters(rng);
        }
    }

    fn metropolis<R: Rng + ?Sized>(&mut self, p: Param, rng: &mut R) {
        let width = self.widths.get(p);
        let current_total = self.prior_params + self.latent + self.loglik;
        let mut prop = self.state.clone();
        let mut cached: Option<(f64, Option<(Cholesky, f64)>)> = None;
        let use_lik = self.cfg.use_likelihood;
        let (value, accepted) = {
            let this = &mut *self;
            mh_uniform_scalar(p.get(&this.state), width, current_total, rng, |v| {
                p.set(&mut prop, v);
                let pp = log_prior_params(&prop, this.hp);
                if pp == f64::NEG_INFINITY {
                    return f64::NEG_INFINITY;
                }
                if p.affects_likelihood() {
                    if !use_lik {
                        cached = Some((pp, None));
                        return pp + this.latent;
                    }
                    match this.likelihood_of(&prop) {
                        Some((c, ll)) => {
                            cached = Some((pp, Some((c, ll))));
                            pp + this.latent + ll
                        }
                        None => f64::NEG_INFINITY,
                    }
                } else {
                    match this.latent_of(&prop) {
                        Some((r, lt)) => {
                            cached = Some((pp, Some((r, lt))));
                            pp + lt + this.loglik
                        }
                        None => f64::NEG_INFINITY,
                    }
                }
            })
        };
        self.period.entry(p).or_default().record(accepted);
        if accepted {
            p.set(&mut self.state, value);
            let (pp, fac) = cached.expect("accepted proposal was evaluated");
            self.prior_params = pp;
            if let Some((f, v)) = fac {
                if p.affects_likelihood() {
                    self.c_chol = Some(f);
                    self.loglik = v;
                } else {
                    self.r_chol = f;
                    self.latent = v;
                }
            }
        }
    }

    /// Steps 6 and 7.
    fn update_latent_hyper<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let w = self.state.latent_w();
        let (m, v) = mu_v_conditional(&self.r_chol, &w, self.state.sigma2_v, self.hp);
        self.state.mu_v = m + libm::sqrt(v) * std_normal(rng);
        self.state.sigma2_v = sigma2_v_conditional(&self.r_chol, &w, self.state.mu_v, self.hp).sample(rng);
        self.prior_params = log_prior_params(&self.state, self.hp);
        self.latent = log_latent_density_with(&self.r_chol, &w, self.state.mu_v, self.state.sigma2_v);
    }

    /// Metropolis move of the latent log-variance to `w_new` (all sites).
    fn try_latent_move<R: Rng + ?Sized>(&mut self, w_new: Vec<f64>, rng: &mut R) -> bool {
        let n = self.data.n();
        let mut prop = self.state.clone();
        prop.log_v.copy_from_slice(&w_new[..n]);
        prop.log_v_extra.copy_from_slice(&w_new[n..]);
        let lt = log_latent_density_with(&self.r_chol, &w_new, prop.mu_v, prop.sigma2_v);
        let (lik, ll) = if self.cfg.use_likelihood {
            match self.likelihood_of(&prop) {
                Some((c, ll)) => (Some(c), ll),
                None => {
                    self.v_counts.record(false);
                    return false;
                }
            }
        } else {
            (None, 0.0)
        };
        let log_ratio = (ll - self.loglik) + (lt - self.latent);
        let accepted = mh_accept(log_ratio, rng);
        self.v_counts.record(accepted);
        if accepted {
            self.state = prop;
            self.latent = lt;
            self.loglik = ll;
            if lik.is_some() {
                self.c_chol = lik;
            }
        }
        accepted
    }

    fn update_v_block<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let w = self.state.latent_w();
        let w_new = propose_full(&self.r_chol, &w, self.widths.tau2, rng);
        self.try_latent_move(w_new, rng);
    }

    fn update_v_clusters<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let points = self.data.latent_points();
        let r = latent_corr(self.data, &self.state.rho_v, self.hp);
        let m = self.cfg.clusters(points.len());
        for _ in 0..m {
            let w = self.state.latent_w();
            match propose_cluster(&points, r.entries(), &w, self.cfg.n_prop, self.widths.tau2, rng) {
                Ok(w_new) => {
                    self.try_latent_move(w_new, rng);
                }
                Err(_) => {
                    self.ill_conditioned += 1;
                    self.v_counts.record(false);
                }
            }
        }
    }

    fn take_period(&mut self) -> Vec<(Param, AcceptanceCounts)> {
        let out: Vec<(Param, AcceptanceCounts)> =
            self.params.iter().map(|p| (*p, self.period.get(p).copied().unwrap_or_default())).collect();
        self.period.clear();
        out
    }
}

/// `W' ~ N(W, tau2 R)` with `R` given by its factor.
fn propose_full<R: Rng + ?Sized>(r_chol: &Cholesky, w: &[f64], tau2: f64, rng: &mut R) -> Vec<f64> {
    let z: Vec<f64> = (0..w.len()).map(|_| std_normal(rng)).collect();
    let step = r_chol.lower_mul(&z);
    let s = libm::sqrt(tau2);
    w.iter().zip(&step).map(|(a, b)| a + s * b).collect()
}

/// Indices of the `k` points nearest to `focal` (Euclidean), ties broken by
/// the lower index.
pub fn nearest_sites(points: &[Vec<f64>], focal: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| (p.iter().zip(focal).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    order.into_iter().take(k).map(|(_, i)| i).collect()
}

/// Proposal covariance of the cluster block conditioned on the rest:
/// `R_bb - R_ub^T R_uu^{-1} R_ub` (without the `tau2` factor).
pub fn cluster_conditional_cov(r: &Matrix, block: &[usize], rest: &[usize]) -> Result<Matrix> {
    let nb = block.len();
    let mut s = Matrix::from_fn(nb, nb, |a, b| r[(block[a], block[b])]);
    if !rest.is_empty() {
        let ruu = Matrix::from_fn(rest.len(), rest.len(), |a, b| r[(rest[a], rest[b])]);
        let chol = Cholesky::factor(&ruu)?;
        // A = L_uu^{-1} R_ub, then S -= A^T A
        let cols: Vec<Vec<f64>> =
            block.iter().map(|&bi| chol.whiten(&rest.iter().map(|&ui| r[(ui, bi)]).collect::<Vec<_>>())).collect();
        for a in 0..nb {
            for b in 0..=a {
                let v = s[(a, b)] - crate::linalg::dot(&cols[a], &cols[b]);
                s[(a, b)] = v;
                s[(b, a)] = v;
            }
        }
    }
    Ok(s)
}

/// One focal-point proposal: a uniform focal point in the unit cube, the
/// `n_prop` nearest sites and a draw from the conditional proposal centred at
/// the current values.
fn propose_cluster<R: Rng + ?Sized>(
    points: &[Vec<f64>],
    r: &Matrix,
    w: &[f64],
    n_prop: usize,
    tau2: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let d = points[0].len();
    let focal: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
    let k = n_prop.min(points.len());
    let block = nearest_sites(points, &focal, k);
    let mut in_block = vec![false; points.len()];
    for &i in &block {
        in_block[i] = true;
    }
    let rest: Vec<usize> = (0..points.len()).filter(|i| !in_block[*i]).collect();
    let s = cluster_conditional_cov(r, &block, &rest)?;
    let chol = Cholesky::factor(&s)?;
    let z: Vec<f64> = (0..k).map(|_| std_normal(rng)).collect();
    let step = chol.lower_mul(&z);
    let sd = libm::sqrt(tau2);
    let mut out = w.to_vec();
    for (a, &i) in block.iter().enumerate() {
        out[i] += sd * step[a];
    }
    Ok(out)
}

/// Full-vector latent update: one Metropolis move of all latent
/// log-variances. Returns the new latent vector (training sites first) and
/// whether the move was accepted.
pub fn update_v_small<R: Rng + ?Sized>(
    state: &ModelState,
    data: &TrainingSet,
    hp: &HyperParams,
    cfg: &ChainConfig,
    rng: &mut R,
) -> Result<(Vec<f64>, bool)> {
    let mut s = Sampler::new(data, hp, cfg, state.clone(), ProposalWidths::initial(data.d(), cfg.tau2_proposal))?;
    s.update_v_block(rng);
    Ok((s.state.latent_w(), s.v_counts.accepted == 1))
}

/// Focal-point latent update repeated `cfg.clusters(n)` times. Returns the
/// final latent vector and the number of accepted cluster moves.
pub fn update_v_clustered<R: Rng + ?Sized>(
    state: &ModelState,
    data: &TrainingSet,
    hp: &HyperParams,
    cfg: &ChainConfig,
    rng: &mut R,
) -> Result<(Vec<f64>, u64)> {
    let mut s = Sampler::new(data, hp, cfg, state.clone(), ProposalWidths::initial(data.d(), cfg.tau2_proposal))?;
    s.update_v_clusters(rng);
    Ok((s.state.latent_w(), s.v_counts.accepted))
}

/// Log ratio used to accept a latent move from `state` to `w_new`:
/// likelihood ratio times latent-process prior ratio.
pub fn latent_move_log_ratio(state: &ModelState, w_new: &[f64], data: &TrainingSet, hp: &HyperParams) -> Result<f64> {
    let n = data.n();
    let mut prop = state.clone();
    prop.log_v.copy_from_slice(&w_new[..n]);
    prop.log_v_extra.copy_from_slice(&w_new[n..]);
    let r = latent_corr(data, &state.rho_v, hp).factor()?;
    let lt0 = log_latent_density_with(&r, &state.latent_w(), state.mu_v, state.sigma2_v);
    let lt1 = log_latent_density_with(&r, w_new, state.mu_v, state.sigma2_v);
    let ll0 = crate::model::log_likelihood(state, data, hp)?;
    let ll1 = crate::model::log_likelihood(&prop, data, hp)?;
    Ok((ll1 - ll0) + (lt1 - lt0))
}

/// Runs calibration, burn-in and production.
pub fn run_chain(
    data: &TrainingSet,
    hp: &HyperParams,
    cfg: &ChainConfig,
    init: Option<ModelState>,
) -> Result<ChainOutput> {
    run_chain_with_progress(data, hp, cfg, init, &mut |_, _| {})
}

/// [`run_chain`] with a callback invoked after every iteration with the
/// phase and the iteration index within that phase.
pub fn run_chain_with_progress(
    data: &TrainingSet,
    hp: &HyperParams,
    cfg: &ChainConfig,
    init: Option<ModelState>,
    progress: &mut dyn FnMut(Phase, usize),
) -> Result<ChainOutput> {
    hp.validate(data.d())?;
    cfg.validate()?;
    let init = init.unwrap_or_else(|| ModelState::initial(data, hp));
    if init.log_v.len() != data.n()
        || init.log_v_extra.len() != data.extra_sites().len()
        || init.rho_g.len() != data.d()
    {
        return Err(Error::DimensionMismatch("initial state does not match the training set".into()));
    }
    let initial_widths =
        cfg.initial_widths.clone().unwrap_or_else(|| ProposalWidths::initial(data.d(), cfg.tau2_proposal));
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut s = Sampler::new(data, hp, cfg, init, initial_widths.clone())?;
    let mut log = AcceptanceLog::default();

    let flush = |s: &mut Sampler,
                 log: &mut AcceptanceLog,
                 phase: Phase|
     -> (Vec<(Param, AcceptanceCounts)>, AcceptanceCounts) {
        let period = s.take_period();
        for (p, c) in &period {
            log.merge(phase, p.name(), c);
        }
        log.merge(phase, "log_v".into(), &s.v_counts);
        let v = core::mem::take(&mut s.v_counts);
        (period, v)
    };

    for _ in 0..cfg.num_updates {
        for it in 0..cfg.n_adapt {
            s.sweep(&mut rng);
            progress(Phase::Calibration, it);
        }
        let (period, v) = flush(&mut s, &mut log, Phase::Calibration);
        s.widths = calibrate_widths(&s.widths, &period, cfg);
        if cfg.adapt_tau2 {
            s.widths.calibrate_tau2(&v, cfg);
        }
    }
    for it in 0..cfg.n_burn {
        s.sweep(&mut rng);
        progress(Phase::BurnIn, it);
    }
    flush(&mut s, &mut log, Phase::BurnIn);
    let mut states = Vec::with_capacity(cfg.n_mcmc);
    for it in 0..cfg.n_mcmc {
        for _ in 0..cfg.thin {
            s.sweep(&mut rng);
        }
        states.push(s.state.clone());
        progress(Phase::Production, it);
    }
    flush(&mut s, &mut log, Phase::Production);
    log.ill_conditioned_rejections = s.ill_conditioned;
    Ok(ChainOutput { states, acceptance: log, initial_widths, final_widths: s.widths })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;

    fn toy(n: usize) -> TrainingSet {
        let xs: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / (n - 1) as f64]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| libm::sin(6.0 * x[0]) + 0.3 * x[0]).collect();
        TrainingSet::new(xs, ys, Some(vec![(0.0, 1.0)])).unwrap()
    }

    #[test]
    fn calibration_inside_window_unchanged() {
        let cfg = ChainConfig::default();
        let w = ProposalWidths::initial(1, 0.1);
        let out = calibrate_widths(&w, &[(Param::Omega, AcceptanceCounts { proposed: 100, accepted: 30 })], &cfg);
        assert_eq!(out, w);
    }

    #[test]
    fn calibration_scales_by_rate() {
        let cfg = ChainConfig::default();
        let w = ProposalWidths::initial(1, 0.1);
        let out = calibrate_widths(
            &w,
            &[
                (Param::Omega, AcceptanceCounts { proposed: 100, accepted: 50 }),
                (Param::RhoG(0), AcceptanceCounts { proposed: 100, accepted: 10 }),
                (Param::RhoL(0), AcceptanceCounts { proposed: 100, accepted: 0 }),
            ],
            &cfg,
        );
        assert!((out.omega / w.omega - 0.50 / 0.325).abs() < 1e-12);
        assert!((out.rho_g[0] / w.rho_g[0] - 0.10 / 0.325).abs() < 1e-12);
        assert!((out.rho_l[0] / w.rho_l[0] - ZERO_ACCEPT_SHRINK).abs() < 1e-12);
        assert_eq!(out.rho_v, w.rho_v);
    }

    #[test]
    fn proposal_outside_support_rejected() {
        let data = toy(5);
        let hp = HyperParams::default();
        let mut s = ModelState::initial(&data, &hp);
        s.rho_g[0] = 0.5;
        s.rho_l[0] = 0.49;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // a window far above rho_G: proposals beyond it are always rejected
        let mut rejected = 0;
        for _ in 0..200 {
            let mut st = s.clone();
            st.rho_l[0] = 0.499_999;
            let (v, acc) = mh_uniform_step(Param::RhoL(0), 1e-9, &st, &data, &hp, &mut rng).unwrap();
            if v >= st.rho_g[0] {
                panic!("accepted rho_L >= rho_G");
            }
            rejected += usize::from(!acc);
        }
        assert!(rejected < 200);
        let mut st = s.clone();
        st.rho_l[0] = 0.49;
        for _ in 0..100 {
            let (v, _) = mh_uniform_step(Param::RhoL(0), 0.5, &st, &data, &hp, &mut rng).unwrap();
            assert!(v < st.rho_g[0] && v > 0.0);
        }
    }

    #[test]
    fn uphill_moves_always_accepted() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let (_, acc) = mh_uniform_scalar(0.0, 1.0, -1e9, &mut rng, |_| 0.0);
            assert!(acc);
        }
    }

    #[test]
    fn zero_tau_latent_move_is_accepted_and_idle() {
        let data = toy(6);
        let hp = HyperParams::default();
        let cfg = ChainConfig { tau2_proposal: 0.0, ..ChainConfig::default() };
        let s = ModelState::initial(&data, &hp);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (w, acc) = update_v_small(&s, &data, &hp, &cfg, &mut rng).unwrap();
        assert!(acc);
        assert_eq!(w, s.latent_w());
        assert_eq!(latent_move_log_ratio(&s, &s.latent_w(), &data, &hp).unwrap(), 0.0);
    }

    #[test]
    fn nearest_sites_tie_break() {
        let pts = vec![vec![0.25], vec![0.5], vec![0.75], vec![0.25]];
        assert_eq!(nearest_sites(&pts, &[0.375], 2), vec![0, 1]);
        assert_eq!(nearest_sites(&pts, &[0.375], 3), vec![0, 1, 3]);
        assert_eq!(nearest_sites(&pts, &[0.125], 2), vec![0, 3]);
    }

    #[test]
    fn full_cluster_has_unconditioned_covariance() {
        let pts: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64 * 0.3]).collect();
        let r = kernels::corr_matrix(
            &kernels::SqDiffs::new(&pts),
            &kernels::CorrelationParams::new(vec![0.5], 16.0).unwrap(),
        );
        let s = cluster_conditional_cov(r.entries(), &[2, 0, 1, 3], &[]).unwrap();
        assert_eq!(s[(0, 1)], r.entries()[(2, 0)]);
        assert_eq!(s[(3, 3)], 1.0);
    }

    #[test]
    fn conditional_cov_matches_schur_complement() {
        let pts: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 * 0.2]).collect();
        let r = kernels::corr_matrix(
            &kernels::SqDiffs::new(&pts),
            &kernels::CorrelationParams::new(vec![0.3], 16.0).unwrap(),
        );
        let s = cluster_conditional_cov(r.entries(), &[1, 2], &[0, 3, 4]).unwrap();
        // variance of site 1 given the rest must be below one and positive
        assert!(s[(0, 0)] > 0.0 && s[(0, 0)] < 1.0);
        // dense check of one entry: R_11 - r^T R_uu^{-1} r
        let ruu = Matrix::from_fn(3, 3, |a, b| r.entries()[([0, 3, 4][a], [0, 3, 4][b])]);
        let rb: Vec<f64> = [0, 3, 4].iter().map(|&u| r.entries()[(u, 1)]).collect();
        let x = Cholesky::factor(&ruu).unwrap().solve(&rb);
        let expect = 1.0 - crate::linalg::dot(&rb, &x);
        assert!((s[(0, 0)] - expect).abs() < 1e-12);
    }

    #[test]
    fn smoke_run_and_determinism() {
        let data = toy(8);
        let hp = HyperParams::default();
        let cfg =
            ChainConfig { n_adapt: 20, num_updates: 3, n_burn: 10, n_mcmc: 5, seed: 42, ..ChainConfig::default() };
        let a = run_chain(&data, &hp, &cfg, None).unwrap();
        let b = run_chain(&data, &hp, &cfg, None).unwrap();
        assert_eq!(a.states.len(), 5);
        assert_eq!(a, b);
        for s in &a.states {
            s.check_invariants(&hp).unwrap();
        }
    }

    #[test]
    fn zero_density_initialization_is_an_error() {
        let data = toy(5);
        let hp = HyperParams::default();
        let mut s = ModelState::initial(&data, &hp);
        s.omega = 0.2;
        let cfg = ChainConfig { n_adapt: 1, num_updates: 1, n_burn: 1, n_mcmc: 1, ..ChainConfig::default() };
        assert_eq!(run_chain(&data, &hp, &cfg, Some(s)), Err(Error::ZeroDensityInit));
    }
}
