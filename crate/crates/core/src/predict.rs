//! Point-wise posterior prediction.
//!
//! For every stored draw the latent log-variance at the new input is sampled
//! from its Gaussian conditional given the latent values at the training
//! sites, then the response is predicted from the conditional normal given
//! the training data. The Rao-Blackwellized mean averages the conditional
//! means; intervals come from one predictive draw per stored state.
//!
//! When the new input coincides with a training input the nugget enters the
//! cross-covariance, so the fit interpolates `y` exactly and the prediction
//! splits into global, local and error parts that sum to the total.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernels::{self, corr_vector, cross_cov_parts, CorrelationParams};
use crate::linalg::{dot, Cholesky};
use crate::model::{latent_corr, HyperParams, ModelState, TrainingSet};
use crate::priors::std_normal;

/// Global, local and error parts of a prediction. The global part carries
/// the constant mean.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Components {
    pub global: f64,
    pub local: f64,
    pub error: f64,
}

impl Components {
    pub fn total(&self) -> f64 {
        self.global + self.local + self.error
    }
}

/// Conditional prediction at one input under one posterior draw, on the
/// standardized scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrawPrediction {
    pub log_v_star: f64,
    pub mean: f64,
    pub variance: f64,
    pub components: Components,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionResult {
    /// Input in original units.
    pub x_star: Vec<f64>,
    /// Rao-Blackwellized mean, original units.
    pub mean: f64,
    /// Average of the predictive draws, original units.
    pub draw_mean: f64,
    pub interval: (f64, f64),
    /// Posterior-mean decomposition, original units; sums to `mean`.
    pub components: Components,
    pub samples: Option<Vec<f64>>,
}

/// Index of the training input equal to `x` (unit-cube scale), if any.
pub fn training_match(x: &[f64], data: &TrainingSet) -> Option<usize> {
    data.x().iter().position(|p| p.as_slice() == x)
}

/// Everything needed to predict from one posterior state, factorized once.
#[derive(Debug, Clone)]
pub struct StatePredictor<'a> {
    data: &'a TrainingSet,
    state: &'a ModelState,
    c_chol: Cholesky,
    alpha: Vec<f64>,
    sd: Vec<f64>,
    global: CorrelationParams,
    local: CorrelationParams,
    latent_points: Vec<Vec<f64>>,
    latent_w: Vec<f64>,
    r_chol: Cholesky,
    latent_params: CorrelationParams,
    r_inv_dev: Vec<f64>,
}

impl<'a> StatePredictor<'a> {
    pub fn new(state: &'a ModelState, data: &'a TrainingSet, hp: &HyperParams) -> Result<Self> {
        let c_chol = kernels::build_cov_matrix(data, state, hp).factor()?;
        let dev: Vec<f64> = data.y().iter().map(|v| v - state.beta0).collect();
        let alpha = c_chol.solve(&dev);
        let sd = state.log_v.iter().map(|w| libm::exp(0.5 * w)).collect();
        let (global, local) = kernels::data_corr_params(state, hp);
        let r_chol = latent_corr(data, &state.rho_v, hp).factor()?;
        let latent_w = state.latent_w();
        let wdev: Vec<f64> = latent_w.iter().map(|w| w - state.mu_v).collect();
        let r_inv_dev = r_chol.solve(&wdev);
        Ok(Self {
            data,
            state,
            c_chol,
            alpha,
            sd,
            global,
            local,
            latent_points: data.latent_points(),
            latent_w,
            r_chol,
            latent_params: CorrelationParams::new_unchecked(&state.rho_v, hp.k_latent),
            r_inv_dev,
        })
    }

    /// Mean and variance of `W_*` given the latent values at the latent
    /// sites. At a latent site the stored value is returned with variance 0.
    pub fn w_star_moments(&self, x: &[f64]) -> (f64, f64) {
        if let Some(k) = self.latent_points.iter().position(|p| p.as_slice() == x) {
            return (self.latent_w[k], 0.0);
        }
        let r_star = corr_vector(x, &self.latent_points, &self.latent_params);
        let mean = self.state.mu_v + dot(&r_star, &self.r_inv_dev);
        let var = self.state.sigma2_v * (1.0 - self.r_chol.quad_form(&r_star));
        (mean, var.max(0.0))
    }

    pub fn sample_w_star<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> f64 {
        let (m, v) = self.w_star_moments(x);
        m + libm::sqrt(v) * std_normal(rng)
    }

    /// Conditional moments of the response at `x` given `sigma2(x) = sigma2_star`.
    pub fn conditional(&self, x: &[f64], sigma2_star: f64) -> DrawPrediction {
        let s = self.state;
        let sigma_star = libm::sqrt(sigma2_star);
        let (cg, cl) = cross_cov_parts(x, sigma_star, self.data.x(), &self.sd, s.omega, &self.global, &self.local);
        let mut c_star: Vec<f64> = cg.iter().zip(&cl).map(|(a, b)| a + b).collect();
        let mut error = 0.0;
        if let Some(k) = training_match(x, self.data) {
            c_star[k] += s.sigma2_eps;
            error = s.sigma2_eps * self.alpha[k];
        }
        let components = Components { global: s.beta0 + dot(&cg, &self.alpha), local: dot(&cl, &self.alpha), error };
        let variance = (sigma2_star + s.sigma2_eps - self.c_chol.quad_form(&c_star)).max(0.0);
        DrawPrediction { log_v_star: libm::log(sigma2_star), mean: components.total(), variance, components }
    }

    /// Samples `W_*`, then returns the conditional prediction and one
    /// predictive draw. Always consumes exactly two normal variates.
    pub fn draw<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> (DrawPrediction, f64) {
        let w = self.sample_w_star(x, rng);
        let mut p = self.conditional(x, libm::exp(w));
        p.log_v_star = w;
        let y = p.mean + libm::sqrt(p.variance) * std_normal(rng);
        (p, y)
    }
}

/// Draw of `W_*` at `x_star` (unit-cube scale) under one state.
pub fn sample_w_star<R: Rng + ?Sized>(
    x_star: &[f64],
    state: &ModelState,
    data: &TrainingSet,
    hp: &HyperParams,
    rng: &mut R,
) -> Result<f64> {
    Ok(StatePredictor::new(state, data, hp)?.sample_w_star(x_star, rng))
}

/// Conditional mean and variance (standardized) at `x_star` (unit-cube scale).
pub fn cond_pred_moments(
    x_star: &[f64],
    sigma2_star: f64,
    state: &ModelState,
    data: &TrainingSet,
    hp: &HyperParams,
) -> Result<(f64, f64)> {
    if !(sigma2_star > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma2_star must be positive, got {sigma2_star}")));
    }
    let p = StatePredictor::new(state, data, hp)?.conditional(x_star, sigma2_star);
    Ok((p.mean, p.variance))
}

fn per_draw<R: Rng + ?Sized>(
    x_star_raw: &[f64],
    states: &[ModelState],
    data: &TrainingSet,
    hp: &HyperParams,
    rng: &mut R,
) -> Result<Vec<(DrawPrediction, f64)>> {
    if states.is_empty() {
        return Err(Error::InvalidParameter("no posterior draws".into()));
    }
    if x_star_raw.len() != data.d() {
        return Err(Error::DimensionMismatch(format!("point has {} inputs, expected {}", x_star_raw.len(), data.d())));
    }
    let x = data.transform().scale_input(x_star_raw);
    states.iter().map(|s| Ok(StatePredictor::new(s, data, hp)?.draw(&x, rng))).collect()
}

/// Rao-Blackwellized posterior mean in original units.
pub fn rb_mean<R: Rng + ?Sized>(
    x_star_raw: &[f64],
    states: &[ModelState],
    data: &TrainingSet,
    hp: &HyperParams,
    rng: &mut R,
) -> Result<f64> {
    let d = per_draw(x_star_raw, states, data, hp, rng)?;
    let m = d.iter().map(|(p, _)| p.mean).sum::<f64>() / d.len() as f64;
    Ok(data.transform().destandardize(m))
}

/// One predictive draw per state, original units.
pub fn predictive_draws<R: Rng + ?Sized>(
    x_star_raw: &[f64],
    states: &[ModelState],
    data: &TrainingSet,
    hp: &HyperParams,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let t = data.transform();
    Ok(per_draw(x_star_raw, states, data, hp, rng)?.into_iter().map(|(_, y)| t.destandardize(y)).collect())
}

/// Posterior-mean decomposition in original units.
pub fn decompose_prediction<R: Rng + ?Sized>(
    x_star_raw: &[f64],
    states: &[ModelState],
    data: &TrainingSet,
    hp: &HyperParams,
    rng: &mut R,
) -> Result<Components> {
    let d = per_draw(x_star_raw, states, data, hp, rng)?;
    Ok(to_original(average(d.iter().map(|(p, _)| p.components)), data))
}

fn average(it: impl Iterator<Item = Components>) -> Components {
    let mut acc = Components::default();
    let mut n = 0usize;
    for c in it {
        acc.global += c.global;
        acc.local += c.local;
        acc.error += c.error;
        n += 1;
    }
    let k = n as f64;
    Components { global: acc.global / k, local: acc.local / k, error: acc.error / k }
}

fn to_original(c: Components, data: &TrainingSet) -> Components {
    let t = data.transform();
    Components {
        global: t.destandardize(c.global),
        local: t.destandardize_delta(c.local),
        error: t.destandardize_delta(c.error),
    }
}

/// `p`-th percentile (`0 <= p <= 100`) of sorted data, interpolating
/// linearly between order statistics placed at `(k - 0.5) / n`.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let r = n as f64 * p / 100.0 + 0.5;
    if r <= 1.0 {
        return sorted[0];
    }
    if r >= n as f64 {
        return sorted[n - 1];
    }
    let lo = libm::floor(r);
    let f = r - lo;
    let i = lo as usize - 1;
    sorted[i] + f * (sorted[i + 1] - sorted[i])
}

/// Equal-tailed interval at `level` from the empirical percentiles.
pub fn predictive_interval(samples: &[f64], level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("interval level must lie in (0,1), got {level}")));
    }
    if samples.is_empty() || samples.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidParameter("need non-empty, non-NaN samples".into()));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let a = 50.0 * (1.0 - level);
    Ok((percentile_sorted(&s, a), percentile_sorted(&s, 100.0 - a)))
}

/// Batch predictor over a fixed set of posterior draws. Point `i` uses its
/// own random stream (`seed`, stream `i`), so results do not depend on how
/// the points are split across calls or threads.
#[derive(Debug, Clone)]
pub struct Predictor<'a> {
    data: &'a TrainingSet,
    hp: &'a HyperParams,
    states: &'a [ModelState],
    pub level: f64,
    pub seed: u64,
    pub keep_samples: bool,
}

impl<'a> Predictor<'a> {
    pub fn new(data: &'a TrainingSet, hp: &'a HyperParams, states: &'a [ModelState]) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidParameter("no posterior draws".into()));
        }
        Ok(Self { data, hp, states, level: 0.95, seed: 0, keep_samples: false })
    }

    pub fn predict(&self, points_raw: &[Vec<f64>]) -> Result<Vec<PredictionResult>> {
        self.predict_indexed(points_raw, 0)
    }

    /// Predicts `points_raw`, treating the first point as global index
    /// `first_index` for stream selection.
    pub fn predict_indexed(&self, points_raw: &[Vec<f64>], first_index: u64) -> Result<Vec<PredictionResult>> {
        predictive_interval(&[0.0], self.level)?;
        let d = self.data.d();
        if let Some(p) = points_raw.iter().find(|p| p.len() != d) {
            return Err(Error::DimensionMismatch(format!("point has {} inputs, expected {d}", p.len())));
        }
        let xs: Vec<Vec<f64>> = points_raw.iter().map(|p| self.data.transform().scale_input(p)).collect();
        let mut rngs: Vec<ChaCha8Rng> = (0..xs.len() as u64)
            .map(|i| {
                let mut r = ChaCha8Rng::seed_from_u64(self.seed);
                r.set_stream(first_index + i);
                r
            })
            .collect();
        let m = self.states.len();
        let mut means = vec![0.0; xs.len()];
        let mut comps = vec![Components::default(); xs.len()];
        let mut samples: Vec<Vec<f64>> = (0..xs.len()).map(|_| Vec::with_capacity(m)).collect();
        for s in self.states {
            let sp = StatePredictor::new(s, self.data, self.hp)?;
            for (i, x) in xs.iter().enumerate() {
                let (p, y) = sp.draw(x, &mut rngs[i]);
                means[i] += p.mean;
                comps[i].global += p.components.global;
                comps[i].local += p.components.local;
                comps[i].error += p.components.error;
                samples[i].push(y);
            }
        }
        let t = self.data.transform();
        let k = m as f64;
        let mut out = Vec::with_capacity(xs.len());
        for (i, raw) in points_raw.iter().enumerate() {
            let c = Components { global: comps[i].global / k, local: comps[i].local / k, error: comps[i].error / k };
            let ys: Vec<f64> = samples[i].iter().map(|v| t.destandardize(*v)).collect();
            let interval = predictive_interval(&ys, self.level)?;
            let draw_mean = ys.iter().sum::<f64>() / k;
            out.push(PredictionResult {
                x_star: raw.clone(),
                mean: t.destandardize(means[i] / k),
                draw_mean,
                interval,
                components: to_original(c, self.data),
                samples: if self.keep_samples { Some(ys) } else { None },
            });
        }
        Ok(out)
    }
}
