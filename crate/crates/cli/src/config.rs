//! Run configuration: a flat `key = value` file layered over built-in
//! defaults, with command-line overrides applied last.
//!
//! Every key is recognized explicitly; an unknown key is an error. Vector
//! hyperparameters are comma-separated lists of length one (shared across
//! inputs) or `d`.

use std::fmt::Debug;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use bcgp_core::{ChainConfig, HyperParams};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("{path}:{line}: expected `key = value`, got `{text}`")]
    Syntax { path: String, line: usize, text: String },
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Built-in test function used as the data source when no CSV is given.
pub const DEFAULT_FUNCTION: &str = "bjx";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub hyper: HyperParams,
    pub chain: ChainConfig,
    /// Training CSV; when unset the training set comes from `function`.
    pub data: Option<PathBuf>,
    pub function: String,
    /// Training design size; `None` means 17 for bjx and 50 for wingweight.
    pub n_train: Option<usize>,
    /// Test design size for wingweight (Sobol points).
    pub n_test: usize,
    pub design_seed: u64,
    pub design_candidates: usize,
    /// CSV of prediction inputs; when unset a default grid is used.
    pub points: Option<PathBuf>,
    pub level: f64,
    pub chains: usize,
    pub keep_samples: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            hyper: HyperParams::default(),
            chain: ChainConfig::default(),
            data: None,
            function: DEFAULT_FUNCTION.into(),
            n_train: None,
            n_test: 150,
            design_seed: 0,
            design_candidates: 1000,
            points: None,
            level: 0.95,
            chains: 1,
            keep_samples: false,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse::<T>().map_err(|e| ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

fn parse_vec(key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    value.split(',').map(|v| parse::<f64>(key, v)).collect()
}

fn parse_opt_usize(key: &str, value: &str) -> Result<Option<usize>, ConfigError> {
    match value.trim() {
        "auto" | "" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

fn parse_opt_path(value: &str) -> Option<PathBuf> {
    match value.trim() {
        "" => None,
        v => Some(PathBuf::from(v)),
    }
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

fn fmt_opt<T: ToString>(v: &Option<T>, none: &str) -> String {
    v.as_ref().map_or_else(|| none.to_string(), |x| x.to_string())
}

fn fmt_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or_else(String::new, |p| p.display().to_string())
}

/// Every recognized key with a one-line description, in echo order.
pub const KEYS: &[(&str, &str)] = &[
    ("alpha_omega", "beta shape a of the omega prior (4)"),
    ("beta_omega", "beta shape b of the omega prior (6)"),
    ("l_omega", "lower end of the omega support (0.5)"),
    ("u_omega", "upper end of the omega support (1)"),
    ("alpha_g", "beta shape a of each rho_G prior, list (1)"),
    ("beta_g", "beta shape b of each rho_G prior, list (0.4)"),
    ("alpha_l", "beta shape a of rho_L/rho_G, list (1)"),
    ("beta_l", "beta shape b of rho_L/rho_G, list (1)"),
    ("a_eps", "gamma shape of the nugget prior (1)"),
    ("b_eps", "gamma scale of the nugget prior (1e-3)"),
    ("beta_v", "prior mean of mu_V (-0.1)"),
    ("tau2_v", "prior variance of mu_V (0.1)"),
    ("a_sigma2_v", "inverse-gamma shape of sigma2_V (2+sqrt(0.1))"),
    ("b_sigma2_v", "inverse-gamma scale of sigma2_V (100/(1+sqrt(0.1)))"),
    ("alpha_rho_v", "beta shape a of each rho_V prior, list (1)"),
    ("beta_rho_v", "beta shape b of each rho_V prior, list (1)"),
    ("k_global", "correlation exponent scale, global process (16)"),
    ("k_local", "correlation exponent scale, local process (16)"),
    ("k_latent", "correlation exponent scale, latent variance (16)"),
    ("include_nugget", "estimate the white-noise variance (true)"),
    ("n_adapt", "iterations per calibration period (1000)"),
    ("num_updates", "calibration periods (60)"),
    ("n_burn", "burn-in iterations (4000)"),
    ("n_mcmc", "stored production draws (5000)"),
    ("thin", "production iterations per stored draw (1)"),
    ("target_lo", "lower end of the acceptance window (0.25)"),
    ("target_hi", "upper end of the acceptance window (0.40)"),
    ("target_c", "target acceptance rate (0.325)"),
    ("tau2_proposal", "initial latent proposal variance scale (0.1)"),
    ("adapt_tau2", "calibrate the latent proposal scale (true)"),
    ("n_prop", "cluster size of latent updates (15)"),
    ("m", "clusters per iteration, or auto = ceil(2n/n_prop) (auto)"),
    ("small_n_threshold", "below this many sites update the latent vector jointly (20)"),
    ("use_likelihood", "include the likelihood; false samples the prior (true)"),
    ("seed", "random seed for chains and prediction (0)"),
    ("data", "training CSV with columns x1..xd,y (unset)"),
    ("function", "built-in test function when no data is given: bjx | wingweight (bjx)"),
    ("n_train", "training design size, or auto (auto: 17 bjx, 50 wingweight)"),
    ("n_test", "wingweight Sobol test points (150)"),
    ("design_seed", "seed of the maximin Latin hypercube (0)"),
    ("design_candidates", "random Latin hypercubes compared by maximin distance (1000)"),
    ("points", "CSV of prediction inputs x1..xd (unset: default grid)"),
    ("level", "predictive interval level (0.95)"),
    ("chains", "independent chains run concurrently (1)"),
    ("keep_samples", "keep per-point predictive samples (false)"),
];

impl RunConfig {
    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let h = &mut self.hyper;
        let c = &mut self.chain;
        match key {
            "alpha_omega" => h.alpha_omega = parse(key, value)?,
            "beta_omega" => h.beta_omega = parse(key, value)?,
            "l_omega" => h.l_omega = parse(key, value)?,
            "u_omega" => h.u_omega = parse(key, value)?,
            "alpha_g" => h.alpha_g = parse_vec(key, value)?,
            "beta_g" => h.beta_g = parse_vec(key, value)?,
            "alpha_l" => h.alpha_l = parse_vec(key, value)?,
            "beta_l" => h.beta_l = parse_vec(key, value)?,
            "a_eps" => h.a_eps = parse(key, value)?,
            "b_eps" => h.b_eps = parse(key, value)?,
            "beta_v" => h.beta_v = parse(key, value)?,
            "tau2_v" => h.tau2_v = parse(key, value)?,
            "a_sigma2_v" => h.a_sigma2_v = parse(key, value)?,
            "b_sigma2_v" => h.b_sigma2_v = parse(key, value)?,
            "alpha_rho_v" => h.alpha_rho_v = parse_vec(key, value)?,
            "beta_rho_v" => h.beta_rho_v = parse_vec(key, value)?,
            "k_global" => h.k_global = parse(key, value)?,
            "k_local" => h.k_local = parse(key, value)?,
            "k_latent" => h.k_latent = parse(key, value)?,
            "include_nugget" => h.include_nugget = parse(key, value)?,
            "n_adapt" => c.n_adapt = parse(key, value)?,
            "num_updates" => c.num_updates = parse(key, value)?,
            "n_burn" => c.n_burn = parse(key, value)?,
            "n_mcmc" => c.n_mcmc = parse(key, value)?,
            "thin" => c.thin = parse(key, value)?,
            "target_lo" => c.target_lo = parse(key, value)?,
            "target_hi" => c.target_hi = parse(key, value)?,
            "target_c" => c.target_c = parse(key, value)?,
            "tau2_proposal" => c.tau2_proposal = parse(key, value)?,
            "adapt_tau2" => c.adapt_tau2 = parse(key, value)?,
            "n_prop" => c.n_prop = parse(key, value)?,
            "m" => c.m = parse_opt_usize(key, value)?,
            "small_n_threshold" => c.small_n_threshold = parse(key, value)?,
            "use_likelihood" => c.use_likelihood = parse(key, value)?,
            "seed" => c.seed = parse(key, value)?,
            "data" => self.data = parse_opt_path(value),
            "function" => self.function = value.trim().to_string(),
            "n_train" => self.n_train = parse_opt_usize(key, value)?,
            "n_test" => self.n_test = parse(key, value)?,
            "design_seed" => self.design_seed = parse(key, value)?,
            "design_candidates" => self.design_candidates = parse(key, value)?,
            "points" => self.points = parse_opt_path(value),
            "level" => self.level = parse(key, value)?,
            "chains" => self.chains = parse(key, value)?,
            "keep_samples" => self.keep_samples = parse(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// Value of `key` as text that [`RunConfig::set`] reads back exactly.
    pub fn get(&self, key: &str) -> Result<String, ConfigError> {
        let h = &self.hyper;
        let c = &self.chain;
        Ok(match key {
            "alpha_omega" => format!("{:?}", h.alpha_omega),
            "beta_omega" => format!("{:?}", h.beta_omega),
            "l_omega" => format!("{:?}", h.l_omega),
            "u_omega" => format!("{:?}", h.u_omega),
            "alpha_g" => fmt_vec(&h.alpha_g),
            "beta_g" => fmt_vec(&h.beta_g),
            "alpha_l" => fmt_vec(&h.alpha_l),
            "beta_l" => fmt_vec(&h.beta_l),
            "a_eps" => format!("{:?}", h.a_eps),
            "b_eps" => format!("{:?}", h.b_eps),
            "beta_v" => format!("{:?}", h.beta_v),
            "tau2_v" => format!("{:?}", h.tau2_v),
            "a_sigma2_v" => format!("{:?}", h.a_sigma2_v),
            "b_sigma2_v" => format!("{:?}", h.b_sigma2_v),
            "alpha_rho_v" => fmt_vec(&h.alpha_rho_v),
            "beta_rho_v" => fmt_vec(&h.beta_rho_v),
            "k_global" => format!("{:?}", h.k_global),
            "k_local" => format!("{:?}", h.k_local),
            "k_latent" => format!("{:?}", h.k_latent),
            "include_nugget" => h.include_nugget.to_string(),
            "n_adapt" => c.n_adapt.to_string(),
            "num_updates" => c.num_updates.to_string(),
            "n_burn" => c.n_burn.to_string(),
            "n_mcmc" => c.n_mcmc.to_string(),
            "thin" => c.thin.to_string(),
            "target_lo" => format!("{:?}", c.target_lo),
            "target_hi" => format!("{:?}", c.target_hi),
            "target_c" => format!("{:?}", c.target_c),
            "tau2_proposal" => format!("{:?}", c.tau2_proposal),
            "adapt_tau2" => c.adapt_tau2.to_string(),
            "n_prop" => c.n_prop.to_string(),
            "m" => fmt_opt(&c.m, "auto"),
            "small_n_threshold" => c.small_n_threshold.to_string(),
            "use_likelihood" => c.use_likelihood.to_string(),
            "seed" => c.seed.to_string(),
            "data" => fmt_path(&self.data),
            "function" => self.function.clone(),
            "n_train" => fmt_opt(&self.n_train, "auto"),
            "n_test" => self.n_test.to_string(),
            "design_seed" => self.design_seed.to_string(),
            "design_candidates" => self.design_candidates.to_string(),
            "points" => fmt_path(&self.points),
            "level" => format!("{:?}", self.level),
            "chains" => self.chains.to_string(),
            "keep_samples" => self.keep_samples.to_string(),
            _ => return Err(ConfigError::UnknownKey(key.into())),
        })
    }

    /// All keys with their current values, in [`KEYS`] order.
    pub fn entries(&self) -> Vec<(String, String)> {
        KEYS.iter().map(|(k, _)| (k.to_string(), self.get(k).expect("listed key"))).collect()
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                path: origin.into(),
                line: i + 1,
                text: raw.into(),
            })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Applies one `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<(), ConfigError> {
        let (k, v) =
            kv.split_once('=').ok_or_else(|| ConfigError::Syntax { path: "--set".into(), line: 1, text: kv.into() })?;
        self.set(k.trim(), v.trim())
    }

    /// Renders the configuration as a config file that reproduces it.
    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Training design size for the built-in function.
    pub fn train_size(&self) -> usize {
        self.n_train.unwrap_or(if self.function == "bjx" { 17 } else { 50 })
    }

    /// Seed of chain `k`; chain 0 uses the configured seed itself.
    pub fn chain_seed(&self, k: usize) -> u64 {
        self.chain.seed.wrapping_add((k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }
}

/// `--help` text listing every key with its default.
pub fn keys_help() -> String {
    let mut s = String::from("Configuration keys (file lines `key = value`, or --set key=value):\n");
    for (k, d) in KEYS {
        s.push_str(&format!("  {k:<20} {d}\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_is_error() {
        let mut c = RunConfig::default();
        assert!(matches!(c.set("n_mcmcc", "10"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(c.apply_text("seed = 1\ntypo = 2\n", "x"), Err(ConfigError::UnknownKey(_))));
    }

    #[test]
    fn text_round_trip_is_exact() {
        let mut c = RunConfig::default();
        c.set("beta_g", "0.4,0.3").unwrap();
        c.set("m", "7").unwrap();
        c.set("b_eps", "0.1").unwrap();
        c.set("data", "a.csv").unwrap();
        let mut d = RunConfig::default();
        d.apply_text(&c.to_text(), "echo").unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn defaults_survive_round_trip() {
        let c = RunConfig::default();
        let mut d = RunConfig::default();
        d.set("a_sigma2_v", "1").unwrap();
        d.apply_text(&c.to_text(), "echo").unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn every_key_is_settable() {
        let c = RunConfig::default();
        for (k, v) in c.entries() {
            let mut d = RunConfig::default();
            d.set(&k, &v).unwrap();
        }
        assert_eq!(c.entries().len(), KEYS.len());
    }

    #[test]
    fn comments_and_syntax() {
        let mut c = RunConfig::default();
        c.apply_text("# header\n\nn_mcmc = 10 # inline\n", "x").unwrap();
        assert_eq!(c.chain.n_mcmc, 10);
        assert!(matches!(c.apply_text("n_mcmc 10", "x"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(c.set("n_mcmc", "ten"), Err(ConfigError::BadValue { .. })));
    }

    #[test]
    fn chain_seeds() {
        let mut c = RunConfig::default();
        c.chain.seed = 5;
        assert_eq!(c.chain_seed(0), 5);
        assert_ne!(c.chain_seed(1), c.chain_seed(2));
    }
}
