use bcgp_core::priors::{beta, Gamma, InverseGamma, Normal, TruncatedBeta, Univariate};
use bcgp_core::HyperParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Gamma as SGamma, Normal as SNormal};

/// Tanh-sinh quadrature of `f` over `(a, b)`; tolerant of integrable
/// endpoint singularities.
fn tanh_sinh(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let h = 1.0 / 64.0;
    let r = 0.5 * (b - a);
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut sum = 0.0;
    for k in -400_i32..=400 {
        let t = k as f64 * h;
        let u = half_pi * t.sinh();
        let w = half_pi * t.cosh() / u.cosh().powi(2);
        // 1 - tanh|u|, computed without cancellation
        let e = 1.0 / (u.abs().exp() * u.abs().cosh());
        let x = if u >= 0.0 { b - r * e } else { a + r * e };
        if !(x > a && x < b) || w == 0.0 {
            continue;
        }
        let fx = f(x);
        if fx.is_finite() {
            sum += w * fx;
        }
    }
    sum * h * r
}

/// Integral over `(0, inf)` through `x = s t / (1 - t)`.
fn half_line(f: &dyn Fn(f64) -> f64, s: f64) -> f64 {
    tanh_sinh(&|t: f64| f(s * t / (1.0 - t)) * s / ((1.0 - t) * (1.0 - t)), 0.0, 1.0)
}

fn integrates_to_one(name: &str, total: f64) {
    assert!((total - 1.0).abs() <= 1e-4, "{name}: integral {total}");
}

#[test]
fn densities_integrate_to_one() {
    let hp = HyperParams::default();
    let tb: Vec<(&str, TruncatedBeta)> = vec![
        ("omega", hp.omega_prior()),
        ("rho_g", hp.rho_g_prior(0)),
        ("rho_l|0.6", hp.rho_l_prior(0, 0.6).unwrap()),
        ("rho_v", hp.rho_v_prior(0)),
        ("beta(0.5,0.5)", beta(0.5, 0.5).unwrap()),
        ("trbeta(2,5;0.1,0.3)", TruncatedBeta::new(2.0, 5.0, 0.1, 0.3).unwrap()),
    ];
    for (name, d) in &tb {
        integrates_to_one(name, tanh_sinh(&|x| d.ln_pdf(x).exp(), d.lo(), d.hi()));
    }
    let n = hp.mu_v_prior();
    let sd = n.variance().sqrt();
    integrates_to_one("mu_v", tanh_sinh(&|x| n.ln_pdf(x).exp(), n.mean() - 40.0 * sd, n.mean() + 40.0 * sd));
    for (name, g) in [("eps", hp.sigma2_eps_prior()), ("gamma(2,3)", Gamma::new(2.0, 3.0).unwrap())] {
        integrates_to_one(name, half_line(&|x| g.ln_pdf(x).exp(), g.mean()));
    }
    for (name, g) in [("sigma2_v", hp.sigma2_v_prior()), ("ig(3,1)", InverseGamma::new(3.0, 1.0).unwrap())] {
        integrates_to_one(name, half_line(&|x| g.ln_pdf(x).exp(), g.mean()));
    }
}

/// Kolmogorov-Smirnov statistic of `samples` against `cdf`.
fn ks_stat(samples: &mut [f64], cdf: &dyn Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Critical value at significance 0.001 for sample size `n`.
fn ks_critical(n: usize) -> f64 {
    1.9495 / (n as f64).sqrt()
}

fn draws<D: Univariate>(d: &D, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| d.sample(&mut rng)).collect()
}

#[test]
fn samplers_agree_with_cdfs() {
    let n = 10_000;
    let hp = HyperParams::default();
    for (i, d) in [
        hp.omega_prior(),
        hp.rho_g_prior(0),
        hp.rho_l_prior(0, 0.3).unwrap(),
        hp.rho_v_prior(0),
        TruncatedBeta::new(2.0, 5.0, 0.1, 0.3).unwrap(),
    ]
    .iter()
    .enumerate()
    {
        let mut s = draws(d, n, i as u64);
        let k = ks_stat(&mut s, &|x| d.cdf(x));
        assert!(k < ks_critical(n), "truncated beta {i}: D = {k}");
    }

    let nd = hp.mu_v_prior();
    let sn = SNormal::new(nd.mean(), nd.variance().sqrt()).unwrap();
    let mut s = draws(&nd, n, 10);
    assert!(ks_stat(&mut s, &|x| sn.cdf(x)) < ks_critical(n));

    for (i, (a, b)) in [(1.0, 1e-3), (2.0, 3.0), (0.5, 1.0)].into_iter().enumerate() {
        let g = Gamma::new(a, b).unwrap();
        let sg = SGamma::new(a, 1.0 / b).unwrap();
        let mut s = draws(&g, n, 20 + i as u64);
        let k = ks_stat(&mut s, &|x| sg.cdf(x));
        assert!(k < ks_critical(n), "gamma({a},{b}): D = {k}");
    }

    // X ~ IG(a, b) exactly when 1/X ~ Gamma(shape a, scale b).
    let ig_default = hp.sigma2_v_prior();
    for (i, g) in [ig_default, InverseGamma::new(3.0, 1.0).unwrap()].into_iter().enumerate() {
        let sg = SGamma::new(g.shape(), 1.0 / g.b()).unwrap();
        let mut s = draws(&g, n, 30 + i as u64);
        let k = ks_stat(&mut s, &|x| sg.sf(1.0 / x));
        assert!(k < ks_critical(n), "inverse gamma {i}: D = {k}");
    }
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt())
}

#[test]
fn omega_prior_monte_carlo_moments() {
    let (m, sd) = mean_sd(&draws(&HyperParams::default().omega_prior(), 100_000, 7));
    assert!((m - 0.7).abs() <= 0.002, "mean {m}");
    assert!((sd - 0.074).abs() <= 0.002, "sd {sd}");
}

#[test]
fn gamma_and_inverse_gamma_monte_carlo_means() {
    let (m, _) = mean_sd(&draws(&Gamma::new(2.0, 3.0).unwrap(), 100_000, 8));
    assert!((m - 6.0).abs() < 0.06, "gamma mean {m}");
    let (m, _) = mean_sd(&draws(&InverseGamma::new(3.0, 1.0).unwrap(), 100_000, 9));
    assert!((m - 0.5).abs() < 0.01, "inverse gamma mean {m}");
}

#[test]
fn normal_density_matches_reference() {
    let n = Normal::new(0.3, 2.0).unwrap();
    let s = SNormal::new(0.3, 2.0f64.sqrt()).unwrap();
    for x in [-3.0, 0.0, 0.3, 1.7] {
        use statrs::distribution::Continuous;
        assert!((n.ln_pdf(x) - s.ln_pdf(x)).abs() < 1e-12);
    }
}
