use bcgp_core::mcmc::{
    latent_move_log_ratio, mh_accept, mh_uniform_scalar, run_chain, update_v_clustered, update_v_small, Phase,
};
use bcgp_core::model::log_likelihood;
use bcgp_core::priors::LN_2PI;
use bcgp_core::{ChainConfig, HyperParams, ModelState, TrainingSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Standard normal truncated to [-2, 3], unnormalized.
fn toy_log_target(x: f64) -> f64 {
    if (-2.0..=3.0).contains(&x) {
        -0.5 * x * x
    } else {
        f64::NEG_INFINITY
    }
}

#[test]
fn scalar_step_reproduces_scripted_trace() {
    let (width, steps) = (1.3, 2000);
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut x = 0.5;
    let mut lt = toy_log_target(x);
    let mut trace = Vec::new();
    for _ in 0..steps {
        let (nx, acc) = mh_uniform_scalar(x, width, lt, &mut rng, toy_log_target);
        x = nx;
        lt = toy_log_target(x);
        trace.push((x, acc));
    }

    // Scripted: u1 gives the proposal; u2 is drawn only for a finite,
    // negative log ratio.
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut y = 0.5f64;
    for (k, &(x, acc)) in trace.iter().enumerate() {
        let u1: f64 = rng.random();
        let prop = y + width * (2.0 * u1 - 1.0);
        let r = toy_log_target(prop) - toy_log_target(y);
        let accept = if r >= 0.0 {
            true
        } else if r == f64::NEG_INFINITY {
            false
        } else {
            let u2: f64 = rng.random();
            u2 < r.exp()
        };
        if accept {
            y = prop;
        }
        assert_eq!((y, accept), (x, acc), "step {k}");
    }
}

#[test]
fn mh_accept_consumes_a_uniform_only_when_needed() {
    let mut a = ChaCha8Rng::seed_from_u64(1);
    let b = a.clone();
    assert!(mh_accept(0.5, &mut a));
    assert!(!mh_accept(f64::NEG_INFINITY, &mut a));
    assert!(!mh_accept(f64::NAN, &mut a));
    assert_eq!(a, b);
    let _ = mh_accept(-0.1, &mut a);
    assert_ne!(a, b);
}

/// Empirical flows between bins of a discretized target are balanced:
/// pi(a) P(a -> b) = pi(b) P(b -> a).
#[test]
#[allow(clippy::needless_range_loop)]
fn scalar_step_satisfies_detailed_balance() {
    let bins = 10;
    let edges = |x: f64| (((x + 2.0) / 5.0) * bins as f64).floor().clamp(0.0, (bins - 1) as f64) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut x = 0.0;
    let mut lt = toy_log_target(x);
    let mut flow = vec![vec![0u64; bins]; bins];
    let mut occupancy = vec![0u64; bins];
    let steps = 2_000_000;
    for _ in 0..steps {
        let a = edges(x);
        let (nx, _) = mh_uniform_scalar(x, 1.5, lt, &mut rng, toy_log_target);
        x = nx;
        lt = toy_log_target(x);
        flow[a][edges(x)] += 1;
        occupancy[a] += 1;
    }
    for a in 0..bins {
        for b in (a + 1)..bins {
            let (f, g) = (flow[a][b] as f64, flow[b][a] as f64);
            if f + g < 100.0 {
                continue;
            }
            // net flow of a reversible chain is O(sqrt(count)); autocorrelation allowance x3
            assert!((f - g).abs() <= 5.0 * (f + g).sqrt(), "bins {a}<->{b}: {f} vs {g}");
        }
    }
    // occupancy follows the target
    let z: f64 = (0..bins).map(|i| bin_mass(i, bins)).sum();
    for (i, &c) in occupancy.iter().enumerate() {
        let want = bin_mass(i, bins) / z;
        let got = c as f64 / steps as f64;
        assert!((got - want).abs() < 0.01, "bin {i}: {got} vs {want}");
    }
}

fn bin_mass(i: usize, bins: usize) -> f64 {
    let (lo, hi) = (-2.0 + 5.0 * i as f64 / bins as f64, -2.0 + 5.0 * (i + 1) as f64 / bins as f64);
    let k = 1000;
    let h = (hi - lo) / k as f64;
    (0..k).map(|j| (-0.5 * (lo + (j as f64 + 0.5) * h).powi(2)).exp() * h).sum()
}

fn line_data(n: usize) -> TrainingSet {
    let x: Vec<Vec<f64>> = (0..n).map(|i| vec![(i as f64 + 0.5) / n as f64]).collect();
    let y = x.iter().map(|p| (6.0 * p[0]).sin() + 0.3 * p[0]).collect();
    TrainingSet::new(x, y, Some(vec![(0.0, 1.0)])).unwrap()
}

fn fixed_state(n: usize) -> ModelState {
    ModelState {
        beta0: 0.0,
        omega: 0.8,
        rho_g: vec![0.5],
        rho_l: vec![0.1],
        sigma2_eps: 0.01,
        log_v: vec![0.0; n],
        mu_v: 0.0,
        sigma2_v: 0.2,
        rho_v: vec![0.5],
        log_v_extra: vec![],
    }
}

#[test]
fn single_site_latent_ratio_reduces_to_scalar_densities() {
    let data = TrainingSet::new(vec![vec![0.3], vec![0.7]], vec![1.0, 2.0], Some(vec![(0.0, 1.0)])).unwrap();
    let hp = HyperParams::default();
    let mut s = fixed_state(2);
    s.omega = 1.0;
    s.rho_g = vec![1e-12];
    s.rho_l = vec![1e-13];
    s.rho_v = vec![1e-12];
    s.beta0 = 0.2;
    s.log_v = vec![0.1, -0.3];
    // Correlations vanish between the two sites and only the first moves,
    // so the ratio reduces to one-site normal densities.
    let w_new = vec![0.6, -0.3];
    let got = latent_move_log_ratio(&s, &w_new, &data, &hp).unwrap();
    let norm = |x: f64, m: f64, v: f64| -0.5 * (LN_2PI + v.ln() + (x - m) * (x - m) / v);
    let y = data.y()[0];
    let want = norm(y, s.beta0, 0.6f64.exp() + s.sigma2_eps) - norm(y, s.beta0, 0.1f64.exp() + s.sigma2_eps)
        + norm(0.6, s.mu_v, s.sigma2_v)
        - norm(0.1, s.mu_v, s.sigma2_v);
    assert!((got - want).abs() < 1e-9, "{got} vs {want}");
}

#[test]
fn identical_proposal_has_zero_log_ratio() {
    let data = line_data(6);
    let s = fixed_state(6);
    let r = latent_move_log_ratio(&s, &s.log_v.clone(), &data, &HyperParams::default()).unwrap();
    assert_eq!(r, 0.0);
}

#[test]
fn zero_tau_leaves_latent_vector_unchanged() {
    let data = line_data(25);
    let hp = HyperParams::default();
    let cfg = ChainConfig { tau2_proposal: 0.0, ..Default::default() };
    let s = fixed_state(25);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (w, acc) = update_v_small(&s, &data, &hp, &cfg, &mut rng).unwrap();
    assert!(acc && w == s.log_v);
    let (w, k) = update_v_clustered(&s, &data, &hp, &cfg, &mut rng).unwrap();
    assert_eq!(w, s.log_v);
    assert_eq!(k as usize, cfg.clusters(25));
}

/// Two-sample KS statistic.
fn ks2(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    d
}

/// Latent draws from the full-vector and the clustered schemes, all other
/// parameters fixed, share their stationary marginals.
#[test]
fn block_and_cluster_schemes_agree() {
    let n = 25;
    let data = line_data(n);
    let hp = HyperParams::default();
    let base = fixed_state(n);
    let draws = 10_000;
    let run = |clustered: bool, tau2: f64, thin: usize, seed: u64| -> Vec<Vec<f64>> {
        let cfg = ChainConfig { tau2_proposal: tau2, n_prop: 15, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = base.clone();
        let mut out = Vec::with_capacity(draws);
        for it in 0..(draws + 100) * thin {
            let w = if clustered {
                update_v_clustered(&s, &data, &hp, &cfg, &mut rng).unwrap().0
            } else {
                update_v_small(&s, &data, &hp, &cfg, &mut rng).unwrap().0
            };
            s.log_v = w;
            if it >= 100 * thin && it % thin == 0 {
                out.push(s.log_v.clone());
            }
        }
        out
    };
    // thinning chosen so that lag-one autocorrelation of the kept draws is below 0.1
    let (a, b) = std::thread::scope(|sc| {
        let ha = sc.spawn(|| run(false, 0.05, 100, 1));
        let hb = sc.spawn(|| run(true, 0.15, 80, 2));
        (ha.join().unwrap(), hb.join().unwrap())
    });
    let crit = 1.9495 * (2.0 / draws as f64).sqrt();
    for i in 0..n {
        let mut x: Vec<f64> = a.iter().map(|w| w[i]).collect();
        let mut y: Vec<f64> = b.iter().map(|w| w[i]).collect();
        let d = ks2(&mut x, &mut y);
        assert!(d < crit, "site {i}: D = {d} (critical {crit})");
    }
}

#[test]
fn stored_states_satisfy_invariants_and_calibration_is_discarded() {
    let data = line_data(12);
    let hp = HyperParams::default();
    let cfg =
        ChainConfig { n_adapt: 50, num_updates: 4, n_burn: 100, n_mcmc: 300, thin: 2, seed: 8, ..Default::default() };
    let out = run_chain(&data, &hp, &cfg, None).unwrap();
    assert_eq!(out.states.len(), 300);
    for s in &out.states {
        s.check_invariants(&hp).unwrap();
        assert!(log_likelihood(s, &data, &hp).unwrap().is_finite());
    }
    let cal = out.acceptance.get(Phase::Calibration, "omega");
    let prod = out.acceptance.get(Phase::Production, "omega");
    assert_eq!(cal.proposed, 200);
    assert_eq!(prod.proposed, 600);
    assert_eq!(out.acceptance.get(Phase::BurnIn, "omega").proposed, 100);
    let again = run_chain(&data, &hp, &cfg, None).unwrap();
    assert_eq!(again.states, out.states);
    assert_eq!(again.final_widths, out.final_widths);
}
