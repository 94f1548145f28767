use bcgp_core::kernels::{build_cov_matrix, CovMatrix};
use bcgp_core::linalg::Matrix;
use bcgp_core::mcmc::{
    beta0_conditional, gibbs_beta0, gibbs_mu_v, gibbs_sigma2_v, mu_v_conditional, sigma2_v_conditional,
};
use bcgp_core::model::{latent_corr, log_latent_variance_density, log_likelihood, log_posterior, log_prior};
use bcgp_core::priors::{Univariate, LN_2PI};
use bcgp_core::{HyperParams, ModelState, TrainingSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Explicit inverse of a symmetric 3x3 matrix by cofactors.
fn inv3(a: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let c = |i: usize, j: usize| {
        let r: Vec<usize> = (0..3).filter(|&k| k != i).collect();
        let s: Vec<usize> = (0..3).filter(|&k| k != j).collect();
        let m = a[r[0]][s[0]] * a[r[1]][s[1]] - a[r[0]][s[1]] * a[r[1]][s[0]];
        if (i + j).is_multiple_of(2) {
            m
        } else {
            -m
        }
    };
    let det = a[0][0] * c(0, 0) + a[0][1] * c(0, 1) + a[0][2] * c(0, 2);
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = c(j, i) / det;
        }
    }
    out
}

fn to3(m: &Matrix) -> [[f64; 3]; 3] {
    let mut a = [[0.0; 3]; 3];
    for (i, row) in a.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = m[(i, j)];
        }
    }
    a
}

fn toy3() -> (TrainingSet, HyperParams, ModelState) {
    let data =
        TrainingSet::new(vec![vec![0.1], vec![0.4], vec![0.85]], vec![1.0, 2.5, 0.2], Some(vec![(0.0, 1.0)])).unwrap();
    let hp = HyperParams::default();
    let state = ModelState {
        beta0: 0.3,
        omega: 0.7,
        rho_g: vec![0.8],
        rho_l: vec![0.3],
        sigma2_eps: 0.05,
        log_v: vec![0.9, 1.4, 0.6],
        mu_v: 1.0,
        sigma2_v: 0.4,
        rho_v: vec![0.6],
        log_v_extra: vec![],
    };
    (data, hp, state)
}

#[test]
fn beta0_conditional_identity_and_single_point() {
    let y = [0.3, -1.2, 2.0, 0.5];
    let c = CovMatrix::from_matrix(Matrix::identity(4)).factor().unwrap();
    let (m, v) = beta0_conditional(&c, &y);
    assert!((m - 0.4).abs() < 1e-14 && (v - 0.25).abs() < 1e-14);
    let c1 = CovMatrix::from_matrix(Matrix::from_fn(1, 1, |_, _| 2.5)).factor().unwrap();
    let (m, v) = beta0_conditional(&c1, &[1.7]);
    assert!((m - 1.7).abs() < 1e-14 && (v - 2.5).abs() < 1e-14);
}

#[test]
fn beta0_conditional_three_point_dense_oracle() {
    let (data, hp, state) = toy3();
    let c = build_cov_matrix(&data, &state, &hp);
    let ci = inv3(to3(c.entries()));
    let y = data.y();
    let one_ci_one: f64 = ci.iter().flatten().sum();
    let one_ci_y: f64 = (0..3).map(|i| (0..3).map(|j| ci[i][j] * y[j]).sum::<f64>()).sum();
    let (m, v) = beta0_conditional(&c.factor().unwrap(), y);
    assert!((m - one_ci_y / one_ci_one).abs() < 1e-10);
    assert!((v - 1.0 / one_ci_one).abs() < 1e-10);
}

#[test]
fn mu_v_conditional_closed_forms() {
    let mut hp = HyperParams { beta_v: 0.0, tau2_v: 1.0, ..Default::default() };
    let id = CovMatrix::from_matrix(Matrix::identity(5)).factor().unwrap();
    let (m, v) = mu_v_conditional(&id, &[0.0; 5], 1.0, &hp);
    assert!(m.abs() < 1e-15 && (v - 1.0 / 6.0).abs() < 1e-15);

    hp.beta_v = -0.4;
    let one = CovMatrix::from_matrix(Matrix::from_fn(1, 1, |_, _| 1.0)).factor().unwrap();
    for s2 in [0.01, 1.0, 50.0] {
        let (m, _) = mu_v_conditional(&one, &[-0.4], s2, &hp);
        assert!((m + 0.4).abs() < 1e-14);
    }

    // vague prior: GLS mean of W under R
    let (data, mut hp, state) = toy3();
    hp.tau2_v = 1e12;
    let r = latent_corr(&data, &state.rho_v, &hp);
    let ri = inv3(to3(r.entries()));
    let w = &state.log_v;
    let a: f64 = ri.iter().flatten().sum();
    let b: f64 = (0..3).map(|i| (0..3).map(|j| ri[i][j] * w[j]).sum::<f64>()).sum();
    let (m, v) = mu_v_conditional(&r.factor().unwrap(), w, state.sigma2_v, &hp);
    assert!((m - b / a).abs() < 1e-8);
    assert!((v - state.sigma2_v / a).abs() < 1e-8);
}

#[test]
fn sigma2_v_conditional_shapes() {
    let hp = HyperParams::default();
    let id = CovMatrix::from_matrix(Matrix::identity(4)).factor().unwrap();
    let ig = sigma2_v_conditional(&id, &[0.2; 4], 0.2, &hp);
    assert!((ig.shape() - (2.0 + hp.a_sigma2_v)).abs() < 1e-14);
    assert!((ig.b() - hp.b_sigma2_v).abs() < 1e-12);
    let one = CovMatrix::from_matrix(Matrix::from_fn(1, 1, |_, _| 1.0)).factor().unwrap();
    let ig = sigma2_v_conditional(&one, &[1.0], 0.0, &hp);
    assert!((ig.shape() - (0.5 + hp.a_sigma2_v)).abs() < 1e-14);
    assert!((1.0 / ig.b() - (0.5 + 1.0 / hp.b_sigma2_v)).abs() < 1e-12);
}

/// Normalized full conditional of `sigma2_V` on a grid from the joint
/// density, compared with the closed-form inverse gamma.
#[test]
fn sigma2_v_conditional_matches_grid_posterior() {
    let (data, hp, state) = toy3();
    let r = latent_corr(&data, &state.rho_v, &hp).factor().unwrap();
    let ig = sigma2_v_conditional(&r, &state.log_v, state.mu_v, &hp);
    let joint = |s2: f64| {
        let mut s = state.clone();
        s.sigma2_v = s2;
        hp.sigma2_v_prior().ln_pdf(s2) + log_latent_variance_density(&s, &data, &hp).unwrap()
    };
    let (lo, hi, k) = (1e-4, 20.0, 200_000);
    let h = (hi - lo) / k as f64;
    let grid: Vec<f64> = (0..=k).map(|i| lo + i as f64 * h).collect();
    let lj: Vec<f64> = grid.iter().map(|&s| joint(s)).collect();
    let top = lj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = lj.iter().map(|v| (v - top).exp()).sum::<f64>() * h;
    for (&s, &l) in grid.iter().zip(&lj).step_by(5000).skip(1) {
        let grid_pdf = (l - top).exp() / z;
        let exact = ig.ln_pdf(s).exp();
        assert!((grid_pdf - exact).abs() <= 0.01 * exact.max(1e-3), "sigma2 {s}: {grid_pdf} vs {exact}");
    }
}

#[test]
fn gibbs_draws_match_conditional_moments() {
    let (data, hp, state) = toy3();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 20_000;
    let c = build_cov_matrix(&data, &state, &hp).factor().unwrap();
    let (m, v) = beta0_conditional(&c, data.y());
    let s: Vec<f64> = (0..n).map(|_| gibbs_beta0(&state, &data, &hp, &mut rng).unwrap()).collect();
    let mean = s.iter().sum::<f64>() / n as f64;
    assert!((mean - m).abs() < 4.0 * (v / n as f64).sqrt());

    let r = latent_corr(&data, &state.rho_v, &hp).factor().unwrap();
    let (m, v) = mu_v_conditional(&r, &state.log_v, state.sigma2_v, &hp);
    let s: Vec<f64> = (0..n).map(|_| gibbs_mu_v(&state, &data, &hp, &mut rng).unwrap()).collect();
    let mean = s.iter().sum::<f64>() / n as f64;
    assert!((mean - m).abs() < 4.0 * (v / n as f64).sqrt());

    let ig = sigma2_v_conditional(&r, &state.log_v, state.mu_v, &hp);
    let s: Vec<f64> = (0..n).map(|_| gibbs_sigma2_v(&state, &data, &hp, &mut rng).unwrap()).collect();
    let mean = s.iter().sum::<f64>() / n as f64;
    assert!((mean - ig.mean()).abs() < 0.03 * ig.mean());
}

#[test]
fn two_point_likelihood_dense_oracle() {
    let data = TrainingSet::new(vec![vec![0.0], vec![0.25]], vec![0.5, -0.5], Some(vec![(0.0, 1.0)])).unwrap();
    let hp = HyperParams::default();
    let state = ModelState {
        beta0: 0.0,
        omega: 0.6,
        rho_g: vec![0.9],
        rho_l: vec![0.5],
        sigma2_eps: 0.01,
        log_v: vec![0.0, 4f64.ln()],
        mu_v: 0.0,
        sigma2_v: 1.0,
        rho_v: vec![0.9],
        log_v_extra: vec![],
    };
    let c12 = 2.0 * (0.6 * 0.9 + 0.4 * 0.5);
    let (a, b, d) = (1.01, c12, 4.01);
    let det = a * d - b * b;
    let y = data.y();
    let q = (d * y[0] * y[0] - 2.0 * b * y[0] * y[1] + a * y[1] * y[1]) / det;
    let want = -LN_2PI - 0.5 * det.ln() - 0.5 * q;
    assert!((log_likelihood(&state, &data, &hp).unwrap() - want).abs() < 1e-10);

    // latent density: bivariate normal with correlation 0.9^(16 * 0.0625)
    let mut s = state.clone();
    s.log_v = vec![0.3, -0.2];
    s.mu_v = 0.1;
    s.sigma2_v = 0.5;
    let rho: f64 = 0.9;
    let (u, v) = ((0.3 - 0.1) / 0.5f64.sqrt(), (-0.2 - 0.1) / 0.5f64.sqrt());
    let want_lat = -LN_2PI
        - 0.5 * (0.25 * (1.0 - rho * rho)).ln()
        - (u * u - 2.0 * rho * u * v + v * v) / (2.0 * (1.0 - rho * rho));
    assert!((log_latent_variance_density(&s, &data, &hp).unwrap() - want_lat).abs() < 1e-10);

    // posterior = prior + likelihood on the same case
    let lp = log_posterior(&s, &data, &hp).unwrap();
    let parts = log_prior(&s, &data, &hp).unwrap() + log_likelihood(&s, &data, &hp).unwrap();
    assert!((lp - parts).abs() < 1e-12);
}

#[test]
fn latent_density_peaks_at_the_mean() {
    let (data, hp, mut state) = toy3();
    state.log_v = vec![state.mu_v; 3];
    let at_mean = log_latent_variance_density(&state, &data, &hp).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let mut s = state.clone();
        for w in &mut s.log_v {
            *w += rng.random_range(-0.5..0.5);
        }
        assert!(log_latent_variance_density(&s, &data, &hp).unwrap() < at_mean);
    }
}

/// With `omega = 1` and constant variance the model is a stationary GP;
/// compare with an independent dense evaluation.
#[test]
fn stationary_limit_matches_textbook_likelihood() {
    let (data, hp, mut state) = toy3();
    state.omega = 1.0;
    state.log_v = vec![0.7; 3];
    state.sigma2_eps = 0.02;
    let x: [f64; 3] = [0.1, 0.4, 0.85];
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = 0.7f64.exp() * 0.8f64.powf(16.0 * (x[i] - x[j]).powi(2)) + if i == j { 0.02 } else { 0.0 };
        }
    }
    let ki = inv3(k);
    let det = k[0][0] * (k[1][1] * k[2][2] - k[1][2] * k[2][1]) - k[0][1] * (k[1][0] * k[2][2] - k[1][2] * k[2][0])
        + k[0][2] * (k[1][0] * k[2][1] - k[1][1] * k[2][0]);
    let r: Vec<f64> = data.y().iter().map(|v| v - state.beta0).collect();
    let q: f64 = (0..3).map(|i| (0..3).map(|j| r[i] * ki[i][j] * r[j]).sum::<f64>()).sum();
    let want = -1.5 * LN_2PI - 0.5 * det.ln() - 0.5 * q;
    assert!((log_likelihood(&state, &data, &hp).unwrap() - want).abs() < 1e-8);
}

#[test]
fn joint_location_shift_leaves_likelihood_unchanged() {
    let (data, hp, state) = toy3();
    let shifted_y: Vec<f64> = data.y().iter().map(|v| v + 2.0).collect();
    let c = build_cov_matrix(&data, &state, &hp).factor().unwrap();
    let a = bcgp_core::model::log_likelihood_with(&c, data.y(), state.beta0);
    let b = bcgp_core::model::log_likelihood_with(&c, &shifted_y, state.beta0 + 2.0);
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn posterior_is_finite_on_prior_draws() {
    let data = TrainingSet::new(
        (0..8).map(|i| vec![i as f64 / 7.0, ((i * 3) % 8) as f64 / 7.0]).collect(),
        (0..8).map(|i| (i as f64).sin()).collect(),
        None,
    )
    .unwrap();
    let hp = HyperParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let rho_g: Vec<f64> = (0..2).map(|j| hp.rho_g_prior(j).sample(&mut rng)).collect();
        let rho_l: Vec<f64> =
            rho_g.iter().enumerate().map(|(j, g)| hp.rho_l_prior(j, *g).unwrap().sample(&mut rng)).collect();
        let s = ModelState {
            beta0: rng.random_range(-2.0..2.0),
            omega: hp.omega_prior().sample(&mut rng),
            rho_g,
            rho_l,
            sigma2_eps: hp.sigma2_eps_prior().sample(&mut rng),
            log_v: (0..8).map(|_| rng.random_range(-2.0..2.0)).collect(),
            mu_v: hp.mu_v_prior().sample(&mut rng),
            sigma2_v: hp.sigma2_v_prior().sample(&mut rng),
            rho_v: (0..2).map(|j| hp.rho_v_prior(j).sample(&mut rng)).collect(),
            log_v_extra: vec![],
        };
        if s.check_invariants(&hp).is_err() {
            // boundary draws (rho_L == rho_G after rounding) are outside the open support
            continue;
        }
        let lp = log_posterior(&s, &data, &hp).unwrap();
        assert!(lp.is_finite(), "{s:?}");
    }
}
