use koopred::vb::special::sigmoid;
use koopred::vb::{
    fit_all_with, fit_target, initial_state, refresh_expectations, update_alpha, update_beta, update_pi, update_rho,
    residual, Prepared, Priors, UpdateMode,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn problem(seed: u64, m: usize, p: usize, noise: f64) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
    let phi = DMatrix::from_fn(m, p, |_, _| draw());
    let w = DVector::from_fn(p, |i, _| if i % 2 == 0 { 1.0 + i as f64 * 0.5 } else { 0.0 });
    let t = &phi * &w + DVector::from_fn(m, |_, _| noise * draw());
    (phi, t)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Positivity, clipping and Beta mass conservation hold after each sweep.
    #[test]
    fn state_valid_after_every_iteration(
        seed in any::<u64>(),
        noise in 0.01..1.0f64,
        p_d in 0.1..1.0f64,
        e in 0.01..5.0f64,
        f in 0.01..5.0f64,
        jacobi in any::<bool>(),
    ) {
        let (phi, t) = problem(seed, 30, 6, noise);
        for k in 1..=12 {
            let priors = Priors {
                e,
                f,
                p_d,
                max_iter: k,
                update_mode: if jacobi { UpdateMode::Jacobi } else { UpdateMode::Algorithm1Literal },
                ..Priors::default()
            };
            let s = fit_target(&phi, &t, &priors).unwrap();
            prop_assert!(s.a_bar > 0.0 && s.b_bar > 0.0 && s.c_bar > 0.0);
            for i in 0..6 {
                prop_assert!(s.d_bar[i] > 0.0 && s.e_bar[i] > 0.0 && s.f_bar[i] > 0.0);
                prop_assert!(s.sigma2[i] > 0.0);
                prop_assert!(s.pi_bar[i] >= priors.delta && s.pi_bar[i] <= 1.0 - priors.delta);
                prop_assert!((s.e_bar[i] + s.f_bar[i] - (e + f + 1.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sigmoid_monotone(a in -800.0..800.0f64, b in -800.0..800.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(sigmoid(lo) <= sigmoid(hi));
    }

    #[test]
    fn beta_mass_conserved(g in 0.0..=1.0f64, e in 1e-6..100.0f64, f in 1e-6..100.0f64) {
        let priors = Priors { e, f, ..Priors::default() };
        let mut s = koopred::vb::PosteriorState::blank(1);
        s.gamma_hat[0] = g;
        let (eb, fb) = update_pi(&mut s, 0, &priors);
        prop_assert!((eb + fb - (e + f + 1.0)).abs() <= 1e-12 * (e + f + 1.0));
    }
}

/// With full damping off (p_d = 1) and every inclusion pinned at 1, the
/// coordinate updates converge to the ridge normal equations.
#[test]
fn frozen_inclusion_reaches_ridge_solution() {
    let (phi, t) = problem(3, 60, 5, 0.1);
    let priors = Priors { p_d: 1.0, ..Priors::default() };
    let prep = Prepared::new(&phi).unwrap();
    let mut s = initial_state(&phi, &prep, &t, &priors);
    s.gamma_hat = vec![1.0; 5];
    s.pi_bar = vec![1.0; 5];
    for _ in 0..2000 {
        update_rho(&mut s, &t, &phi, &priors).unwrap();
        for i in 0..5 {
            update_alpha(&mut s, i, &priors);
            let r = residual(&s, &t, &phi, i);
            let col: Vec<f64> = phi.column(i).iter().copied().collect();
            update_beta(&mut s, i, r.as_slice(), &col, &priors).unwrap();
            refresh_expectations(&mut s, i);
            s.gamma_hat[i] = 1.0;
        }
    }
    let mu = DVector::from_vec(s.mu.clone());
    let mut lhs = phi.tr_mul(&phi);
    for i in 0..5 {
        lhs[(i, i)] += s.alpha_hat[i] / s.rho_hat;
    }
    let res = &lhs * &mu - phi.tr_mul(&t);
    assert!(res.amax() < 1e-6, "normal-equation residual {}", res.amax());
}

#[test]
fn deterministic_serial_and_parallel() {
    let (phi, t1) = problem(11, 50, 8, 0.2);
    let (_, t2) = problem(12, 50, 8, 0.2);
    let mut targets = DMatrix::zeros(50, 2);
    targets.set_column(0, &t1);
    targets.set_column(1, &t2);
    let priors = Priors::default();
    let a = fit_all_with(&phi, &targets, &priors, false).unwrap();
    let b = fit_all_with(&phi, &targets, &priors, false).unwrap();
    assert_eq!(a, b);
    let c = fit_all_with(&phi, &targets, &priors, true).unwrap();
    for (x, y) in a.k_f_hat.iter().zip(c.k_f_hat.iter()) {
        assert!((x - y).abs() <= 1e-12);
    }
}
