use koopred::baselines::{edmd_pinv, sbl_matrix, stls, stls_trace};
use koopred::data::Dataset;
use koopred::dictionary::{featurize, Dictionary, ObservableSpec};
use koopred::koopman::{identify, nmse, KoopmanModel, Method, MethodSettings};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(&mut *rng))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stls_support_shrinks_each_round(seed in any::<u64>(), lambda in 0.0..2.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = gaussian(&mut rng, 40, 8);
        let t = gaussian(&mut rng, 40, 1).column(0).into_owned();
        let (supports, _) = stls_trace(&phi, &t, lambda, 10).unwrap();
        for w in supports.windows(2) {
            prop_assert!(w[1].iter().all(|i| w[0].contains(i)), "{:?}", supports);
        }
    }

    #[test]
    fn pinv_is_least_squares(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = gaussian(&mut rng, 30, 5);
        let t = gaussian(&mut rng, 30, 3);
        let k = edmd_pinv(&phi, &t).unwrap();
        let best = (&phi * &k - &t).norm();
        for _ in 0..100 {
            let scale = 10f64.powf(rng.gen_range(-6.0..0.0));
            let other = &k + gaussian(&mut rng, 5, 3) * scale;
            prop_assert!(best <= (&phi * &other - &t).norm() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn nmse_affine_invariant(
        seed in any::<u64>(),
        scale in 1e-3..1e3f64,
        shift in -1e3..1e3f64,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth: Vec<f64> = (0..50).map(|_| StandardNormal.sample(&mut rng)).collect();
        let pred: Vec<f64> = truth.iter().map(|v: &f64| v + 0.3 * rng.gen::<f64>()).collect();
        let base = nmse(&truth, &pred).unwrap();
        let t2: Vec<f64> = truth.iter().map(|v| scale * v + shift).collect();
        let p2: Vec<f64> = pred.iter().map(|v| scale * v + shift).collect();
        let moved = nmse(&t2, &p2).unwrap();
        prop_assert!((moved - base).abs() <= 1e-8 * base.max(1e-12), "{base} vs {moved}");
    }

    #[test]
    fn rollout_of_one_is_one_step(seed in any::<u64>(), n_inputs in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut obs: Vec<ObservableSpec> = (0..2).map(|state_index| ObservableSpec::Identity { state_index }).collect();
        obs.push(ObservableSpec::GaussianRbf { center: vec![0.1, -0.2], exponent_coeff: 0.5 });
        let dict = Dictionary::new(obs, vec![0, 1], 2, n_inputs, 0).unwrap();
        let k = gaussian(&mut rng, 3 + n_inputs, 3) * 0.5;
        let model = KoopmanModel::new(dict, k, Method::I).unwrap();
        let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let u = gaussian(&mut rng, 1, n_inputs);
        let (_, y) = model.one_step(&x, u.row(0).clone_owned().as_slice()).unwrap();
        for relift in [false, true] {
            let traj = model.rollout(&x, &u, 1, relift).unwrap();
            prop_assert_eq!(traj.row(0).iter().copied().collect::<Vec<_>>(), y.iter().copied().collect::<Vec<_>>());
        }
    }
}

/// Pinv, unthresholded-in-effect STLS and SBL coincide on an exact problem.
#[test]
fn methods_agree_without_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let phi = gaussian(&mut rng, 80, 6);
    let w = DMatrix::from_fn(6, 2, |i, j| 1.0 + 0.3 * i as f64 - 0.5 * j as f64);
    let t = &phi * &w;
    let a = edmd_pinv(&phi, &t).unwrap();
    let b = stls(&phi, &t, 0.05, 10).unwrap();
    let c = sbl_matrix(&phi, &t, 1000, 1e-9).unwrap();
    for (m, name) in [(&b, "stls"), (&c, "sbl")] {
        let gap = (m - &a).amax();
        assert!(gap < 1e-6, "{name} differs from pinv by {gap}");
    }
}

/// Coefficients whose inclusion sits at the clip floor barely move predictions.
#[test]
fn clipped_coefficients_leak_little() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let m = 200;
    let mut x = DMatrix::zeros(m + 1, 2);
    x[(0, 0)] = 1.0;
    x[(0, 1)] = -0.5;
    for k in 0..m {
        let (n0, n1): (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
        x[(k + 1, 0)] = 0.9 * x[(k, 0)] + 0.1 * n0;
        x[(k + 1, 1)] = 0.8 * x[(k, 1)] + 0.1 * n1;
    }
    let data = Dataset::autonomous(x, 1.0).unwrap();
    let mut obs: Vec<ObservableSpec> = (0..2).map(|state_index| ObservableSpec::Identity { state_index }).collect();
    for c in [-0.5, 0.0, 0.5] {
        obs.push(ObservableSpec::GaussianRbf { center: vec![c, c], exponent_coeff: 2.0 });
    }
    let dict = Dictionary::new(obs, vec![0, 1], 2, 0, 0).unwrap();
    let design = featurize(&dict, &data).unwrap();
    // A sparse Beta prior lets irrelevant terms fall to the floor; under a flat
    // one they hover near one half.
    let mut settings = MethodSettings::default();
    settings.priors.e = 0.1;
    let model = identify(Method::IV, &dict, &design, &settings, false).unwrap();
    let fit = koopred::vb::fit_all_with(&design.phi, &design.targets, &settings.priors, false).unwrap();
    let gamma = model.gamma.as_ref().unwrap();
    let delta = settings.priors.delta;
    let mut clipped = 0;
    for j in 0..gamma.ncols() {
        for i in 0..gamma.nrows() {
            if gamma[(i, j)] <= delta * (1.0 + 1e-9) {
                clipped += 1;
                let mu = fit.states[j].mu[i].abs();
                let col_max = design.phi.column(i).amax();
                let worst = design.phi.column(i).iter().map(|v| (model.k_f_hat[(i, j)] * v).abs()).fold(0.0, f64::max);
                assert!(worst <= delta * mu * col_max * (1.0 + 1e-9) + f64::MIN_POSITIVE);
            }
        }
    }
    assert!(clipped > 0, "no coefficient reached the clip floor");
}

#[test]
fn sbl_column_handles_near_zero_target() {
    // A kernel far from the data is almost zero everywhere; its regression
    // must still produce finite weights.
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let phi = gaussian(&mut rng, 50, 4);
    let t = DVector::from_fn(50, |k, _| 1e-200 * phi[(k, 0)]);
    let fit = koopred::baselines::sbl(&phi, &t, 500, 1e-8).unwrap();
    assert!(fit.weights.iter().all(|w| w.is_finite()));
    assert!((fit.weights[0] - 1e-200).abs() < 1e-206);
}
