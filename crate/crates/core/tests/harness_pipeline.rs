use std::collections::BTreeMap;

use koopred::data::Dataset;
use koopred::dictionary::featurize;
use koopred::graphred::reduce_dictionary;
use koopred::harness::SystemSpec;
use koopred::harness::{heatmap_export, lorenz_preset, run_seed, run_sweep, DictKind, ExperimentConfig, Split};
use koopred::koopman::{identify, nmse_columns, Method};
use koopred::rng::derive_seed;
use koopred::vb::Priors;
use nalgebra::DMatrix;

/// Short attractor run: 11 observables, noise-free, three replicates.
fn small_lorenz() -> ExperimentConfig {
    let mut cfg = lorenz_preset();
    if let SystemSpec::Lorenz { train_steps, test_steps, .. } = &mut cfg.system {
        *train_steps = 1500;
        *test_steps = 500;
    }
    cfg.dictionary.n_gaussian = 8;
    cfg.snr_grid = vec![30.0];
    cfg.mc_runs = 3;
    cfg.epsilon_grid = vec![0.01, 0.1, 0.25, 0.5, 0.9];
    cfg.reduce_epsilon = Some(0.25);
    cfg.single_threaded = true;
    cfg
}

/// `x[k+1] = 0.5 x[k] + u[k]` written as train/test CSV files.
fn scalar_linear(dir: &std::path::Path) -> SystemSpec {
    let write = |name: &str, n: usize, phase: usize| {
        let u = DMatrix::from_fn(n - 1, 1, |k, _| (((k + phase) * 7) % 5) as f64 - 2.0);
        let mut x = DMatrix::zeros(n, 1);
        x[(0, 0)] = 1.0;
        for k in 0..n - 1 {
            x[(k + 1, 0)] = 0.5 * x[(k, 0)] + u[(k, 0)];
        }
        let d = Dataset::new(x, u, 1.0, vec!["x".into(), "u".into()]).unwrap();
        let path = dir.join(name);
        d.write_csv(&path).unwrap();
        path
    };
    SystemSpec::Csv { train: write("train.csv", 60, 0), test: write("test.csv", 30, 3), n_states: 1, n_inputs: 1 }
}

#[test]
fn sizes_non_increasing_in_threshold() {
    let cfg = small_lorenz();
    let r = run_sweep(&cfg).unwrap();
    assert!(r.failures.is_empty(), "{:?}", r.failures);
    let mut by_run: BTreeMap<usize, Vec<(f64, usize)>> = BTreeMap::new();
    for s in &r.sizes {
        assert!(s.reduced_size <= r.full_size && s.reduced_size >= 3);
        by_run.entry(s.run).or_default().push((s.epsilon, s.reduced_size));
    }
    assert_eq!(by_run.len(), 3);
    for sizes in by_run.values_mut() {
        sizes.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!(sizes.windows(2).all(|w| w[1].1 <= w[0].1), "{sizes:?}");
    }
}

/// The reduced-dictionary scores come from a model refitted on the reduced
/// observables, not from masking the full model.
#[test]
fn reduced_scores_come_from_refit() {
    let mut cfg = small_lorenz();
    cfg.snr_grid = vec![f64::INFINITY];
    cfg.mc_runs = 1;
    cfg.methods = vec![Method::I, Method::IV];
    let r = run_sweep(&cfg).unwrap();

    let seed = run_seed(cfg.seed, 0);
    let (train, test) = cfg.system.generate(seed).unwrap();
    let dict = cfg.dictionary.build(&train, derive_seed(seed, 1)).unwrap();
    let settings = cfg.method_settings();
    let full = identify(Method::IV, &dict, &featurize(&dict, &train).unwrap(), &settings, false).unwrap();
    let (reduced, _) = reduce_dictionary(&dict, full.gamma.as_ref().unwrap(), 0.25).unwrap();
    assert!(reduced.len() < dict.len(), "threshold removed nothing");

    let refit = identify(Method::I, &reduced, &featurize(&reduced, &train).unwrap(), &settings, false).unwrap();
    let saved = r.model(Method::I, DictKind::Reduced, None).unwrap();
    assert_eq!(saved.dictionary, reduced);
    assert!((&saved.k_f_hat - &refit.k_f_hat).amax() < 1e-9);

    let te = featurize(&reduced, &test).unwrap();
    let pred = refit.predict_design(&te).unwrap();
    let want = nmse_columns(&(&te.targets * refit.c.transpose()), &pred).unwrap();
    for (k, state) in ["x", "y", "z"].iter().enumerate() {
        let got = r.per_run(Method::I, f64::INFINITY, DictKind::Reduced, Split::Test, state)[0].unwrap();
        assert!((got - want[k]).abs() <= 1e-9 * want[k].max(1e-12), "{state}: {got} vs {}", want[k]);
    }
}

#[test]
fn single_run_has_zero_interval() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_lorenz();
    cfg.system = scalar_linear(dir.path());
    cfg.dictionary.n_gaussian = 0;
    cfg.methods = vec![Method::I];
    cfg.mc_runs = 1;
    let r = run_sweep(&cfg).unwrap();
    assert_eq!(r.nmse.len(), 4);
    for row in &r.nmse {
        assert_eq!(row.ci95, 0.0);
        assert_eq!((row.n_ok, row.n_fail), (1, 0));
    }
}

#[test]
fn noiseless_linear_system_recovered_by_every_method() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_lorenz();
    cfg.system = scalar_linear(dir.path());
    cfg.dictionary.n_gaussian = 0;
    cfg.snr_grid = vec![f64::INFINITY];
    cfg.mc_runs = 1;
    // Default flat inclusion prior. With the sparse attractor prior the first
    // sweep, taken at the raw-variance noise level, already drops the state term.
    cfg.priors = Priors::default();
    let r = run_sweep(&cfg).unwrap();
    assert!(r.failures.is_empty(), "{:?}", r.failures);
    for m in Method::ALL {
        for dict in [DictKind::Full, DictKind::Reduced] {
            let row = r.row(m, f64::INFINITY, dict, Split::Train, "x").unwrap();
            assert!(row.mean_nmse < 1e-10, "{m} {dict}: {}", row.mean_nmse);
        }
    }
}

/// Inclusion-floor coefficients are tiny but not exact zeros.
#[test]
fn clip_floor_entries_not_flagged_zero() {
    let mut cfg = small_lorenz();
    cfg.mc_runs = 1;
    cfg.methods = vec![Method::IV];
    let r = run_sweep(&cfg).unwrap();
    let model = r.model(Method::IV, DictKind::Full, None).unwrap();
    let gamma = model.gamma.as_ref().unwrap();
    let floor = cfg.priors.delta * (1.0 + 1e-9);
    let csv = heatmap_export(&r, Method::IV, DictKind::Full, None).unwrap();
    let mut reader = csv::Reader::from_reader(csv.as_bytes());
    let mut clipped = 0;
    let mut rows = 0;
    for rec in reader.records() {
        let rec = rec.unwrap();
        rows += 1;
        let (i, j): (usize, usize) = (rec[0].parse().unwrap(), rec[1].parse().unwrap());
        let value: f64 = rec[4].parse().unwrap();
        assert_eq!(value, model.k_f_hat[(i, j)].abs());
        assert_eq!(&rec[5] == "1", model.k_f_hat[(i, j)] == 0.0);
        if gamma[(i, j)] <= floor {
            clipped += 1;
            assert!(value > 0.0 && value < 1e-6, "clipped entry ({i}, {j}) = {value}");
            assert_eq!(&rec[5], "0");
        }
    }
    assert_eq!(rows, gamma.nrows() * gamma.ncols());
    assert!(clipped > 0);
}

#[test]
fn parallel_matches_serial() {
    let mut cfg = small_lorenz();
    cfg.mc_runs = 2;
    let a = run_sweep(&cfg).unwrap();
    cfg.single_threaded = false;
    let b = run_sweep(&cfg).unwrap();
    assert_eq!(a.sizes, b.sizes);
    for (x, y) in a.nmse.iter().zip(&b.nmse) {
        assert!((x.mean_nmse - y.mean_nmse).abs() <= 1e-9 * x.mean_nmse.abs().max(1e-12));
    }
}
