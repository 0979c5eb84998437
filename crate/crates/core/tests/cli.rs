use std::path::Path;
use std::process::{Command, Output};

use koopred::harness::{lorenz_preset, SystemSpec};
use koopred::koopman::Method;

fn koopred(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_koopred")).args(args).current_dir(cwd).output().unwrap()
}

fn ok(out: &Output) -> String {
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let mut cfg = lorenz_preset();
    if let SystemSpec::Lorenz { train_steps, test_steps, .. } = &mut cfg.system {
        *train_steps = 800;
        *test_steps = 300;
    }
    cfg.dictionary.n_gaussian = 5;
    cfg.snr_grid = vec![30.0, f64::INFINITY];
    cfg.mc_runs = 2;
    cfg.methods = vec![Method::I, Method::IV];
    let path = dir.join("small.json");
    std::fs::write(&path, cfg.to_json().unwrap()).unwrap();
    path
}

#[test]
fn sweep_writes_tables_and_models() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    ok(&koopred(&["sweep", "--config", cfg.to_str().unwrap(), "--out", "res", "--single-threaded"], dir.path()));
    let res = dir.path().join("res");
    let nmse = std::fs::read_to_string(res.join("nmse.csv")).unwrap();
    assert!(nmse.starts_with("method,snr_db,dict,split,state,mean_nmse,ci95,n_ok,n_fail\n"));
    // 2 methods × 2 levels × 2 dictionaries × 2 splits × 3 states
    assert_eq!(nmse.lines().count(), 1 + 48);
    assert!(nmse.contains(",inf,"));
    let sizes = std::fs::read_to_string(res.join("sizes.csv")).unwrap();
    assert!(sizes.starts_with("snr_db,epsilon,run,reduced_size\n"));
    assert_eq!(sizes.lines().count(), 1 + 2 * 3 * 2);
    let models: Vec<_> = std::fs::read_dir(res.join("models")).unwrap().collect();
    assert_eq!(models.len(), 2 * 2 * 2);

    let heat = ok(&koopred(&["export-heatmap", "--results", "res", "--method", "IV", "--snr", "inf"], dir.path()));
    assert!(heat.starts_with("row,col,row_label,col_label,abs_value,is_exact_zero\n"));
    assert_eq!(heat.lines().count(), 1 + 8 * 8);
}

#[test]
fn simulate_fit_reduce_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    ok(&koopred(&["simulate", "--config", cfg, "--out", "data", "--snr", "30"], dir.path()));
    for f in ["train.csv", "test.csv"] {
        assert!(dir.path().join("data").join(f).exists());
    }
    ok(&koopred(&["featurize", "--config", cfg, "--data", "data/train.csv", "--n-states", "3", "--out", "feat"], dir.path()));
    let design = std::fs::read_to_string(dir.path().join("feat/design.csv")).unwrap();
    assert_eq!(design.lines().count(), 800 + 1);

    ok(&koopred(
        &["fit", "--data", "data/train.csv", "--n-states", "3", "--dictionary", "feat/dictionary.json", "--out", "m.json"],
        dir.path(),
    ));
    let reduced = ok(&koopred(&["reduce", "--model", "m.json", "--epsilon", "0.25"], dir.path()));
    let v: serde_json::Value = serde_json::from_str(&reduced).unwrap();
    let kept = v["kept"].as_array().unwrap();
    assert!(kept.len() >= 3 && kept.len() <= 8);
    assert_eq!(v["index_map"].as_array().unwrap().len(), 8);
    assert!(v["dictionary"]["observables"].is_array());

    let table = ok(&koopred(&["evaluate", "--model", "m.json", "--data", "data/test.csv"], dir.path()));
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("state,nmse"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3);
    for row in rows {
        let value: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert!(value.is_finite() && value >= 0.0);
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&koopred(&["--help"], d));
    assert_eq!(koopred(&["sweep", "--bogus"], d).status.code(), Some(1));
    assert_eq!(koopred(&["fly"], d).status.code(), Some(1));
    assert_eq!(koopred(&["sweep"], d).status.code(), Some(1), "missing config");
    let missing = koopred(&["evaluate", "--model", "nope.json", "--data", "x.csv"], d);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.json"));

    std::fs::write(d.join("bad.csv"), "x\n1\nfoo\n").unwrap();
    let bad = koopred(&["fit", "--data", "bad.csv", "--n-states", "1", "--method", "I"], d);
    assert_eq!(bad.status.code(), Some(2));
    assert_eq!(koopred(&["simulate", "--preset", "lorenz", "--snr", "nan"], d).status.code(), Some(1));
}

#[test]
fn shipped_configs_match_presets() {
    use koopred::harness::{usv_preset, wiener_hammerstein_preset, ExperimentConfig};
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for (file, preset) in [
        ("lorenz.json", lorenz_preset()),
        ("usv.json", usv_preset()),
        ("wiener_hammerstein.json", wiener_hammerstein_preset()),
    ] {
        assert_eq!(ExperimentConfig::load(root.join(file)).unwrap(), preset, "{file}");
    }
}
