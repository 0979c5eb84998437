//! Monte-Carlo experiment driver: noise sweep, full versus reduced
//! dictionaries, four identification methods, NMSE tables with confidence
//! intervals, reduced-size tables and coefficient heatmaps.

pub mod config;
pub mod report;

use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{noisy_dataset, Dataset};
use crate::dictionary::{featurize, Design, Dictionary};
use crate::error::{Error, Result};
use crate::graphred::{ancestors, scc, threshold};
use crate::koopman::{identify, nmse_columns, KoopmanModel, Method, MethodSettings};
use crate::rng::derive_seed;

pub use config::{lorenz_preset, usv_preset, wiener_hammerstein_preset, ExperimentConfig, SystemSpec};
pub use report::{heatmap_csv, heatmap_export, write_outputs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DictKind {
    Full,
    Reduced,
}

impl fmt::Display for DictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DictKind::Full => "full",
            DictKind::Reduced => "reduced",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// Aggregated NMSE for one table cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmseRow {
    pub method: Method,
    pub snr_db: f64,
    pub dict: DictKind,
    pub split: Split,
    pub state: String,
    pub mean_nmse: f64,
    pub ci95: f64,
    pub n_ok: usize,
    pub n_fail: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeRow {
    pub snr_db: f64,
    pub epsilon: f64,
    pub run: usize,
    pub reduced_size: usize,
}

/// NMSE of one run; `nmse` is `None` when that run or fit failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub method: Method,
    pub snr_db: f64,
    pub dict: DictKind,
    pub split: Split,
    pub state: String,
    pub run: usize,
    pub nmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub method: Method,
    pub dict: DictKind,
    pub snr_db: f64,
    pub run: usize,
    pub model: KoopmanModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub nmse: Vec<NmseRow>,
    pub sizes: Vec<SizeRow>,
    pub runs: Vec<RunRow>,
    pub models: Vec<SavedModel>,
    /// Size of the full dictionary.
    pub full_size: usize,
    /// One message per failed run or fit.
    pub failures: Vec<String>,
}

impl SweepResult {
    pub fn row(&self, method: Method, snr_db: f64, dict: DictKind, split: Split, state: &str) -> Option<&NmseRow> {
        self.nmse.iter().find(|r| {
            r.method == method && same_level(r.snr_db, snr_db) && r.dict == dict && r.split == split && r.state == state
        })
    }

    /// Per-run NMSE values for one cell, indexed by run (`None` on failure).
    pub fn per_run(&self, method: Method, snr_db: f64, dict: DictKind, split: Split, state: &str) -> Vec<Option<f64>> {
        self.runs
            .iter()
            .filter(|r| {
                r.method == method && same_level(r.snr_db, snr_db) && r.dict == dict && r.split == split && r.state == state
            })
            .map(|r| r.nmse)
            .collect()
    }

    pub fn model(&self, method: Method, dict: DictKind, snr_db: Option<f64>) -> Option<&KoopmanModel> {
        self.models
            .iter()
            .find(|m| m.method == method && m.dict == dict && snr_db.map_or(true, |s| same_level(m.snr_db, s)))
            .map(|m| &m.model)
    }
}

fn same_level(a: f64, b: f64) -> bool {
    a == b || (a.is_nan() && b.is_nan())
}

/// Mean and normal-approximation 95% half-width `1.96·sd/√n` (sample sd);
/// the half-width is 0 for fewer than two values.
pub fn mean_ci95(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, 1.96 * var.sqrt() / (n as f64).sqrt())
}

/// Per-run seed.
pub fn run_seed(base: u64, run: usize) -> u64 {
    base.wrapping_add(run as u64)
}

struct Cell {
    method: Method,
    dict: DictKind,
    split: Split,
    values: Vec<f64>,
}

struct RunOutcome {
    snr_index: usize,
    run: usize,
    sizes: Vec<(f64, usize)>,
    cells: Vec<Cell>,
    failures: Vec<String>,
    models: Vec<(Method, DictKind, KoopmanModel)>,
    /// Every method failed because the run itself failed.
    fatal: bool,
}

/// Columns of a design restricted to the observables in `keep`.
fn restrict(design: &Design, keep: &[usize], n_obs: usize) -> Design {
    let regressors: Vec<usize> = keep.iter().copied().chain(n_obs..design.phi.ncols()).collect();
    Design { phi: design.phi.select_columns(&regressors), targets: design.targets.select_columns(keep) }
}

fn evaluate(model: &KoopmanModel, design: &Design) -> Result<Vec<f64>> {
    let pred = model.predict_design(design)?;
    let truth = &design.targets * model.c.transpose();
    nmse_columns(&truth, &pred)
}

const TRAIN_NOISE_STREAM: u64 = 1000;
const TEST_NOISE_STREAM: u64 = 1001;

struct RunContext<'a> {
    cfg: &'a ExperimentConfig,
    settings: MethodSettings,
    parallel_fits: bool,
}

impl RunContext<'_> {
    fn run(&self, snr_index: usize, run: usize) -> RunOutcome {
        let mut out = RunOutcome {
            snr_index,
            run,
            sizes: Vec::new(),
            cells: Vec::new(),
            failures: Vec::new(),
            models: Vec::new(),
            fatal: false,
        };
        if let Err(e) = self.run_inner(&mut out) {
            let snr = self.cfg.snr_grid[snr_index];
            out.failures.push(format!("snr {snr} run {run}: {e}"));
            out.fatal = true;
            out.cells.clear();
            out.sizes.clear();
            out.models.clear();
        }
        out
    }

    fn run_inner(&self, out: &mut RunOutcome) -> Result<()> {
        let cfg = self.cfg;
        let snr = cfg.snr_grid[out.snr_index];
        let seed = run_seed(cfg.seed, out.run);
        let (train_clean, test_clean) = cfg.system.generate(seed)?;
        // Keyed on the SNR value, so a run is reproducible whatever else is in the grid.
        let level = snr.to_bits();
        let train = noisy_dataset(&train_clean, snr, derive_seed(derive_seed(seed, TRAIN_NOISE_STREAM), level))?;
        let test = if cfg.noisy_test {
            noisy_dataset(&test_clean, snr, derive_seed(derive_seed(seed, TEST_NOISE_STREAM), level))?
        } else {
            test_clean
        };

        let dict = cfg.dictionary.build(&train, derive_seed(seed, 1))?;
        let l = dict.len();
        let train_design = featurize(&dict, &train)?;
        let test_design = featurize(&dict, &test)?;

        let inference = identify(Method::IV, &dict, &train_design, &self.settings, self.parallel_fits)?;
        let gamma = inference.gamma.clone().ok_or_else(|| Error::Numeric("missing inclusion matrix".into()))?;

        for &eps in &cfg.epsilon_grid {
            let kept = ancestors(&scc(&threshold(&gamma, eps)?), &dict.output_indices)?;
            out.sizes.push((eps, kept.len()));
        }
        let kept = ancestors(&scc(&threshold(&gamma, cfg.reduce_epsilon())?), &dict.output_indices)?;
        let (reduced, _) = dict.subset(&kept)?;
        let reduced_train = restrict(&train_design, &kept, l);
        let reduced_test = restrict(&test_design, &kept, l);

        for &method in &cfg.methods {
            for (kind, d, tr, te) in [
                (DictKind::Full, &dict, &train_design, &test_design),
                (DictKind::Reduced, &reduced, &reduced_train, &reduced_test),
            ] {
                let fitted = if method == Method::IV && kind == DictKind::Full {
                    Ok(inference.clone())
                } else {
                    identify(method, d, tr, &self.settings, self.parallel_fits)
                };
                let scored = fitted.and_then(|m| {
                    let a = evaluate(&m, tr)?;
                    let b = evaluate(&m, te)?;
                    Ok((m, a, b))
                });
                match scored {
                    Ok((m, a, b)) => {
                        out.cells.push(Cell { method, dict: kind, split: Split::Train, values: a });
                        out.cells.push(Cell { method, dict: kind, split: Split::Test, values: b });
                        if out.run == 0 && cfg.save_models {
                            out.models.push((method, kind, m));
                        }
                    }
                    Err(e) => out.failures.push(format!("snr {snr} run {} method {method} {kind}: {e}", out.run)),
                }
            }
        }
        Ok(())
    }
}

/// Names of the output states, taken from the noise-free run-0 training data.
fn output_names(cfg: &ExperimentConfig, train: &Dataset) -> Vec<String> {
    let names = train.state_names();
    let outputs = cfg.dictionary.outputs.clone().unwrap_or_else(|| (0..train.n_states()).collect());
    let dim = train.n_states();
    outputs
        .iter()
        .map(|&o| {
            let lag = o / dim;
            let base = names.get(o % dim).cloned().unwrap_or_else(|| format!("x{o}"));
            if lag == 0 {
                base
            } else {
                format!("{base}[-{lag}]")
            }
        })
        .collect()
}

/// Run the full Monte-Carlo sweep.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    if cfg.single_threaded {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        pool.install(|| sweep(cfg, false))
    } else {
        sweep(cfg, true)
    }
}

fn sweep(cfg: &ExperimentConfig, parallel: bool) -> Result<SweepResult> {
    let (train0, _) = cfg.system.generate(run_seed(cfg.seed, 0))?;
    let states = output_names(cfg, &train0);
    let full_size = cfg.dictionary.len(train0.n_states());
    let ctx = RunContext { cfg, settings: cfg.method_settings(), parallel_fits: parallel };

    let tasks: Vec<(usize, usize)> =
        (0..cfg.snr_grid.len()).flat_map(|s| (0..cfg.mc_runs).map(move |r| (s, r))).collect();
    let outcomes: Vec<RunOutcome> = if parallel {
        tasks.par_iter().map(|&(s, r)| ctx.run(s, r)).collect()
    } else {
        tasks.iter().map(|&(s, r)| ctx.run(s, r)).collect()
    };

    let mut result = SweepResult {
        nmse: Vec::new(),
        sizes: Vec::new(),
        runs: Vec::new(),
        models: Vec::new(),
        full_size,
        failures: Vec::new(),
    };
    for o in &outcomes {
        let snr_db = cfg.snr_grid[o.snr_index];
        for &(epsilon, reduced_size) in &o.sizes {
            result.sizes.push(SizeRow { snr_db, epsilon, run: o.run, reduced_size });
        }
        result.failures.extend(o.failures.iter().cloned());
    }
    for o in outcomes.iter().filter(|o| o.run == 0) {
        for (method, dict, model) in &o.models {
            result.models.push(SavedModel {
                method: *method,
                dict: *dict,
                snr_db: cfg.snr_grid[o.snr_index],
                run: 0,
                model: model.clone(),
            });
        }
    }

    for &method in &cfg.methods {
        for (snr_index, &snr_db) in cfg.snr_grid.iter().enumerate() {
            for dict in [DictKind::Full, DictKind::Reduced] {
                for split in [Split::Train, Split::Test] {
                    for (k, state) in states.iter().enumerate() {
                        let mut ok = Vec::new();
                        let mut n_fail = 0;
                        for o in outcomes.iter().filter(|o| o.snr_index == snr_index) {
                            let v = o
                                .cells
                                .iter()
                                .find(|c| c.method == method && c.dict == dict && c.split == split)
                                .and_then(|c| c.values.get(k).copied());
                            match v {
                                Some(v) => ok.push(v),
                                None => n_fail += 1,
                            }
                            result.runs.push(RunRow {
                                method,
                                snr_db,
                                dict,
                                split,
                                state: state.clone(),
                                run: o.run,
                                nmse: v,
                            });
                        }
                        let (mean_nmse, ci95) = mean_ci95(&ok);
                        result.nmse.push(NmseRow {
                            method,
                            snr_db,
                            dict,
                            split,
                            state: state.clone(),
                            mean_nmse,
                            ci95,
                            n_ok: ok.len(),
                            n_fail,
                        });
                    }
                }
            }
        }
    }
    for f in &result.failures {
        log::warn!("{f}");
    }
    Ok(result)
}

/// Reduced dictionary for a fitted model that carries an inclusion matrix.
pub fn reduce_model_dictionary(model: &KoopmanModel, epsilon: f64) -> Result<(Dictionary, Vec<Option<usize>>)> {
    let gamma = model
        .gamma
        .as_ref()
        .ok_or_else(|| Error::Config(format!("model from method {} has no inclusion matrix", model.method)))?;
    crate::graphred::reduce_dictionary(&model.dictionary, gamma, epsilon)
}

/// Heatmap rows for a dense matrix: `|value|` and an exact-zero flag.
pub fn abs_entries(m: &DMatrix<f64>) -> Vec<(usize, usize, f64, bool)> {
    let mut out = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let v = m[(r, c)];
            out.push((r, c, v.abs(), v == 0.0));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ci_of_known_values() {
        let (m, h) = mean_ci95(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((h - 1.96 * sd / 2.0).abs() < 1e-15);
        assert_eq!(mean_ci95(&[7.0]), (7.0, 0.0));
    }
}
