//! Command-line front end. `run` returns the process exit code: 0 on success,
//! 1 for usage or configuration errors, 2 for data and numeric failures.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::data::{load_csv, noisy_dataset, Dataset};
use crate::dictionary::{featurize, Dictionary, DictionaryTemplate};
use crate::error::{Error, Result};
use crate::harness::{self, report, DictKind, ExperimentConfig};
use crate::koopman::{fit_dataset, KoopmanModel, Method};
use crate::rng::derive_seed;

#[derive(Debug, Parser)]
#[command(name = "koopred", version, about = "Sparse Koopman identification and dictionary reduction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Base seed; overrides the one in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output file or directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    Lorenz,
    Usv,
    WienerHammerstein,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DictArg {
    Full,
    Reduced,
}

impl From<DictArg> for DictKind {
    fn from(d: DictArg) -> Self {
        match d {
            DictArg::Full => DictKind::Full,
            DictArg::Reduced => DictKind::Reduced,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the configured system; writes train.csv and test.csv.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Built-in system when no config is given.
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        /// Add measurement noise at this SNR (dB).
        #[arg(long)]
        snr: Option<f64>,
    },
    /// Build a dictionary from training data; writes dictionary.json and design.csv.
    Featurize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        n_states: usize,
        #[arg(long, default_value_t = 0)]
        n_inputs: usize,
        /// Reuse a saved dictionary instead of building one.
        #[arg(long)]
        dictionary: Option<PathBuf>,
    },
    /// Identify a Koopman model; writes model JSON.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        n_states: usize,
        #[arg(long, default_value_t = 0)]
        n_inputs: usize,
        /// Saved dictionary; otherwise built from the config template, or identity observables.
        #[arg(long)]
        dictionary: Option<PathBuf>,
        /// I (pinv), II (stls), III (sbl) or IV (spike-and-slab VB).
        #[arg(long, default_value = "IV")]
        method: Method,
        /// Threshold for method II.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Prune a method IV model's dictionary; writes the reduced dictionary and index map.
    Reduce {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        epsilon: f64,
    },
    /// One-step NMSE of a model on a dataset, one row per output state.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Monte-Carlo sweep over the config's SNR grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        single_threaded: bool,
    },
    /// |K| heatmap CSV for a model file or a sweep output directory.
    ExportHeatmap {
        #[command(flatten)]
        common: Common,
        #[arg(long, conflicts_with = "results")]
        model: Option<PathBuf>,
        /// Sweep output directory holding models/*.json.
        #[arg(long)]
        results: Option<PathBuf>,
        #[arg(long, default_value = "IV")]
        method: Method,
        #[arg(long, value_enum, default_value = "full")]
        dict: DictArg,
        /// SNR level of the saved model; the first one found if omitted.
        #[arg(long)]
        snr: Option<String>,
    },
}

/// Parse `args` (program name first) and execute; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                1
            } else {
                2
            }
        }
    }
}

fn load_config(common: &Common) -> Result<Option<ExperimentConfig>> {
    let Some(path) = &common.config else { return Ok(None) };
    let mut cfg = ExperimentConfig::load(input(path)?)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(Some(cfg))
}

fn require_config(common: &Common) -> Result<ExperimentConfig> {
    load_config(common)?.ok_or_else(|| Error::Config("--config is required".into()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, text)?;
        }
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Fail early, naming the path, when an input file cannot be read.
fn input(p: &Path) -> Result<&Path> {
    std::fs::metadata(p).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", p.display()))))?;
    Ok(p)
}

fn out_dir(common: &Common) -> Result<PathBuf> {
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn design_csv(dict: &Dictionary, data: &Dataset) -> Result<String> {
    let design = featurize(dict, data)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<String> = dict
        .regressor_labels()
        .into_iter()
        .chain(dict.labels().into_iter().map(|l| format!("next:{l}")))
        .collect();
    w.write_record(&header)?;
    for r in 0..design.phi.nrows() {
        let row: Vec<String> = design.phi.row(r).iter().chain(design.targets.row(r).iter()).map(|v| format!("{v:e}")).collect();
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

#[derive(Serialize)]
struct ReducedOutput {
    epsilon: f64,
    kept: Vec<usize>,
    /// New index of every original observable, `null` when dropped.
    index_map: Vec<Option<usize>>,
    dictionary: Dictionary,
}

fn build_dictionary(
    path: Option<&PathBuf>,
    template: Option<&DictionaryTemplate>,
    data: &Dataset,
    seed: u64,
) -> Result<Dictionary> {
    if let Some(p) = path {
        let dict: Dictionary = serde_json::from_str(&std::fs::read_to_string(input(p)?)?)?;
        dict.validate()?;
        return Ok(dict);
    }
    match template {
        Some(t) => t.build(data, derive_seed(seed, 1)),
        None => Ok(Dictionary::identity(data.n_states(), data.n_inputs())),
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Simulate { common, preset, snr } => {
            let cfg = match (load_config(&common)?, preset) {
                (Some(cfg), _) => cfg,
                (None, Some(p)) => {
                    let mut cfg = match p {
                        Preset::Lorenz => harness::lorenz_preset(),
                        Preset::Usv => harness::usv_preset(),
                        Preset::WienerHammerstein => harness::wiener_hammerstein_preset(),
                    };
                    cfg.seed = common.seed.unwrap_or(cfg.seed);
                    cfg
                }
                (None, None) => return Err(Error::Config("give --config or --preset".into())),
            };
            let (mut train, mut test) = cfg.system.generate(cfg.seed)?;
            if let Some(snr) = snr {
                train = noisy_dataset(&train, snr, derive_seed(cfg.seed, 1000))?;
                test = noisy_dataset(&test, snr, derive_seed(cfg.seed, 1001))?;
            }
            let dir = out_dir(&common)?;
            train.write_csv(dir.join("train.csv"))?;
            test.write_csv(dir.join("test.csv"))
        }
        Command::Featurize { common, data, n_states, n_inputs, dictionary } => {
            let cfg = load_config(&common)?;
            let seed = common.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
            let data = load_csv(input(&data)?, n_states, n_inputs)?;
            let dict = build_dictionary(dictionary.as_ref(), cfg.as_ref().map(|c| &c.dictionary), &data, seed)?;
            let dir = out_dir(&common)?;
            std::fs::write(dir.join("dictionary.json"), serde_json::to_string_pretty(&dict)?)?;
            std::fs::write(dir.join("design.csv"), design_csv(&dict, &data)?)?;
            Ok(())
        }
        Command::Fit { common, data, n_states, n_inputs, dictionary, method, lambda } => {
            let cfg = load_config(&common)?;
            let seed = common.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
            let mut settings = cfg.as_ref().map(|c| c.method_settings()).unwrap_or_default();
            if let Some(l) = lambda {
                if !(l >= 0.0) {
                    return Err(Error::Config(format!("--lambda must be non-negative, got {l}")));
                }
                settings.stls_lambda = l;
            }
            let data = load_csv(input(&data)?, n_states, n_inputs)?;
            let dict = build_dictionary(dictionary.as_ref(), cfg.as_ref().map(|c| &c.dictionary), &data, seed)?;
            let model = fit_dataset(method, &dict, &data, &settings, true)?;
            emit(Some(&common.out.unwrap_or_else(|| PathBuf::from("model.json"))), &model.to_json()?)
        }
        Command::Reduce { common, model, epsilon } => {
            let model = KoopmanModel::load(input(&model)?)?;
            let (dictionary, index_map) = harness::reduce_model_dictionary(&model, epsilon)?;
            let kept = index_map.iter().enumerate().filter(|(_, m)| m.is_some()).map(|(i, _)| i).collect();
            let out = ReducedOutput { epsilon, kept, index_map, dictionary };
            emit(common.out.as_deref(), &(serde_json::to_string_pretty(&out)? + "\n"))
        }
        Command::Evaluate { common, model, data } => {
            let model = KoopmanModel::load(input(&model)?)?;
            let data = load_csv(input(&data)?, model.dictionary.n_states, model.dictionary.n_inputs)?;
            let scores = model.evaluate(&data)?;
            let names = data.state_names();
            let labels = model.dictionary.labels();
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["state", "nmse"])?;
            for (k, v) in scores.iter().enumerate() {
                let o = model.dictionary.output_indices[k];
                let name = if o < names.len() { names[o].clone() } else { labels[o].clone() };
                w.write_record([name, format!("{v:e}")])?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            emit(common.out.as_deref(), &String::from_utf8(bytes).expect("csv output is UTF-8"))
        }
        Command::Sweep { common, single_threaded } => {
            let mut cfg = require_config(&common)?;
            cfg.single_threaded |= single_threaded;
            let dir = common
                .out
                .clone()
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("results"));
            let result = harness::run_sweep(&cfg)?;
            report::write_outputs(&result, &dir)?;
            if !result.failures.is_empty() {
                log::warn!("{} fits failed; see failures.txt", result.failures.len());
            }
            Ok(())
        }
        Command::ExportHeatmap { common, model, results, method, dict, snr } => {
            let model = match (model, results) {
                (Some(p), _) => KoopmanModel::load(input(&p)?)?,
                (None, Some(dir)) => {
                    let snr = snr
                        .map(|s| {
                            harness::config::snr_list::parse(&s).ok_or_else(|| Error::Config(format!("bad SNR level '{s}'")))
                        })
                        .transpose()?;
                    report::find_saved_model(&dir, method, dict.into(), snr)?
                }
                (None, None) => return Err(Error::Config("give --model or --results".into())),
            };
            emit(common.out.as_deref(), &report::heatmap_csv(&model)?)
        }
    }
}
