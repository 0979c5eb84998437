//! Experiment configuration, loaded from JSON.

use std::path::{Path, PathBuf};

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::data::{load_csv, Dataset};
use crate::dictionary::DictionaryTemplate;
use crate::error::{Error, Result};
use crate::koopman::{Method, MethodSettings};
use crate::rng::{derive_seed, stream_rng};
use crate::systems::{
    excitation, simulate_lorenz, simulate_usv, simulate_wiener_hammerstein, Excitation, LorenzParams, UsvParams,
    WienerHammersteinParams,
};
use crate::vb::Priors;

use rand_distr::{Distribution, StandardNormal};

/// Where the training and test data come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    Lorenz {
        #[serde(default)]
        params: LorenzParams,
        x0: [f64; 3],
        dt: f64,
        train_steps: usize,
        test_steps: usize,
        /// Standard deviation of the Gaussian offset added to `x0` for each
        /// run's test trajectory.
        #[serde(default = "default_ic_perturbation")]
        test_ic_perturbation: f64,
        #[serde(default = "one")]
        substeps: usize,
    },
    Usv {
        #[serde(default)]
        params: UsvParams,
        #[serde(default)]
        x0: [f64; 3],
        dt: f64,
        train_steps: usize,
        test_steps: usize,
        #[serde(default)]
        excitation: Excitation,
        amplitude: f64,
        /// Constant thrust added to both channels.
        #[serde(default)]
        thrust_offset: f64,
        #[serde(default = "one")]
        substeps: usize,
    },
    WienerHammerstein {
        #[serde(default)]
        params: WienerHammersteinParams,
        train_steps: usize,
        test_steps: usize,
        #[serde(default)]
        excitation: Excitation,
        amplitude: f64,
    },
    Csv {
        train: PathBuf,
        test: PathBuf,
        n_states: usize,
        n_inputs: usize,
    },
}

fn one() -> usize {
    1
}

fn default_ic_perturbation() -> f64 {
    1.0
}

impl SystemSpec {
    /// Thresholded least-squares λ used when the config does not set one.
    pub fn default_stls_lambda(&self) -> f64 {
        match self {
            SystemSpec::Lorenz { .. } | SystemSpec::Csv { .. } => 0.05,
            SystemSpec::Usv { .. } => 0.005,
            SystemSpec::WienerHammerstein { .. } => 0.015,
        }
    }

    /// Noise-free training and test data for one Monte-Carlo run.
    pub fn generate(&self, run_seed: u64) -> Result<(Dataset, Dataset)> {
        match self {
            SystemSpec::Lorenz { params, x0, dt, train_steps, test_steps, test_ic_perturbation, substeps } => {
                let train = simulate_lorenz(params, *x0, *dt, *train_steps, *substeps)?;
                let mut rng = stream_rng(run_seed, TEST_IC_STREAM);
                let mut x0_test = *x0;
                for v in x0_test.iter_mut() {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    *v += test_ic_perturbation * e;
                }
                let test = simulate_lorenz(params, x0_test, *dt, *test_steps, *substeps)?;
                Ok((train, test))
            }
            SystemSpec::Usv { params, x0, dt, train_steps, test_steps, excitation: exc, amplitude, thrust_offset, substeps } => {
                let sim = |steps: usize, stream: u64| -> Result<Dataset> {
                    let mut u = excitation(exc, steps, 2, *amplitude, derive_seed(run_seed, stream))?;
                    u.add_scalar_mut(*thrust_offset);
                    simulate_usv(params, *x0, &u, *dt, steps, *substeps)
                };
                Ok((sim(*train_steps, TRAIN_INPUT_STREAM)?, sim(*test_steps, TEST_INPUT_STREAM)?))
            }
            SystemSpec::WienerHammerstein { params, train_steps, test_steps, excitation: exc, amplitude } => {
                let sim = |steps: usize, stream: u64| -> Result<Dataset> {
                    let u = excitation(exc, steps, 1, *amplitude, derive_seed(run_seed, stream))?;
                    simulate_wiener_hammerstein(params, &u, steps, derive_seed(run_seed, stream + 1))
                };
                Ok((sim(*train_steps, TRAIN_INPUT_STREAM)?, sim(*test_steps, TEST_INPUT_STREAM)?))
            }
            SystemSpec::Csv { train, test, n_states, n_inputs } => {
                Ok((load_csv(train, *n_states, *n_inputs)?, load_csv(test, *n_states, *n_inputs)?))
            }
        }
    }

    fn resolve_paths(&mut self, base: &Path) {
        if let SystemSpec::Csv { train, test, .. } = self {
            for p in [train, test] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
    }
}

const TEST_IC_STREAM: u64 = 11;
const TRAIN_INPUT_STREAM: u64 = 12;
const TEST_INPUT_STREAM: u64 = 14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSpec,
    pub dictionary: DictionaryTemplate,
    #[serde(default)]
    pub priors: Priors,
    #[serde(default = "all_methods")]
    pub methods: Vec<Method>,
    /// Measurement SNR levels in dB; `"inf"` means no added noise.
    #[serde(with = "snr_list")]
    pub snr_grid: Vec<f64>,
    pub mc_runs: usize,
    /// Thresholds for the reduced-size table.
    pub epsilon_grid: Vec<f64>,
    /// Threshold used to build the reduced dictionary that every method is
    /// refitted on; defaults to the first entry of `epsilon_grid`.
    #[serde(default)]
    pub reduce_epsilon: Option<f64>,
    #[serde(default)]
    pub stls_lambda: Option<f64>,
    #[serde(default = "default_stls_rounds")]
    pub stls_max_rounds: usize,
    #[serde(default = "default_sbl_iter")]
    pub sbl_max_iter: usize,
    #[serde(default = "default_sbl_tol")]
    pub sbl_tol: f64,
    #[serde(default)]
    pub seed: u64,
    /// Also add measurement noise to the test trajectory.
    #[serde(default = "yes")]
    pub noisy_test: bool,
    #[serde(default)]
    pub single_threaded: bool,
    /// Write run-0 models for every (method, dictionary, SNR).
    #[serde(default = "yes")]
    pub save_models: bool,
    /// Where `sweep` writes its tables when no `--out` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn all_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn default_stls_rounds() -> usize {
    MethodSettings::default().stls_max_rounds
}

fn default_sbl_iter() -> usize {
    MethodSettings::default().sbl_max_iter
}

fn default_sbl_tol() -> f64 {
    MethodSettings::default().sbl_tol
}

fn yes() -> bool {
    true
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mc_runs == 0 {
            return Err(Error::Config("mc_runs must be at least 1".into()));
        }
        if self.snr_grid.is_empty() || self.epsilon_grid.is_empty() {
            return Err(Error::Config("snr_grid and epsilon_grid must not be empty".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        if self.snr_grid.iter().any(|s| s.is_nan()) {
            return Err(Error::Config("SNR levels must be numbers or \"inf\"".into()));
        }
        for &e in self.epsilon_grid.iter().chain(self.reduce_epsilon.iter()) {
            if !(e > 0.0 && e < 1.0) {
                return Err(Error::Config(format!("threshold must lie in (0, 1), got {e}")));
            }
        }
        if let Some(l) = self.stls_lambda {
            if !(l >= 0.0) {
                return Err(Error::Config(format!("stls_lambda must be non-negative, got {l}")));
            }
        }
        self.priors.validate()
    }

    pub fn reduce_epsilon(&self) -> f64 {
        self.reduce_epsilon.unwrap_or(self.epsilon_grid[0])
    }

    pub fn method_settings(&self) -> MethodSettings {
        MethodSettings {
            stls_lambda: self.stls_lambda.unwrap_or_else(|| self.system.default_stls_lambda()),
            stls_max_rounds: self.stls_max_rounds,
            sbl_max_iter: self.sbl_max_iter,
            sbl_tol: self.sbl_tol,
            priors: self.priors.clone(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read a config file; data paths inside it are taken relative to the file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_json(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.system.resolve_paths(base);
        if let Some(dir) = &mut cfg.output_dir {
            if dir.is_relative() {
                *dir = base.join(&*dir);
            }
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// SNR values as JSON numbers, with `"inf"` for the noise-free level.
pub mod snr_list {
    use super::*;

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Level {
        Number(f64),
        Text(String),
    }

    pub fn parse(s: &str) -> Option<f64> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "+inf" | "infinity" | "noiseless" => Some(f64::INFINITY),
            other => other.parse().ok(),
        }
    }

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for x in v {
            if x.is_infinite() {
                seq.serialize_element("inf")?;
            } else {
                seq.serialize_element(x)?;
            }
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
        Vec::<Level>::deserialize(d)?
            .into_iter()
            .map(|l| match l {
                Level::Number(x) => Ok(x),
                Level::Text(t) => parse(&t).ok_or_else(|| de::Error::custom(format!("bad SNR level '{t}'"))),
            })
            .collect()
    }
}

/// Configuration approximating the attractor experiment: 23 observables
/// (3 states, 20 Gaussian kernels), 1 kHz sampling, 6 s of training data.
/// The inclusion prior leans towards exclusion (e = 0.1). Under a flat
/// Beta(1, 1) an uninformative kernel settles near γ = 0.5 and nothing is
/// pruned at ε = 0.01.
pub fn lorenz_preset() -> ExperimentConfig {
    ExperimentConfig {
        system: SystemSpec::Lorenz {
            params: LorenzParams::default(),
            x0: [-8.0, 7.0, 27.0],
            dt: 0.001,
            train_steps: 6000,
            test_steps: 3000,
            test_ic_perturbation: 1.0,
            substeps: 1,
        },
        dictionary: DictionaryTemplate {
            n_gaussian: 20,
            gaussian_exponents: vec![0.1, 1.0, 10.0, 100.0],
            n_periodic: 0,
            periodic_exponents: vec![],
            periodic_frequencies: vec![],
            embed_delays: 0,
            outputs: None,
        },
        priors: Priors { e: 0.1, ..Priors::default() },
        methods: all_methods(),
        snr_grid: vec![10.0, 20.0, 30.0, 40.0],
        mc_runs: 25,
        epsilon_grid: vec![0.01, 0.1, 0.25],
        reduce_epsilon: Some(0.01),
        stls_lambda: None,
        stls_max_rounds: default_stls_rounds(),
        sbl_max_iter: default_sbl_iter(),
        sbl_tol: default_sbl_tol(),
        seed: 0,
        noisy_test: true,
        single_threaded: false,
        save_models: true,
        output_dir: None,
    }
}

/// Surface-vehicle experiment: velocities plus one delay (6 embedded
/// coordinates) and 22 Gaussian kernels, 10 Hz for 200 s, 2 thrust inputs.
/// The hull is directionally unstable and holds a turn once it starts one, so
/// the thrusters are driven by a slow PRBS that steers both ways. A smooth
/// multisine leaves each record turning one way only and the test record
/// often turns the other.
pub fn usv_preset() -> ExperimentConfig {
    ExperimentConfig {
        system: SystemSpec::Usv {
            params: UsvParams::default(),
            x0: [0.0; 3],
            dt: 0.1,
            train_steps: 2000,
            test_steps: 1000,
            excitation: Excitation::Prbs { hold: 20 },
            amplitude: 10.0,
            thrust_offset: 10.0,
            substeps: 1,
        },
        dictionary: DictionaryTemplate {
            n_gaussian: 22,
            gaussian_exponents: vec![0.1, 1.0, 10.0],
            n_periodic: 0,
            periodic_exponents: vec![],
            periodic_frequencies: vec![],
            embed_delays: 1,
            outputs: None,
        },
        epsilon_grid: vec![0.25, 0.1, 0.5],
        reduce_epsilon: Some(0.25),
        ..lorenz_preset()
    }
}

/// Synthetic filter-saturation-filter cascade standing in for the
/// Wiener-Hammerstein benchmark: output plus 3 delays, 21 Gaussian and 21
/// periodic kernels (46 observables), one input, no added noise.
pub fn wiener_hammerstein_preset() -> ExperimentConfig {
    ExperimentConfig {
        system: SystemSpec::WienerHammerstein {
            params: WienerHammersteinParams::default(),
            train_steps: 2000,
            test_steps: 1000,
            excitation: Excitation::Multisine { n_tones: 12, max_freq: 0.1 },
            amplitude: 1.5,
        },
        dictionary: DictionaryTemplate {
            n_gaussian: 21,
            gaussian_exponents: vec![0.1, 1.0, 10.0],
            n_periodic: 21,
            periodic_exponents: vec![0.1, 1.0, 10.0],
            periodic_frequencies: vec![0.1, 1.0, 10.0],
            embed_delays: 3,
            outputs: None,
        },
        snr_grid: vec![f64::INFINITY],
        mc_runs: 1,
        epsilon_grid: vec![0.1],
        reduce_epsilon: Some(0.1),
        ..lorenz_preset()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip() {
        for cfg in [lorenz_preset(), usv_preset(), wiener_hammerstein_preset()] {
            cfg.validate().unwrap();
            let back = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn preset_sizes() {
        assert_eq!(lorenz_preset().dictionary.len(3), 23);
        assert_eq!(usv_preset().dictionary.len(3), 28);
        assert_eq!(wiener_hammerstein_preset().dictionary.len(1), 46);
    }

    #[test]
    fn snr_accepts_inf() {
        let mut v = serde_json::to_value(lorenz_preset()).unwrap();
        v["snr_grid"] = serde_json::json!([20, "inf"]);
        let cfg: ExperimentConfig = serde_json::from_value(v).unwrap();
        assert_eq!(cfg.snr_grid, vec![20.0, f64::INFINITY]);
    }

    #[test]
    fn rejects_bad_values() {
        let mut cfg = lorenz_preset();
        cfg.mc_runs = 0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = lorenz_preset();
        cfg.epsilon_grid = vec![1.5];
        assert!(cfg.validate().is_err());
        let text = lorenz_preset().to_json().unwrap().replacen("\"seed\"", "\"sead\"", 1);
        assert!(matches!(ExperimentConfig::from_json(&text), Err(Error::Config(_))));
    }

    #[test]
    fn csv_paths_relative_to_config() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = lorenz_preset();
        cfg.system = SystemSpec::Csv { train: "a.csv".into(), test: "b.csv".into(), n_states: 1, n_inputs: 0 };
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, cfg.to_json().unwrap()).unwrap();
        let loaded = ExperimentConfig::load(&path).unwrap();
        match loaded.system {
            SystemSpec::Csv { train, .. } => assert_eq!(train, dir.path().join("a.csv")),
            _ => unreachable!(),
        }
    }
}
