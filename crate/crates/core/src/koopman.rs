//! Lifted linear predictor `φ⁺ = K̂ᵀ[φ(x); u]`, `x = Cφ`, its identification
//! by any of the four methods, and the NMSE metric.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::baselines;
use crate::data::Dataset;
use crate::dictionary::{featurize, Design, Dictionary, ObservableSpec};
use crate::error::{Error, Result};
use crate::vb::{self, Priors};

/// Identification method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    /// Pseudoinverse least squares.
    I,
    /// Sequential thresholded least squares.
    II,
    /// Sparse Bayesian learning.
    III,
    /// Spike-and-slab variational Bayes.
    IV,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::I, Method::II, Method::III, Method::IV];

    pub fn name(self) -> &'static str {
        match self {
            Method::I => "I",
            Method::II => "II",
            Method::III => "III",
            Method::IV => "IV",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Method::I => "edmd-pinv",
            Method::II => "stls",
            Method::III => "sbl",
            Method::IV => "vb",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "i" | "1" | "edmd" | "edmd-pinv" | "pinv" => Ok(Method::I),
            "ii" | "2" | "stls" => Ok(Method::II),
            "iii" | "3" | "sbl" => Ok(Method::III),
            "iv" | "4" | "vb" => Ok(Method::IV),
            _ => Err(Error::Config(format!("unknown method '{s}'"))),
        }
    }
}

/// Solver settings shared by the four methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodSettings {
    pub stls_lambda: f64,
    pub stls_max_rounds: usize,
    pub sbl_max_iter: usize,
    pub sbl_tol: f64,
    pub priors: Priors,
}

impl Default for MethodSettings {
    fn default() -> Self {
        MethodSettings {
            stls_lambda: 0.05,
            stls_max_rounds: 10,
            sbl_max_iter: 1000,
            sbl_tol: 1e-6,
            priors: Priors::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KoopmanModel {
    pub dictionary: Dictionary,
    #[serde(with = "crate::matrix")]
    pub k_f_hat: DMatrix<f64>,
    /// Output selection, `n_out × L`.
    #[serde(with = "crate::matrix")]
    pub c: DMatrix<f64>,
    /// Per-target noise precisions (variational Bayes only).
    #[serde(default)]
    pub rho_hats: Option<Vec<f64>>,
    /// Posterior inclusion probabilities (variational Bayes only).
    #[serde(default, with = "crate::matrix::option")]
    pub gamma: Option<DMatrix<f64>>,
    pub method: Method,
}

/// Selection matrix picking `outputs` out of `len` observables.
pub fn selection_matrix(outputs: &[usize], len: usize) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(outputs.len(), len);
    for (r, &o) in outputs.iter().enumerate() {
        c[(r, o)] = 1.0;
    }
    c
}

impl KoopmanModel {
    pub fn new(dictionary: Dictionary, k_f_hat: DMatrix<f64>, method: Method) -> Result<Self> {
        let c = selection_matrix(&dictionary.output_indices, dictionary.len());
        let m = KoopmanModel { dictionary, k_f_hat, c, rho_hats: None, gamma: None, method };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        self.dictionary.validate()?;
        let l = self.dictionary.len();
        let rows = l + self.dictionary.n_inputs;
        if self.k_f_hat.shape() != (rows, l) {
            return Err(Error::Dimension(format!(
                "Koopman matrix is {:?}, dictionary needs ({rows}, {l})",
                self.k_f_hat.shape()
            )));
        }
        if self.c != selection_matrix(&self.dictionary.output_indices, l) {
            return Err(Error::Dimension("output matrix does not select the dictionary outputs".into()));
        }
        if let Some(r) = &self.rho_hats {
            if r.len() != l {
                return Err(Error::Dimension(format!("{} noise precisions for {l} targets", r.len())));
            }
        }
        if let Some(g) = &self.gamma {
            if g.shape() != (rows, l) {
                return Err(Error::Dimension(format!("inclusion matrix is {:?}", g.shape())));
            }
        }
        Ok(())
    }

    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }

    /// Propagate a lifted vector one step.
    pub fn step_lifted(&self, phi: &DVector<f64>, u: &[f64]) -> Result<DVector<f64>> {
        let l = self.dictionary.len();
        if phi.len() != l || u.len() != self.dictionary.n_inputs {
            return Err(Error::Dimension(format!(
                "expected {l} observables and {} inputs, got {} and {}",
                self.dictionary.n_inputs,
                phi.len(),
                u.len()
            )));
        }
        let top = self.k_f_hat.rows(0, l).tr_mul(phi);
        let bottom = self.k_f_hat.rows(l, u.len()).tr_mul(&DVector::from_column_slice(u));
        Ok(top + bottom)
    }

    /// One prediction step from an (embedded) state: returns the next lifted
    /// vector and the predicted outputs.
    pub fn one_step(&self, x: &[f64], u: &[f64]) -> Result<(DVector<f64>, DVector<f64>)> {
        let phi = self.dictionary.evaluate(x)?;
        let next = self.step_lifted(&phi, u)?;
        let out = &self.c * &next;
        Ok((next, out))
    }

    /// For each embedded-state coordinate, the identity observable carrying it.
    fn state_observables(&self) -> Result<Vec<usize>> {
        let mut map = vec![None; self.dictionary.state_dim()];
        for (k, o) in self.dictionary.observables.iter().enumerate() {
            if let ObservableSpec::Identity { state_index } = o {
                map[*state_index].get_or_insert(k);
            }
        }
        map.into_iter()
            .enumerate()
            .map(|(i, m)| {
                m.ok_or_else(|| Error::Config(format!("state coordinate {i} has no identity observable; cannot re-lift")))
            })
            .collect()
    }

    /// Multi-step prediction from `x0`. `inputs` holds one row per step (it
    /// may have zero columns for autonomous models). By default the lifted
    /// vector is propagated linearly; with `relift` the state is read back
    /// from the identity observables and lifted again at each step.
    pub fn rollout(
        &self,
        x0: &[f64],
        inputs: &DMatrix<f64>,
        horizon: usize,
        relift: bool,
    ) -> Result<DMatrix<f64>> {
        let n_in = self.dictionary.n_inputs;
        if inputs.ncols() != n_in {
            return Err(Error::Dimension(format!("inputs have {} columns, model needs {n_in}", inputs.ncols())));
        }
        if n_in > 0 && inputs.nrows() < horizon {
            return Err(Error::Dimension(format!("horizon {horizon} exceeds {} input rows", inputs.nrows())));
        }
        let readback = if relift { Some(self.state_observables()?) } else { None };
        let mut phi = self.dictionary.evaluate(x0)?;
        let mut out = DMatrix::zeros(horizon, self.n_outputs());
        let mut u = vec![0.0; n_in];
        for k in 0..horizon {
            for (c, v) in u.iter_mut().enumerate() {
                *v = inputs[(k, c)];
            }
            phi = self.step_lifted(&phi, &u)?;
            if phi.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { step: k });
            }
            out.row_mut(k).copy_from(&(&self.c * &phi).transpose());
            if let Some(idx) = &readback {
                let x: Vec<f64> = idx.iter().map(|&i| phi[i]).collect();
                phi = self.dictionary.evaluate(&x)?;
            }
        }
        Ok(out)
    }

    /// One-step predictions of the outputs over a design: row `k` predicts
    /// the outputs at transition `k`.
    pub fn predict_design(&self, design: &Design) -> Result<DMatrix<f64>> {
        if design.phi.ncols() != self.k_f_hat.nrows() {
            return Err(Error::Dimension(format!(
                "design has {} regressors, model {}",
                design.phi.ncols(),
                self.k_f_hat.nrows()
            )));
        }
        Ok(&design.phi * (&self.k_f_hat * self.c.transpose()))
    }

    /// Measured and one-step predicted outputs over a dataset.
    pub fn one_step_predictions(&self, data: &Dataset) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let design = featurize(&self.dictionary, data)?;
        let pred = self.predict_design(&design)?;
        let truth = &design.targets * self.c.transpose();
        Ok((truth, pred))
    }

    /// Per-output one-step NMSE on a dataset.
    pub fn evaluate(&self, data: &Dataset) -> Result<Vec<f64>> {
        let (truth, pred) = self.one_step_predictions(data)?;
        nmse_columns(&truth, &pred)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: KoopmanModel = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// `‖truth − pred‖² / ‖truth − mean(truth)‖²`.
pub fn nmse(truth: &[f64], pred: &[f64]) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(Error::Dimension(format!("{} true values, {} predictions", truth.len(), pred.len())));
    }
    if truth.len() < 2 {
        return Err(Error::InsufficientData("NMSE needs at least two samples".into()));
    }
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let spread: f64 = truth.iter().map(|v| (v - mean).powi(2)).sum();
    if !(spread > 0.0) {
        return Err(Error::DegenerateMetric("true signal is constant".into()));
    }
    let err: f64 = truth.iter().zip(pred).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(err / spread)
}

/// [`nmse`] for each column.
pub fn nmse_columns(truth: &DMatrix<f64>, pred: &DMatrix<f64>) -> Result<Vec<f64>> {
    if truth.shape() != pred.shape() {
        return Err(Error::Dimension(format!("{:?} vs {:?}", truth.shape(), pred.shape())));
    }
    (0..truth.ncols())
        .map(|j| nmse(truth.column(j).as_slice(), pred.column(j).as_slice()))
        .collect()
}

/// Identify a model for `dict` from its design matrix.
pub fn identify(
    method: Method,
    dict: &Dictionary,
    design: &Design,
    settings: &MethodSettings,
    parallel: bool,
) -> Result<KoopmanModel> {
    let (phi, t) = (&design.phi, &design.targets);
    let mut model = match method {
        Method::I => KoopmanModel::new(dict.clone(), baselines::edmd_pinv(phi, t)?, method)?,
        Method::II => KoopmanModel::new(
            dict.clone(),
            baselines::stls(phi, t, settings.stls_lambda, settings.stls_max_rounds)?,
            method,
        )?,
        Method::III => KoopmanModel::new(
            dict.clone(),
            baselines::sbl_matrix(phi, t, settings.sbl_max_iter, settings.sbl_tol)?,
            method,
        )?,
        Method::IV => {
            let fit = vb::fit_all_with(phi, t, &settings.priors, parallel)?;
            let mut m = KoopmanModel::new(dict.clone(), fit.k_f_hat, method)?;
            m.rho_hats = Some(fit.rho_hats);
            m.gamma = Some(fit.gamma);
            m
        }
    };
    model.validate()?;
    if model.k_f_hat.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("method {method} produced non-finite coefficients")));
    }
    model.method = method;
    Ok(model)
}

/// Featurize `data` with `dict` and identify a model.
pub fn fit_dataset(
    method: Method,
    dict: &Dictionary,
    data: &Dataset,
    settings: &MethodSettings,
    parallel: bool,
) -> Result<KoopmanModel> {
    let design = featurize(dict, data)?;
    identify(method, dict, &design, settings, parallel)
}
