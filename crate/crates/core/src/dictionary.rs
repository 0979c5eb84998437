//! Observable dictionaries and the EDMD design matrix.
//!
//! Observable order is significant: it fixes the row/column order of the
//! inclusion matrix and of the Koopman matrix. Dictionaries built from a
//! [`DictionaryTemplate`] list identities first (current state, then delayed
//! copies), then Gaussian RBFs in center order, then periodic RBFs.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{snapshot_pairs, Dataset, SnapshotPairs};
use crate::error::{Error, Result};
use crate::rng::stream_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservableSpec {
    Identity {
        state_index: usize,
    },
    GaussianRbf {
        center: Vec<f64>,
        exponent_coeff: f64,
    },
    PeriodicRbf {
        center: Vec<f64>,
        exponent_coeff: f64,
        frequency: f64,
    },
}

impl ObservableSpec {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            ObservableSpec::Identity { state_index } => x[*state_index],
            ObservableSpec::GaussianRbf {
                center,
                exponent_coeff,
            } => (-exponent_coeff * sq_dist(x, center)).exp(),
            ObservableSpec::PeriodicRbf {
                center,
                exponent_coeff,
                frequency,
            } => {
                let s = (PI * frequency * sq_dist(x, center).sqrt()).sin();
                (-exponent_coeff * s * s).exp()
            }
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, ObservableSpec::Identity { .. })
    }

    /// Short human-readable label used in heatmaps and reports.
    pub fn label(&self) -> String {
        match self {
            ObservableSpec::Identity { state_index } => format!("id[{state_index}]"),
            ObservableSpec::GaussianRbf { exponent_coeff, .. } => format!("rbf(c={exponent_coeff})"),
            ObservableSpec::PeriodicRbf {
                exponent_coeff,
                frequency,
                ..
            } => format!("prbf(c={exponent_coeff},f={frequency})"),
        }
    }

    fn validate(&self, state_dim: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        match self {
            ObservableSpec::Identity { state_index } if *state_index >= state_dim => {
                bad(format!("identity index {state_index} out of range for dimension {state_dim}"))
            }
            ObservableSpec::GaussianRbf {
                center,
                exponent_coeff,
            } => {
                if center.len() != state_dim {
                    return bad(format!("center has dimension {}, expected {state_dim}", center.len()));
                }
                if !(*exponent_coeff > 0.0) || !exponent_coeff.is_finite() {
                    return bad(format!("exponent coefficient must be positive, got {exponent_coeff}"));
                }
                Ok(())
            }
            ObservableSpec::PeriodicRbf {
                center,
                exponent_coeff,
                frequency,
            } => {
                if center.len() != state_dim {
                    return bad(format!("center has dimension {}, expected {state_dim}", center.len()));
                }
                if !(*exponent_coeff > 0.0) || !exponent_coeff.is_finite() {
                    return bad(format!("exponent coefficient must be positive, got {exponent_coeff}"));
                }
                if !(*frequency > 0.0) || !frequency.is_finite() {
                    return bad(format!("frequency must be positive, got {frequency}"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dictionary {
    pub observables: Vec<ObservableSpec>,
    /// Indices (0-based) of the observables read out as model outputs.
    pub output_indices: Vec<usize>,
    /// Raw state dimension before delay embedding.
    pub n_states: usize,
    pub n_inputs: usize,
    #[serde(default)]
    pub embed_delays: usize,
}

impl Dictionary {
    pub fn new(
        observables: Vec<ObservableSpec>,
        output_indices: Vec<usize>,
        n_states: usize,
        n_inputs: usize,
        embed_delays: usize,
    ) -> Result<Self> {
        let d = Dictionary {
            observables,
            output_indices,
            n_states,
            n_inputs,
            embed_delays,
        };
        d.validate()?;
        Ok(d)
    }

    /// Identity observables on every raw state, all of them outputs.
    pub fn identity(n_states: usize, n_inputs: usize) -> Self {
        Dictionary {
            observables: (0..n_states)
                .map(|state_index| ObservableSpec::Identity { state_index })
                .collect(),
            output_indices: (0..n_states).collect(),
            n_states,
            n_inputs,
            embed_delays: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.observables.is_empty() {
            return Err(Error::Config("dictionary has no observables".into()));
        }
        let dim = self.state_dim();
        for o in &self.observables {
            o.validate(dim)?;
        }
        if self.output_indices.is_empty() {
            return Err(Error::Config("dictionary has no outputs".into()));
        }
        let mut seen = vec![false; self.len()];
        for &k in &self.output_indices {
            match self.observables.get(k) {
                Some(o) if o.is_identity() => {}
                Some(_) => {
                    return Err(Error::Config(format!("output {k} is not an identity observable")))
                }
                None => return Err(Error::Config(format!("output index {k} out of range"))),
            }
            if std::mem::replace(&mut seen[k], true) {
                return Err(Error::Config(format!("duplicate output index {k}")));
            }
        }
        Ok(())
    }

    /// Number of observables `L`.
    pub fn len(&self) -> usize {
        self.observables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observables.is_empty()
    }

    /// Dimension of the (possibly delay-embedded) state the observables act on.
    pub fn state_dim(&self) -> usize {
        self.n_states * (self.embed_delays + 1)
    }

    pub fn labels(&self) -> Vec<String> {
        self.observables.iter().map(ObservableSpec::label).collect()
    }

    /// Row labels of a Koopman/inclusion matrix: observables then inputs.
    pub fn regressor_labels(&self) -> Vec<String> {
        let mut v = self.labels();
        v.extend((0..self.n_inputs).map(|j| format!("u[{j}]")));
        v
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.state_dim() {
            return Err(Error::Dimension(format!(
                "state has dimension {}, dictionary expects {}",
                x.len(),
                self.state_dim()
            )));
        }
        Ok(DVector::from_iterator(
            self.len(),
            self.observables.iter().map(|o| o.eval(x)),
        ))
    }

    /// Keep the observables at `keep` (ascending, deduplicated), remapping outputs.
    /// Returns the new dictionary and the old→new index map.
    pub fn subset(&self, keep: &[usize]) -> Result<(Dictionary, Vec<Option<usize>>)> {
        let mut index_map = vec![None; self.len()];
        let mut observables = Vec::with_capacity(keep.len());
        for &k in keep {
            if k >= self.len() {
                return Err(Error::Config(format!("index {k} out of range")));
            }
            if index_map[k].is_none() {
                index_map[k] = Some(observables.len());
                observables.push(self.observables[k].clone());
            }
        }
        let output_indices = self
            .output_indices
            .iter()
            .map(|&k| {
                index_map[k].ok_or_else(|| Error::Config(format!("output {k} not retained")))
            })
            .collect::<Result<Vec<_>>>()?;
        let d = Dictionary::new(
            observables,
            output_indices,
            self.n_states,
            self.n_inputs,
            self.embed_delays,
        )?;
        Ok((d, index_map))
    }
}

/// EDMD regression data: `phi = [Φ' | U]` and the target matrix whose column
/// `j` holds observable `j` evaluated on the next states.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub phi: DMatrix<f64>,
    pub targets: DMatrix<f64>,
}

impl Design {
    pub fn target(&self, j: usize) -> DVector<f64> {
        self.targets.column(j).into_owned()
    }
}

pub fn design_matrix(dict: &Dictionary, pairs: &SnapshotPairs) -> Result<Design> {
    let m = pairs.x.nrows();
    let dim = dict.state_dim();
    if pairs.x.ncols() != dim || pairs.x_next.ncols() != dim {
        return Err(Error::Dimension(format!(
            "snapshots have dimension {}, dictionary expects {dim}",
            pairs.x.ncols()
        )));
    }
    if pairs.u.ncols() != dict.n_inputs {
        return Err(Error::Dimension(format!(
            "data has {} inputs, dictionary expects {}",
            pairs.u.ncols(),
            dict.n_inputs
        )));
    }
    let l_obs = dict.len();
    let mut phi = DMatrix::zeros(m, l_obs + dict.n_inputs);
    let mut targets = DMatrix::zeros(m, l_obs);
    let mut buf = vec![0.0; dim];
    let mut buf_next = vec![0.0; dim];
    for i in 0..m {
        for c in 0..dim {
            buf[c] = pairs.x[(i, c)];
            buf_next[c] = pairs.x_next[(i, c)];
        }
        for (j, o) in dict.observables.iter().enumerate() {
            let v = o.eval(&buf);
            let w = o.eval(&buf_next);
            if !v.is_finite() {
                return Err(Error::NonFiniteObservable { row: i, observable: j });
            }
            if !w.is_finite() {
                return Err(Error::NonFiniteObservable { row: i + 1, observable: j });
            }
            phi[(i, j)] = v;
            targets[(i, j)] = w;
        }
        for j in 0..dict.n_inputs {
            phi[(i, l_obs + j)] = pairs.u[(i, j)];
        }
    }
    Ok(Design { phi, targets })
}

/// Delay-embed (if the dictionary asks for it) and build the design matrix.
pub fn featurize(dict: &Dictionary, data: &Dataset) -> Result<Design> {
    let embedded = delay_embed(data, dict.embed_delays)?;
    design_matrix(dict, &snapshot_pairs(&embedded))
}

/// Stack each state with its `delays` predecessors: row `k` of the output is
/// `[x[k], x[k-1], ..., x[k-delays]]`. The first `delays` rows are dropped.
pub fn delay_embed(d: &Dataset, delays: usize) -> Result<Dataset> {
    if delays == 0 {
        return Ok(d.clone());
    }
    let rows = d.states().nrows();
    if rows < delays + 2 {
        return Err(Error::InsufficientData(format!(
            "{rows} rows cannot be embedded with {delays} delays"
        )));
    }
    let n = d.n_states();
    let out_rows = rows - delays;
    let states = DMatrix::from_fn(out_rows, n * (delays + 1), |k, c| {
        let lag = c / n;
        d.states()[(k + delays - lag, c % n)]
    });
    let inputs = d.inputs().rows(delays, out_rows - 1).into_owned();
    let base = d.state_names();
    let mut names: Vec<String> = (0..=delays)
        .flat_map(|lag| {
            base.iter().map(move |b| {
                if lag == 0 {
                    b.clone()
                } else {
                    format!("{b}[-{lag}]")
                }
            })
        })
        .collect();
    names.extend_from_slice(&d.column_names()[n..]);
    Dataset::new(states, inputs, d.dt(), names)
}

/// Result of Lloyd's algorithm.
#[derive(Debug, Clone)]
pub struct KMeans {
    pub centers: Vec<Vec<f64>>,
    /// Sum of squared distances to the nearest center after each assignment.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

pub const KMEANS_MAX_ROUNDS: usize = 300;

pub fn kmeans_centers(x: &DMatrix<f64>, k: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    Ok(kmeans(x, k, seed)?.centers)
}

/// k-means++ seeding followed by Lloyd iterations until the assignment stops
/// changing or [`KMEANS_MAX_ROUNDS`] is reached.
pub fn kmeans(x: &DMatrix<f64>, k: usize, seed: u64) -> Result<KMeans> {
    let m = x.nrows();
    if k == 0 {
        return Err(Error::Config("cluster count must be positive".into()));
    }
    if k > m {
        return Err(Error::Config(format!("cluster count {k} exceeds {m} points")));
    }
    let dim = x.ncols();
    let points: Vec<Vec<f64>> = (0..m).map(|i| x.row(i).iter().copied().collect()).collect();
    let mut rng = stream_rng(seed, 0x6b6d);

    // k-means++ seeding
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut chosen = vec![false; m];
    let first = rng.gen_range(0..m);
    chosen[first] = true;
    centers.push(points[first].clone());
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                if target < w {
                    pick = Some(i);
                    break;
                }
                target -= w;
            }
            // Rounding can run off the end; fall back to the last positive weight.
            pick.or_else(|| d2.iter().rposition(|&w| w > 0.0)).unwrap()
        } else {
            (0..m).find(|&i| !chosen[i]).unwrap()
        };
        chosen[next] = true;
        centers.push(points[next].clone());
        let c = centers.last().unwrap();
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, c));
        }
    }

    let mut assign = vec![usize::MAX; m];
    let mut trace = Vec::new();
    let mut iterations = 0;
    for round in 0..KMEANS_MAX_ROUNDS {
        iterations = round + 1;
        let mut changed = false;
        let mut objective = 0.0;
        let mut dist = vec![0.0; m];
        for (i, p) in points.iter().enumerate() {
            let (best, bd) = nearest(p, &centers);
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
            dist[i] = bd;
            objective += bd;
        }
        trace.push(objective);
        if !changed && round > 0 {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            counts[assign[i]] += 1;
            for (s, v) in sums[assign[i]].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            } else {
                // Empty cluster: re-seed from the point farthest from its center.
                let far = (0..m)
                    .max_by(|&a, &b| dist[a].total_cmp(&dist[b]))
                    .unwrap();
                centers[c] = points[far].clone();
                dist[far] = 0.0;
            }
        }
    }
    Ok(KMeans {
        centers,
        objective_trace: trace,
        iterations,
    })
}

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = 0;
    let mut bd = f64::INFINITY;
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(p, center);
        if d < bd {
            bd = d;
            best = c;
        }
    }
    (best, bd)
}

/// Recipe for a dictionary whose RBF centers are fitted to training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictionaryTemplate {
    #[serde(default)]
    pub n_gaussian: usize,
    /// Exponent coefficients, assigned to centers cyclically.
    #[serde(default)]
    pub gaussian_exponents: Vec<f64>,
    #[serde(default)]
    pub n_periodic: usize,
    #[serde(default)]
    pub periodic_exponents: Vec<f64>,
    #[serde(default)]
    pub periodic_frequencies: Vec<f64>,
    #[serde(default)]
    pub embed_delays: usize,
    /// Output observable indices; defaults to the identities of the current state.
    #[serde(default)]
    pub outputs: Option<Vec<usize>>,
}

impl DictionaryTemplate {
    /// Number of observables the template produces for `n_states` raw states.
    pub fn len(&self, n_states: usize) -> usize {
        n_states * (self.embed_delays + 1) + self.n_gaussian + self.n_periodic
    }

    /// Cluster the (embedded) training states and assemble the dictionary.
    pub fn build(&self, train: &Dataset, seed: u64) -> Result<Dictionary> {
        if self.n_gaussian > 0 && self.gaussian_exponents.is_empty() {
            return Err(Error::Config("gaussian_exponents must not be empty".into()));
        }
        if self.n_periodic > 0
            && (self.periodic_exponents.is_empty() || self.periodic_frequencies.is_empty())
        {
            return Err(Error::Config(
                "periodic_exponents and periodic_frequencies must not be empty".into(),
            ));
        }
        let embedded = delay_embed(train, self.embed_delays)?;
        let xs = embedded.states();
        let dim = xs.ncols();
        let mut obs: Vec<ObservableSpec> = (0..dim)
            .map(|state_index| ObservableSpec::Identity { state_index })
            .collect();
        if self.n_gaussian > 0 {
            let centers = kmeans_centers(xs, self.n_gaussian, seed)?;
            for (i, center) in centers.into_iter().enumerate() {
                obs.push(ObservableSpec::GaussianRbf {
                    center,
                    exponent_coeff: self.gaussian_exponents[i % self.gaussian_exponents.len()],
                });
            }
        }
        if self.n_periodic > 0 {
            let centers = kmeans_centers(xs, self.n_periodic, seed.wrapping_add(1))?;
            for (i, center) in centers.into_iter().enumerate() {
                obs.push(ObservableSpec::PeriodicRbf {
                    center,
                    exponent_coeff: self.periodic_exponents[i % self.periodic_exponents.len()],
                    frequency: self.periodic_frequencies
                        [(i / self.periodic_exponents.len()) % self.periodic_frequencies.len()],
                });
            }
        }
        let outputs = self
            .outputs
            .clone()
            .unwrap_or_else(|| (0..train.n_states()).collect());
        Dictionary::new(
            obs,
            outputs,
            train.n_states(),
            train.n_inputs(),
            self.embed_delays,
        )
    }
}
