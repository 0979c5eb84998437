//! Time-series datasets: CSV ingestion, snapshot pairs and measurement noise.
//!
//! A [`Dataset`] holds `m + 1` state samples and `m` input samples taken at a
//! fixed sampling period. Inputs are applied between consecutive samples, so
//! the input row `k` drives the transition from state row `k` to `k + 1`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    states: DMatrix<f64>,
    inputs: DMatrix<f64>,
    dt: f64,
    column_names: Vec<String>,
}

impl Dataset {
    /// Build a dataset, checking row alignment, finiteness and `dt > 0`.
    ///
    /// `column_names` may be empty, in which case `x0.., u0..` are generated.
    pub fn new(
        states: DMatrix<f64>,
        inputs: DMatrix<f64>,
        dt: f64,
        column_names: Vec<String>,
    ) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Config(format!("sampling period must be positive, got {dt}")));
        }
        if states.nrows() < 2 {
            return Err(Error::InsufficientData(format!(
                "need at least 2 state rows, got {}",
                states.nrows()
            )));
        }
        let inputs = if inputs.ncols() == 0 {
            DMatrix::zeros(states.nrows() - 1, 0)
        } else {
            inputs
        };
        if inputs.nrows() + 1 != states.nrows() {
            return Err(Error::Dimension(format!(
                "{} state rows require {} input rows, got {}",
                states.nrows(),
                states.nrows() - 1,
                inputs.nrows()
            )));
        }
        check_finite(&states, 0)?;
        check_finite(&inputs, states.ncols())?;
        let n = states.ncols();
        let l = inputs.ncols();
        let column_names = if column_names.is_empty() {
            (0..n)
                .map(|j| format!("x{j}"))
                .chain((0..l).map(|j| format!("u{j}")))
                .collect()
        } else {
            column_names
        };
        if column_names.len() != n + l {
            return Err(Error::Dimension(format!(
                "{} column names for {} columns",
                column_names.len(),
                n + l
            )));
        }
        Ok(Dataset {
            states,
            inputs,
            dt,
            column_names,
        })
    }

    pub fn autonomous(states: DMatrix<f64>, dt: f64) -> Result<Self> {
        let m = states.nrows().saturating_sub(1);
        Self::new(states, DMatrix::zeros(m, 0), dt, Vec::new())
    }

    pub fn states(&self) -> &DMatrix<f64> {
        &self.states
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn state_names(&self) -> &[String] {
        &self.column_names[..self.n_states()]
    }

    pub fn n_states(&self) -> usize {
        self.states.ncols()
    }

    pub fn n_inputs(&self) -> usize {
        self.inputs.ncols()
    }

    /// Number of transitions `m` (one less than the number of state rows).
    pub fn n_transitions(&self) -> usize {
        self.inputs.nrows()
    }

    /// Same inputs and metadata, replaced state matrix.
    pub fn with_states(&self, states: DMatrix<f64>) -> Result<Self> {
        if states.shape() != self.states.shape() {
            return Err(Error::Dimension(format!(
                "replacement states {:?} vs {:?}",
                states.shape(),
                self.states.shape()
            )));
        }
        Self::new(states, self.inputs.clone(), self.dt, self.column_names.clone())
    }

    /// Serialize to the CSV format read by [`load_csv`].
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# dt={}", self.dt);
        out.push_str(&self.column_names.join(","));
        out.push('\n');
        let m = self.n_transitions();
        for k in 0..=m {
            let mut first = true;
            for j in 0..self.n_states() {
                if !first {
                    out.push(',');
                }
                first = false;
                let _ = write!(out, "{}", self.states[(k, j)]);
            }
            for j in 0..self.n_inputs() {
                out.push(',');
                if k < m {
                    let _ = write!(out, "{}", self.inputs[(k, j)]);
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}

fn check_finite(m: &DMatrix<f64>, col_offset: usize) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::Data {
                    row: i,
                    col: j + col_offset,
                    msg: format!("non-finite value {}", m[(i, j)]),
                });
            }
        }
    }
    Ok(())
}

/// Consecutive-sample pairs `(x[k], x[k+1], u[k])`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotPairs {
    pub x: DMatrix<f64>,
    pub x_next: DMatrix<f64>,
    pub u: DMatrix<f64>,
}

pub fn snapshot_pairs(d: &Dataset) -> SnapshotPairs {
    let m = d.n_transitions();
    SnapshotPairs {
        x: d.states.rows(0, m).into_owned(),
        x_next: d.states.rows(1, m).into_owned(),
        u: d.inputs.clone(),
    }
}

/// Read a dataset from CSV.
///
/// The first `n_states` columns are states and the next `n_inputs` are inputs;
/// further columns are ignored. Input cells on the final row are dropped (and
/// may be empty). A leading `# dt=<seconds>` line sets the sampling period,
/// which otherwise defaults to 1.
pub fn load_csv(path: impl AsRef<Path>, n_states: usize, n_inputs: usize) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text, n_states, n_inputs).map_err(|e| match e {
        Error::MalformedFile { line, msg, .. } => Error::MalformedFile {
            path: path.to_path_buf(),
            line,
            msg,
        },
        other => other,
    })
}

pub fn parse_csv(text: &str, n_states: usize, n_inputs: usize) -> Result<Dataset> {
    let malformed = |line: u64, msg: String| Error::MalformedFile {
        path: Default::default(),
        line,
        msg,
    };
    if n_states == 0 {
        return Err(Error::Config("n_states must be at least 1".into()));
    }
    let mut dt = 1.0;
    let mut body = text;
    let mut line_offset = 0u64;
    if let Some(first) = text.lines().next() {
        let trimmed = first.trim();
        if let Some(rest) = trimmed.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(v) = rest.strip_prefix("dt=") {
                dt = v
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| malformed(1, format!("bad dt value {v:?}: {e}")))?;
                if !(dt > 0.0) || !dt.is_finite() {
                    return Err(malformed(1, format!("dt must be positive, got {dt}")));
                }
            }
            body = &text[first.len()..];
            body = body.strip_prefix("\r\n").or_else(|| body.strip_prefix('\n')).unwrap_or(body);
            line_offset = 1;
        }
    }

    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let width = n_states + n_inputs;
    let headers = rdr
        .headers()
        .map_err(|e| malformed(line_offset + 1, e.to_string()))?
        .clone();
    if headers.len() < width {
        return Err(malformed(
            line_offset + 1,
            format!("header has {} columns, need {width}", headers.len()),
        ));
    }
    let names: Vec<String> = headers.iter().take(width).map(str::to_owned).collect();

    let mut rows: Vec<(u64, Vec<Option<f64>>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0) + line_offset;
            malformed(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0) + line_offset;
        if rec.len() < width {
            return Err(malformed(line, format!("{} fields, need {width}", rec.len())));
        }
        let mut vals = Vec::with_capacity(width);
        for (j, field) in rec.iter().take(width).enumerate() {
            if field.is_empty() && j >= n_states {
                vals.push(None);
                continue;
            }
            let v = field
                .parse::<f64>()
                .map_err(|_| malformed(line, format!("column {j}: cannot parse {field:?}")))?;
            if !v.is_finite() {
                return Err(Error::Data {
                    row: rows.len(),
                    col: j,
                    msg: format!("non-finite value {field:?} on line {line}"),
                });
            }
            vals.push(Some(v));
        }
        rows.push((line, vals));
    }
    if rows.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 rows, got {}",
            rows.len()
        )));
    }
    let m = rows.len() - 1;
    let mut states = DMatrix::zeros(m + 1, n_states);
    let mut inputs = DMatrix::zeros(m, n_inputs);
    for (k, (line, vals)) in rows.iter().enumerate() {
        for j in 0..n_states {
            states[(k, j)] = vals[j].expect("state cells are never empty");
        }
        if k < m {
            for j in 0..n_inputs {
                inputs[(k, j)] = vals[n_states + j]
                    .ok_or_else(|| malformed(*line, format!("empty input cell in column {}", n_states + j)))?;
            }
        }
    }
    Dataset::new(states, inputs, dt, names)
}

/// Mean squared deviation of each column from its mean.
pub fn column_power(x: &DMatrix<f64>) -> Vec<f64> {
    let rows = x.nrows() as f64;
    x.column_iter()
        .map(|c| {
            let mean = c.sum() / rows;
            c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / rows
        })
        .collect()
}

/// Add independent zero-mean Gaussian noise to every column of `x`.
///
/// Column `j` receives variance `power_j / 10^(snr_db / 10)`. An infinite SNR
/// returns `x` unchanged. Each column draws from its own seeded stream.
pub fn add_measurement_noise(x: &DMatrix<f64>, snr_db: f64, seed: u64) -> Result<DMatrix<f64>> {
    if snr_db == f64::INFINITY {
        return Ok(x.clone());
    }
    if !snr_db.is_finite() {
        return Err(Error::Config(format!("SNR must be finite or +inf, got {snr_db}")));
    }
    let power = column_power(x);
    let mut out = x.clone();
    for (j, &p) in power.iter().enumerate() {
        if p <= 0.0 {
            return Err(Error::DegenerateSignal { column: j });
        }
        let sd = (p / 10f64.powf(snr_db / 10.0)).sqrt();
        let mut rng = stream_rng(seed, j as u64);
        for i in 0..x.nrows() {
            let z: f64 = StandardNormal.sample(&mut rng);
            out[(i, j)] += sd * z;
        }
    }
    Ok(out)
}

/// Noise the states of a dataset, leaving inputs untouched.
pub fn noisy_dataset(d: &Dataset, snr_db: f64, seed: u64) -> Result<Dataset> {
    d.with_states(add_measurement_noise(d.states(), snr_db, seed)?)
}
