//! Reference simulators and excitation signals.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// States beyond this magnitude count as a diverged integration.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// One classic Runge-Kutta step of `ẋ = f(x, u)` with `u` held constant.
pub fn rk4_step<F>(f: &F, x: &[f64], u: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64], &[f64]) -> Vec<f64>,
{
    let shifted = |base: &[f64], k: &[f64], s: f64| -> Vec<f64> {
        base.iter().zip(k).map(|(b, k)| b + s * k).collect()
    };
    let k1 = f(x, u);
    let k2 = f(&shifted(x, &k1, h / 2.0), u);
    let k3 = f(&shifted(x, &k2, h / 2.0), u);
    let k4 = f(&shifted(x, &k3, h), u);
    x.iter()
        .enumerate()
        .map(|(i, xi)| xi + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Integrate `n_steps` sampling intervals of length `dt`, each split into
/// `substeps` RK4 steps. Row `k` of the result is the state after `k` intervals.
fn integrate<F>(f: F, x0: &[f64], inputs: &DMatrix<f64>, dt: f64, n_steps: usize, substeps: usize) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64], &[f64]) -> Vec<f64>,
{
    if !(dt > 0.0) {
        return Err(Error::Config(format!("sampling period must be positive, got {dt}")));
    }
    if n_steps == 0 {
        return Err(Error::Config("need at least one step".into()));
    }
    let substeps = substeps.max(1);
    let h = dt / substeps as f64;
    let n = x0.len();
    let mut out = DMatrix::zeros(n_steps + 1, n);
    let mut x = x0.to_vec();
    out.row_mut(0).copy_from_slice(&x);
    let mut u = vec![0.0; inputs.ncols()];
    for k in 0..n_steps {
        for (c, v) in u.iter_mut().enumerate() {
            *v = inputs[(k, c)];
        }
        for _ in 0..substeps {
            x = rk4_step(&f, &x, &u, h);
        }
        if x.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT) {
            return Err(Error::Divergence { step: k + 1 });
        }
        out.row_mut(k + 1).copy_from_slice(&x);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LorenzParams {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
}

impl Default for LorenzParams {
    fn default() -> Self {
        LorenzParams { sigma: 10.0, rho: 28.0, beta: 8.0 / 3.0 }
    }
}

pub fn lorenz_rhs(p: &LorenzParams, s: &[f64]) -> Vec<f64> {
    let (x, y, z) = (s[0], s[1], s[2]);
    vec![p.sigma * (y - x), x * (p.rho - z) - y, x * y - p.beta * z]
}

/// Lorenz trajectory with `n_steps + 1` samples starting at `x0`.
pub fn simulate_lorenz(
    params: &LorenzParams,
    x0: [f64; 3],
    dt: f64,
    n_steps: usize,
    substeps: usize,
) -> Result<Dataset> {
    let states = integrate(|s, _| lorenz_rhs(params, s), &x0, &DMatrix::zeros(n_steps, 0), dt, n_steps, substeps)?;
    Dataset::new(states, DMatrix::zeros(n_steps, 0), dt, vec!["x".into(), "y".into(), "z".into()])
}

/// Coefficients of the 3-DOF surge/sway/yaw velocity model
/// `M v̇ + C(v) v + D(v) v = τ`, driven by a left and a right thruster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UsvParams {
    /// Diagonal mass and inertia, including added mass.
    pub m11: f64,
    pub m22: f64,
    pub m33: f64,
    /// Linear damping.
    pub x_u: f64,
    pub y_v: f64,
    pub n_r: f64,
    /// Quadratic damping.
    pub x_uu: f64,
    pub y_vv: f64,
    pub n_rr: f64,
    /// Distance between the two thrusters.
    pub beam: f64,
}

impl Default for UsvParams {
    fn default() -> Self {
        // Roughly a 2 m catamaran.
        UsvParams {
            m11: 25.8,
            m22: 33.8,
            m33: 2.76,
            x_u: 0.72,
            y_v: 0.89,
            n_r: 1.9,
            x_uu: 1.33,
            y_vv: 36.5,
            n_rr: 0.75,
            beam: 0.5,
        }
    }
}

impl UsvParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.m11 > 0.0 && self.m22 > 0.0 && self.m33 > 0.0) {
            return Err(Error::Config("USV mass entries must be positive".into()));
        }
        let rest = [self.x_u, self.y_v, self.n_r, self.x_uu, self.y_vv, self.n_rr, self.beam];
        if rest.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("USV coefficients must be finite".into()));
        }
        Ok(())
    }

    /// Surge force, sway force and yaw moment for thrusts `[left, right]`.
    pub fn thrust(&self, u: &[f64]) -> [f64; 3] {
        [u[0] + u[1], 0.0, (u[1] - u[0]) * self.beam / 2.0]
    }

    pub fn rhs(&self, v: &[f64], u: &[f64]) -> Vec<f64> {
        let (su, sv, r) = (v[0], v[1], v[2]);
        let tau = self.thrust(u);
        let coriolis = [-self.m22 * sv * r, self.m11 * su * r, (self.m22 - self.m11) * su * sv];
        let damping = [
            (self.x_u + self.x_uu * su.abs()) * su,
            (self.y_v + self.y_vv * sv.abs()) * sv,
            (self.n_r + self.n_rr * r.abs()) * r,
        ];
        let mass = [self.m11, self.m22, self.m33];
        (0..3).map(|i| (tau[i] - coriolis[i] - damping[i]) / mass[i]).collect()
    }
}

/// Body-velocity trajectory (surge, sway, yaw rate) driven by `inputs`
/// (`≥ n_steps` rows, two thrust channels).
pub fn simulate_usv(
    params: &UsvParams,
    x0: [f64; 3],
    inputs: &DMatrix<f64>,
    dt: f64,
    n_steps: usize,
    substeps: usize,
) -> Result<Dataset> {
    params.validate()?;
    if inputs.ncols() != 2 {
        return Err(Error::Dimension(format!("USV needs 2 input channels, got {}", inputs.ncols())));
    }
    if inputs.nrows() < n_steps {
        return Err(Error::Dimension(format!("{} input rows for {n_steps} steps", inputs.nrows())));
    }
    let states = integrate(|v, u| params.rhs(v, u), &x0, inputs, dt, n_steps, substeps)?;
    let u = inputs.rows(0, n_steps).into_owned();
    let names = ["u", "v", "r", "thrust_left", "thrust_right"].map(String::from).to_vec();
    Dataset::new(states, u, dt, names)
}

/// Discrete cascade: second-order linear filter, `tanh` saturation, first-order
/// linear filter. Process noise enters just before the saturation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WienerHammersteinParams {
    /// `w[k+1] = a1 w[k] + a2 w[k-1] + b0 u[k] + b1 u[k-1]`.
    pub first_poles: [f64; 2],
    pub first_zeros: [f64; 2],
    pub gain: f64,
    /// `y[k+1] = c1 y[k] + d0 z[k+1] + d1 z[k]`.
    pub second_pole: f64,
    pub second_zeros: [f64; 2],
    pub process_noise_std: f64,
}

impl Default for WienerHammersteinParams {
    fn default() -> Self {
        WienerHammersteinParams {
            first_poles: [1.6, -0.7],
            first_zeros: [0.1, 0.05],
            gain: 1.0,
            second_pole: 0.7,
            second_zeros: [0.3, 0.2],
            process_noise_std: 0.01,
        }
    }
}

/// Output trajectory of the cascade for `inputs` (one channel, `≥ n_steps` rows).
pub fn simulate_wiener_hammerstein(
    params: &WienerHammersteinParams,
    inputs: &DMatrix<f64>,
    n_steps: usize,
    seed: u64,
) -> Result<Dataset> {
    if inputs.ncols() != 1 || inputs.nrows() < n_steps {
        return Err(Error::Dimension(format!(
            "cascade needs one input channel with {n_steps} rows, got {:?}",
            inputs.shape()
        )));
    }
    if !(params.process_noise_std >= 0.0) {
        return Err(Error::Config("process noise must be non-negative".into()));
    }
    let mut rng = stream_rng(seed, 0);
    let [a1, a2] = params.first_poles;
    let [b0, b1] = params.first_zeros;
    let [d0, d1] = params.second_zeros;
    let (mut w, mut w_prev, mut u_prev, mut z, mut y) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut states = DMatrix::zeros(n_steps + 1, 1);
    for k in 0..n_steps {
        let u = inputs[(k, 0)];
        let w_next = a1 * w + a2 * w_prev + b0 * u + b1 * u_prev;
        let e: f64 = StandardNormal.sample(&mut rng);
        let z_next = (params.gain * (w_next + params.process_noise_std * e)).tanh();
        let y_next = params.second_pole * y + d0 * z_next + d1 * z;
        if !y_next.is_finite() || y_next.abs() > DIVERGENCE_LIMIT {
            return Err(Error::Divergence { step: k + 1 });
        }
        (w_prev, w, u_prev, z, y) = (w, w_next, u, z_next, y_next);
        states[(k + 1, 0)] = y;
    }
    Dataset::new(states, inputs.rows(0, n_steps).into_owned(), 1.0, vec!["y".into(), "u".into()])
}

/// Persistently exciting input signals. Frequencies are in cycles per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Excitation {
    /// Random `±amplitude` levels held for `hold` samples.
    Prbs { hold: usize },
    /// Sum of `n_tones` sinusoids with random frequencies up to `max_freq`
    /// and random phases, scaled to the amplitude.
    Multisine { n_tones: usize, max_freq: f64 },
    /// Linear sweep from `f0` to `f1`.
    Chirp { f0: f64, f1: f64 },
}

impl Default for Excitation {
    fn default() -> Self {
        Excitation::Multisine { n_tones: 8, max_freq: 0.05 }
    }
}

/// `n_steps × channels` excitation bounded by `amplitude`. Each channel has
/// its own random stream.
pub fn excitation(kind: &Excitation, n_steps: usize, channels: usize, amplitude: f64, seed: u64) -> Result<DMatrix<f64>> {
    if !(amplitude > 0.0) || !amplitude.is_finite() {
        return Err(Error::Config(format!("amplitude must be positive, got {amplitude}")));
    }
    let mut out = DMatrix::zeros(n_steps, channels);
    let tau = std::f64::consts::TAU;
    for c in 0..channels {
        let mut rng = stream_rng(seed, c as u64);
        match *kind {
            Excitation::Prbs { hold } => {
                let hold = hold.max(1);
                let mut level = 0.0;
                for k in 0..n_steps {
                    if k % hold == 0 {
                        level = if rng.gen::<bool>() { amplitude } else { -amplitude };
                    }
                    out[(k, c)] = level;
                }
            }
            Excitation::Multisine { n_tones, max_freq } => {
                if n_tones == 0 || !(max_freq > 0.0 && max_freq <= 0.5) {
                    return Err(Error::Config("multisine needs at least one tone and 0 < max_freq <= 0.5".into()));
                }
                let tones: Vec<(f64, f64)> = (0..n_tones)
                    .map(|_| (rng.gen_range(0.0..max_freq), rng.gen_range(0.0..tau)))
                    .collect();
                let mut peak = 0.0f64;
                for k in 0..n_steps {
                    let v: f64 = tones.iter().map(|(f, p)| (tau * f * k as f64 + p).sin()).sum();
                    out[(k, c)] = v;
                    peak = peak.max(v.abs());
                }
                if peak > 0.0 {
                    for k in 0..n_steps {
                        out[(k, c)] = (out[(k, c)] / peak * amplitude).clamp(-amplitude, amplitude);
                    }
                }
            }
            Excitation::Chirp { f0, f1 } => {
                if !(f0 >= 0.0 && f1 >= 0.0 && f0 <= 0.5 && f1 <= 0.5) {
                    return Err(Error::Config("chirp frequencies must lie in [0, 0.5]".into()));
                }
                let phase0 = rng.gen_range(0.0..tau);
                let len = n_steps.max(1) as f64;
                for k in 0..n_steps {
                    let t = k as f64;
                    let phase = tau * (f0 * t + (f1 - f0) * t * t / (2.0 * len)) + phase0;
                    out[(k, c)] = amplitude * phase.sin();
                }
            }
        }
    }
    Ok(out)
}
