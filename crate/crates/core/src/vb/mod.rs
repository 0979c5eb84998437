//! Spike-and-slab variational Bayes for sparse EDMD regressions.
//!
//! Each target `t = Φ(γ ⊙ β) + v` is solved independently with a mean-field
//! posterior over the noise precision ρ, the weight precisions α_i, the
//! inclusion priors π_i, the weights β_i and the inclusion flags γ_i. The
//! coordinate updates are closed form; weight updates are damped and the
//! inclusion probabilities are clipped to `[delta, 1 - delta]`.
//!
//! The individual updates are public so they can be composed and checked in
//! isolation. [`fit_target`] runs the full sweep, [`fit_all`] runs it for every
//! target column and assembles the Koopman matrix and the inclusion matrix.

pub mod special;

pub use special::{digamma, sigmoid};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Order in which coefficient updates see each other's results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    /// Sequential sweep; every coefficient sees the latest values of the
    /// coefficients before it and expectations are refreshed inside the loop.
    #[default]
    Algorithm1Literal,
    /// Every coefficient update in a sweep reads the previous sweep's values.
    Jacobi,
}

/// Hyperpriors and solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Priors {
    /// Gamma shape/rate of the noise precision ρ.
    pub a: f64,
    pub b: f64,
    /// Gamma shape/rate shared by every weight precision α_i.
    pub c: f64,
    pub d: f64,
    /// Beta parameters shared by every inclusion prior π_i.
    pub e: f64,
    pub f: f64,
    /// Damping coefficient for the weight updates, in (0, 1].
    pub p_d: f64,
    /// Clip floor for inclusion probabilities, in (0, 0.5).
    pub delta: f64,
    pub max_iter: usize,
    /// Convergence threshold on the largest change of a damped weight mean.
    pub tol: f64,
    pub update_mode: UpdateMode,
}

impl Default for Priors {
    fn default() -> Self {
        Priors {
            a: 1e-6,
            b: 1e-6,
            c: 1e-6,
            d: 1e-6,
            e: 1.0,
            f: 1.0,
            p_d: 0.5,
            delta: 1e-8,
            max_iter: 500,
            tol: 1e-6,
            update_mode: UpdateMode::Algorithm1Literal,
        }
    }
}

impl Priors {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("a", self.a),
            ("b", self.b),
            ("c", self.c),
            ("d", self.d),
            ("e", self.e),
            ("f", self.f),
            ("tol", self.tol),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("prior parameter {name} must be positive, got {v}")));
            }
        }
        if !(self.p_d > 0.0 && self.p_d <= 1.0) {
            return Err(Error::Config(format!("damping p_d must be in (0, 1], got {}", self.p_d)));
        }
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(Error::Config(format!("clip delta must be in (0, 0.5), got {}", self.delta)));
        }
        Ok(())
    }
}

/// Variational parameters and expectations for one target regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorState {
    pub a_bar: f64,
    pub b_bar: f64,
    pub rho_hat: f64,
    pub c_bar: f64,
    pub d_bar: Vec<f64>,
    pub e_bar: Vec<f64>,
    pub f_bar: Vec<f64>,
    /// Damped posterior means of the weights.
    pub mu: Vec<f64>,
    /// Posterior variances, `1 / alpha_bar`.
    pub sigma2: Vec<f64>,
    /// Damped posterior precisions of the weights.
    pub alpha_bar: Vec<f64>,
    pub alpha_hat: Vec<f64>,
    pub pi_bar: Vec<f64>,
    pub pi_hat: Vec<f64>,
    pub gamma_hat: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl PosteriorState {
    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    /// Effective coefficients `γ̂ ⊙ μ`.
    pub fn coefficients(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.len(),
            self.gamma_hat.iter().zip(&self.mu).map(|(g, m)| g * m),
        )
    }

    /// Neutral state (zero means, unit scales, inclusion 0.5) for composing
    /// the update functions by hand.
    pub fn blank(len: usize) -> Self {
        PosteriorState {
            a_bar: 1.0,
            b_bar: 1.0,
            rho_hat: 1.0,
            c_bar: 1.0,
            d_bar: vec![1.0; len],
            e_bar: vec![1.0; len],
            f_bar: vec![1.0; len],
            mu: vec![0.0; len],
            sigma2: vec![1.0; len],
            alpha_bar: vec![1.0; len],
            alpha_hat: vec![1.0; len],
            pi_bar: vec![0.5; len],
            pi_hat: vec![0.5; len],
            gamma_hat: vec![0.5; len],
            iterations: 0,
            converged: false,
        }
    }

    fn check_finite(&self, iteration: usize, i: usize) -> Result<()> {
        let ok = self.a_bar.is_finite()
            && self.b_bar.is_finite()
            && self.rho_hat.is_finite()
            && self.mu[i].is_finite()
            && self.sigma2[i].is_finite()
            && self.pi_bar[i].is_finite()
            && self.d_bar[i].is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::NonFinite {
                target: None,
                iteration,
                coefficient: i,
            })
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn column(phi: &DMatrix<f64>, i: usize) -> &[f64] {
    let m = phi.nrows();
    &phi.as_slice()[i * m..(i + 1) * m]
}

/// `Φ (γ̂ ⊙ μ)`.
pub fn prediction(state: &PosteriorState, phi: &DMatrix<f64>) -> DVector<f64> {
    let m = phi.nrows();
    let mut pred = DVector::zeros(m);
    for i in 0..phi.ncols() {
        let w = state.gamma_hat[i] * state.mu[i];
        if w != 0.0 {
            for (p, v) in pred.iter_mut().zip(column(phi, i)) {
                *p += w * v;
            }
        }
    }
    pred
}

fn set_rho_params(state: &mut PosteriorState, rss: f64, m: usize, priors: &Priors) -> Result<(f64, f64)> {
    let a_bar = m as f64 / 2.0 + priors.a;
    let b_bar = 0.5 * rss + priors.b;
    if !b_bar.is_finite() {
        return Err(Error::Numeric(format!("noise rate b_bar is not finite ({b_bar})")));
    }
    state.a_bar = a_bar;
    state.b_bar = b_bar;
    Ok((a_bar, b_bar))
}

/// Noise-precision update: `ā = m/2 + a`, `b̄ = ½‖t − Φ(γ̂⊙μ)‖² + b`.
///
/// Only the posterior parameters change; `rho_hat` is refreshed by
/// [`refresh_expectations`].
pub fn update_rho(
    state: &mut PosteriorState,
    t: &DVector<f64>,
    phi: &DMatrix<f64>,
    priors: &Priors,
) -> Result<(f64, f64)> {
    let pred = prediction(state, phi);
    let rss = (t - pred).norm_squared();
    set_rho_params(state, rss, t.len(), priors)
}

/// Weight-precision update: `c̄ = c + ½`, `d̄_i = d + (μ_i² + σ_i²)/2`, and
/// `α̂_i = c̄ / d̄_i`.
pub fn update_alpha(state: &mut PosteriorState, i: usize, priors: &Priors) -> (f64, f64) {
    let c_bar = priors.c + 0.5;
    let d_bar = priors.d + 0.5 * (state.mu[i] * state.mu[i] + state.sigma2[i]);
    state.c_bar = c_bar;
    state.d_bar[i] = d_bar;
    state.alpha_hat[i] = c_bar / d_bar;
    (c_bar, d_bar)
}

/// Inclusion-prior update: `ē_i = γ̂_i + e`, `f̄_i = 1 − γ̂_i + f`.
pub fn update_pi(state: &mut PosteriorState, i: usize, priors: &Priors) -> (f64, f64) {
    let g = state.gamma_hat[i];
    let e_bar = g + priors.e;
    let f_bar = 1.0 - g + priors.f;
    state.e_bar[i] = e_bar;
    state.f_bar[i] = f_bar;
    (e_bar, f_bar)
}

/// Residual of the target without coefficient `i`:
/// `r_k = t_k − Σ_{j≠i} γ̂_j μ_j Φ_kj`.
pub fn residual(state: &PosteriorState, t: &DVector<f64>, phi: &DMatrix<f64>, i: usize) -> DVector<f64> {
    let mut r = t - prediction(state, phi);
    let w = state.gamma_hat[i] * state.mu[i];
    for (rk, v) in r.iter_mut().zip(column(phi, i)) {
        *rk += w * v;
    }
    r
}

fn beta_step(
    state: &mut PosteriorState,
    i: usize,
    phi_r: f64,
    phi_sq: f64,
    priors: &Priors,
) -> Result<(f64, f64)> {
    let scale = state.rho_hat * state.gamma_hat[i];
    let alpha_raw = scale * phi_sq + state.alpha_hat[i];
    if !(alpha_raw > 0.0) {
        return Err(Error::Numeric(format!(
            "posterior precision of coefficient {i} is not positive ({alpha_raw})"
        )));
    }
    let mu_raw = scale * phi_r / alpha_raw;
    let p = priors.p_d;
    let alpha_damped = p * alpha_raw + (1.0 - p) * state.alpha_bar[i];
    let mu_damped = p * mu_raw + (1.0 - p) * state.mu[i];
    state.alpha_bar[i] = alpha_damped;
    state.mu[i] = mu_damped;
    state.sigma2[i] = 1.0 / alpha_damped;
    Ok((alpha_damped, mu_damped))
}

/// Weight update with damping.
///
/// Raw values `ᾱ_i = ρ̂γ̂_i‖φ_i‖² + α̂_i` and `μ̄_i = ρ̂γ̂_i φ_iᵀr_i / ᾱ_i` are
/// blended with the previous iterate of the same coefficient using `p_d`;
/// the state receives the damped values and `σ_i² = 1/ᾱ_damped`.
pub fn update_beta(
    state: &mut PosteriorState,
    i: usize,
    r_i: &[f64],
    phi_i: &[f64],
    priors: &Priors,
) -> Result<(f64, f64)> {
    beta_step(state, i, dot(phi_i, r_i), dot(phi_i, phi_i), priors)
}

/// Log-odds of inclusion for coefficient `i`.
pub fn inclusion_log_odds(state: &PosteriorState, i: usize, phi_r: f64, phi_sq: f64) -> Result<f64> {
    let mu = state.mu[i];
    let rho = state.rho_hat;
    Ok(rho * mu * phi_r - 0.5 * rho * (mu * mu + state.sigma2[i]) * phi_sq
        + digamma(state.e_bar[i])?
        - digamma(state.f_bar[i])?)
}

fn gamma_step(
    state: &mut PosteriorState,
    i: usize,
    phi_r: f64,
    phi_sq: f64,
    priors: &Priors,
) -> Result<f64> {
    let eta = inclusion_log_odds(state, i, phi_r, phi_sq)?;
    let pi = sigmoid(eta).clamp(priors.delta, 1.0 - priors.delta);
    state.pi_bar[i] = pi;
    Ok(pi)
}

/// Inclusion update: `π̄_i = clip(σ(η_i), δ, 1 − δ)` with
/// `η_i = ρ̂μ_iφ_iᵀr_i − ½ρ̂(μ_i² + σ_i²)‖φ_i‖² + ψ(ē_i) − ψ(f̄_i)`.
pub fn update_gamma(
    state: &mut PosteriorState,
    i: usize,
    r_i: &[f64],
    phi_i: &[f64],
    priors: &Priors,
) -> Result<f64> {
    gamma_step(state, i, dot(phi_i, r_i), dot(phi_i, phi_i), priors)
}

/// Refresh `ρ̂`, `α̂_i`, `π̂_i` and `γ̂_i` from the current posterior parameters.
pub fn refresh_expectations(state: &mut PosteriorState, i: usize) {
    state.rho_hat = state.a_bar / state.b_bar;
    state.alpha_hat[i] = state.c_bar / state.d_bar[i];
    state.pi_hat[i] = state.e_bar[i] / (state.e_bar[i] + state.f_bar[i]);
    state.gamma_hat[i] = state.pi_bar[i];
}

/// Quantities shared by every target regression on the same design matrix.
pub struct Prepared {
    col_sq: Vec<f64>,
    ridge: Cholesky<f64, Dyn>,
}

impl Prepared {
    pub fn new(phi: &DMatrix<f64>) -> Result<Self> {
        let p = phi.ncols();
        let col_sq = (0..p).map(|i| {
            let c = column(phi, i);
            dot(c, c)
        });
        let gram = phi.tr_mul(phi) + DMatrix::identity(p, p);
        let ridge = Cholesky::new(gram)
            .ok_or_else(|| Error::Numeric("ridge initialisation matrix is not positive definite".into()))?;
        Ok(Prepared {
            col_sq: col_sq.collect(),
            ridge,
        })
    }
}

/// Starting point: ridge means with unit regulariser, unit variances,
/// inclusion 0.5, unit weight precisions and a data-scaled noise precision.
pub fn initial_state(phi: &DMatrix<f64>, prep: &Prepared, t: &DVector<f64>, priors: &Priors) -> PosteriorState {
    let m = t.len();
    let p = phi.ncols();
    let mu = prep.ridge.solve(&phi.tr_mul(t));
    let mean = t.mean();
    let ss = t.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    let rho_hat = m as f64 / ss.max(m as f64 * 1e-12);
    let a_bar = m as f64 / 2.0 + priors.a;
    let c_bar = priors.c + 0.5;
    PosteriorState {
        a_bar,
        b_bar: a_bar / rho_hat,
        rho_hat,
        c_bar,
        d_bar: vec![c_bar; p],
        e_bar: vec![priors.e + 0.5; p],
        f_bar: vec![priors.f + 0.5; p],
        mu: mu.iter().copied().collect(),
        sigma2: vec![1.0; p],
        alpha_bar: vec![1.0; p],
        alpha_hat: vec![1.0; p],
        pi_bar: vec![0.5; p],
        pi_hat: vec![0.5; p],
        gamma_hat: vec![0.5; p],
        iterations: 0,
        converged: false,
    }
}

/// Run the variational updates for one target until the damped weight means
/// move less than `tol` in a sweep, or `max_iter` sweeps have run.
pub fn fit_target(phi: &DMatrix<f64>, t: &DVector<f64>, priors: &Priors) -> Result<PosteriorState> {
    check_shapes(phi, t.len())?;
    priors.validate()?;
    let prep = Prepared::new(phi)?;
    fit_target_prepared(phi, &prep, t, priors)
}

fn check_shapes(phi: &DMatrix<f64>, m: usize) -> Result<()> {
    if phi.nrows() != m {
        return Err(Error::Dimension(format!(
            "design matrix has {} rows, target has {m}",
            phi.nrows()
        )));
    }
    if m < 2 {
        return Err(Error::InsufficientData(format!("need at least 2 samples, got {m}")));
    }
    if phi.ncols() == 0 {
        return Err(Error::Dimension("design matrix has no columns".into()));
    }
    Ok(())
}

pub fn fit_target_prepared(
    phi: &DMatrix<f64>,
    prep: &Prepared,
    t: &DVector<f64>,
    priors: &Priors,
) -> Result<PosteriorState> {
    let m = phi.nrows();
    let p = phi.ncols();
    let mut state = initial_state(phi, prep, t, priors);
    let phi_t: Vec<f64> = (0..p).map(|i| dot(column(phi, i), t.as_slice())).collect();

    for iter in 0..priors.max_iter {
        let mut pred = prediction(&state, phi);
        let rss = t.iter().zip(pred.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        set_rho_params(&mut state, rss, m, priors)?;

        let mut max_step = 0.0f64;
        match priors.update_mode {
            UpdateMode::Algorithm1Literal => {
                for i in 0..p {
                    let col = column(phi, i);
                    update_alpha(&mut state, i, priors);
                    update_pi(&mut state, i, priors);
                    let old = state.gamma_hat[i] * state.mu[i];
                    // φᵀr with r = t − pred + old·φ
                    let phi_r = phi_t[i] - dot(col, pred.as_slice()) + old * prep.col_sq[i];
                    let mu_prev = state.mu[i];
                    beta_step(&mut state, i, phi_r, prep.col_sq[i], priors)?;
                    gamma_step(&mut state, i, phi_r, prep.col_sq[i], priors)?;
                    refresh_expectations(&mut state, i);
                    state.check_finite(iter, i)?;
                    max_step = max_step.max((state.mu[i] - mu_prev).abs());
                    let delta = state.gamma_hat[i] * state.mu[i] - old;
                    if delta != 0.0 {
                        for (pk, v) in pred.iter_mut().zip(col) {
                            *pk += delta * v;
                        }
                    }
                }
            }
            UpdateMode::Jacobi => {
                state.rho_hat = state.a_bar / state.b_bar;
                for i in 0..p {
                    let col = column(phi, i);
                    update_alpha(&mut state, i, priors);
                    update_pi(&mut state, i, priors);
                    let old = state.gamma_hat[i] * state.mu[i];
                    let phi_r = phi_t[i] - dot(col, pred.as_slice()) + old * prep.col_sq[i];
                    let mu_prev = state.mu[i];
                    beta_step(&mut state, i, phi_r, prep.col_sq[i], priors)?;
                    gamma_step(&mut state, i, phi_r, prep.col_sq[i], priors)?;
                    max_step = max_step.max((state.mu[i] - mu_prev).abs());
                }
                for i in 0..p {
                    refresh_expectations(&mut state, i);
                    state.check_finite(iter, i)?;
                }
            }
        }
        state.iterations = iter + 1;
        if max_step < priors.tol {
            state.converged = true;
            break;
        }
    }
    Ok(state)
}

/// Posterior fits for every target, with the assembled matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub states: Vec<PosteriorState>,
    /// `(L + l) × L`; column `j` is `γ̂_j ⊙ μ_j`.
    #[serde(with = "crate::matrix")]
    pub k_f_hat: DMatrix<f64>,
    /// `(L + l) × L`; column `j` is `γ̂_j`.
    #[serde(with = "crate::matrix")]
    pub gamma: DMatrix<f64>,
    pub rho_hats: Vec<f64>,
    pub iterations_used: Vec<usize>,
    pub converged: Vec<bool>,
}

impl FitResult {
    pub fn from_states(states: Vec<PosteriorState>) -> Self {
        let p = states.first().map_or(0, PosteriorState::len);
        let l = states.len();
        let k_f_hat = DMatrix::from_fn(p, l, |i, j| states[j].gamma_hat[i] * states[j].mu[i]);
        let gamma = DMatrix::from_fn(p, l, |i, j| states[j].gamma_hat[i]);
        FitResult {
            rho_hats: states.iter().map(|s| s.rho_hat).collect(),
            iterations_used: states.iter().map(|s| s.iterations).collect(),
            converged: states.iter().map(|s| s.converged).collect(),
            k_f_hat,
            gamma,
            states,
        }
    }
}

/// Fit every target column of `targets` independently, in parallel.
pub fn fit_all(phi: &DMatrix<f64>, targets: &DMatrix<f64>, priors: &Priors) -> Result<FitResult> {
    fit_all_with(phi, targets, priors, true)
}

pub fn fit_all_with(
    phi: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    priors: &Priors,
    parallel: bool,
) -> Result<FitResult> {
    check_shapes(phi, targets.nrows())?;
    priors.validate()?;
    let prep = Prepared::new(phi)?;
    let run = |j: usize| {
        let t = targets.column(j).into_owned();
        fit_target_prepared(phi, &prep, &t, priors).map_err(|e| e.for_target(j))
    };
    let states: Vec<PosteriorState> = if parallel {
        (0..targets.ncols()).into_par_iter().map(run).collect::<Result<_>>()?
    } else {
        (0..targets.ncols()).map(run).collect::<Result<_>>()?
    };
    Ok(FitResult::from_states(states))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12
    }

    #[test]
    fn rho_update_values() {
        let priors = Priors { a: 1.0, b: 0.5, ..Priors::default() };
        let mut s = PosteriorState::blank(1);
        s.mu[0] = 0.0;
        let t = DVector::from_vec(vec![1.0, 0.0]);
        let phi = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let (a, b) = update_rho(&mut s, &t, &phi, &priors).unwrap();
        assert!(close(a, 2.0));
        assert!(close(b, 1.0));

        let t10 = DVector::from_element(10, 3.0);
        let phi10 = DMatrix::from_element(10, 1, 1.0);
        let mut s = PosteriorState::blank(1);
        s.gamma_hat[0] = 1.0;
        s.mu[0] = 3.0;
        let priors = Priors { a: 1.0, b: 1e-6, ..Priors::default() };
        let (a, b) = update_rho(&mut s, &t10, &phi10, &priors).unwrap();
        assert!(close(a, 6.0));
        assert!(close(b, 1e-6));
    }

    #[test]
    fn alpha_update_values() {
        let mut s = PosteriorState::blank(3);
        s.mu = vec![0.0, 3.0, 1.0];
        s.sigma2 = vec![2.0, 1.0, 0.5];
        let p1 = Priors { c: 1.0, d: 1.0, ..Priors::default() };
        assert_eq!(update_alpha(&mut s, 0, &p1), (1.5, 2.0));
        assert!(close(s.alpha_hat[0], 0.75));
        let p0 = Priors { c: 1.0, d: 1e-300, ..Priors::default() };
        let (c, d) = update_alpha(&mut s, 1, &p0);
        assert!(close(c, 1.5) && close(d, 5.0));
    }

    #[test]
    fn pi_update_values() {
        let mut s = PosteriorState::blank(3);
        s.gamma_hat = vec![1.0, 0.0, 0.5];
        let p = Priors { e: 1.0, f: 1.0, ..Priors::default() };
        assert_eq!(update_pi(&mut s, 0, &p), (2.0, 1.0));
        assert_eq!(update_pi(&mut s, 1, &p), (1.0, 2.0));
        let p = Priors { e: 0.5, f: 0.5, ..Priors::default() };
        assert_eq!(update_pi(&mut s, 2, &p), (1.0, 1.0));
    }

    #[test]
    fn residual_cases() {
        let phi = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.5, -1.0, 3.0, 0.0]);
        let t = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let s = PosteriorState::blank(2);
        assert_eq!(residual(&s, &t, &phi, 0), t);

        let mut s = PosteriorState::blank(2);
        s.mu = vec![0.7, -1.3];
        s.gamma_hat = vec![0.9, 0.4];
        let exact = prediction(&s, &phi);
        let r = residual(&s, &exact, &phi, 1);
        for k in 0..3 {
            assert!(close(r[k], 0.4 * -1.3 * phi[(k, 1)]));
        }

        let phi1 = DMatrix::from_row_slice(2, 1, &[1.0, 5.0]);
        let mut s = PosteriorState::blank(1);
        s.mu[0] = 4.0;
        let t2 = DVector::from_vec(vec![-1.0, 8.0]);
        assert_eq!(residual(&s, &t2, &phi1, 0), t2);
    }

    #[test]
    fn beta_update_values() {
        let p = Priors { p_d: 1.0, ..Priors::default() };
        let mut s = PosteriorState::blank(1);
        s.rho_hat = 1.0;
        s.gamma_hat[0] = 1.0;
        s.alpha_hat[0] = 2.0;
        let (a, m) = update_beta(&mut s, 0, &[2.0, 2.0], &[1.0, 1.0], &p).unwrap();
        assert!(close(a, 4.0) && close(m, 1.0));
        assert!(close(s.sigma2[0], 0.25));

        let mut s = PosteriorState::blank(1);
        s.gamma_hat[0] = 0.0;
        s.alpha_hat[0] = 3.0;
        let (a, m) = update_beta(&mut s, 0, &[5.0], &[1.0], &p).unwrap();
        assert!(close(a, 3.0) && close(m, 0.0));

        // damping blends with the previous iterate
        let p = Priors { p_d: 0.25, ..Priors::default() };
        let mut s = PosteriorState::blank(1);
        s.rho_hat = 1.0;
        s.gamma_hat[0] = 1.0;
        s.alpha_hat[0] = 2.0;
        s.alpha_bar[0] = 8.0;
        s.mu[0] = -3.0;
        let (a, m) = update_beta(&mut s, 0, &[2.0, 2.0], &[1.0, 1.0], &p).unwrap();
        assert!(close(a, 0.25 * 4.0 + 0.75 * 8.0));
        assert!(close(m, 0.25 * 1.0 + 0.75 * -3.0));
    }

    #[test]
    fn gamma_update_values() {
        let p = Priors::default();
        let mut s = PosteriorState::blank(1);
        s.mu[0] = 1.0;
        s.sigma2[0] = 0.0;
        s.rho_hat = 1.0;
        s.e_bar[0] = 1.0;
        s.f_bar[0] = 1.0;
        let pi = update_gamma(&mut s, 0, &[1.0], &[1.0], &p).unwrap();
        assert!(close(pi, 1.0 / (1.0 + (-0.5f64).exp())));

        s.mu[0] = 0.0;
        let pi = update_gamma(&mut s, 0, &[1.0], &[1.0], &p).unwrap();
        assert!(close(pi, 0.5));

        s.rho_hat = 2e6;
        s.sigma2[0] = 1.0;
        let pi = update_gamma(&mut s, 0, &[0.0], &[1.0], &p).unwrap();
        assert_eq!(pi, 1e-8);
    }

    #[test]
    fn max_iter_zero_returns_initialisation() {
        let phi = DMatrix::from_fn(8, 2, |i, j| ((i + 1) * (j + 2)) as f64 % 5.0);
        let t = DVector::from_fn(8, |i, _| i as f64);
        let priors = Priors { max_iter: 0, ..Priors::default() };
        let s = fit_target(&phi, &t, &priors).unwrap();
        let prep = Prepared::new(&phi).unwrap();
        assert_eq!(s, initial_state(&phi, &prep, &t, &priors));
        assert!(!s.converged);
        assert_eq!(s.iterations, 0);
    }

    #[test]
    fn rejects_bad_priors() {
        let phi = DMatrix::from_element(4, 1, 1.0);
        let t = DVector::from_element(4, 1.0);
        for bad in [
            Priors { a: 0.0, ..Priors::default() },
            Priors { p_d: 0.0, ..Priors::default() },
            Priors { delta: 0.5, ..Priors::default() },
        ] {
            assert!(matches!(fit_target(&phi, &t, &bad), Err(Error::Config(_))));
        }
    }

    #[test]
    fn priors_json_defaults() {
        let p: Priors = serde_json::from_str(r#"{"p_d": 0.3, "update_mode": "jacobi"}"#).unwrap();
        assert_eq!(p.p_d, 0.3);
        assert_eq!(p.update_mode, UpdateMode::Jacobi);
        assert_eq!(p.delta, 1e-8);
        assert!(serde_json::from_str::<Priors>(r#"{"bogus": 1}"#).is_err());
    }
}
