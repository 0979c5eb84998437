//! Comparison identification methods: pseudoinverse EDMD, sequential
//! thresholded least squares, and sparse Bayesian learning.
//!
//! All three solve each target column independently; the matrix-valued
//! entry points return `(L + l) × L` coefficient matrices laid out like the
//! variational Koopman matrix.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SVD};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Singular values below `RCOND * σ_max` are treated as zero.
pub const RCOND: f64 = 1e-15;

/// Precision above which an SBL coefficient is pruned.
pub const SBL_PRUNE_PRECISION: f64 = 1e12;

fn lstsq_svd(phi: &DMatrix<f64>) -> (SVD<f64, Dyn, Dyn>, f64) {
    let svd = phi.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    (svd, RCOND * smax)
}

/// Minimum-norm least-squares solution `Φ⁺ T`.
pub fn edmd_pinv(phi: &DMatrix<f64>, targets: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if phi.nrows() != targets.nrows() {
        return Err(Error::Dimension(format!(
            "design has {} rows, targets {}",
            phi.nrows(),
            targets.nrows()
        )));
    }
    if phi.nrows() == 0 {
        return Err(Error::InsufficientData("empty design matrix".into()));
    }
    let (svd, eps) = lstsq_svd(phi);
    if eps == 0.0 {
        return Ok(DMatrix::zeros(phi.ncols(), targets.ncols()));
    }
    svd.solve(targets, eps).map_err(|e| Error::Numeric(e.to_string()))
}

/// Sequential thresholded least squares, column by column.
///
/// Each round refits on the active set and drops coefficients with
/// `|w| < lambda`; it stops when the active set stops shrinking or after
/// `max_rounds` refits. Dropped coefficients are exactly zero.
pub fn stls(
    phi: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    lambda: f64,
    max_rounds: usize,
) -> Result<DMatrix<f64>> {
    if !(lambda >= 0.0) {
        return Err(Error::Config(format!("threshold must be non-negative, got {lambda}")));
    }
    let first = edmd_pinv(phi, targets)?;
    let cols: Vec<DVector<f64>> = (0..targets.ncols())
        .into_par_iter()
        .map(|j| {
            let t = targets.column(j).into_owned();
            stls_column(phi, &t, first.column(j).into_owned(), lambda, max_rounds)
        })
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_columns(&cols))
}

/// Support after each round of [`stls`] for one target, ending with the
/// final weights. The first entry is the full least-squares support.
pub fn stls_trace(
    phi: &DMatrix<f64>,
    t: &DVector<f64>,
    lambda: f64,
    max_rounds: usize,
) -> Result<(Vec<Vec<usize>>, DVector<f64>)> {
    let w0 = edmd_pinv(phi, &DMatrix::from_column_slice(t.len(), 1, t.as_slice()))?;
    let mut trace = Vec::new();
    let w = stls_inner(phi, t, w0.column(0).into_owned(), lambda, max_rounds, &mut |s| {
        trace.push(s.to_vec())
    })?;
    Ok((trace, w))
}

fn stls_column(
    phi: &DMatrix<f64>,
    t: &DVector<f64>,
    w0: DVector<f64>,
    lambda: f64,
    max_rounds: usize,
) -> Result<DVector<f64>> {
    stls_inner(phi, t, w0, lambda, max_rounds, &mut |_| {})
}

fn stls_inner(
    phi: &DMatrix<f64>,
    t: &DVector<f64>,
    w0: DVector<f64>,
    lambda: f64,
    max_rounds: usize,
    observe: &mut dyn FnMut(&[usize]),
) -> Result<DVector<f64>> {
    let p = phi.ncols();
    let mut active: Vec<usize> = (0..p).collect();
    let mut w = w0;
    observe(&active);
    for _ in 0..max_rounds {
        let keep: Vec<usize> = active.iter().copied().filter(|&i| w[i].abs() >= lambda).collect();
        if keep.len() == active.len() {
            break;
        }
        active = keep;
        observe(&active);
        w = DVector::zeros(p);
        if active.is_empty() {
            break;
        }
        let sub = phi.select_columns(&active);
        let sol = edmd_pinv(&sub, &DMatrix::from_column_slice(t.len(), 1, t.as_slice()))?;
        for (k, &i) in active.iter().enumerate() {
            w[i] = sol[(k, 0)];
        }
    }
    for i in 0..p {
        if !active.contains(&i) {
            w[i] = 0.0;
        }
    }
    Ok(w)
}

/// Outcome of a sparse Bayesian learning fit for one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SblFit {
    pub weights: DVector<f64>,
    /// Per-coefficient prior precisions; pruned coefficients report infinity.
    pub precisions: DVector<f64>,
    pub noise_precision: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Sparse Bayesian learning by fixed-point evidence maximisation
/// (relevance-vector-machine updates with noise re-estimation).
///
/// Each round computes the posterior `Σ = (βΦᵀΦ + diag α)⁻¹`, `μ = βΣΦᵀt`,
/// then sets `α_i = γ_i/μ_i²` with `γ_i = 1 − α_iΣ_ii` and
/// `β = (m − Σγ_i)/‖t − Φμ‖²`. Coefficients whose precision exceeds
/// [`SBL_PRUNE_PRECISION`] are removed and set to zero. Stops when the
/// largest relative precision change falls below `tol`.
pub fn sbl(phi: &DMatrix<f64>, t: &DVector<f64>, max_iter: usize, tol: f64) -> Result<SblFit> {
    if phi.nrows() != t.len() {
        return Err(Error::Dimension(format!(
            "design has {} rows, target {}",
            phi.nrows(),
            t.len()
        )));
    }
    let m = t.len();
    let p = phi.ncols();
    if m == 0 {
        return Err(Error::InsufficientData("empty target".into()));
    }
    let mut fit = SblFit {
        weights: DVector::zeros(p),
        precisions: DVector::from_element(p, f64::INFINITY),
        noise_precision: f64::INFINITY,
        iterations: 0,
        converged: true,
    };
    let peak = t.amax();
    if peak == 0.0 || p == 0 {
        return Ok(fit);
    }
    // Work on a unit-RMS target so precisions stay representable for
    // observables that are nearly zero everywhere, then undo the scaling.
    // Squaring happens after dividing by the peak so tiny targets do not
    // underflow.
    let rms = peak * ((t / peak).norm_squared() / m as f64).sqrt();
    if (rms - 1.0).abs() > 1e-12 {
        let mut fit = sbl(phi, &(t / rms), max_iter, tol)?;
        fit.weights *= rms;
        fit.precisions = fit.precisions.map(|a| a / rms / rms);
        fit.noise_precision = fit.noise_precision / rms / rms;
        return Ok(fit);
    }
    let t_sq = t.norm_squared();
    let gram = phi.tr_mul(phi);
    let phi_t = phi.tr_mul(t);
    let mean = t.mean();
    let var_t = t.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m as f64;
    let scale = if var_t > 0.0 { var_t } else { t_sq / m as f64 };
    let noise_floor = 1e-12 * scale;

    let mut active: Vec<usize> = (0..p).collect();
    let mut alpha = vec![1.0 / scale; p];
    let mut beta = 100.0 / scale;
    let mut mu_active = DVector::zeros(0);
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..max_iter {
        iterations = iter + 1;
        if active.is_empty() {
            converged = true;
            break;
        }
        let k = active.len();
        let mut a = DMatrix::from_fn(k, k, |r, c| beta * gram[(active[r], active[c])]);
        for r in 0..k {
            a[(r, r)] += alpha[active[r]];
        }
        let chol = factor_with_jitter(a)?;
        let sigma = chol.inverse();
        let rhs = DVector::from_fn(k, |r, _| beta * phi_t[active[r]]);
        mu_active = &sigma * rhs;

        let mut fitted = DVector::zeros(m);
        for (r, &i) in active.iter().enumerate() {
            fitted.axpy(mu_active[r], &phi.column(i), 1.0);
        }
        let rss = (t - fitted).norm_squared();

        let mut gamma_sum = 0.0;
        let mut max_change = 0.0f64;
        let mut keep = Vec::with_capacity(k);
        let mut kept_mu = Vec::with_capacity(k);
        for (r, &i) in active.iter().enumerate() {
            let g = (1.0 - alpha[i] * sigma[(r, r)]).clamp(0.0, 1.0);
            gamma_sum += g;
            let mu2 = mu_active[r] * mu_active[r];
            let new_alpha = if mu2 > 0.0 { g / mu2 } else { f64::INFINITY };
            if !(new_alpha <= SBL_PRUNE_PRECISION) {
                alpha[i] = f64::INFINITY;
                continue;
            }
            let new_alpha = new_alpha.max(f64::MIN_POSITIVE);
            max_change = max_change.max((new_alpha - alpha[i]).abs() / alpha[i]);
            alpha[i] = new_alpha;
            keep.push(i);
            kept_mu.push(mu_active[r]);
        }
        let dof = (m as f64 - gamma_sum).max(1e-6);
        beta = dof / rss.max(noise_floor * dof);
        let pruned = keep.len() < active.len();
        active = keep;
        mu_active = DVector::from_vec(kept_mu);
        if !pruned && max_change < tol {
            converged = true;
            break;
        }
    }

    for (r, &i) in active.iter().enumerate() {
        fit.weights[i] = mu_active[r];
        fit.precisions[i] = alpha[i];
    }
    fit.noise_precision = beta;
    fit.iterations = iterations;
    fit.converged = converged;
    Ok(fit)
}

fn factor_with_jitter(a: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(a.clone()) {
        return Ok(c);
    }
    // The matrix is positive definite in exact arithmetic; a failed factor is
    // rounding on near-collinear columns. Escalate the ridge until it goes through.
    let scale = a.trace() / a.nrows().max(1) as f64;
    for exponent in [-12, -10, -8, -6] {
        let jitter = scale * 10f64.powi(exponent);
        let mut b = a.clone();
        for r in 0..b.nrows() {
            b[(r, r)] += jitter;
        }
        if let Some(c) = Cholesky::new(b) {
            log::warn!("SBL posterior precision ill-conditioned; added jitter {jitter:e}");
            return Ok(c);
        }
    }
    Err(Error::Numeric("SBL posterior precision is not positive definite".into()))
}

/// [`sbl`] for every target column; returns the weight matrix.
pub fn sbl_matrix(
    phi: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    max_iter: usize,
    tol: f64,
) -> Result<DMatrix<f64>> {
    let cols: Vec<DVector<f64>> = (0..targets.ncols())
        .into_par_iter()
        .map(|j| {
            sbl(phi, &targets.column(j).into_owned(), max_iter, tol)
                .map(|f| f.weights)
                .map_err(|e| e.for_target(j))
        })
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_columns(&cols))
}
