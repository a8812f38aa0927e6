//! Baseline estimators: least squares, weighted least squares, ridge and
//! least absolute deviation.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{median, solve_spd, weighted_normal_equations};
use crate::types::{residuals, Dataset, PrecisionSpec, RegressionResult, SolverConfig};

/// Ordinary least squares, `(XᵀX)⁻¹XᵀY`.
pub fn fit_ls(data: &Dataset) -> Result<RegressionResult> {
    fit_wls(data, &PrecisionSpec::unit(data.outputs()))
}

/// Ordinary least squares with an explicit diagonal guard.
pub fn fit_ls_guarded(data: &Dataset, ridge_guard: f64) -> Result<RegressionResult> {
    fit_penalized(data, &PrecisionSpec::unit(data.outputs()), 0.0, ridge_guard)
}

/// Weighted least squares, `(XᵀPX)⁻¹XᵀPY`.
pub fn fit_wls(data: &Dataset, prec: &PrecisionSpec) -> Result<RegressionResult> {
    fit_penalized(data, prec, 0.0, SolverConfig::default().ridge_guard)
}

/// Weighted least squares with a Tikhonov penalty: solves `(XᵀPX + λI)θ = XᵀPY`.
pub fn fit_ridge(data: &Dataset, prec: &PrecisionSpec, lambda: f64) -> Result<RegressionResult> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Input(format!("ridge penalty must be nonnegative, got {lambda}")));
    }
    fit_penalized(data, prec, lambda, SolverConfig::default().ridge_guard)
}

pub(crate) fn fit_penalized(
    data: &Dataset,
    prec: &PrecisionSpec,
    lambda: f64,
    ridge_guard: f64,
) -> Result<RegressionResult> {
    if prec.len() != data.outputs() {
        return Err(Error::Dimension { expected: data.outputs(), got: prec.len() });
    }
    let p = prec.precision();
    let (mut lhs, rhs) = weighted_normal_equations(data, |_| p.clone());
    for i in 0..lhs.nrows() {
        lhs[(i, i)] += lambda;
    }
    let theta = solve_spd(lhs, &rhs, ridge_guard)?;
    Ok(RegressionResult::closed_form(theta))
}

/// `Σ_k Σ_i |e_k(i)|`.
pub fn absolute_loss(data: &Dataset, theta: &DVector<f64>) -> Result<f64> {
    Ok(residuals(data, theta)?.iter().flat_map(|e| e.iter()).map(|v| v.abs()).sum())
}

/// Least absolute deviation by iteratively reweighted least squares with
/// weights `1 / max(|e|, δ)`, started from the least-squares fit.
pub fn fit_lad(data: &Dataset, config: &SolverConfig) -> Result<RegressionResult> {
    config.validate()?;
    let m = data.outputs();
    if data.len() * m <= data.params() {
        return Err(Error::Input(format!(
            "LAD needs more observations ({}) than parameters ({})",
            data.len() * m,
            data.params()
        )));
    }
    let mut abs_y: Vec<f64> = data.samples().iter().flat_map(|s| s.y.iter().map(|v| v.abs())).collect();
    let delta = 1e-6 * (median(&mut abs_y) + 1.0);

    let mut theta = fit_ls_guarded(data, config.ridge_guard)?.theta;
    let mut loss_trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.lad_max_iters {
        let res = residuals(data, &theta)?;
        let (lhs, rhs) = weighted_normal_equations(data, |k| {
            res[k].iter().map(|e| 1.0 / e.abs().max(delta)).collect()
        });
        let next = solve_spd(lhs, &rhs, config.ridge_guard)?;
        iterations += 1;
        let change = relative_change(&next, &theta);
        theta = next;
        loss_trace.push(absolute_loss(data, &theta)?);
        if change <= config.psi {
            converged = true;
            break;
        }
    }
    Ok(RegressionResult { theta, iterations, converged, loss_trace, loglik: None })
}

/// `‖new − old‖ / ‖old‖`, falling back to `‖new‖` when `old` is zero.
pub(crate) fn relative_change(new: &DVector<f64>, old: &DVector<f64>) -> f64 {
    let step = (new - old).norm();
    let base = old.norm();
    if base == 0.0 {
        new.norm()
    } else {
        step / base
    }
}
