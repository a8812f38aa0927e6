//! Multi-kernel correntropy loss and its fixed-point solver.
//!
//! Setting the gradient of the loss to zero gives
//! `θ = [Σ_k X_kᵀ P W_k X_k]⁻¹ [Σ_k X_kᵀ P W_k y_k]` with kernel weights
//! `W_k = diag(exp(−ẽ_k(i)²/(2σ_i²)))` evaluated at θ. The solver iterates
//! that map from a weighted-least-squares start.

use nalgebra::DVector;

use crate::baselines::{fit_penalized, relative_change};
use crate::distribution::{log_kernel, log_likelihood};
use crate::error::{Error, Result};
use crate::linalg::{solve_spd, weighted_normal_equations};
use crate::types::{residuals, ChannelParams, Dataset, PrecisionSpec, RegressionResult, SolverConfig};

/// Lower clamp on kernel weights so fully rejected samples keep a
/// nonsingular normal matrix.
pub const MIN_WEIGHT: f64 = 1e-300;

/// Iterate of the fixed-point solver.
#[derive(Debug, Clone, PartialEq)]
pub struct MkcState {
    pub theta: DVector<f64>,
    /// Diagonal of each `W_k`.
    pub weight_blocks: Vec<DVector<f64>>,
    pub iteration: usize,
}

fn check_channels(data: &Dataset, channels: &[ChannelParams]) -> Result<()> {
    if channels.len() != data.outputs() {
        return Err(Error::Dimension { expected: data.outputs(), got: channels.len() });
    }
    Ok(())
}

/// `Σ_i σ_i² (1 − (1/N) Σ_k G_{σ_i}(ẽ_k(i)))` with `ẽ_k(i) = e_k(i)/d_i`.
pub fn mkcl_loss(data: &Dataset, theta: &DVector<f64>, channels: &[ChannelParams]) -> Result<f64> {
    check_channels(data, channels)?;
    let res = residuals(data, theta)?;
    Ok(residual_mkcl_loss(&res, channels))
}

pub(crate) fn residual_mkcl_loss(res: &[DVector<f64>], channels: &[ChannelParams]) -> f64 {
    let total: f64 = res
        .iter()
        .map(|e| {
            e.iter()
                .zip(channels)
                .map(|(v, ch)| -log_kernel(v / ch.d(), ch.sigma()))
                .sum::<f64>()
        })
        .sum();
    total / res.len() as f64
}

/// Weighted least-squares objective `(1/(2N)) Σ_k ẽ_kᵀ ẽ_k`.
pub fn wls_loss(data: &Dataset, theta: &DVector<f64>, prec: &PrecisionSpec) -> Result<f64> {
    let res = residuals(data, theta)?;
    let d = prec.d();
    if d.len() != data.outputs() {
        return Err(Error::Dimension { expected: data.outputs(), got: d.len() });
    }
    let total: f64 = res
        .iter()
        .map(|e| e.iter().zip(d).map(|(v, di)| (v / di).powi(2)).sum::<f64>())
        .sum();
    Ok(total / (2.0 * res.len() as f64))
}

/// Gaussian-kernel weights `w_i = exp(−ẽ(i)²/(2σ_i²))`, clamped below at
/// [`MIN_WEIGHT`].
pub fn kernel_weights(e_tilde: &DVector<f64>, channels: &[ChannelParams]) -> Result<DVector<f64>> {
    if e_tilde.len() != channels.len() {
        return Err(Error::Dimension { expected: channels.len(), got: e_tilde.len() });
    }
    Ok(DVector::from_iterator(
        e_tilde.len(),
        e_tilde
            .iter()
            .zip(channels)
            .map(|(v, ch)| (-(v * v) / (2.0 * ch.sigma() * ch.sigma())).exp().max(MIN_WEIGHT)),
    ))
}

fn weight_blocks(
    data: &Dataset,
    theta: &DVector<f64>,
    prec: &PrecisionSpec,
    channels: &[ChannelParams],
) -> Result<Vec<DVector<f64>>> {
    let d = prec.d();
    residuals(data, theta)?
        .iter()
        .map(|e| {
            let et = DVector::from_iterator(e.len(), e.iter().zip(d).map(|(v, di)| v / di));
            kernel_weights(&et, channels)
        })
        .collect()
}

fn check_inputs(data: &Dataset, prec: &PrecisionSpec, channels: &[ChannelParams]) -> Result<()> {
    check_channels(data, channels)?;
    if prec.len() != data.outputs() {
        return Err(Error::Dimension { expected: data.outputs(), got: prec.len() });
    }
    for (i, (dp, ch)) in prec.d().iter().zip(channels).enumerate() {
        if (dp - ch.d()).abs() > 1e-12 * dp.abs().max(ch.d().abs()) {
            return Err(Error::Input(format!(
                "channel {i}: precision d={dp} disagrees with channel d={}",
                ch.d()
            )));
        }
    }
    Ok(())
}

/// One application of the fixed-point map with weights evaluated at `theta`.
pub fn fixed_point_step(
    data: &Dataset,
    theta: &DVector<f64>,
    prec: &PrecisionSpec,
    channels: &[ChannelParams],
) -> Result<DVector<f64>> {
    check_inputs(data, prec, channels)?;
    step(data, theta, prec, channels, SolverConfig::default().ridge_guard).map(|s| s.theta)
}

fn step(
    data: &Dataset,
    theta: &DVector<f64>,
    prec: &PrecisionSpec,
    channels: &[ChannelParams],
    ridge_guard: f64,
) -> Result<MkcState> {
    let blocks = weight_blocks(data, theta, prec, channels)?;
    let p = prec.precision();
    let (lhs, rhs) = weighted_normal_equations(data, |k| blocks[k].iter().zip(&p).map(|(w, pi)| w * pi).collect());
    let next = solve_spd(lhs, &rhs, ridge_guard)?;
    Ok(MkcState { theta: next, weight_blocks: blocks, iteration: 0 })
}

/// Fixed-point iteration until `‖θ_{t+1} − θ_t‖/‖θ_t‖ ≤ ψ` (absolute when
/// `θ_t = 0`) or the iteration cap. `theta0` defaults to the WLS solution.
pub fn fit_mkc(
    data: &Dataset,
    prec: &PrecisionSpec,
    channels: &[ChannelParams],
    config: &SolverConfig,
    theta0: Option<&DVector<f64>>,
) -> Result<RegressionResult> {
    config.validate()?;
    check_inputs(data, prec, channels)?;
    let mut theta = match theta0 {
        Some(t) => {
            data.check_theta(t)?;
            t.clone()
        }
        None => fit_penalized(data, prec, 0.0, config.ridge_guard)?.theta,
    };
    let mut loss_trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_fixed_point_iters {
        let next = step(data, &theta, prec, channels, config.ridge_guard)?.theta;
        iterations += 1;
        let change = relative_change(&next, &theta);
        theta = next;
        loss_trace.push(mkcl_loss(data, &theta, channels)?);
        if change <= config.psi {
            converged = true;
            break;
        }
    }
    let loglik = Some(log_likelihood(data, &theta, channels)?);
    Ok(RegressionResult { theta, iterations, converged, loss_trace, loglik })
}

/// Fixed-point iterates, including the weight matrices used at each step.
pub fn trace_mkc(
    data: &Dataset,
    prec: &PrecisionSpec,
    channels: &[ChannelParams],
    config: &SolverConfig,
    theta0: &DVector<f64>,
) -> Result<Vec<MkcState>> {
    check_inputs(data, prec, channels)?;
    let mut theta = theta0.clone();
    let mut out = Vec::new();
    for t in 0..config.max_fixed_point_iters {
        let mut s = step(data, &theta, prec, channels, config.ridge_guard)?;
        s.iteration = t + 1;
        let change = relative_change(&s.theta, &theta);
        theta = s.theta.clone();
        out.push(s);
        if change <= config.psi {
            break;
        }
    }
    Ok(out)
}
