//! Per-channel estimation of the kernel bandwidth σ and nominal standard
//! deviation d by maximum likelihood under the truncated induced density.
//!
//! The negative log-likelihood of channel residuals `e_k` is
//!
//! `f(σ, d) = N·(log Z(σ, a/d) + log d) + Σ_k σ²(1 − exp(−e_k²/(2d²σ²)))`
//!
//! where `Z = 1/c` is the partition integral. It is minimized over
//! `z = (log σ, log d)` by BFGS with the truncation half-width `a` held fixed.
//! The gradient differentiates the partition integral under the integral sign.

use nalgebra::DVector;

use crate::bfgs::{minimize, BfgsOptions, BfgsStatus};
use crate::distribution::{log_kernel, partition_with_sigma_derivative, sigma_sensitivity};
use crate::error::{Error, Result};
use crate::types::{ChannelParams, SolverConfig};

/// Which of `(σ, d)` are free during a channel fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelFitOptions {
    pub optimize_sigma: bool,
    pub optimize_d: bool,
}

impl Default for ChannelFitOptions {
    fn default() -> Self {
        Self { optimize_sigma: true, optimize_d: true }
    }
}

impl ChannelFitOptions {
    pub fn sigma_only() -> Self {
        Self { optimize_sigma: true, optimize_d: false }
    }

    pub fn d_only() -> Self {
        Self { optimize_sigma: false, optimize_d: true }
    }
}

const MAX_LOG_STEP: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelFit {
    pub params: ChannelParams,
    pub converged: bool,
    pub status: BfgsStatus,
    pub iterations: usize,
    pub initial_objective: f64,
    pub objective: f64,
    /// Objective after every accepted BFGS step, starting with the initial value.
    pub history: Vec<f64>,
}

fn validate(e: &[f64], sigma: f64, d: f64, a: f64) -> Result<()> {
    if e.is_empty() {
        return Err(Error::Input("channel objective needs residuals".into()));
    }
    if e.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("residuals must be finite".into()));
    }
    for (name, v) in [("sigma", sigma), ("d", d), ("a", a)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Input(format!("{name} must be positive and finite, got {v}")));
        }
    }
    Ok(())
}

/// Negative log-likelihood of one channel's residuals; residuals beyond
/// `±a` are evaluated at the boundary.
pub fn channel_objective(e: &[f64], sigma: f64, d: f64, a: f64) -> Result<f64> {
    Ok(objective_and_gradient(e, sigma.ln(), d.ln(), a)?.0)
}

/// Objective and its gradient with respect to `(log σ, log d)`.
pub fn objective_and_gradient(e: &[f64], log_sigma: f64, log_d: f64, a: f64) -> Result<(f64, [f64; 2])> {
    let (s, d) = (log_sigma.exp(), log_d.exp());
    validate(e, s, d, a)?;
    let n = e.len() as f64;
    let s2 = s * s;
    let b = a / d;
    let (z, dz_dls) = partition_with_sigma_derivative(s, b)?;
    if !(z > f64::MIN_POSITIVE) {
        return Err(Error::Numeric(format!("partition integral underflowed at sigma={s}, d={d}")));
    }
    let edge = log_kernel(b, s).exp();

    let mut value = n * (z.ln() + log_d);
    let mut g_sigma = n * dz_dls / z;
    let mut g_d = n * (1.0 - 2.0 * b * edge / z);
    for &ek in e {
        let r = ek.abs().min(a) / d;
        let w = -(r * r) / (2.0 * s2);
        value -= s2 * w.exp_m1();
        g_sigma -= 2.0 * s2 * sigma_sensitivity(w);
        g_d -= r * r * w.exp();
    }
    Ok((value, [g_sigma, g_d]))
}

/// Fit both σ and d for one channel, starting from `init` and keeping its `a`.
pub fn optimize_channel(e: &[f64], init: &ChannelParams, config: &SolverConfig) -> Result<ChannelFit> {
    optimize_channel_with(e, init, config, ChannelFitOptions::default())
}

pub fn optimize_channel_with(
    e: &[f64],
    init: &ChannelParams,
    config: &SolverConfig,
    opts: ChannelFitOptions,
) -> Result<ChannelFit> {
    config.validate()?;
    if e.len() < 3 {
        return Err(Error::Input(format!("channel fit needs at least 3 residuals, got {}", e.len())));
    }
    let a = init.a();
    let (ls0, ld0) = (init.sigma().ln(), init.d().ln());
    let free: Vec<usize> = [(0, opts.optimize_sigma), (1, opts.optimize_d)]
        .iter()
        .filter_map(|&(i, on)| on.then_some(i))
        .collect();
    let full = |x: &DVector<f64>| {
        let mut z = [ls0, ld0];
        for (j, &i) in free.iter().enumerate() {
            z[i] = x[j];
        }
        z
    };
    let initial_objective = objective_and_gradient(e, ls0, ld0, a)?.0;
    if free.is_empty() {
        return Ok(ChannelFit {
            params: *init,
            converged: true,
            status: BfgsStatus::GradientTolerance,
            iterations: 0,
            initial_objective,
            objective: initial_objective,
            history: vec![initial_objective],
        });
    }
    let x0 = DVector::from_iterator(free.len(), free.iter().map(|&i| [ls0, ld0][i]));
    let bfgs = BfgsOptions {
        max_iters: config.bfgs_max_iters,
        grad_tol: config.grad_tol,
        step_tol: config.step_tol,
        // At most one e-fold per iteration so a long step cannot jump over
        // the likelihood peak onto the flat small-σ plateau.
        max_step: MAX_LOG_STEP,
        ..BfgsOptions::default()
    };
    let out = minimize(
        |x| {
            let z = full(x);
            let (v, g) = objective_and_gradient(e, z[0], z[1], a)?;
            Ok((v, DVector::from_iterator(free.len(), free.iter().map(|&i| g[i]))))
        },
        x0,
        &bfgs,
    )?;
    let z = full(&out.z);
    let sigma = if opts.optimize_sigma { z[0].exp() } else { init.sigma() };
    let d = if opts.optimize_d { z[1].exp() } else { init.d() };
    let params = ChannelParams::new(sigma, d, a)?;
    Ok(ChannelFit {
        params,
        converged: out.converged(),
        status: out.status,
        iterations: out.iterations,
        initial_objective,
        objective: out.value,
        history: out.history,
    })
}
