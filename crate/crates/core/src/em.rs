//! Alternating estimation of the regression parameters and the per-channel
//! correntropy parameters.
//!
//! Starting from a fixed-point fit under the initial channels, each outer
//! iteration re-fits `(σ_i, d_i)` for every channel from the current
//! residuals and then re-solves θ under the new channels. Both half-steps
//! increase the same truncated log-likelihood.

use nalgebra::DVector;

use crate::baselines::fit_penalized;
use crate::distribution::{residual_log_likelihood, TruncationRule};
use crate::error::Result;
use crate::param_opt::{channel_objective, optimize_channel_with, ChannelFitOptions};
use crate::solver::{fit_mkc, mkcl_loss};
use crate::types::{channel_column, residuals, ChannelParams, Dataset, PrecisionSpec, RegressionResult, SolverConfig};

/// Bandwidth used for default initial channels.
pub const DEFAULT_INITIAL_SIGMA: f64 = 20.0;

#[derive(Debug, Clone, PartialEq)]
pub struct EmOptions {
    /// When false only the θ-refit runs; channels stay at their initial values.
    pub reestimate: bool,
    /// Per-channel free parameters; a single entry applies to every channel.
    pub channel_fit: Vec<ChannelFitOptions>,
    pub truncation: TruncationRule,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self { reestimate: true, channel_fit: vec![ChannelFitOptions::default()], truncation: TruncationRule::default() }
    }
}

impl EmOptions {
    fn fit_options(&self, i: usize) -> ChannelFitOptions {
        match self.channel_fit.len() {
            0 => ChannelFitOptions::default(),
            1 => self.channel_fit[0],
            _ => self.channel_fit.get(i).copied().unwrap_or_default(),
        }
    }
}

/// State after one outer iteration; entry 0 is the initial fit.
#[derive(Debug, Clone, PartialEq)]
pub struct EmIteration {
    pub iteration: usize,
    pub theta: DVector<f64>,
    pub channels: Vec<ChannelParams>,
    pub loglik: f64,
    /// Residuals evaluated at the truncation boundary.
    pub clamped: usize,
    /// Channels whose re-estimation failed and kept their previous values.
    pub failed_channels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmFit {
    pub result: RegressionResult,
    pub channels: Vec<ChannelParams>,
    pub trace: Vec<EmIteration>,
}

/// σ = 20 and `d_i` equal to the residual standard deviation of channel `i`
/// after a least-squares fit.
pub fn default_initial_channels(data: &Dataset, config: &SolverConfig) -> Result<Vec<ChannelParams>> {
    let theta = fit_penalized(data, &PrecisionSpec::unit(data.outputs()), 0.0, config.ridge_guard)?.theta;
    let res = residuals(data, &theta)?;
    let rule = TruncationRule::default();
    (0..data.outputs())
        .map(|i| {
            let col = channel_column(&res, i);
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            let d = if sd > 0.0 { sd } else { 1.0 };
            ChannelParams::new(DEFAULT_INITIAL_SIGMA, d, rule.half_width(&col, d))
        })
        .collect()
}

pub fn fit_mkc_em(data: &Dataset, init_channels: &[ChannelParams], config: &SolverConfig) -> Result<EmFit> {
    fit_mkc_em_with(data, init_channels, config, &EmOptions::default())
}

pub fn fit_mkc_em_with(
    data: &Dataset,
    init_channels: &[ChannelParams],
    config: &SolverConfig,
    opts: &EmOptions,
) -> Result<EmFit> {
    config.validate()?;
    let m = data.outputs();
    let init_fit = fit_mkc(data, &PrecisionSpec::from_channels(init_channels), init_channels, config, None)?;
    let mut theta = init_fit.theta.clone();
    let mut channels = init_channels.to_vec();

    if config.em_iters == 0 {
        let res = residuals(data, &theta)?;
        let ll = residual_log_likelihood(&res, &channels);
        let trace = vec![EmIteration {
            iteration: 0,
            theta: theta.clone(),
            channels: channels.clone(),
            loglik: ll.value,
            clamped: ll.clamped,
            failed_channels: Vec::new(),
        }];
        return Ok(EmFit { result: init_fit, channels, trace });
    }

    // Truncation domains are set once from the initial residuals and only
    // widened when a later residual falls outside them.
    let res = residuals(data, &theta)?;
    if opts.reestimate {
        for (i, ch) in channels.iter_mut().enumerate() {
            *ch = ch.with_a(opts.truncation.half_width(&channel_column(&res, i), ch.d()))?;
        }
    }
    let ll = residual_log_likelihood(&res, &channels);
    let mut trace = vec![EmIteration {
        iteration: 0,
        theta: theta.clone(),
        channels: channels.clone(),
        loglik: ll.value,
        clamped: ll.clamped,
        failed_channels: Vec::new(),
    }];

    let mut loss_trace = Vec::new();
    let mut converged = false;
    let mut last_inner_converged = init_fit.converged;
    let mut prev_ll = ll.value;
    for t in 1..=config.em_iters {
        let mut failed = Vec::new();
        if opts.reestimate {
            let res = residuals(data, &theta)?;
            for i in 0..m {
                let col = channel_column(&res, i);
                let max_abs = col.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                let mut start = channels[i];
                if max_abs > start.a() {
                    start = start.with_a(opts.truncation.half_width(&col, start.d()))?;
                }
                let fit_opts = opts.fit_options(i);
                let mut best = optimize_channel_with(&col, &start, config, fit_opts);
                // The objective is nearly flat in σ once σ is large, so a
                // channel that drifted there is also re-fitted from the
                // initial bandwidth and the better optimum is kept.
                let restart_sigma = init_channels[i].sigma();
                if fit_opts.optimize_sigma && restart_sigma != start.sigma() {
                    let alt = optimize_channel_with(&col, &start.with_sigma(restart_sigma)?, config, fit_opts);
                    best = match (best, alt) {
                        (Ok(a), Ok(b)) => Ok(if b.objective < a.objective { b } else { a }),
                        (Err(_), Ok(b)) if b.objective <= start_objective(&col, &start)? => Ok(b),
                        (a, _) => a,
                    };
                }
                match best {
                    Ok(fit) => channels[i] = fit.params,
                    Err(_) => {
                        channels[i] = start;
                        failed.push(i);
                    }
                }
            }
        }
        let fit = fit_mkc(data, &PrecisionSpec::from_channels(&channels), &channels, config, Some(&theta))?;
        theta = fit.theta;
        last_inner_converged = fit.converged;
        loss_trace.push(mkcl_loss(data, &theta, &channels)?);
        let res = residuals(data, &theta)?;
        let ll = residual_log_likelihood(&res, &channels);
        trace.push(EmIteration {
            iteration: t,
            theta: theta.clone(),
            channels: channels.clone(),
            loglik: ll.value,
            clamped: ll.clamped,
            failed_channels: failed,
        });
        let gain = ll.value - prev_ll;
        prev_ll = ll.value;
        if gain < config.em_tol {
            converged = true;
            break;
        }
    }
    let result = RegressionResult {
        theta,
        iterations: loss_trace.len(),
        converged: converged && last_inner_converged,
        loss_trace,
        loglik: Some(prev_ll),
    };
    Ok(EmFit { result, channels, trace })
}

fn start_objective(e: &[f64], ch: &ChannelParams) -> Result<f64> {
    channel_objective(e, ch.sigma(), ch.d(), ch.a())
}
