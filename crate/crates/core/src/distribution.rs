//! The heavy-tailed density for which minimizing the multi-kernel correntropy
//! loss is maximum-likelihood estimation, truncated to `[-a, a]`:
//!
//! `p(e) = (c/d) · exp(−σ²(1 − exp(−e²/(2d²σ²))))`
//!
//! The Gaussian head has width `d`; the tail flattens towards the level
//! `(c/d)·exp(−σ²)` and becomes uniform as `σ → 0⁺`, Gaussian as `σ → ∞`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::quadrature::{integrate, Tolerance};
use crate::types::{residuals, ChannelParams, Dataset, PrecisionSpec};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Exponent of the unnormalized density at normalized error `u = e/d`:
/// `σ²·(exp(−u²/(2σ²)) − 1)`.
#[inline]
pub fn log_kernel(u: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    s2 * (-(u * u) / (2.0 * s2)).exp_m1()
}

/// `eʷ − 1 − w·eʷ`, the derivative of `σ²(eʷ − 1)` with respect to `log σ`
/// divided by `2σ²` when `w = −u²/(2σ²)`. Series for small `|w|` avoids the
/// cancellation that otherwise swamps large-σ evaluations.
#[inline]
pub(crate) fn sigma_sensitivity(w: f64) -> f64 {
    if w.abs() < 0.1 {
        // −Σ_{n≥2} (n−1) wⁿ / n!
        let mut term = w; // wⁿ/n! at n = 1
        let mut sum = 0.0;
        for n in 2..20 {
            term *= w / n as f64;
            sum -= (n as f64 - 1.0) * term;
        }
        sum
    } else {
        w.exp_m1() - w * w.exp()
    }
}

fn breakpoints(sigma: f64, upper: f64) -> Vec<f64> {
    let mut pts = Vec::new();
    let mut x = 0.25 * sigma.min(1.0);
    while x < upper {
        pts.push(x);
        x *= 2.0;
    }
    pts
}

/// `∫_{-b}^{b} exp(log_kernel(u, σ)) du` in normalized units.
pub(crate) fn partition(sigma: f64, b: f64) -> Result<f64> {
    let est = integrate(|u| log_kernel(u, sigma).exp(), 0.0, b, &breakpoints(sigma, b), Tolerance::default())?;
    Ok(2.0 * est.value)
}

/// Partition function and its derivative with respect to `log σ`.
pub(crate) fn partition_with_sigma_derivative(sigma: f64, b: f64) -> Result<(f64, f64)> {
    let s2 = sigma * sigma;
    let breaks = breakpoints(sigma, b);
    let z = partition(sigma, b)?;
    let dz = integrate(
        |u| {
            let w = -(u * u) / (2.0 * s2);
            (s2 * w.exp_m1()).exp() * 2.0 * s2 * sigma_sensitivity(w)
        },
        0.0,
        b,
        &breaks,
        Tolerance { abs: 1e-12, ..Tolerance::default() },
    )?;
    Ok((z, 2.0 * dz.value))
}

/// Normalization constant `c` making the truncated density integrate to one
/// over `[-a, a]`. Depends on `(d, a)` only through `a/d`.
pub fn normalization_constant(sigma: f64, d: f64, a: f64) -> Result<f64> {
    for (name, v) in [("sigma", sigma), ("d", d), ("a", a)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Input(format!("{name} must be positive and finite, got {v}")));
        }
    }
    let z = partition(sigma, a / d)?;
    if !(z > f64::MIN_POSITIVE) {
        return Err(Error::Numeric(format!(
            "normalization integral underflowed for sigma={sigma}, d={d}, a={a}"
        )));
    }
    Ok(1.0 / z)
}

/// Density at `e`; zero outside the truncation domain.
pub fn pdf(e: f64, params: &ChannelParams) -> f64 {
    if e.abs() > params.a() {
        return 0.0;
    }
    params.c() / params.d() * log_kernel(e / params.d(), params.sigma()).exp()
}

/// Log-density with residuals outside `[-a, a]` evaluated at the boundary.
/// The flag reports whether clamping happened.
pub fn log_pdf_clamped(e: f64, params: &ChannelParams) -> (f64, bool) {
    let clamped = e.abs() > params.a();
    let e = if clamped { params.a() } else { e };
    ((params.c() / params.d()).ln() + log_kernel(e / params.d(), params.sigma()), clamped)
}

/// Mean log-likelihood together with the number of clamped residuals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikelihoodEval {
    pub value: f64,
    pub clamped: usize,
}

fn check_channels(data: &Dataset, channels: &[ChannelParams]) -> Result<()> {
    if channels.len() != data.outputs() {
        return Err(Error::Dimension { expected: data.outputs(), got: channels.len() });
    }
    Ok(())
}

/// `(1/N) Σ_k Σ_i log p_i(e_k(i))` with boundary clamping.
pub fn log_likelihood_eval(data: &Dataset, theta: &DVector<f64>, channels: &[ChannelParams]) -> Result<LikelihoodEval> {
    check_channels(data, channels)?;
    let res = residuals(data, theta)?;
    Ok(residual_log_likelihood(&res, channels))
}

pub(crate) fn residual_log_likelihood(res: &[DVector<f64>], channels: &[ChannelParams]) -> LikelihoodEval {
    let mut total = 0.0;
    let mut clamped = 0;
    for e in res {
        for (v, ch) in e.iter().zip(channels) {
            let (lp, c) = log_pdf_clamped(*v, ch);
            total += lp;
            clamped += c as usize;
        }
    }
    LikelihoodEval { value: total / res.len() as f64, clamped }
}

pub fn log_likelihood(data: &Dataset, theta: &DVector<f64>, channels: &[ChannelParams]) -> Result<f64> {
    Ok(log_likelihood_eval(data, theta, channels)?.value)
}

/// Mean of the densities rather than of their logarithms, `(1/N) Σ_k Π_i p_i`.
/// Exposed for reproducing plots that use this score.
pub fn mean_density_score(data: &Dataset, theta: &DVector<f64>, channels: &[ChannelParams]) -> Result<f64> {
    check_channels(data, channels)?;
    let res = residuals(data, theta)?;
    let total: f64 = res
        .iter()
        .map(|e| e.iter().zip(channels).map(|(v, ch)| pdf(*v, ch)).product::<f64>())
        .sum();
    Ok(total / res.len() as f64)
}

/// Gaussian mean log-likelihood `(1/N) Σ_k Σ_i [−log(√(2π) d_i) − e²/(2d_i²)]`.
pub fn gaussian_log_likelihood(data: &Dataset, theta: &DVector<f64>, prec: &PrecisionSpec) -> Result<f64> {
    if prec.len() != data.outputs() {
        return Err(Error::Dimension { expected: data.outputs(), got: prec.len() });
    }
    let res = residuals(data, theta)?;
    Ok(gaussian_residual_log_likelihood(&res, prec.d()))
}

pub(crate) fn gaussian_residual_log_likelihood(res: &[DVector<f64>], d: &[f64]) -> f64 {
    let total: f64 = res
        .iter()
        .map(|e| {
            e.iter()
                .zip(d)
                .map(|(v, di)| -LN_SQRT_2PI - di.ln() - v * v / (2.0 * di * di))
                .sum::<f64>()
        })
        .sum();
    total / res.len() as f64
}

/// Truncation rule for the density domain: `a = max(factor·max|e|, floor·d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationRule {
    pub factor: f64,
    pub floor: f64,
}

impl Default for TruncationRule {
    fn default() -> Self {
        Self { factor: 1.2, floor: 10.0 }
    }
}

impl TruncationRule {
    pub fn half_width(&self, residuals: &[f64], d: f64) -> f64 {
        let max_abs = residuals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        (self.factor * max_abs).max(self.floor * d)
    }
}
