//! Shared data model: datasets, precision weights, channel parameters and
//! solver configuration.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::distribution;
use crate::error::{Error, Result};

/// One regression sample `y_k = X_k θ + v_k` with `X_k` of shape m×n.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl Sample {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Self {
        Self { x, y }
    }
}

/// An ordered list of samples sharing the same output dimension `m` and
/// parameter dimension `n`.
///
/// Samples are kept as blocks rather than one stacked matrix so that
/// per-sample channel weights can be applied without reshuffling rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    m: usize,
    n: usize,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::Input("dataset needs at least one sample".into()))?;
        let (m, n) = first.x.shape();
        if m == 0 || n == 0 {
            return Err(Error::Input("output and parameter dimensions must be >= 1".into()));
        }
        for (k, s) in samples.iter().enumerate() {
            if s.x.shape() != (m, n) || s.y.len() != m {
                return Err(Error::Input(format!(
                    "sample {k} has shape {:?}/{} but dataset is {m}x{n}",
                    s.x.shape(),
                    s.y.len()
                )));
            }
            if s.x.iter().chain(s.y.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Input(format!("sample {k} contains a non-finite entry")));
            }
        }
        Ok(Self { samples, m, n })
    }

    /// Scalar problem `y_k = x_k θ + v_k` (m = n = 1).
    pub fn scalar(x: &[f64], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Dimension { expected: x.len(), got: y.len() });
        }
        Self::new(
            x.iter()
                .zip(y)
                .map(|(&xk, &yk)| Sample::new(DMatrix::from_element(1, 1, xk), DVector::from_element(1, yk)))
                .collect(),
        )
    }

    /// Single-output problem with one regressor row per sample.
    pub fn single_output(rows: &[Vec<f64>], y: &[f64]) -> Result<Self> {
        if rows.len() != y.len() {
            return Err(Error::Dimension { expected: rows.len(), got: y.len() });
        }
        Self::new(
            rows.iter()
                .zip(y)
                .map(|(r, &yk)| Sample::new(DMatrix::from_row_slice(1, r.len(), r), DVector::from_element(1, yk)))
                .collect(),
        )
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    /// Number of samples N.
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Output dimension m.
    pub fn outputs(&self) -> usize {
        self.m
    }

    /// Parameter dimension n.
    pub fn params(&self) -> usize {
        self.n
    }

    /// Stacked views `(X, Y)` of shape (mN × n, mN).
    pub fn stacked(&self) -> (DMatrix<f64>, DVector<f64>) {
        let rows = self.m * self.len();
        let mut x = DMatrix::zeros(rows, self.n);
        let mut y = DVector::zeros(rows);
        for (k, s) in self.samples.iter().enumerate() {
            x.view_mut((k * self.m, 0), (self.m, self.n)).copy_from(&s.x);
            y.rows_mut(k * self.m, self.m).copy_from(&s.y);
        }
        (x, y)
    }

    /// Restrict the dataset to a single output channel.
    pub fn channel(&self, i: usize) -> Result<Self> {
        if i >= self.m {
            return Err(Error::Dimension { expected: self.m, got: i });
        }
        Self::new(
            self.samples
                .iter()
                .map(|s| Sample::new(s.x.rows(i, 1).into_owned(), DVector::from_element(1, s.y[i])))
                .collect(),
        )
    }

    pub(crate) fn check_theta(&self, theta: &DVector<f64>) -> Result<()> {
        if theta.len() != self.n {
            return Err(Error::Dimension { expected: self.n, got: theta.len() });
        }
        Ok(())
    }
}

/// Residuals `e_k = y_k − X_k θ` for every sample, in order.
pub fn residuals(data: &Dataset, theta: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
    data.check_theta(theta)?;
    Ok(data.samples.iter().map(|s| &s.y - &s.x * theta).collect())
}

/// Channel `i` of every residual vector.
pub fn channel_column(res: &[DVector<f64>], i: usize) -> Vec<f64> {
    res.iter().map(|e| e[i]).collect()
}

/// Per-channel nominal standard deviations `d_i`; the precision matrix is
/// `P = diag(1/d_i²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionSpec {
    d: Vec<f64>,
}

impl PrecisionSpec {
    pub fn new(d: Vec<f64>) -> Result<Self> {
        if d.is_empty() {
            return Err(Error::Input("precision needs at least one channel".into()));
        }
        if let Some(bad) = d.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Input(format!("nominal standard deviation must be positive, got {bad}")));
        }
        Ok(Self { d })
    }

    pub fn unit(m: usize) -> Self {
        Self { d: vec![1.0; m] }
    }

    pub fn from_channels(channels: &[ChannelParams]) -> Self {
        Self { d: channels.iter().map(|c| c.d()).collect() }
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    /// Diagonal of P.
    pub fn precision(&self) -> Vec<f64> {
        self.d.iter().map(|d| 1.0 / (d * d)).collect()
    }
}

/// `ẽ_k(i) = e_k(i) / d_i`.
pub fn weighted_residuals(e: &[DVector<f64>], prec: &PrecisionSpec) -> Result<Vec<DVector<f64>>> {
    let d = prec.d();
    e.iter()
        .map(|ek| {
            if ek.len() != d.len() {
                return Err(Error::Dimension { expected: d.len(), got: ek.len() });
            }
            Ok(DVector::from_iterator(ek.len(), ek.iter().zip(d).map(|(v, di)| v / di)))
        })
        .collect()
}

/// Per-channel correntropy parameters together with the truncation
/// half-width of the induced density and its cached normalization constant.
///
/// The constant is recomputed by every constructor, so a value of this type
/// is always self-consistent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelParams {
    sigma: f64,
    d: f64,
    a: f64,
    c: f64,
}

impl ChannelParams {
    pub fn new(sigma: f64, d: f64, a: f64) -> Result<Self> {
        for (name, v) in [("sigma", sigma), ("d", d), ("a", a)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Input(format!("{name} must be positive and finite, got {v}")));
            }
        }
        let c = distribution::normalization_constant(sigma, d, a)?;
        Ok(Self { sigma, d, a, c })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Self::new(sigma, self.d, self.a)
    }

    pub fn with_d(&self, d: f64) -> Result<Self> {
        Self::new(self.sigma, d, self.a)
    }

    pub fn with_a(&self, a: f64) -> Result<Self> {
        Self::new(self.sigma, self.d, a)
    }
}

/// Iteration caps and tolerances shared by the iterative solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Relative θ-update threshold for the fixed-point iteration.
    pub psi: f64,
    pub max_fixed_point_iters: usize,
    /// Outer EM iterations.
    pub em_iters: usize,
    /// Early EM stop when the log-likelihood improves by less than this.
    pub em_tol: f64,
    pub bfgs_max_iters: usize,
    /// Gradient-norm stop for BFGS.
    pub grad_tol: f64,
    /// Step-norm stop for BFGS.
    pub step_tol: f64,
    /// Relative diagonal loading: the normal matrix `A` is solved as
    /// `A + ridge_guard·trace(A)/n·I`.
    pub ridge_guard: f64,
    pub lad_max_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            psi: 1e-6,
            max_fixed_point_iters: 100,
            em_iters: 10,
            em_tol: 1e-8,
            bfgs_max_iters: 200,
            grad_tol: 1e-6,
            step_tol: 1e-8,
            ridge_guard: 1e-12,
            lad_max_iters: 1000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("psi", self.psi),
            ("em_tol", self.em_tol),
            ("grad_tol", self.grad_tol),
            ("step_tol", self.step_tol),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Input(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.ridge_guard.is_finite() && self.ridge_guard >= 0.0) {
            return Err(Error::Input(format!("ridge_guard must be nonnegative, got {}", self.ridge_guard)));
        }
        if self.max_fixed_point_iters == 0 || self.bfgs_max_iters == 0 || self.lad_max_iters == 0 {
            return Err(Error::Input("iteration caps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Outcome of a regression fit.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionResult {
    pub theta: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Objective value after each iteration; empty for closed-form fits.
    pub loss_trace: Vec<f64>,
    pub loglik: Option<f64>,
}

impl RegressionResult {
    pub(crate) fn closed_form(theta: DVector<f64>) -> Self {
        Self { theta, iterations: 0, converged: true, loss_trace: Vec::new(), loglik: None }
    }
}
