//! BFGS quasi-Newton minimization with a backtracking Armijo line search.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    pub max_iters: usize,
    /// Stop when `‖∇f‖₂ ≤ grad_tol`.
    pub grad_tol: f64,
    /// Stop when the accepted step satisfies `‖s‖₂ ≤ step_tol`.
    pub step_tol: f64,
    /// Armijo sufficient-decrease constant.
    pub c1: f64,
    pub shrink: f64,
    pub max_backtracks: usize,
    /// Longest trial step `‖αp‖₂`; longer search directions are scaled down.
    pub max_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { max_iters: 200, grad_tol: 1e-6, step_tol: 1e-8, c1: 1e-4, shrink: 0.5, max_backtracks: 50, max_step: f64::INFINITY }
    }
}

/// Current point and inverse-Hessian approximation.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub z: DVector<f64>,
    pub h: DMatrix<f64>,
    pub iteration: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BfgsStatus {
    GradientTolerance,
    StepTolerance,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfgsOutcome {
    pub z: DVector<f64>,
    pub value: f64,
    pub gradient: DVector<f64>,
    pub iterations: usize,
    pub status: BfgsStatus,
    /// Objective at the start and after every accepted step.
    pub history: Vec<f64>,
}

impl BfgsOutcome {
    pub fn converged(&self) -> bool {
        matches!(self.status, BfgsStatus::GradientTolerance | BfgsStatus::StepTolerance)
    }
}

/// `H + (sᵀy + yᵀHy)(ssᵀ)/(sᵀy)² − (Hysᵀ + syᵀH)/(sᵀy)`.
fn bfgs_update(h: &DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>, sy: f64) -> DMatrix<f64> {
    let hy = h * y;
    let yhy = y.dot(&hy);
    let ss = s * s.transpose();
    let cross = &hy * s.transpose() + s * hy.transpose();
    h + ss * ((sy + yhy) / (sy * sy)) - cross / sy
}

/// Minimize `f`, which returns the value and gradient at a point.
///
/// Trial points where `f` fails or is non-finite are rejected by the line
/// search; a failure at `z0` is returned as an error.
pub fn minimize<F>(mut f: F, z0: DVector<f64>, opts: &BfgsOptions) -> Result<BfgsOutcome>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>)>,
{
    let dim = z0.len();
    let (mut fz, mut g) = f(&z0)?;
    let mut state = OptimizerState { z: z0, h: DMatrix::identity(dim, dim), iteration: 0 };
    let mut history = vec![fz];
    let finish = |state: OptimizerState, fz, g, status, history| BfgsOutcome {
        z: state.z,
        value: fz,
        gradient: g,
        iterations: state.iteration,
        status,
        history,
    };
    if g.norm() <= opts.grad_tol {
        return Ok(finish(state, fz, g, BfgsStatus::GradientTolerance, history));
    }
    let mut first = true;
    while state.iteration < opts.max_iters {
        let mut p = -(&state.h * &g);
        let mut slope = g.dot(&p);
        if !(slope < 0.0) {
            state.h = DMatrix::identity(dim, dim);
            p = -g.clone();
            slope = g.dot(&p);
        }
        let mut alpha = if first { (1.0 / g.norm()).min(1.0) } else { 1.0 };
        alpha = alpha.min(opts.max_step / p.norm());
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let trial = &state.z + &p * alpha;
            if let Ok((ft, gt)) = f(&trial) {
                if ft.is_finite() && gt.iter().all(|v| v.is_finite()) && ft <= fz + opts.c1 * alpha * slope {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            alpha *= opts.shrink;
        }
        let Some((z_new, f_new, g_new)) = accepted else {
            return Ok(finish(state, fz, g, BfgsStatus::LineSearchFailed, history));
        };
        let s = &z_new - &state.z;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 {
            if first {
                // scale the initial identity before the first update
                state.h = DMatrix::identity(dim, dim) * (sy / y.dot(&y));
            }
            state.h = bfgs_update(&state.h, &s, &y, sy);
        } else {
            state.h = DMatrix::identity(dim, dim);
        }
        first = false;
        state.z = z_new;
        state.iteration += 1;
        fz = f_new;
        g = g_new;
        history.push(fz);
        if g.norm() <= opts.grad_tol {
            return Ok(finish(state, fz, g, BfgsStatus::GradientTolerance, history));
        }
        if s.norm() <= opts.step_tol {
            return Ok(finish(state, fz, g, BfgsStatus::StepTolerance, history));
        }
    }
    Ok(finish(state, fz, g, BfgsStatus::MaxIterations, history))
}
