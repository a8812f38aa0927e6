//! Weighted normal equations shared by the closed-form and iterative fits.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::types::Dataset;

/// Largest tolerated condition-number estimate of the (guarded) normal matrix.
const MAX_CONDITION: f64 = 1e15;

/// Accumulate `Σ_k X_kᵀ diag(w_k) X_k` and `Σ_k X_kᵀ diag(w_k) y_k`, where
/// `w_k` is the per-channel weight vector returned by `weight(k)`.
pub(crate) fn weighted_normal_equations<F>(data: &Dataset, mut weight: F) -> (DMatrix<f64>, DVector<f64>)
where
    F: FnMut(usize) -> Vec<f64>,
{
    let n = data.params();
    let mut lhs = DMatrix::zeros(n, n);
    let mut rhs = DVector::zeros(n);
    for (k, s) in data.samples().iter().enumerate() {
        let w = weight(k);
        for (i, wi) in w.iter().enumerate() {
            let row = s.x.row(i);
            // rank-one update with the i-th regressor row
            for p in 0..n {
                let rp = row[p] * wi;
                if rp == 0.0 {
                    continue;
                }
                rhs[p] += rp * s.y[i];
                for q in 0..n {
                    lhs[(p, q)] += rp * row[q];
                }
            }
        }
    }
    (lhs, rhs)
}

/// Solve the symmetric positive-definite system `(A + g·I) x = b` with
/// `g = ridge_guard · trace(A) / n` by Cholesky factorisation.
pub(crate) fn solve_spd(mut lhs: DMatrix<f64>, rhs: &DVector<f64>, ridge_guard: f64) -> Result<DVector<f64>> {
    let n = lhs.nrows();
    let guard = ridge_guard * lhs.trace() / n as f64;
    if guard > 0.0 {
        for i in 0..n {
            lhs[(i, i)] += guard;
        }
    }
    let Some(chol) = lhs.cholesky() else {
        return Err(Error::Singular { condition: f64::INFINITY });
    };
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v.abs()), hi.max(v.abs())));
    let condition = if lo > 0.0 { (hi / lo).powi(2) } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::Singular { condition });
    }
    let x = chol.solve(rhs);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular { condition });
    }
    Ok(x)
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
