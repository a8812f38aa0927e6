//! Upper error bound for scalar regression under the correntropy loss when
//! a majority `M > N/2` of the normalized noises is bounded by `ε` and the
//! rest are arbitrary outliers.
//!
//! With `p = exp(−ε²/(2σ²))` and `q = (N−M)/M`, any global minimizer of the
//! loss satisfies `|θ − θ°| ≤ ξ` where
//! `ξ = (d/ζ)(√(−2σ² log(p − q)) + ε)`, provided `σ > ε/√(2 log(M/(N−M)))`.

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::baselines::fit_lad;
use crate::datagen::stream_rng;
use crate::error::{Error, Result};
use crate::solver::{fit_mkc, mkcl_loss};
use crate::types::{ChannelParams, Dataset, PrecisionSpec, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundSpec {
    /// Total samples N.
    pub n: usize,
    /// Inlier count M.
    pub m: usize,
    /// Normalized inlier noise bound ε.
    pub epsilon: f64,
    /// Lower bound ζ on |x_k|.
    pub zeta: f64,
    pub d: f64,
    pub sigma: f64,
}

impl BoundSpec {
    pub fn with_sigma(&self, sigma: f64) -> Self {
        Self { sigma, ..*self }
    }

    /// Outlier-to-inlier ratio `(N−M)/M`.
    pub fn q(&self) -> f64 {
        (self.n - self.m) as f64 / self.m as f64
    }

    /// `p = exp(−ε²/(2σ²))`.
    pub fn p(&self) -> f64 {
        (-self.half_ratio()).exp()
    }

    fn half_ratio(&self) -> f64 {
        self.epsilon * self.epsilon / (2.0 * self.sigma * self.sigma)
    }

    /// Smallest admissible bandwidth `ε/√(2 log(M/(N−M)))` (exclusive).
    pub fn admissible_sigma(&self) -> f64 {
        if self.m == self.n || self.epsilon == 0.0 {
            return 0.0;
        }
        self.epsilon / (2.0 * (self.m as f64 / (self.n - self.m) as f64).ln()).sqrt()
    }

    /// Checks everything except the bandwidth.
    pub fn validate_counts(&self) -> Result<()> {
        if self.m > self.n {
            return Err(Error::Domain(format!("inlier count M={} exceeds N={}", self.m, self.n)));
        }
        if 2 * self.m <= self.n {
            return Err(Error::Domain(format!("M > N/2 violated (N={}, M={})", self.n, self.m)));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::Domain(format!("epsilon must be nonnegative, got {}", self.epsilon)));
        }
        for (name, v) in [("zeta", self.zeta), ("d", self.d)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_counts()?;
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::Domain(format!("sigma must be positive, got {}", self.sigma)));
        }
        let lo = self.admissible_sigma();
        if self.sigma <= lo {
            return Err(Error::Domain(format!(
                "admissibility violated: need σ > ε/√(2 log(M/(N−M))) = {lo}, got σ = {}",
                self.sigma
            )));
        }
        if self.log_gap() >= 0.0 || !self.log_gap().is_finite() {
            return Err(Error::Domain("exp(−ε²/2σ²) − (N−M)/M must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// `log(p − q)` evaluated as `log1p(expm1(−ε²/2σ²) − q)`.
    fn log_gap(&self) -> f64 {
        ((-self.half_ratio()).exp_m1() - self.q()).ln_1p()
    }
}

/// The bound ξ for the given specification.
pub fn error_bound(spec: &BoundSpec) -> Result<f64> {
    spec.validate()?;
    let radical = (-2.0 * spec.sigma * spec.sigma * spec.log_gap()).sqrt();
    Ok(spec.d / spec.zeta * (radical + spec.epsilon))
}

/// `φ(p) = p log p / ((p − q) log(p − q))`; the bound is stationary in σ
/// where `φ = 1`.
pub fn phi(spec: &BoundSpec) -> f64 {
    let t = spec.half_ratio();
    let p_log_p = -t * (-t).exp();
    let gap_m1 = (-t).exp_m1() - spec.q();
    p_log_p / ((1.0 + gap_m1) * gap_m1.ln_1p())
}

/// ξ evaluated at every bandwidth in `sigma_grid`.
pub fn bound_curve(spec_base: &BoundSpec, sigma_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    sigma_grid
        .iter()
        .map(|&s| Ok((s, error_bound(&spec_base.with_sigma(s))?)))
        .collect()
}

/// Bandwidth minimizing ξ, found by bisection on `φ(p(σ)) = 1` over
/// `(σ_min, 1e8]`.
pub fn optimal_sigma(spec_base: &BoundSpec) -> Result<f64> {
    spec_base.validate_counts()?;
    if spec_base.epsilon <= 0.0 {
        return Err(Error::Domain("optimal bandwidth needs epsilon > 0".into()));
    }
    if spec_base.m == spec_base.n {
        return Err(Error::Domain("without outliers (M = N) the bound is flat in sigma".into()));
    }
    let excess = |s: f64| phi(&spec_base.with_sigma(s)) - 1.0;
    let mut lo = spec_base.admissible_sigma() * (1.0 + 1e-12);
    let mut hi = 1e8;
    if !(excess(lo) > 0.0 && excess(hi) < 0.0) {
        return Err(Error::Domain(format!("no root of phi(p) = 1 in [{lo}, {hi}]")));
    }
    for _ in 0..400 {
        let mid = (lo * hi).sqrt();
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-14 {
            break;
        }
    }
    Ok((lo * hi).sqrt())
}

/// Monte-Carlo check of the bound on synthetic scalar problems.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundValidation {
    pub trials: usize,
    pub bound: f64,
    /// Trials where neither the solver nor the grid refit lands within ξ.
    pub violations: usize,
    /// `max |θ − θ°| / ξ` after the grid refit.
    pub max_ratio: f64,
    /// Trials where the fixed-point solution itself lies outside ξ.
    pub solver_violations: usize,
    pub max_solver_ratio: f64,
}

/// One scalar problem matching `spec`: `|x_k| ∈ (ζ, 3ζ]`, `M` inliers with
/// `|v_k/d| ≤ ε`, `N − M` outliers of magnitude in `[0.5, 1]·outlier_magnitude`
/// with random sign. Returns the dataset and θ°.
pub fn bound_trial_data(spec: &BoundSpec, rng: &mut ChaCha8Rng, outlier_magnitude: f64) -> Result<(Dataset, f64)> {
    let theta = rng.random_range(-2.0..2.0);
    let mut x = Vec::with_capacity(spec.n);
    let mut y = Vec::with_capacity(spec.n);
    for k in 0..spec.n {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let xk = sign * spec.zeta * rng.random_range(1.0 + 1e-9..=3.0);
        let v = if k < spec.m {
            spec.d * spec.epsilon * rng.random_range(-1.0..=1.0)
        } else {
            let s = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            s * outlier_magnitude * rng.random_range(0.5..=1.0)
        };
        x.push(xk);
        y.push(xk * theta + v);
    }
    Ok((Dataset::scalar(&x, &y)?, theta))
}

pub fn validate_bound_empirically(
    spec: &BoundSpec,
    trials: usize,
    seed: u64,
    outlier_magnitude: f64,
) -> Result<BoundValidation> {
    let xi = error_bound(spec)?;
    let config = SolverConfig::default();
    let prec = PrecisionSpec::new(vec![spec.d])?;
    let channel = [ChannelParams::new(spec.sigma, spec.d, 10.0 * spec.d)?];
    let mut out = BoundValidation {
        trials,
        bound: xi,
        violations: 0,
        max_ratio: 0.0,
        solver_violations: 0,
        max_solver_ratio: 0.0,
    };
    for t in 0..trials {
        let mut rng = stream_rng(seed, t as u64);
        let (data, truth) = bound_trial_data(spec, &mut rng, outlier_magnitude)?;
        let start = fit_lad(&data, &config)?.theta;
        let fit = fit_mkc(&data, &prec, &channel, &config, Some(&start))?;
        let solver_err = (fit.theta[0] - truth).abs();
        out.max_solver_ratio = out.max_solver_ratio.max(solver_err / xi);
        let mut err = solver_err;
        if solver_err > xi {
            out.solver_violations += 1;
            let refit = grid_refit(&data, &prec, &channel, &config, truth, xi)?;
            err = (refit - truth).abs();
        }
        out.max_ratio = out.max_ratio.max(err / xi);
        if err > xi {
            out.violations += 1;
        }
    }
    Ok(out)
}

/// Brute-force minimizer of the loss over `θ° ± 3ξ`, polished by the
/// fixed-point iteration when that lowers the loss further.
fn grid_refit(
    data: &Dataset,
    prec: &PrecisionSpec,
    channel: &[ChannelParams],
    config: &SolverConfig,
    center: f64,
    xi: f64,
) -> Result<f64> {
    let steps = 20_000;
    let lo = center - 3.0 * xi;
    let h = 6.0 * xi / steps as f64;
    let mut best = (f64::INFINITY, center);
    for i in 0..=steps {
        let th = lo + i as f64 * h;
        let j = mkcl_loss(data, &DVector::from_element(1, th), channel)?;
        if j < best.0 {
            best = (j, th);
        }
    }
    let polished = fit_mkc(data, prec, channel, config, Some(&DVector::from_element(1, best.1)))?;
    let jp = mkcl_loss(data, &polished.theta, channel)?;
    Ok(if jp < best.0 { polished.theta[0] } else { best.1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> BoundSpec {
        BoundSpec { n: 100, m: 90, epsilon: 1.0, zeta: 1.0, d: 1.0, sigma: 2.0 }
    }

    #[test]
    fn zero_epsilon_closed_form() {
        let spec = BoundSpec { epsilon: 0.0, sigma: 1.7, d: 0.8, zeta: 0.5, ..base() };
        let (n, m) = (spec.n as f64, spec.m as f64);
        let expect = spec.d / spec.zeta * spec.sigma * (2.0 * (m / (2.0 * m - n)).ln()).sqrt();
        assert!((error_bound(&spec).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn bound_via_naive_p_q_route() {
        let spec = base();
        let p = (-(spec.epsilon * spec.epsilon) / (2.0 * spec.sigma * spec.sigma)).exp();
        let q = (spec.n - spec.m) as f64 / spec.m as f64;
        let naive = spec.d / spec.zeta * (spec.sigma * (-2.0 * (p - q).ln()).sqrt() + spec.epsilon);
        assert!((error_bound(&spec).unwrap() - naive).abs() < 1e-12);
        let naive_phi = p * p.ln() / ((p - q) * (p - q).ln());
        assert!((phi(&spec) - naive_phi).abs() < 1e-12);
    }

    #[test]
    fn vanishing_bound_without_noise() {
        let spec = BoundSpec { n: 100, m: 99, epsilon: 0.0, ..base() };
        let small = error_bound(&spec.with_sigma(1e-6)).unwrap();
        let smaller = error_bound(&spec.with_sigma(1e-9)).unwrap();
        assert!(smaller < small && smaller > 0.0 && smaller < 1e-8);
    }

    #[test]
    fn admissibility_errors_name_the_inequality() {
        let spec = base().with_sigma(0.3);
        let err = error_bound(&spec).unwrap_err();
        assert!(err.to_string().contains("ε/√(2 log(M/(N−M)))"));
        assert!(error_bound(&BoundSpec { m: 50, ..base() }).is_err());
        assert!(error_bound(&BoundSpec { m: 101, ..base() }).is_err());
    }

    #[test]
    fn curve_has_single_minimum() {
        let spec = base();
        let lo = spec.admissible_sigma() + 1e-3;
        let grid: Vec<f64> = (0..200).map(|i| lo * (100.0 / lo).powf(i as f64 / 199.0)).collect();
        let curve = bound_curve(&spec, &grid).unwrap();
        let signs: Vec<bool> = curve.windows(2).map(|w| w[1].1 > w[0].1).collect();
        let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(changes, 1);
        assert!(!signs[0] && *signs.last().unwrap());
    }

    #[test]
    fn linear_growth_for_large_sigma() {
        let spec = base();
        let r = error_bound(&spec.with_sigma(1e4)).unwrap() / error_bound(&spec.with_sigma(1e3)).unwrap();
        assert!((r / 10.0 - 1.0).abs() < 0.02);
    }

    #[test]
    fn single_point_grid() {
        assert_eq!(bound_curve(&base(), &[3.0]).unwrap().len(), 1);
    }

    #[test]
    fn optimum_satisfies_root_condition() {
        let spec = base();
        let s = optimal_sigma(&spec).unwrap();
        assert!((phi(&spec.with_sigma(s)) - 1.0).abs() < 1e-8);
        let xi = error_bound(&spec.with_sigma(s)).unwrap();
        for f in [1.0 - 1e-3, 1.0 + 1e-3] {
            assert!(xi <= error_bound(&spec.with_sigma(s * f)).unwrap());
        }
        let edge = error_bound(&spec.with_sigma(spec.admissible_sigma() + 1e-3)).unwrap();
        let far = error_bound(&spec.with_sigma(1e4)).unwrap();
        assert!(xi < edge.min(far));
    }

    #[test]
    fn phi_decreasing_in_p() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let phi_pq = |p: f64, q: f64| p * p.ln() / ((p - q) * (p - q).ln());
        for _ in 0..100 {
            let q = rng.random_range(0.01..0.95);
            let p1 = rng.random_range(q + 1e-6..1.0 - 1e-6);
            let p2 = rng.random_range(q + 1e-6..1.0 - 1e-6);
            let (lo, hi) = if p1 < p2 { (p1, p2) } else { (p2, p1) };
            if hi - lo > 1e-9 {
                assert!(phi_pq(lo, q) > phi_pq(hi, q));
            }
        }
    }

    #[test]
    fn grows_without_bound_at_admissibility_boundary() {
        // Near the boundary p − q is proportional to the offset δ, so ξ grows
        // like σ·√(−2 log δ): unbounded but only logarithmically.
        let spec = base();
        let star = error_bound(&spec.with_sigma(optimal_sigma(&spec).unwrap())).unwrap();
        let lo = spec.admissible_sigma();
        let xs: Vec<f64> = [1e-2, 1e-4, 1e-6, 1e-9, 1e-12]
            .iter()
            .map(|dl| error_bound(&spec.with_sigma(lo * (1.0 + dl))).unwrap())
            .collect();
        assert!(xs.windows(2).all(|w| w[1] > w[0]) && xs[0] > star);
        let radical = |x: f64| (x - spec.epsilon) * spec.zeta / spec.d;
        let slope = (radical(xs[4]).powi(2) - radical(xs[2]).powi(2)) / (2.0 * lo * lo * (1e6f64).ln());
        assert!((slope - 1.0).abs() < 0.05, "{slope}");
    }

    #[test]
    fn continuity() {
        let spec = base();
        let x0 = error_bound(&spec).unwrap();
        let d6 = (error_bound(&spec.with_sigma(2.0 + 1e-6)).unwrap() - x0).abs();
        let d7 = (error_bound(&spec.with_sigma(2.0 + 1e-7)).unwrap() - x0).abs();
        assert!(d6 < 1e-4 && d7 < d6);
    }

    #[test]
    fn benign_data_never_violates() {
        let spec = BoundSpec { n: 50, m: 50, sigma: 1.5, ..base() };
        let v = validate_bound_empirically(&spec, 30, 3, 1e3).unwrap();
        assert_eq!(v.violations, 0);
        assert!(v.max_ratio < 1.0);
    }
}
