//! Ellipsoid fitting as linear regression.
//!
//! A quadric `a1x² + a2y² + a3z² + a4xy + a5xz + a6yz + a7x + a8y + a9z = 1`
//! is linear in its nine coefficients, so any estimator in the crate can fit
//! it from a point cloud. Center and semi-axes follow from the quadratic
//! form `A` and linear part `B`.

use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, SymmetricEigen, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::datagen::{run_rng, stream_rng};
use crate::error::{Error, Result};
use crate::estimators::{fit_method, Method, MethodFit, MethodSettings};
use crate::types::Dataset;

pub type Point = Vector3<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidModel {
    pub theta_ell: DVector<f64>,
    pub center: Vector3<f64>,
    /// Descending.
    pub semi_axes: Vector3<f64>,
    /// Column `j` is the direction of `semi_axes[j]`.
    pub axes_rotation: Matrix3<f64>,
}

fn monomials(p: &Point) -> [f64; 9] {
    let (x, y, z) = (p.x, p.y, p.z);
    [x * x, y * y, z * z, x * y, x * z, y * z, x, y, z]
}

/// Reciprocal condition below which the design counts as rank deficient.
const RANK_TOL: f64 = 1e-10;

pub fn build_design(points: &[Point]) -> Result<Dataset> {
    if points.len() < 9 {
        return Err(Error::Input(format!("ellipsoid fit needs at least 9 points, got {}", points.len())));
    }
    let rows: Vec<Vec<f64>> = points.iter().map(|p| monomials(p).to_vec()).collect();
    Dataset::single_output(&rows, &vec![1.0; points.len()])
}

/// Numerical rank of the design after scaling every column to unit norm.
pub fn design_rank(data: &Dataset) -> usize {
    let (mut x, _) = data.stacked();
    for mut col in x.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    let sv = x.singular_values();
    let top = sv.max();
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * top).count()
}

fn quadratic_parts(theta: &DVector<f64>) -> (Matrix3<f64>, Vector3<f64>) {
    let a = |i: usize| theta[i];
    let q = Matrix3::new(
        a(0), a(3) / 2.0, a(4) / 2.0,
        a(3) / 2.0, a(1), a(5) / 2.0,
        a(4) / 2.0, a(5) / 2.0, a(2),
    );
    (q, Vector3::new(a(6), a(7), a(8)))
}

pub fn recover_geometry(theta_ell: &DVector<f64>) -> Result<EllipsoidModel> {
    if theta_ell.len() != 9 || theta_ell.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("ellipsoid coefficients must be 9 finite numbers".into()));
    }
    let (a, b) = quadratic_parts(theta_ell);
    let a_inv = a
        .try_inverse()
        .ok_or_else(|| Error::Geometry("fit is not an ellipsoid: quadratic form is singular".into()))?;
    let center = -0.5 * a_inv * b;
    let scale = 1.0 + center.dot(&(a * center));
    let shape = a / scale;
    let eig = SymmetricEigen::new(shape);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let mut q = Matrix3::zeros();
    let mut axes = Vector3::zeros();
    for (slot, &k) in order.iter().enumerate() {
        let lambda = eig.eigenvalues[k];
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Geometry(format!("fit is not an ellipsoid: shape eigenvalue {lambda:e}")));
        }
        axes[slot] = lambda.sqrt().recip();
        let mut col = eig.eigenvectors.column(k).into_owned();
        let pivot = col.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if pivot < 0.0 {
            col = -col;
        }
        q.set_column(slot, &col);
    }
    Ok(EllipsoidModel { theta_ell: theta_ell.clone(), center, semi_axes: axes, axes_rotation: q })
}

/// Coefficients of `(r − r0)ᵀ Q diag(s)⁻² Qᵀ (r − r0) = 1` in normalized form.
/// Fails when the origin lies on the surface.
pub fn encode(center: &Vector3<f64>, semi_axes: &Vector3<f64>, rotation: &Matrix3<f64>) -> Result<DVector<f64>> {
    if semi_axes.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::Input("semi-axes must be positive".into()));
    }
    let inv_sq = Matrix3::from_diagonal(&semi_axes.map(|s| 1.0 / (s * s)));
    let m = rotation * inv_sq * rotation.transpose();
    let kappa = 1.0 - center.dot(&(m * center));
    if kappa.abs() < 1e-14 {
        return Err(Error::Geometry("origin lies on the ellipsoid; no normalized encoding".into()));
    }
    let lin = -2.0 * m * center;
    Ok(DVector::from_vec(vec![
        m[(0, 0)], m[(1, 1)], m[(2, 2)],
        2.0 * m[(0, 1)], 2.0 * m[(0, 2)], 2.0 * m[(1, 2)],
        lin.x, lin.y, lin.z,
    ]) / kappa)
}

/// Point at latitude `theta_lat` and longitude `phi` of the unit sphere mapped
/// onto the ellipsoid.
pub fn surface_point(model: &EllipsoidModel, theta_lat: f64, phi: f64) -> Point {
    let p = Vector3::new(theta_lat.cos() * phi.cos(), theta_lat.cos() * phi.sin(), theta_lat.sin());
    model.center + model.axes_rotation * p.component_mul(&model.semi_axes)
}

/// `X_ell·θ_ell − 1` at `point`.
pub fn implicit_residual(theta_ell: &DVector<f64>, point: &Point) -> f64 {
    monomials(point).iter().zip(theta_ell.iter()).map(|(x, t)| x * t).sum::<f64>() - 1.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipsoidTruth {
    pub center: Vector3<f64>,
    pub semi_axes: Vector3<f64>,
    pub rotation: Matrix3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationErrors {
    pub theta: f64,
    pub center: f64,
    pub semi_axes: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub model: EllipsoidModel,
    pub fit: MethodFit,
    pub errors: Option<CalibrationErrors>,
}

pub fn calibration_errors(model: &EllipsoidModel, truth: &EllipsoidTruth) -> Result<CalibrationErrors> {
    let theta_true = encode(&truth.center, &truth.semi_axes, &truth.rotation)?;
    let mut s_true: Vec<f64> = truth.semi_axes.iter().copied().collect();
    s_true.sort_by(|a, b| b.total_cmp(a));
    Ok(CalibrationErrors {
        theta: (&model.theta_ell - theta_true).norm(),
        center: (model.center - truth.center).norm(),
        semi_axes: (model.semi_axes - Vector3::from_column_slice(&s_true)).norm(),
    })
}

pub fn calibrate(
    points: &[Point],
    method: Method,
    settings: &MethodSettings,
    truth: Option<&EllipsoidTruth>,
) -> Result<Calibration> {
    let data = build_design(points)?;
    let rank = design_rank(&data);
    if rank < 9 {
        return Err(Error::RankDeficient { rank, cols: 9 });
    }
    let fit = fit_method(&data, method, settings)?;
    let model = recover_geometry(&fit.result.theta)?;
    let errors = truth.map(|t| calibration_errors(&model, t)).transpose()?;
    Ok(Calibration { model, fit, errors })
}

/// Synthetic magnetometer sweep: the sensor direction follows a sphere-covering
/// spiral, readings get Gaussian noise, and a few contiguous windows of
/// readings are pushed along a fixed random direction per window by a
/// uniform magnitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MagnetometerSpec {
    pub center: [f64; 3],
    pub semi_axes: [f64; 3],
    /// Roll, pitch, yaw in radians.
    pub rotation: [f64; 3],
    pub points: usize,
    pub noise_std: f64,
    pub disturbed_fraction: f64,
    pub disturbance_max: f64,
    pub windows: usize,
}

impl Default for MagnetometerSpec {
    fn default() -> Self {
        Self {
            center: [3.0, -2.0, 1.5],
            semi_axes: [42.0, 40.0, 37.0],
            rotation: [0.3, -0.2, 0.5],
            points: 500,
            noise_std: 0.5,
            disturbed_fraction: 0.1,
            disturbance_max: 20.0,
            windows: 1,
        }
    }
}

impl MagnetometerSpec {
    pub fn clean(&self) -> Self {
        Self { disturbed_fraction: 0.0, ..self.clone() }
    }

    pub fn truth(&self) -> EllipsoidTruth {
        EllipsoidTruth {
            center: Vector3::from(self.center),
            semi_axes: Vector3::from(self.semi_axes),
            rotation: Rotation3::from_euler_angles(self.rotation[0], self.rotation[1], self.rotation[2]).into_inner(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.points < 9 {
            return Err(Error::Input("need at least 9 points".into()));
        }
        if !(0.0..=1.0).contains(&self.disturbed_fraction) || self.noise_std < 0.0 || self.disturbance_max < 0.0 {
            return Err(Error::Input("invalid disturbance or noise settings".into()));
        }
        if self.semi_axes.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Input("semi-axes must be positive".into()));
        }
        Ok(())
    }

    /// Points and a per-point disturbed flag.
    pub fn generate(&self, seed: u64) -> Result<(Vec<Point>, Vec<bool>)> {
        self.validate()?;
        let truth = self.truth();
        let n = self.points;
        let mut rng = run_rng(seed, 0);
        let noise = Normal::new(0.0, self.noise_std).map_err(|e| Error::Input(e.to_string()))?;
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let mut points: Vec<Point> = (0..n)
            .map(|k| {
                let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
                let lat = z.asin();
                let lon = golden * k as f64;
                let p = Vector3::new(lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin());
                let r = truth.center + truth.rotation * p.component_mul(&truth.semi_axes);
                r + Vector3::from_fn(|_, _| noise.sample(&mut rng))
            })
            .collect();

        let mut flags = vec![false; n];
        let disturbed = (self.disturbed_fraction * n as f64).round() as usize;
        let windows = self.windows.max(1).min(disturbed.max(1));
        if disturbed > 0 {
            let mut aux = stream_rng(seed, 1);
            let base = disturbed / windows;
            let lengths: Vec<usize> = (0..windows).map(|w| base + usize::from(w < disturbed % windows)).collect();
            // Windows are placed in order with random gaps so they never overlap.
            let slack = n - disturbed;
            let mut cuts: Vec<usize> = (0..windows).map(|_| aux.random_range(0..=slack)).collect();
            cuts.sort_unstable();
            let mut start = 0;
            let mut prev_cut = 0;
            for (len, cut) in lengths.iter().zip(&cuts) {
                start += cut - prev_cut;
                prev_cut = *cut;
                let dir = random_unit(&mut aux);
                for k in start..start + len {
                    flags[k] = true;
                    points[k] += dir * aux.random_range(0.0..=self.disturbance_max);
                }
                start += len;
            }
        }
        Ok((points, flags))
    }
}

fn random_unit<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::from_fn(|_, _| rng.random_range(-1.0..=1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

pub fn points_from_matrix(m: &DMatrix<f64>) -> Vec<Point> {
    m.row_iter().map(|r| Vector3::new(r[0], r[1], r[2])).collect()
}
