//! Property checks shared by the proptest suite and the acceptance runner.
//! Every check takes a seed and returns a description of the first failure.

#![allow(dead_code)]

use mkc::baselines::{absolute_loss, fit_lad, fit_ridge, fit_wls};
use mkc::datagen::{gen_example1, gen_example2, run_rng, stream_rng, Mixture, NoiseKind};
use mkc::distribution::{log_likelihood, normalization_constant, pdf};
use mkc::ellipsoid::{encode, implicit_residual, recover_geometry, surface_point};
use mkc::em::{default_initial_channels, fit_mkc_em, fit_mkc_em_with, EmOptions};
use mkc::harness::{aggregate, example2_methods, run_monte_carlo, GeneratorSpec};
use mkc::io::{canonical_json, parse_json};
use mkc::param_opt::{channel_objective, objective_and_gradient, optimize_channel};
use mkc::robustness::{error_bound, phi, BoundSpec};
use mkc::solver::{fit_mkc, kernel_weights, mkcl_loss, trace_mkc, wls_loss};
use mkc::{residuals, weighted_residuals, ChannelParams, Dataset, PrecisionSpec, Sample, SolverConfig};
use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub type Check = fn(u64) -> Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Random Gaussian-noise regression with `m` outputs and `n` parameters.
pub fn random_dataset(rng: &mut ChaCha8Rng, samples: usize, m: usize, n: usize, noise: f64) -> (Dataset, DVector<f64>) {
    let theta = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
    let g = Normal::new(0.0, noise).unwrap();
    let data = (0..samples)
        .map(|_| {
            let x = DMatrix::from_fn(m, n, |_, _| rng.random_range(-3.0..3.0));
            let y = &x * &theta + DVector::from_fn(m, |_, _| g.sample(rng));
            Sample::new(x, y)
        })
        .collect();
    (Dataset::new(data).unwrap(), theta)
}

fn contaminated(rng: &mut ChaCha8Rng, data: &Dataset, frac: f64, magnitude: f64) -> Dataset {
    let samples = data
        .samples()
        .iter()
        .map(|s| {
            let mut y = s.y.clone();
            for v in y.iter_mut() {
                if rng.random_bool(frac) {
                    *v += rng.random_range(-magnitude..magnitude);
                }
            }
            Sample::new(s.x.clone(), y)
        })
        .collect();
    Dataset::new(samples).unwrap()
}

pub fn residual_shift(seed: u64) -> Result<(), String> {
    let mut rng = run_rng(seed, 0);
    let (data, theta) = random_dataset(&mut rng, 30, 2, 3, 0.5);
    let delta = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
    let e1 = residuals(&data, &theta).map_err(err)?;
    let e2 = residuals(&data, &(&theta - &delta)).map_err(err)?;
    for ((a, b), s) in e1.iter().zip(&e2).zip(data.samples()) {
        let lhs = a + &s.x * &delta;
        ensure!((lhs - b).amax() < 1e-12 * (1.0 + b.amax()), "e(θ)+XΔ ≠ e(θ−Δ)");
    }
    Ok(())
}

pub fn weighting_round_trip(seed: u64) -> Result<(), String> {
    let mut rng = run_rng(seed, 0);
    let (data, theta) = random_dataset(&mut rng, 20, 3, 2, 1.0);
    let d: Vec<f64> = (0..3).map(|_| rng.random_range(0.1..5.0)).collect();
    let prec = PrecisionSpec::new(d.clone()).map_err(err)?;
    let e = residuals(&data, &theta).map_err(err)?;
    let w = weighted_residuals(&e, &prec).map_err(err)?;
    for (ek, wk) in e.iter().zip(&w) {
        let back = DVector::from_iterator(3, wk.iter().zip(&d).map(|(v, di)| v * di));
        ensure!((&back - ek).amax() <= 1e-12 * ek.amax().max(1e-300), "unweighting does not invert weighting");
    }
    Ok(())
}

pub fn wls_orthogonality(seed: u64) -> Result<(), String> {
    let mut rng = run_rng(seed, 0);
    let (data, _) = random_dataset(&mut rng, 50, 2, 3, 1.0);
    let prec = PrecisionSpec::new(vec![rng.random_range(0.2..3.0), rng.random_range(0.2..3.0)]).map_err(err)?;
    let theta = fit_wls(&data, &prec).map_err(err)?.theta;
    let p = prec.precision();
    let mut g = DVector::zeros(3);
    let mut scale = 0.0f64;
    for (s, e) in data.samples().iter().zip(residuals(&data, &theta).map_err(err)?) {
        let pe = DVector::from_iterator(2, e.iter().zip(&p).map(|(v, w)| v * w));
        g += s.x.transpose() * pe;
        scale = scale.max(s.x.amax() * s.y.amax() * p.iter().cloned().fold(0.0, f64::max));
    }
    ensure!(g.amax() <= 1e-8 * scale * data.len() as f64, "normal equations residual {}", g.amax());
    Ok(())
}

pub fn ridge_shrinks(seed: u64) -> Result<(), String> {
    let mut rng = run_rng(seed, 0);
    let (data, _) = random_dataset(&mut rng, 40, 1, 4, 1.0);
    let prec = PrecisionSpec::unit(1);
    let mut prev = f64::INFINITY;
    for lambda in [0.0, 0.1, 1.0, 10.0, 100.0] {
        let norm = fit_ridge(&data, &prec, lambda).map_err(err)?.theta.norm();
        ensure!(norm <= prev * (1.0 + 1e-12), "‖θ‖ grew at λ = {lambda}");
        prev = norm;
    }
    Ok(())
}

pub fn lad_beats_wls_with_outlier(seed: u64) -> Result<(), String> {
    let mut rng = run_rng(seed, 0);
    let (data, theta) = random_dataset(&mut rng, 40, 1, 2, 0.5);
    let mut samples = data.samples().to_vec();
    let e: Vec<f64> = residuals(&data, &theta).map_err(err)?.iter().map(|v| v[0].abs()).collect();
    let mut sorted = e.clone();
    sorted.sort_by(f64::total_cmp);
    let big = 10.0 * sorted[sorted.len() / 2] + 50.0;
    samples[3].y[0] += big;
    let data = Dataset::new(samples).map_err(err)?;
    let lad = fit_lad(&data, &SolverConfig::default()).map_err(err)?.theta;
    let wls = fit_wls(&data, &PrecisionSpec::unit(1)).map_err(err)?.theta;
    let (a, b) = (absolute_loss(&data, &lad).map_err(err)?, absolute_loss(&data, &wls).map_err(err)?);
    ensure!(a <= b * (1.0 + 1e-9), "LAD loss {a} > WLS loss {b}");
    Ok(())
}

pub fn mkc_descent(seed: u64) -> Result<(), String> {
    let mut rng = run_rng(seed, 0);
    let (clean, _) = random_dataset(&mut rng, 60, 2, 2, 0.5);
    let data = contaminated(&mut rng, &clean, 0.15, 20.0);
    let chans: Vec<ChannelParams> = (0..2)
        .map(|_| ChannelParams::new(rng.random_range(0.5..5.0), rng.random_range(0.3..2.0), 100.0).unwrap())
        .collect();
    let prec = PrecisionSpec::from_channels(&chans);
    let start = fit_wls(&data, &prec).map_err(err)?.theta;
    let trace = trace_mkc(&data, &prec, &chans, &SolverConfig::default(), &start).map_err(err)?;
    let mut prev = mkcl_loss(&data, &start, &chans).map_err(err)?;
    for st in &trace {
        let j = mkcl_loss(&data, &st.theta, &chans).map_err(err)?;
        ensure!(j <= prev + 1e-10, "loss rose from {prev} to {j} at iteration {}", st.iteration);
        prev = j;
        for w in &st.weight_blocks {
            ensure!(w.iter().all(|&v| v > 0.0 && v <= 1.0), "weight outside (0, 1]");
        }
    }
    Ok(())
}

pub fn weights_in_unit_interval(seed: u64) -> Result<(), String> {
    let mut rng = run_rng(seed, 0);
    let chans: Vec<ChannelParams> =
        (0..3).map(|_| ChannelParams::new(rng.random_range(1e-3..1e3), 1.0, 10.0).unwrap()).collect();
    for _ in 0..50 {
        let e = DVector::from_fn(3, |_, _| rng.random_range(-1e4..1e4) * rng.random::<f64>().powi(4));
        let w = kernel_weights(&e, &chans).map_err(err)?;
        ensure!(w.iter().all(|&v| v > 0.0 && v <= 1.0), "weights {w:?}");
    }
    Ok(())
}

/// Fixed-point fit versus the best point of a 1e-4 grid on θ° ± 5.
pub fn scalar_grid_equivalence(seed: u64) -> Result<(), String> {
    let mut rng = run_rng(seed, 0);
    let (data, truth) = gen_example1(100, seed).map_err(err)?;
    let sigma = rng.random_range(1.0..5.0);
    let chans = [ChannelParams::new(sigma, 0.5, 30.0).map_err(err)?];
    let prec = PrecisionSpec::new(vec![0.5]).map_err(err)?;
    let fit = fit_mkc(&data, &prec, &chans, &SolverConfig { psi: 1e-12, max_fixed_point_iters: 1000, ..Default::default() }, None)
        .map_err(err)?
        .theta[0];
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..=100_000 {
        let th = truth - 5.0 + 1e-4 * i as f64;
        let j = mkcl_loss(&data, &DVector::from_element(1, th), &chans).map_err(err)?;
        if j < best.0 {
            best = (j, th);
        }
    }
    ensure!((fit - best.1).abs() < 2e-4, "fixed point {fit} vs grid {} (σ = {sigma})", best.1);
    Ok(())
}

pub fn large_sigma_loss_is_wls(seed: u64) -> Result<(), String> {
    let mut rng = run_rng(seed, 0);
    let (data, theta) = random_dataset(&mut rng, 50, 2, 2, 1.0);
    let d = vec![rng.random_range(0.5..2.0), rng.random_range(0.5..2.0)];
    let sigma = 10f64.powf(rng.random_range(6.0..9.0));
    let chans: Vec<ChannelParams> = d.iter().map(|&di| ChannelParams::new(sigma, di, 20.0 * di).unwrap()).collect();
    let th = &theta + DVector::from_fn(2, |_, _| rng.random_range(-0.5..0.5));
    let e = weighted_residuals(&residuals(&data, &th).map_err(err)?, &PrecisionSpec::new(d.clone()).map_err(err)?).map_err(err)?;
    ensure!(e.iter().all(|v| v.amax() <= 10.0), "normalized residual above 10");
    let j = mkcl_loss(&data, &th, &chans).map_err(err)?;
    let w = wls_loss(&data, &th, &PrecisionSpec::new(d).map_err(err)?).map_err(err)?;
    ensure!((j - w).abs() / w < 1e-4, "MKCL {j} vs WLS {w}");
    Ok(())
}

fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let mut s = f(lo) + f(hi);
    for i in 1..n {
        s += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn random_channel(rng: &mut ChaCha8Rng) -> ChannelParams {
    let sigma = 10f64.powf(rng.random_range(-0.5..2.0));
    let d = 10f64.powf(rng.random_range(-1.0..1.0));
    let a = d * rng.random_range(3.0..40.0);
    ChannelParams::new(sigma, d, a).unwrap()
}

pub fn density_integrates_to_one(seed: u64) -> Result<(), String> {
    let mut rng = run_rng(seed, 0);
    let ch = random_channel(&mut rng);
    let total = simpson(|e| pdf(e, &ch), -ch.a(), ch.a(), 200_000);
    ensure!((total - 1.0).abs() < 1e-8, "∫pdf = {total} for {ch:?}");
    Ok(())
}

pub fn density_unimodal(seed: u64) -> Result<(), String> {
    let mut rng = run_rng(seed, 0);
    let ch = random_channel(&mut rng);
    let mut prev = f64::INFINITY;
    for i in 0..=1000 {
        let v = pdf(ch.a() * i as f64 / 1000.0, &ch);
        ensure!(v <= prev, "pdf increased at step {i}");
        prev = v;
    }
    Ok(())
}

pub fn density_gaussian_limit(seed: u64) -> Result<(), String> {
    let mut rng = run_rng(seed, 0);
    let d = rng.random_range(0.5..2.0);
    let a = d * rng.random_range(4.0..10.0);
    let ch = ChannelParams::new(1e5, d, a).map_err(err)?;
    let gauss = |e: f64| (-e * e / (2.0 * d * d)).exp() / (d * (2.0 * std::f64::consts::PI).sqrt());
    let mass = simpson(gauss, -a, a, 20_000);
    for k in 0..4 {
        let e = k as f64 * d;
        ensure!((pdf(e, &ch) - gauss(e) / mass).abs() < 1e-4, "pdf({e}) far from the truncated Gaussian");
    }
    let _ = normalization_constant(1e5, d, a).map_err(err)?;
    Ok(())
}

pub fn loglik_locally_maximal(seed: u64) -> Result<(), String> {
    let mut rng = run_rng(seed, 7);
    let (data, _) = gen_example1(100, seed).map_err(err)?;
    let cfg = SolverConfig::default();
    let em = fit_mkc_em(&data, &default_initial_channels(&data, &cfg).map_err(err)?, &cfg).map_err(err)?;
    let base = log_likelihood(&data, &em.result.theta, &em.channels).map_err(err)?;
    for _ in 0..10 {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let th = &em.result.theta + DVector::from_element(1, 0.1 * sign);
        let ll = log_likelihood(&data, &th, &em.channels).map_err(err)?;
        ensure!(ll <= base + 1e-9, "perturbation raised log-likelihood {base} → {ll}");
    }
    Ok(())
}

fn mixture_residuals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let p = rng.random_range(0.0..0.3);
    let mix = Mixture::pair(1.0 - p, NoiseKind::Gaussian { mean: 0.0, std: 1.0 }, NoiseKind::Uniform { lo: -20.0, hi: 20.0 }).unwrap();
    (0..n).map(|_| mix.sample(rng)).collect()
}

pub fn channel_fit_descends(seed: u64) -> Result<(), String> {
    let mut rng = run_rng(seed, 0);
    let e = mixture_residuals(&mut rng, 200);
    let init = ChannelParams::new(rng.random_range(0.5..30.0), rng.random_range(0.3..3.0), 25.0).map_err(err)?;
    let fit = optimize_channel(&e, &init, &SolverConfig::default()).map_err(err)?;
    ensure!(fit.history.windows(2).all(|w| w[1] <= w[0] + 1e-12), "objective rose along BFGS history");
    ensure!(fit.params.sigma() > 0.0 && fit.params.d() > 0.0, "non-positive parameters");
    ensure!(fit.params.sigma().is_finite() && fit.params.d().is_finite(), "non-finite parameters");
    Ok(())
}

pub fn gradient_matches_differences(seed: u64) -> Result<(), String> {
    let mut rng = run_rng(seed, 0);
    let e = mixture_residuals(&mut rng, 150);
    let a = 25.0;
    for _ in 0..20 {
        let (ls, ld) = (rng.random_range(-1.0..4.0), rng.random_range(-1.0..1.0));
        let (_, g) = objective_and_gradient(&e, ls, ld, a).map_err(err)?;
        let h = 1e-5;
        let f = |s: f64, d: f64| channel_objective(&e, s.exp(), d.exp(), a).unwrap();
        let num = [(f(ls + h, ld) - f(ls - h, ld)) / (2.0 * h), (f(ls, ld + h) - f(ls, ld - h)) / (2.0 * h)];
        let scale = g[0].abs().max(g[1].abs()).max(1.0);
        for k in 0..2 {
            ensure!((g[k] - num[k]).abs() <= 1e-4 * scale, "∂{k}: analytic {} vs numeric {}", g[k], num[k]);
        }
    }
    Ok(())
}

pub fn objective_is_negative_loglik(seed: u64) -> Result<(), String> {
    let mut rng = run_rng(seed, 0);
    let e = mixture_residuals(&mut rng, 80);
    let ch = random_channel(&mut rng).with_a(30.0).map_err(err)?;
    let data = Dataset::scalar(&vec![1.0; e.len()], &e).map_err(err)?;
    let ll = log_likelihood(&data, &DVector::zeros(1), &[ch]).map_err(err)?;
    let f = channel_objective(&e, ch.sigma(), ch.d(), ch.a()).map_err(err)?;
    ensure!((f + e.len() as f64 * ll).abs() <= 1e-10 * f.abs().max(1.0), "f = {f}, −N·ll = {}", -(e.len() as f64) * ll);
    Ok(())
}

pub fn em_monotone(seed: u64) -> Result<(), String> {
    let (data, _) = gen_example2(100, 0.8, 0.8, 4, seed).map_err(err)?;
    let init: Vec<ChannelParams> = [1.0, 2.0].iter().map(|&d| ChannelParams::new(20.0, d, 40.0 * d).unwrap()).collect();
    let em = fit_mkc_em(&data, &init, &SolverConfig::default()).map_err(err)?;
    for w in em.trace.windows(2) {
        ensure!(w[1].loglik >= w[0].loglik - 1e-6, "log-likelihood fell at iteration {}", w[1].iteration);
    }
    Ok(())
}

pub fn em_degenerates_to_wls(seed: u64) -> Result<(), String> {
    let mut rng = run_rng(seed, 0);
    let (data, _) = random_dataset(&mut rng, 60, 2, 2, 1.0);
    let d = vec![rng.random_range(0.5..2.0), rng.random_range(0.5..2.0)];
    let init: Vec<ChannelParams> = d.iter().map(|&di| ChannelParams::new(1e6, di, 50.0).unwrap()).collect();
    let opts = EmOptions { reestimate: false, ..EmOptions::default() };
    let em = fit_mkc_em_with(&data, &init, &SolverConfig::default(), &opts).map_err(err)?;
    let wls = fit_wls(&data, &PrecisionSpec::new(d).map_err(err)?).map_err(err)?;
    let rel = (&em.result.theta - &wls.theta).norm() / wls.theta.norm();
    ensure!(rel < 1e-5, "relative gap {rel}");
    Ok(())
}

pub fn em_deterministic(seed: u64) -> Result<(), String> {
    let (data, _) = gen_example1(100, seed).map_err(err)?;
    let cfg = SolverConfig::default();
    let init = default_initial_channels(&data, &cfg).map_err(err)?;
    let a = fit_mkc_em(&data, &init, &cfg).map_err(err)?;
    let b = fit_mkc_em(&data, &init, &cfg).map_err(err)?;
    let bits = |f: &mkc::em::EmFit| {
        f.trace
            .iter()
            .flat_map(|t| t.theta.iter().chain(std::iter::once(&t.loglik)).map(|v| v.to_bits()).collect::<Vec<_>>())
            .collect::<Vec<_>>()
    };
    ensure!(bits(&a) == bits(&b), "traces differ");
    Ok(())
}

pub fn phi_decreasing(seed: u64) -> Result<(), String> {
    let mut rng = run_rng(seed, 0);
    // φ through the bound module: M inliers out of N fixes q, ε/σ fixes p.
    let n = 1000;
    let m = rng.random_range(520..990);
    let q = (n - m) as f64 / m as f64;
    let p_of = |s: f64| (-1.0 / (2.0 * s * s)).exp();
    let spec = BoundSpec { n, m, epsilon: 1.0, zeta: 1.0, d: 1.0, sigma: 1.0 };
    let lo = spec.admissible_sigma();
    let (s1, s2) = (lo * rng.random_range(1.001..50.0), lo * rng.random_range(1.001..50.0));
    let (sa, sb) = if s1 < s2 { (s1, s2) } else { (s2, s1) };
    ensure!(p_of(sa) > q, "sample outside (q, 1)");
    ensure!(phi(&spec.with_sigma(sa)) > phi(&spec.with_sigma(sb)) || sb / sa - 1.0 < 1e-9, "φ not decreasing in p");
    Ok(())
}

pub fn bound_continuous(seed: u64) -> Result<(), String> {
    let mut rng = run_rng(seed, 0);
    let spec = BoundSpec { n: 100, m: 90, epsilon: 1.0, zeta: 1.0, d: 1.0, sigma: 1.0 };
    let s = spec.admissible_sigma() * rng.random_range(1.1..100.0);
    let x = error_bound(&spec.with_sigma(s)).map_err(err)?;
    let d6 = (error_bound(&spec.with_sigma(s + 1e-6)).map_err(err)? - x).abs();
    let d7 = (error_bound(&spec.with_sigma(s + 1e-7)).map_err(err)? - x).abs();
    ensure!(d6 < 1e-4 && d7 <= d6, "jumps {d6} / {d7} at σ = {s}");
    Ok(())
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    let pi = std::f64::consts::PI;
    Rotation3::from_euler_angles(rng.random_range(-pi..pi), rng.random_range(-1.5..1.5), rng.random_range(-pi..pi))
        .into_inner()
}

pub fn ellipsoid_round_trip(seed: u64) -> Result<(), String> {
    let mut rng = run_rng(seed, 0);
    let small = rng.random_range(1.0..15.0);
    let mid = small + rng.random_range(0.5..15.0);
    let axes = [mid + rng.random_range(0.5..15.0), mid, small];
    let s = Vector3::from(axes);
    let q = random_rotation(&mut rng);
    let c = Vector3::from_fn(|_, _| rng.random_range(-0.5..0.5)) * axes[2];
    let model = recover_geometry(&encode(&c, &s, &q).map_err(err)?).map_err(err)?;
    ensure!((model.center - c).norm() < 1e-8 * (1.0 + c.norm()), "center {:?} vs {c:?}", model.center);
    ensure!((model.semi_axes - s).norm() < 1e-8 * axes[0], "axes {:?} vs {s:?}", model.semi_axes);
    let qr = model.axes_rotation;
    ensure!((qr.transpose() * qr - Matrix3::identity()).amax() < 1e-10, "Q not orthogonal");
    for j in 0..3 {
        let col = qr.column(j);
        ensure!((col.dot(&q.column(j)).abs() - 1.0).abs() < 1e-8, "axis {j} direction differs");
        let pivot = col.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        ensure!(pivot > 0.0, "sign convention broken in column {j}");
    }
    for i in 0..20 {
        for k in 0..20 {
            let lat = -1.5 + 3.0 * i as f64 / 19.0;
            let lon = 0.01 + 6.2 * k as f64 / 19.0;
            let r = implicit_residual(&model.theta_ell, &surface_point(&model, lat, lon));
            ensure!(r.abs() < 1e-8, "implicit residual {r}");
        }
    }
    Ok(())
}

pub fn generators_deterministic(seed: u64) -> Result<(), String> {
    let bits = |d: &Dataset| d.samples().iter().flat_map(|s| s.y.iter().map(|v| v.to_bits()).collect::<Vec<_>>()).collect::<Vec<_>>();
    let (a, _) = gen_example2(100, 0.6, 0.8, 6, seed).map_err(err)?;
    let (b, _) = gen_example2(100, 0.6, 0.8, 6, seed).map_err(err)?;
    ensure!(bits(&a) == bits(&b), "example 2 draws differ");
    let (a, _) = gen_example1(100, seed).map_err(err)?;
    let (b, _) = gen_example1(100, seed).map_err(err)?;
    ensure!(bits(&a) == bits(&b), "example 1 draws differ");
    Ok(())
}

pub fn trimmed_gaussian_std(seed: u64) -> Result<(), String> {
    let mix = Mixture::pair(0.9, NoiseKind::gaussian_var(0.25), NoiseKind::Uniform { lo: -20.0, hi: 20.0 }).map_err(err)?;
    let mut rng = stream_rng(seed, 3);
    let kept: Vec<f64> = (0..100_000).map(|_| mix.sample(&mut rng)).filter(|v| v.abs() <= 1.5).collect();
    let n = kept.len() as f64;
    let mean = kept.iter().sum::<f64>() / n;
    let sd = (kept.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    ensure!((sd / 0.5 - 1.0).abs() < 0.05, "trimmed std {sd}");
    Ok(())
}

pub fn report_refolds(seed: u64) -> Result<(), String> {
    let g = GeneratorSpec::example2_case(2, 100).map_err(err)?;
    let r = run_monte_carlo(&g, &example2_methods(), 6, seed, 2).map_err(err)?;
    ensure!(aggregate(&r.records) == r.methods, "summaries differ from the fold over records");
    Ok(())
}

pub fn json_round_trip(seed: u64) -> Result<(), String> {
    let mut rng = run_rng(seed, 0);
    let nums: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0) * 10f64.powi(rng.random_range(-300..300))).collect();
    let v = serde_json::json!({"z": nums, "a": {"k": seed, "f": rng.random::<f64>()}, "m": [true, null, "s"]});
    let text = canonical_json(&v);
    let again = canonical_json(&parse_json(&text).map_err(err)?);
    ensure!(text == again, "re-emitted JSON differs");
    let back: Vec<f64> = serde_json::from_value(parse_json(&text).map_err(err)?["z"].clone()).map_err(err)?;
    ensure!(back.iter().zip(&nums).all(|(a, b)| a.to_bits() == b.to_bits()), "float digits lost");
    Ok(())
}

pub const ALL: &[(&str, Check)] = &[
    ("residual shift", residual_shift),
    ("weighting round trip", weighting_round_trip),
    ("WLS orthogonality", wls_orthogonality),
    ("ridge shrinkage", ridge_shrinks),
    ("LAD dominance", lad_beats_wls_with_outlier),
    ("fixed-point descent", mkc_descent),
    ("kernel weight range", weights_in_unit_interval),
    ("scalar grid equivalence", scalar_grid_equivalence),
    ("large-σ loss", large_sigma_loss_is_wls),
    ("density mass", density_integrates_to_one),
    ("density unimodal", density_unimodal),
    ("density Gaussian limit", density_gaussian_limit),
    ("likelihood stationarity", loglik_locally_maximal),
    ("channel fit descent", channel_fit_descends),
    ("gradient check", gradient_matches_differences),
    ("objective vs likelihood", objective_is_negative_loglik),
    ("EM monotone", em_monotone),
    ("EM degenerates to WLS", em_degenerates_to_wls),
    ("EM deterministic", em_deterministic),
    ("φ decreasing", phi_decreasing),
    ("bound continuity", bound_continuous),
    ("ellipsoid round trip", ellipsoid_round_trip),
    ("generator determinism", generators_deterministic),
    ("trimmed Gaussian std", trimmed_gaussian_std),
    ("report refold", report_refolds),
    ("JSON round trip", json_round_trip),
];
