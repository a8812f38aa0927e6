//! Seeded Monte-Carlo experiments.
//!
//! Run `r` draws its data from `run_rng(seed_base, r)`, so results do not
//! depend on the number of worker threads. Per-run records are kept and the
//! summary statistics are a pure fold over them.

use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::fit_wls;
use crate::datagen::{example2_case_probs, gen_example1_with, gen_example2_with, run_rng, NoiseSpec};
use crate::distribution::TruncationRule;
use crate::error::{Error, Result};
use crate::estimators::{fit_method, Method, MethodSettings};
use crate::param_opt::{optimize_channel_with, ChannelFitOptions};
use crate::solver::fit_mkc;
use crate::types::{ChannelParams, Dataset, PrecisionSpec, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeneratorSpec {
    Example1 { n: usize },
    Example2 { n: usize, p1: f64, p2: f64, case_id: u8 },
}

impl GeneratorSpec {
    pub fn example2_case(case_id: u8, n: usize) -> Result<Self> {
        let (p1, p2) = example2_case_probs(case_id)?;
        Ok(GeneratorSpec::Example2 { n, p1, p2, case_id })
    }

    pub fn generate(&self, seed_base: u64, run: u64) -> Result<(Dataset, DVector<f64>)> {
        let mut rng = run_rng(seed_base, run);
        match *self {
            GeneratorSpec::Example1 { n } => {
                let (data, theta) = gen_example1_with(n, &mut rng)?;
                Ok((data, DVector::from_element(1, theta)))
            }
            GeneratorSpec::Example2 { n, p1, p2, case_id } => gen_example2_with(n, p1, p2, case_id, &mut rng),
        }
    }
}

/// Method line-up for the two-channel problem: scales `d = (1, 2)` for WLS
/// and MKC, σ = 0.5 for MKC and an EM start at σ = 20 with the same scales.
pub fn example2_methods() -> Vec<(Method, MethodSettings)> {
    let d = Some(vec![1.0, 2.0]);
    vec![
        (Method::Wls, MethodSettings { d: d.clone(), ..Default::default() }),
        (Method::Lad, MethodSettings::default()),
        (Method::Mkc, MethodSettings { d: d.clone(), sigma: Some(vec![0.5]), ..Default::default() }),
        (Method::MkcEm, MethodSettings { d, sigma: Some(vec![20.0]), ..Default::default() }),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub run: u64,
    pub seed: u64,
    pub method: String,
    pub error: Option<f64>,
    pub time_s: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub runs: usize,
    pub failures: usize,
    pub mean_error: f64,
    pub std_error: f64,
    pub mean_time_s: f64,
    pub std_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub sigma: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaSweep {
    pub d: f64,
    pub points: Vec<SweepPoint>,
    pub wls_rmse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapPoint {
    pub p: f64,
    pub mean_gap: f64,
    pub std_gap: f64,
    pub mean_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub runs: usize,
    pub seed_base: u64,
    pub generator: Option<GeneratorSpec>,
    pub methods: Vec<MethodSummary>,
    pub sigma_sweep: Option<SigmaSweep>,
    pub likelihood_gap: Option<Vec<GapPoint>>,
    #[serde(skip)]
    pub records: Vec<RunRecord>,
}

impl ExperimentReport {
    fn empty(experiment: &str, runs: usize, seed_base: u64) -> Self {
        Self {
            experiment: experiment.to_string(),
            runs,
            seed_base,
            generator: None,
            methods: Vec::new(),
            sigma_sweep: None,
            likelihood_gap: None,
            records: Vec::new(),
        }
    }

    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == method.as_str())
    }

    /// Largest failure fraction over methods.
    pub fn failure_rate(&self) -> f64 {
        self.methods
            .iter()
            .map(|s| if s.runs == 0 { 0.0 } else { s.failures as f64 / s.runs as f64 })
            .fold(0.0, f64::max)
    }

    /// One row per run and method.
    pub fn records_csv(&self) -> String {
        let mut out = String::from("run,seed,method,error,time_s,failure\n");
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
        for r in &self.records {
            let failure = r.failure.as_deref().unwrap_or("").replace([',', '\n'], " ");
            out.push_str(&format!("{},{},{},{},{},{}\n", r.run, r.seed, r.method, opt(r.error), opt(r.time_s), failure));
        }
        out
    }
}

fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n if n <= 8 => v.iter().sum(),
        n => {
            let (a, b) = v.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Mean and sample standard deviation; the deviation is 0 for one value.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = pairwise_sum(v) / n;
    if v.len() == 1 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = v.iter().map(|x| (x - mean).powi(2)).collect();
    (mean, (pairwise_sum(&sq) / (n - 1.0)).sqrt())
}

/// Per-method statistics over successful runs, in first-appearance order.
pub fn aggregate(records: &[RunRecord]) -> Vec<MethodSummary> {
    let mut names: Vec<&str> = Vec::new();
    for r in records {
        if !names.contains(&r.method.as_str()) {
            names.push(&r.method);
        }
    }
    names
        .into_iter()
        .map(|name| {
            let mine: Vec<&RunRecord> = records.iter().filter(|r| r.method == name).collect();
            let errors: Vec<f64> = mine.iter().filter_map(|r| r.error).collect();
            let times: Vec<f64> = mine.iter().filter_map(|r| r.error.and(r.time_s)).collect();
            let (mean_error, std_error) = mean_std(&errors);
            let (mean_time_s, std_time_s) = mean_std(&times);
            MethodSummary {
                method: name.to_string(),
                runs: mine.len(),
                failures: mine.len() - errors.len(),
                mean_error,
                std_error,
                mean_time_s,
                std_time_s,
            }
        })
        .collect()
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Numeric(format!("thread pool: {e}")))
}

pub fn run_monte_carlo(
    generator: &GeneratorSpec,
    methods: &[(Method, MethodSettings)],
    runs: usize,
    seed_base: u64,
    jobs: usize,
) -> Result<ExperimentReport> {
    if methods.is_empty() {
        return Err(Error::Input("no methods selected".into()));
    }
    let per_run = |run: u64| -> Result<Vec<RunRecord>> {
        let (data, truth) = generator.generate(seed_base, run)?;
        Ok(methods
            .iter()
            .map(|(method, settings)| {
                let start = Instant::now();
                let fit = fit_method(&data, *method, settings);
                let elapsed = start.elapsed().as_secs_f64();
                let (error, failure) = match fit {
                    Ok(f) if f.result.theta.iter().all(|v| v.is_finite()) => (Some((f.result.theta - &truth).norm()), None),
                    Ok(_) => (None, Some("non-finite estimate".to_string())),
                    Err(e) => (None, Some(e.to_string())),
                };
                RunRecord {
                    run,
                    seed: seed_base.wrapping_add(run),
                    method: method.as_str().to_string(),
                    error,
                    time_s: Some(elapsed),
                    failure,
                }
            })
            .collect())
    };
    let batches: Vec<Result<Vec<RunRecord>>> =
        pool(jobs)?.install(|| (0..runs as u64).into_par_iter().map(per_run).collect());
    let mut records = Vec::with_capacity(runs * methods.len());
    for b in batches {
        records.extend(b?);
    }
    let mut report = ExperimentReport::empty("monte-carlo", runs, seed_base);
    report.generator = Some(*generator);
    report.methods = aggregate(&records);
    report.records = records;
    Ok(report)
}

/// RMSE of the scalar fixed-point estimate on the sine problem for each
/// bandwidth, with `d` fixed, next to the WLS RMSE on the same draws.
pub fn sigma_sweep(n: usize, d: f64, sigma_grid: &[f64], runs: usize, seed_base: u64, jobs: usize) -> Result<SigmaSweep> {
    if sigma_grid.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::Input("bandwidth grid must be positive".into()));
    }
    if runs == 0 {
        return Err(Error::Input("need at least one run".into()));
    }
    let generator = GeneratorSpec::Example1 { n };
    let prec = PrecisionSpec::new(vec![d])?;
    let config = SolverConfig::default();
    let per_run = |run: u64| -> Result<(Vec<f64>, f64)> {
        let (data, truth) = generator.generate(seed_base, run)?;
        let wls = fit_wls(&data, &prec)?.theta;
        let errs = sigma_grid
            .iter()
            .map(|&s| {
                let ch = [ChannelParams::new(s, d, 10.0 * d)?];
                Ok((fit_mkc(&data, &prec, &ch, &config, None)?.theta[0] - truth[0]).powi(2))
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok((errs, (wls[0] - truth[0]).powi(2)))
    };
    let rows: Vec<(Vec<f64>, f64)> = pool(jobs)?
        .install(|| (0..runs as u64).into_par_iter().map(per_run).collect::<Result<Vec<_>>>())?;
    let rms = |v: Vec<f64>| (pairwise_sum(&v) / v.len() as f64).sqrt();
    let points = sigma_grid
        .iter()
        .enumerate()
        .map(|(j, &sigma)| SweepPoint { sigma, rmse: rms(rows.iter().map(|r| r.0[j]).collect()) })
        .collect();
    Ok(SigmaSweep { d, points, wls_rmse: rms(rows.iter().map(|r| r.1).collect()) })
}

/// For each contamination level `p`, draws `n` residuals from
/// `(1 − p)·N(0, 1) + p·U(−20, 20)`, fits σ by maximum likelihood with
/// `d = 1` held fixed, and reports the mean log-likelihood gain of the fitted
/// density over the unit Gaussian.
pub fn likelihood_gap_sweep(p_grid: &[f64], n: usize, runs: usize, seed_base: u64, jobs: usize) -> Result<Vec<GapPoint>> {
    if p_grid.iter().any(|&p| !(0.0..0.5).contains(&p)) {
        return Err(Error::Input("contamination levels must lie in [0, 0.5)".into()));
    }
    if runs == 0 || n < 3 {
        return Err(Error::Input("need at least one run of three or more draws".into()));
    }
    let config = SolverConfig::default();
    let rule = TruncationRule::default();
    let per_point = |(j, &p): (usize, &f64)| -> Result<GapPoint> {
        let noise = NoiseSpec::contaminated_unit(p)?;
        let mut gaps = Vec::with_capacity(runs);
        let mut sigmas = Vec::with_capacity(runs);
        for run in 0..runs as u64 {
            let mut rng = run_rng(seed_base, run * p_grid.len() as u64 + j as u64);
            let e: Vec<f64> = (0..n).map(|_| noise.channels[0].sample(&mut rng)).collect();
            let init = ChannelParams::new(crate::em::DEFAULT_INITIAL_SIGMA, 1.0, rule.half_width(&e, 1.0))?;
            let fit = optimize_channel_with(&e, &init, &config, ChannelFitOptions::sigma_only())?;
            let ll_cl = -fit.objective / n as f64;
            let ll_gauss = e.iter().map(|v| -0.5 * v * v).sum::<f64>() / n as f64 - 0.5 * (2.0 * std::f64::consts::PI).ln();
            gaps.push(ll_cl - ll_gauss);
            sigmas.push(fit.params.sigma());
        }
        let (mean_gap, std_gap) = mean_std(&gaps);
        Ok(GapPoint { p, mean_gap, std_gap, mean_sigma: mean_std(&sigmas).0 })
    };
    pool(jobs)?.install(|| p_grid.par_iter().enumerate().map(per_point).collect())
}

/// Known experiment ids for the command line.
pub const EXPERIMENTS: [&str; 8] = [
    "example1-sweep",
    "example2-case1",
    "example2-case2",
    "example2-case3",
    "example2-case4",
    "example2-case5",
    "example2-case6",
    "likelihood-gap",
];

/// Log-spaced grid of `steps` points from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    if steps == 1 {
        return vec![lo];
    }
    (0..steps).map(|i| lo * (hi / lo).powf(i as f64 / (steps - 1) as f64)).collect()
}

/// Runs a named experiment at the given scale.
pub fn run_experiment(id: &str, runs: usize, seed_base: u64, jobs: usize) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::empty(id, runs, seed_base);
    match id {
        "example1-sweep" => {
            let grid = log_grid((-1.5f64).exp(), 6f64.exp(), 40);
            report.generator = Some(GeneratorSpec::Example1 { n: 100 });
            report.sigma_sweep = Some(sigma_sweep(100, 0.5, &grid, runs, seed_base, jobs)?);
        }
        "likelihood-gap" => {
            let grid: Vec<f64> = (1..=9).map(|i| 0.05 * i as f64).collect();
            report.likelihood_gap = Some(likelihood_gap_sweep(&grid, 1000, runs, seed_base, jobs)?);
        }
        _ => {
            let case = id
                .strip_prefix("example2-case")
                .and_then(|c| c.parse::<u8>().ok())
                .filter(|c| (1..=6).contains(c))
                .ok_or_else(|| Error::Input(format!("unknown experiment '{id}' (known: {})", EXPERIMENTS.join(", "))))?;
            let generator = GeneratorSpec::example2_case(case, 100)?;
            let mc = run_monte_carlo(&generator, &example2_methods(), runs, seed_base, jobs)?;
            report.generator = mc.generator;
            report.methods = mc.methods;
            report.records = mc.records;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_run_std_zero() {
        let r = run_monte_carlo(&GeneratorSpec::example2_case(2, 100).unwrap(), &example2_methods(), 1, 3, 1).unwrap();
        assert!(r.methods.iter().all(|s| s.std_error == 0.0 && s.runs == 1));
    }

    #[test]
    fn aggregation_recomputes_from_records() {
        let r = run_monte_carlo(&GeneratorSpec::example2_case(4, 100).unwrap(), &example2_methods(), 12, 5, 3).unwrap();
        assert_eq!(aggregate(&r.records), r.methods);
        let again = run_monte_carlo(&GeneratorSpec::example2_case(4, 100).unwrap(), &example2_methods(), 12, 5, 1).unwrap();
        let errs = |rep: &ExperimentReport| rep.records.iter().map(|x| x.error).collect::<Vec<_>>();
        assert_eq!(errs(&r), errs(&again));
    }

    #[test]
    fn mean_std_oracle() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let long: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&long), 499_500.0);
    }

    #[test]
    fn single_point_sweep() {
        let s = sigma_sweep(100, 0.5, &[1.0], 3, 1, 1).unwrap();
        assert_eq!(s.points.len(), 1);
    }

    #[test]
    fn unknown_experiment() {
        assert!(run_experiment("example3", 1, 0, 1).unwrap_err().is_input());
        assert!(run_experiment("example2-case7", 1, 0, 1).unwrap_err().is_input());
    }

    #[test]
    fn gaussian_limit_gap() {
        let g = likelihood_gap_sweep(&[0.0], 1000, 5, 2, 1).unwrap();
        assert!(g[0].mean_gap >= -1e-6 && g[0].mean_gap < 0.01, "{:?}", g);
    }

    #[test]
    fn small_contamination_gap_tracks_outlier_penalty() {
        // One U(−20, 20) draw costs the unit Gaussian u²/2 on average 200/3,
        // so the expected gain is about p·200/3 per sample.
        let g = likelihood_gap_sweep(&[1e-3], 1000, 40, 2, 1).unwrap();
        assert!((g[0].mean_gap - 1e-3 * 200.0 / 3.0).abs() < 0.03, "{:?}", g);
    }
}
