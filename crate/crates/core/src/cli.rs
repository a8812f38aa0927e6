//! Command-line front end.
//!
//! Exit codes: 0 success, 2 usage or input errors, 3 computational failures.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::{Matrix3, Vector3};
use serde_json::{json, Value};

use crate::datagen::{example2_case_probs, gen_example1, gen_example2};
use crate::ellipsoid::{calibrate, EllipsoidModel, EllipsoidTruth, MagnetometerSpec};
use crate::em::EmIteration;
use crate::error::{Error, Result};
use crate::estimators::{fit_method, Method, MethodSettings};
use crate::harness::{run_experiment, ExperimentReport, EXPERIMENTS};
use crate::io::{canonical_json, format_f64, parse_json, read_dataset, read_points, write_dataset, write_points};
use crate::robustness::{bound_curve, error_bound, optimal_sigma, validate_bound_empirically, BoundSpec};
use crate::types::{ChannelParams, SolverConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_COMPUTE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "mkc", version, about = "Robust regression under the multi-kernel correntropy loss")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a regression model to a CSV dataset.
    Fit(FitArgs),
    /// Evaluate the scalar robustness bound.
    Bound(BoundArgs),
    /// Run a seeded Monte-Carlo experiment.
    Bench(BenchArgs),
    /// Fit an ellipsoid to a magnetometer point cloud.
    Calibrate(CalibrateArgs),
    /// Write a synthetic dataset or point cloud.
    Gen(GenArgs),
}

#[derive(Debug, Args)]
struct SolverFlags {
    /// Solver configuration JSON; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    psi: Option<f64>,
    #[arg(long)]
    em_iters: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
}

impl SolverFlags {
    fn resolve(&self) -> Result<SolverConfig> {
        let mut cfg = match &self.config {
            Some(p) => serde_json::from_str(&read_text(p)?).map_err(|e| Error::Input(format!("config: {e}")))?,
            None => SolverConfig::default(),
        };
        if let Some(v) = self.psi {
            cfg.psi = v;
        }
        if let Some(v) = self.em_iters {
            cfg.em_iters = v;
        }
        if let Some(v) = self.max_iters {
            cfg.max_fixed_point_iters = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "mkc-em")]
    method: String,
    /// Nominal standard deviations, comma separated (one value broadcasts).
    #[arg(long, value_delimiter = ',')]
    d: Option<Vec<f64>>,
    /// Kernel bandwidths, comma separated (one value broadcasts).
    #[arg(long, value_delimiter = ',')]
    sigma: Option<Vec<f64>>,
    /// Ridge penalty.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[command(flatten)]
    solver: SolverFlags,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BoundArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    zeta: f64,
    #[arg(long)]
    d: f64,
    #[arg(long, conflicts_with_all = ["curve", "optimal"])]
    sigma: Option<f64>,
    /// `lo:hi:steps`, log-spaced; CSV goes to standard output.
    #[arg(long, conflicts_with = "optimal")]
    curve: Option<String>,
    #[arg(long)]
    optimal: bool,
    /// Monte-Carlo check of the bound with this many trials (needs --sigma or --optimal).
    #[arg(long, requires = "seed")]
    validate: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1e3)]
    outlier_magnitude: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// One of example1-sweep, example2-case1..6, likelihood-gap.
    experiment: String,
    #[arg(long, default_value_t = 200)]
    runs: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Report JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-run or per-point CSV; standard output when omitted.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// Point cloud CSV with header x,y,z.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    points: Option<PathBuf>,
    /// Generator spec as a JSON file or inline JSON object.
    #[arg(long, requires = "seed")]
    synthetic: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "mkc-em")]
    method: String,
    /// Ground truth JSON: center, semi_axes, rotation (roll, pitch, yaw).
    #[arg(long)]
    truth: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverFlags,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GenArgs {
    /// example1, example2-case1..6 or magnetometer.
    kind: String,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long)]
    seed: u64,
    /// Generator spec for magnetometer clouds (file or inline JSON).
    #[arg(long)]
    synthetic: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

fn read_text(p: &Path) -> Result<String> {
    fs::read_to_string(p).map_err(|e| Error::Input(format!("{}: {e}", p.display())))
}

fn open(p: &Path) -> Result<fs::File> {
    fs::File::open(p).map_err(|e| Error::Input(format!("{}: {e}", p.display())))
}

fn write_file(p: &Path, text: &str) -> Result<()> {
    fs::write(p, text).map_err(|e| Error::Input(format!("{}: {e}", p.display())))
}

fn create(p: &Path) -> Result<fs::File> {
    fs::File::create(p).map_err(|e| Error::Input(format!("{}: {e}", p.display())))
}

fn vec_json(v: impl IntoIterator<Item = f64>) -> Value {
    Value::from(v.into_iter().collect::<Vec<f64>>())
}

fn channel_json(c: &ChannelParams) -> Value {
    json!({"sigma": c.sigma(), "d": c.d(), "a": c.a(), "c": c.c()})
}

fn trace_json(trace: &[EmIteration]) -> Value {
    Value::Array(
        trace
            .iter()
            .map(|it| {
                json!({
                    "iteration": it.iteration,
                    "theta": vec_json(it.theta.iter().copied()),
                    "channels": it.channels.iter().map(channel_json).collect::<Vec<_>>(),
                    "loglik": it.loglik,
                    "clamped": it.clamped,
                    "failed_channels": it.failed_channels,
                })
            })
            .collect(),
    )
}

fn settings(d: Option<Vec<f64>>, sigma: Option<Vec<f64>>, lambda: f64, config: SolverConfig) -> Result<MethodSettings> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Input(format!("ridge penalty must be nonnegative, got {lambda}")));
    }
    Ok(MethodSettings { d, sigma, ridge_lambda: lambda, config })
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let method: Method = a.method.parse()?;
    let config = a.solver.resolve()?;
    let data = read_dataset(open(&a.data)?)?;
    let fit = fit_method(&data, method, &settings(a.d, a.sigma, a.lambda, config)?)?;
    let r = &fit.result;
    let out = json!({
        "method": method.as_str(),
        "theta": vec_json(r.theta.iter().copied()),
        "converged": r.converged,
        "iterations": r.iterations,
        "loss_trace": r.loss_trace,
        "loglik": r.loglik,
        "channels": fit.channels.as_ref().map(|c| c.iter().map(channel_json).collect::<Vec<_>>()),
        "em_trace": fit.em_trace.as_deref().map(trace_json),
        "samples": data.len(),
        "outputs": data.outputs(),
        "params": data.params(),
    });
    write_file(&a.out, &canonical_json(&out))
}

fn parse_curve(spec: &str) -> Result<(f64, f64, usize)> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::Input(format!("--curve expects lo:hi:steps, got '{spec}'"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let steps: usize = parts[2].parse().map_err(|_| bad())?;
    if !(lo > 0.0 && hi >= lo && steps >= 1) {
        return Err(bad());
    }
    Ok((lo, hi, steps))
}

fn cmd_bound(a: BoundArgs) -> Result<()> {
    let base = BoundSpec { n: a.n, m: a.m, epsilon: a.eps, zeta: a.zeta, d: a.d, sigma: a.sigma.unwrap_or(1.0) };
    let mut out = json!({
        "n": a.n, "m": a.m, "epsilon": a.eps, "zeta": a.zeta, "d": a.d,
        "admissible_sigma": base.admissible_sigma(),
    });
    let mut chosen = None;
    if let Some(s) = a.sigma {
        out["sigma"] = json!(s);
        out["xi"] = json!(error_bound(&base)?);
        chosen = Some(s);
    }
    if a.optimal {
        let s = optimal_sigma(&base)?;
        out["sigma_star"] = json!(s);
        out["xi_star"] = json!(error_bound(&base.with_sigma(s))?);
        chosen = Some(s);
    }
    if let Some(c) = &a.curve {
        let (lo, hi, steps) = parse_curve(c)?;
        let curve = bound_curve(&base, &crate::harness::log_grid(lo, hi, steps))?;
        let mut text = String::from("sigma,xi\n");
        for (s, x) in &curve {
            text.push_str(&format!("{},{}\n", format_f64(*s), format_f64(*x)));
        }
        print!("{text}");
        out["curve"] = Value::Array(curve.iter().map(|(s, x)| json!({"sigma": s, "xi": x})).collect());
    }
    if chosen.is_none() && a.curve.is_none() {
        return Err(Error::Input("one of --sigma, --curve or --optimal is required".into()));
    }
    if let Some(trials) = a.validate {
        let s = chosen.ok_or_else(|| Error::Input("--validate needs --sigma or --optimal".into()))?;
        let v = validate_bound_empirically(&base.with_sigma(s), trials, a.seed.unwrap_or_default(), a.outlier_magnitude)?;
        out["validation"] = json!({
            "trials": v.trials, "bound": v.bound, "violations": v.violations, "max_ratio": v.max_ratio,
            "solver_violations": v.solver_violations, "max_solver_ratio": v.max_solver_ratio,
            "seed": a.seed, "outlier_magnitude": a.outlier_magnitude,
        });
    }
    match &a.out {
        Some(p) => write_file(p, &canonical_json(&out)),
        None if a.curve.is_none() => {
            print!("{}", canonical_json(&out));
            Ok(())
        }
        None => Ok(()),
    }
}

fn report_csv(report: &ExperimentReport) -> String {
    if let Some(s) = &report.sigma_sweep {
        let mut t = String::from("sigma,rmse,wls_rmse\n");
        for p in &s.points {
            t.push_str(&format!("{},{},{}\n", format_f64(p.sigma), format_f64(p.rmse), format_f64(s.wls_rmse)));
        }
        t
    } else if let Some(g) = &report.likelihood_gap {
        let mut t = String::from("p,mean_gap,std_gap,mean_sigma\n");
        for p in g {
            t.push_str(&format!(
                "{},{},{},{}\n",
                format_f64(p.p),
                format_f64(p.mean_gap),
                format_f64(p.std_gap),
                format_f64(p.mean_sigma)
            ));
        }
        t
    } else {
        report.records_csv()
    }
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    if !EXPERIMENTS.contains(&a.experiment.as_str()) {
        return Err(Error::Input(format!("unknown experiment '{}' (known: {})", a.experiment, EXPERIMENTS.join(", "))));
    }
    if a.runs == 0 {
        return Err(Error::Input("--runs must be positive".into()));
    }
    let report = run_experiment(&a.experiment, a.runs, a.seed, a.jobs)?;
    let json = serde_json::to_value(&report).map_err(|e| Error::Numeric(e.to_string()))?;
    if let Some(p) = &a.out {
        write_file(p, &canonical_json(&json))?;
    }
    let csv = report_csv(&report);
    match &a.csv {
        Some(p) => write_file(p, &csv)?,
        None => print!("{csv}"),
    }
    let rate = report.failure_rate();
    if rate > 0.1 {
        return Err(Error::Numeric(format!("{:.1}% of runs failed", 100.0 * rate)));
    }
    Ok(())
}

fn load_spec(arg: &str) -> Result<MagnetometerSpec> {
    let text = if arg.trim_start().starts_with('{') { arg.to_string() } else { read_text(Path::new(arg))? };
    serde_json::from_str(&text).map_err(|e| Error::Input(format!("synthetic spec: {e}")))
}

fn load_truth(p: &Path) -> Result<EllipsoidTruth> {
    let v = parse_json(&read_text(p)?)?;
    let triple = |key: &str| -> Result<Vector3<f64>> {
        let arr: Vec<f64> = serde_json::from_value(v.get(key).cloned().unwrap_or(Value::Null))
            .map_err(|_| Error::Input(format!("truth: '{key}' must be an array of 3 numbers")))?;
        if arr.len() != 3 {
            return Err(Error::Input(format!("truth: '{key}' must have 3 entries")));
        }
        Ok(Vector3::from_column_slice(&arr))
    };
    let spec = MagnetometerSpec {
        center: triple("center")?.into(),
        semi_axes: triple("semi_axes")?.into(),
        rotation: triple("rotation")?.into(),
        ..MagnetometerSpec::default()
    };
    Ok(spec.truth())
}

fn matrix_json(m: &Matrix3<f64>) -> Value {
    Value::Array(m.row_iter().map(|r| vec_json(r.iter().copied())).collect())
}

fn model_json(m: &EllipsoidModel) -> Value {
    json!({
        "theta_ell": vec_json(m.theta_ell.iter().copied()),
        "center": vec_json(m.center.iter().copied()),
        "semi_axes": vec_json(m.semi_axes.iter().copied()),
        "axes_rotation": matrix_json(&m.axes_rotation),
    })
}

fn cmd_calibrate(a: CalibrateArgs) -> Result<()> {
    let method: Method = a.method.parse()?;
    let config = a.solver.resolve()?;
    let (points, mut truth, source) = match (&a.points, &a.synthetic) {
        (Some(p), _) => (read_points(open(p)?)?, None, json!({"points": p.display().to_string()})),
        (None, Some(s)) => {
            let spec = load_spec(s)?;
            let seed = a.seed.expect("clap enforces --seed");
            let (pts, _) = spec.generate(seed)?;
            let src = json!({"synthetic": serde_json::to_value(&spec).expect("plain struct"), "seed": seed});
            (pts, Some(spec.truth()), src)
        }
        (None, None) => return Err(Error::Input("--points or --synthetic is required".into())),
    };
    if let Some(p) = &a.truth {
        truth = Some(load_truth(p)?);
    }
    let cal = calibrate(&points, method, &settings(None, None, 1.0, config)?, truth.as_ref())?;
    let mut out = model_json(&cal.model);
    out["method"] = json!(method.as_str());
    out["source"] = source;
    out["converged"] = json!(cal.fit.result.converged);
    out["iterations"] = json!(cal.fit.result.iterations);
    out["points"] = json!(points.len());
    if let Some(ch) = &cal.fit.channels {
        out["channels"] = Value::Array(ch.iter().map(channel_json).collect());
    }
    if let Some(e) = cal.errors {
        out["errors"] = json!({"theta_ell": e.theta, "center": e.center, "semi_axes": e.semi_axes});
    }
    write_file(&a.out, &canonical_json(&out))
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    match a.kind.as_str() {
        "example1" => write_dataset(&gen_example1(a.n, a.seed)?.0, create(&a.out)?),
        "magnetometer" => {
            let spec = match &a.synthetic {
                Some(s) => load_spec(s)?,
                None => MagnetometerSpec::default(),
            };
            write_points(&spec.generate(a.seed)?.0, create(&a.out)?)
        }
        other => {
            let case = other
                .strip_prefix("example2-case")
                .and_then(|c| c.parse::<u8>().ok())
                .ok_or_else(|| Error::Input(format!("unknown generator '{other}'")))?;
            let (p1, p2) = example2_case_probs(case)?;
            write_dataset(&gen_example2(a.n, p1, p2, case, a.seed)?.0, create(&a.out)?)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    if e.is_input() {
        EXIT_INPUT
    } else {
        EXIT_COMPUTE
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code. Diagnostics go to standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Bound(a) => cmd_bound(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Gen(a) => cmd_gen(a),
    };
    let _ = std::io::stdout().flush();
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let msg = match &e {
                Error::Geometry(_) | Error::RankDeficient { .. } => format!("not an ellipsoid: {e}"),
                _ => e.to_string(),
            };
            eprintln!("error: {msg}");
            exit_code(&e)
        }
    }
}

