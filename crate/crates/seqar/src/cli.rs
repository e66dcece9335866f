//! Command-line surface. Every stochastic subcommand requires an explicit
//! `--seed` (there is no wall-clock seeding anywhere), and every JSON output
//! carries the fully resolved configuration so runs can be reproduced from
//! the artifact alone.
//!
//! Exit codes: 0 success / conditions hold, 1 checked failure, 2 usage
//! error, 3 runtime error.

use std::fs::File;
use std::io::{BufReader, Write as IoWrite};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde_json::json;

use crate::conditions::{check_conditions, stationary_limit, DEFAULT_PD_TOL};
use crate::error::{Error, Result};
use crate::estimator::{sequential_estimate, SliceSource, DEFAULT_MAX_N};
use crate::experiments::{
    fisher_ratio_experiment, normality_experiment, stopping_experiment, ExperimentConfig,
    Quantiles,
};
use crate::limits::{limit_constants_with_tol, sample_nu, BrownianConfig};
use crate::polyroots::{theta_from_roots, ParamVector, DEFAULT_UNIT_TOL};
use crate::process::{read_csv, simulate, write_csv, NoiseLaw, NoiseSpec};
use crate::report::Report;

#[derive(Parser, Debug)]
#[command(name = "seqar", version, about = "Sequential least-squares estimation of AR(p) processes with a Fisher-trace stopping rule")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Classify the parameter point and check Conditions 1-3
    Check(CheckArgs),
    /// Build a parameter vector from prescribed characteristic roots
    MakeTheta(MakeThetaArgs),
    /// Simulate a trajectory to CSV
    Simulate(SimulateArgs),
    /// Run the sequential estimator on a CSV file or a simulated stream
    Estimate(EstimateArgs),
    /// Limit-law constants (Q matrix, b, mu) for a boundary point
    Limits(LimitsArgs),
    /// Sample the first-passage law nu_i
    NuSample(NuSampleArgs),
    /// Monte Carlo experiment harnesses
    Experiment(ExperimentArgs),
}

#[derive(Args, Debug)]
struct CheckArgs {
    /// comma-separated coefficients theta_1,...,theta_p
    #[arg(long, allow_hyphen_values = true)]
    theta: String,
    #[arg(long, default_value_t = DEFAULT_UNIT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_PD_TOL)]
    pd_tol: f64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MakeThetaArgs {
    /// include a root at -1
    #[arg(long)]
    unit_neg: bool,
    /// include a root at +1
    #[arg(long)]
    unit_pos: bool,
    /// include the conjugate pair e^{+-i phi}
    #[arg(long)]
    phi: Option<f64>,
    /// comma-separated real stable roots
    #[arg(long, allow_hyphen_values = true)]
    stable_roots: Option<String>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, allow_hyphen_values = true)]
    theta: String,
    /// gaussian | rademacher | uniform | table:v1;v2;...
    #[arg(long)]
    noise: String,
    #[arg(long)]
    sigma2: f64,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
    /// CSV destination; stdout when omitted
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// process order p when estimating from a file
    #[arg(long)]
    theta_dim: Option<usize>,
    #[arg(long)]
    h: f64,
    #[arg(long)]
    sigma2: f64,
    /// CSV input (header k,x); mutually exclusive with --theta
    #[arg(long)]
    input: Option<PathBuf>,
    /// simulate the stream in-process with these coefficients
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<String>,
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_MAX_N)]
    max_n: usize,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LimitsArgs {
    #[arg(long, allow_hyphen_values = true)]
    theta: String,
    #[arg(long)]
    sigma2: f64,
    #[arg(long, default_value_t = DEFAULT_UNIT_TOL)]
    tol: f64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct NuSampleArgs {
    /// boundary index i in 1..=7 selecting nu_i
    #[arg(long)]
    index: u8,
    /// comma-separated mu constants where the law needs them
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<String>,
    #[arg(long)]
    samples: usize,
    #[arg(long, default_value_t = 10_000)]
    steps_per_unit: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    output: Option<PathBuf>,
    /// also dump the raw samples as CSV (header sample,t)
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// normality | stopping | fisher-ratio
    kind: String,
    #[arg(long, allow_hyphen_values = true)]
    theta: String,
    #[arg(long, default_value = "gaussian")]
    noise: String,
    #[arg(long)]
    sigma2: f64,
    /// threshold h (normality/stopping)
    #[arg(long)]
    h: Option<f64>,
    /// trajectory length (fisher-ratio)
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    replications: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_N)]
    max_n: usize,
    #[arg(long)]
    skip_conditions: bool,
    #[arg(long, default_value_t = 10_000)]
    nu_steps_per_unit: usize,
    #[arg(long)]
    output: Option<PathBuf>,
    /// dump raw residuals / normalized stopping times as CSV
    #[arg(long)]
    dump_raw: Option<PathBuf>,
}

fn parse_theta(s: &str) -> Result<ParamVector> {
    let coeffs: Vec<f64> = s
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| Error::Usage(format!("bad theta entry {tok:?}")))
        })
        .collect::<Result<_>>()?;
    ParamVector::new(coeffs).map_err(|e| Error::Usage(e.to_string()))
}

fn parse_floats(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| Error::Usage(format!("bad {what} entry {tok:?}")))
        })
        .collect()
}

fn parse_noise(spec: &str, sigma2: f64) -> Result<NoiseSpec> {
    let law = if let Some(table) = spec.strip_prefix("table:") {
        let values: Vec<f64> = table
            .split(';')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Usage(format!("bad table entry {tok:?}")))
            })
            .collect::<Result<_>>()?;
        NoiseLaw::Table(values)
    } else {
        match spec {
            "gaussian" => NoiseLaw::Gaussian,
            "rademacher" => NoiseLaw::Rademacher,
            "uniform" => NoiseLaw::Uniform,
            other => return Err(Error::Usage(format!("unknown noise law {other:?}"))),
        }
    };
    NoiseSpec::new(law, sigma2).map_err(|e| Error::Usage(e.to_string()))
}

fn emit(text: &str, output: &Option<PathBuf>) -> Result<()> {
    match output {
        Some(path) => {
            let mut f = File::create(path).map_err(|e| Error::Io {
                context: path.display().to_string(),
                source: e,
            })?;
            writeln!(f, "{text}").map_err(|e| Error::Io {
                context: path.display().to_string(),
                source: e,
            })
        }
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

/// Parse argv and run; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders help/version on stdout with success
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Usage(_) => 2,
                _ => 3,
            }
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Check(a) => cmd_check(a),
        Command::MakeTheta(a) => cmd_make_theta(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Limits(a) => cmd_limits(a),
        Command::NuSample(a) => cmd_nu_sample(a),
        Command::Experiment(a) => cmd_experiment(a),
    }
}

fn cmd_check(a: CheckArgs) -> Result<i32> {
    let theta = parse_theta(&a.theta)?;
    let report = check_conditions(&theta, a.tol, a.pd_tol)?;
    let all = report.all_hold();
    let mut result = serde_json::to_value(&report).expect("report serialization");
    if let Ok(st) = stationary_limit(&theta, 1.0) {
        result["trace_f_unit_sigma"] = json!(st.trace_f);
    }
    let out = Report::new(
        "check",
        json!({"theta": theta.coeffs(), "tol": a.tol, "pd_tol": a.pd_tol}),
        result,
    );
    emit(&out.to_json(), &a.output)?;
    Ok(if all { 0 } else { 1 })
}

fn cmd_make_theta(a: MakeThetaArgs) -> Result<i32> {
    let mut roots: Vec<Complex64> = Vec::new();
    if a.unit_neg {
        roots.push(Complex64::new(-1.0, 0.0));
    }
    if a.unit_pos {
        roots.push(Complex64::new(1.0, 0.0));
    }
    if let Some(phi) = a.phi {
        if !(phi > 0.0 && phi < std::f64::consts::PI) {
            return Err(Error::Usage(format!("phi {phi} must lie in (0, pi)")));
        }
        roots.push(Complex64::from_polar(1.0, phi));
        roots.push(Complex64::from_polar(1.0, -phi));
    }
    if let Some(s) = &a.stable_roots {
        for r in parse_floats(s, "stable root")? {
            if r.abs() >= 1.0 {
                return Err(Error::Usage(format!("stable root {r} must have |r| < 1")));
            }
            roots.push(Complex64::new(r, 0.0));
        }
    }
    if roots.is_empty() {
        return Err(Error::Usage("no roots specified".into()));
    }
    let theta = theta_from_roots(&roots)?;
    let out = Report::new(
        "make-theta",
        json!({
            "unit_neg": a.unit_neg,
            "unit_pos": a.unit_pos,
            "phi": a.phi,
            "stable_roots": a.stable_roots,
        }),
        json!({"theta": theta.coeffs()}),
    );
    emit(&out.to_json(), &a.output)?;
    Ok(0)
}

fn cmd_simulate(a: SimulateArgs) -> Result<i32> {
    let theta = parse_theta(&a.theta)?;
    let noise = parse_noise(&a.noise, a.sigma2)?;
    let series = simulate(&theta, noise, a.n, a.seed)?;
    match &a.output {
        Some(path) => {
            let f = File::create(path).map_err(|e| Error::Io {
                context: path.display().to_string(),
                source: e,
            })?;
            write_csv(f, &series)?;
        }
        None => {
            let buf = write_csv(Vec::new(), &series)?;
            print!("{}", String::from_utf8(buf).expect("csv is ascii"));
        }
    }
    Ok(0)
}

fn cmd_estimate(a: EstimateArgs) -> Result<i32> {
    let result = match (&a.input, &a.theta) {
        (Some(path), None) => {
            let p = a
                .theta_dim
                .ok_or_else(|| Error::Usage("--theta-dim is required with --input".into()))?;
            let f = File::open(path).map_err(|e| Error::Io {
                context: path.display().to_string(),
                source: e,
            })?;
            let data = read_csv(BufReader::new(f))?;
            let mut src = SliceSource::new(&data);
            sequential_estimate(&mut src, p, a.h, a.sigma2, a.max_n)?
        }
        (None, Some(theta)) => {
            let theta = parse_theta(theta)?;
            let noise_spec = a
                .noise
                .as_deref()
                .ok_or_else(|| Error::Usage("--noise is required with --theta".into()))?;
            let seed = a
                .seed
                .ok_or_else(|| Error::Usage("--seed is required for a simulated stream".into()))?;
            let noise = parse_noise(noise_spec, a.sigma2)?;
            let mut stream = crate::process::ProcessStream::new(&theta, noise, seed);
            sequential_estimate(&mut stream, theta.p(), a.h, a.sigma2, a.max_n)?
        }
        _ => {
            return Err(Error::Usage(
                "exactly one of --input or --theta must be given".into(),
            ))
        }
    };
    let stopped = result.stopped;
    let out = Report::new(
        "estimate",
        json!({
            "theta_dim": a.theta_dim,
            "h": a.h,
            "sigma2": a.sigma2,
            "input": a.input.as_ref().map(|p| p.display().to_string()),
            "theta": a.theta,
            "noise": a.noise,
            "seed": a.seed,
            "max_n": a.max_n,
        }),
        serde_json::to_value(&result).expect("result serialization"),
    );
    emit(&out.to_json(), &a.output)?;
    Ok(if stopped { 0 } else { 1 })
}

fn cmd_limits(a: LimitsArgs) -> Result<i32> {
    let theta = parse_theta(&a.theta)?;
    let spec = limit_constants_with_tol(&theta, a.sigma2, a.tol)?;
    let out = Report::new(
        "limits",
        json!({"theta": theta.coeffs(), "sigma2": a.sigma2, "tol": a.tol}),
        serde_json::to_value(&spec).expect("spec serialization"),
    );
    emit(&out.to_json(), &a.output)?;
    Ok(0)
}

fn cmd_nu_sample(a: NuSampleArgs) -> Result<i32> {
    let mu = match &a.mu {
        Some(s) => parse_floats(s, "mu")?,
        None => vec![],
    };
    if a.samples == 0 {
        return Err(Error::Usage("--samples must be >= 1".into()));
    }
    let cfg = BrownianConfig::new(a.steps_per_unit, 1.0, a.seed)?;
    let samples = sample_nu(a.index, &mu, &cfg, a.samples)?;
    if let Some(path) = &a.csv {
        let mut f = File::create(path).map_err(|e| Error::Io {
            context: path.display().to_string(),
            source: e,
        })?;
        let mut text = String::from("sample,t\n");
        for (i, t) in samples.iter().enumerate() {
            text.push_str(&format!("{},{t}\n", i + 1));
        }
        f.write_all(text.as_bytes()).map_err(|e| Error::Io {
            context: path.display().to_string(),
            source: e,
        })?;
    }
    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    let out = Report::new(
        "nu-sample",
        json!({
            "index": a.index,
            "mu": mu,
            "samples": a.samples,
            "steps_per_unit": a.steps_per_unit,
            "seed": a.seed,
        }),
        json!({
            "quantiles": Quantiles::from_sorted(&sorted),
            "mean": samples.iter().sum::<f64>() / samples.len() as f64,
            "values": samples,
        }),
    );
    emit(&out.to_json(), &a.output)?;
    Ok(0)
}

fn dump_raw_csv(path: &PathBuf, rows: &[Vec<f64>]) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::Io {
        context: path.display().to_string(),
        source: e,
    })?;
    let wide = rows.first().map_or(0, Vec::len);
    let header: Vec<String> = (0..wide).map(|j| format!("v{}", j + 1)).collect();
    let write = |f: &mut File, line: String| {
        writeln!(f, "{line}").map_err(|e| Error::Io {
            context: path.display().to_string(),
            source: e,
        })
    };
    write(&mut f, header.join(","))?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        write(&mut f, line.join(","))?;
    }
    Ok(())
}

fn cmd_experiment(a: ExperimentArgs) -> Result<i32> {
    let theta = parse_theta(&a.theta)?;
    let noise = parse_noise(&a.noise, a.sigma2)?;
    // `jobs` is deliberately not recorded: it cannot change results, and the
    // output contract is byte-identity across parallelism settings.
    let config_json = json!({
        "kind": a.kind,
        "theta": theta.coeffs(),
        "noise": noise,
        "h": a.h,
        "n": a.n,
        "replications": a.replications,
        "seed": a.seed,
        "max_n": a.max_n,
        "skip_conditions": a.skip_conditions,
        "nu_steps_per_unit": a.nu_steps_per_unit,
    });
    let (result, raw) = match a.kind.as_str() {
        "normality" | "stopping" => {
            let h = a
                .h
                .ok_or_else(|| Error::Usage(format!("--h is required for {}", a.kind)))?;
            let mut cfg = ExperimentConfig::new(theta, noise, h, a.replications, a.seed)
                .map_err(|e| Error::Usage(e.to_string()))?;
            cfg.max_n = a.max_n;
            cfg.jobs = a.jobs;
            cfg.skip_conditions = a.skip_conditions;
            cfg.nu_steps_per_unit = a.nu_steps_per_unit;
            let rep = if a.kind == "normality" {
                normality_experiment(&cfg)?
            } else {
                stopping_experiment(&cfg)?
            };
            let raw = rep.raw.clone();
            (serde_json::to_value(&rep).expect("report serialization"), raw)
        }
        "fisher-ratio" => {
            let n = a
                .n
                .ok_or_else(|| Error::Usage("--n is required for fisher-ratio".into()))?;
            let seeds: Vec<u64> = (0..a.replications as u64).map(|k| a.seed ^ k).collect();
            let rep = fisher_ratio_experiment(&theta, &noise, n, &seeds)?;
            let raw: Vec<Vec<f64>> = rep
                .terminal
                .iter()
                .zip(&rep.running_max)
                .map(|(&t, &r)| vec![t, r])
                .collect();
            (serde_json::to_value(&rep).expect("report serialization"), raw)
        }
        other => return Err(Error::Usage(format!("unknown experiment kind {other:?}"))),
    };
    if let Some(path) = &a.dump_raw {
        dump_raw_csv(path, &raw)?;
    }
    let out = Report::new("experiment", config_json, result);
    emit(&out.to_json(), &a.output)?;
    Ok(0)
}
