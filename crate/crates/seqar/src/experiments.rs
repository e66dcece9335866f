//! Seeded Monte Carlo harnesses: asymptotic normality of the sequential
//! estimator, the stopping-time laws (stable ratio and boundary
//! first-passage comparison), and the Fisher-ratio convergence check, plus
//! the exact Kolmogorov-Smirnov statistics used to score them.
//!
//! Determinism contract: replication k uses seed `cfg.seed ^ k`, results are
//! collected in replication order, so reports are bit-identical at any
//! parallelism degree.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::conditions::{build_l, check_conditions};
use crate::error::{Error, Result};
use crate::estimator::{normalized_residual, sequential_estimate, FisherState};
use crate::limits::{limit_constants, sample_nu, tau_limit_stable, BrownianConfig};
use crate::polyroots::{char_roots, classify_region, ParamVector, RegionClass, DEFAULT_UNIT_TOL};
use crate::process::{NoiseSpec, ProcessStream};

/// Distinct stream so nu samples never share randomness with replications.
const NU_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub theta: ParamVector,
    pub noise: NoiseSpec,
    pub h: f64,
    pub replications: usize,
    pub seed: u64,
    pub max_n: usize,
    /// 0 means the global rayon default.
    pub jobs: usize,
    /// skip the Conditions 1-3 precheck (exploratory runs only)
    pub skip_conditions: bool,
    /// grid resolution for the nu comparison in boundary stopping runs
    pub nu_steps_per_unit: usize,
}

impl ExperimentConfig {
    pub fn new(
        theta: ParamVector,
        noise: NoiseSpec,
        h: f64,
        replications: usize,
        seed: u64,
    ) -> Result<Self> {
        if replications == 0 {
            return Err(Error::InvalidParam("replications must be >= 1".into()));
        }
        if !(h > 0.0) {
            return Err(Error::InvalidParam(format!("h {h} must be > 0")));
        }
        Ok(Self {
            theta,
            noise,
            h,
            replications,
            seed,
            max_n: crate::estimator::DEFAULT_MAX_N,
            jobs: 0,
            skip_conditions: false,
            nu_steps_per_unit: 10_000,
        })
    }
}

/// Empirical quantiles at the reporting grid 1/5/25/50/75/95/99%.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Quantiles {
    pub p01: f64,
    pub p05: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p95: f64,
    pub p99: f64,
}

/// Type-7 (linear interpolation) quantile of an already sorted sample.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

impl Quantiles {
    pub fn from_sorted(sorted: &[f64]) -> Self {
        Self {
            p01: quantile(sorted, 0.01),
            p05: quantile(sorted, 0.05),
            p25: quantile(sorted, 0.25),
            p50: quantile(sorted, 0.50),
            p75: quantile(sorted, 0.75),
            p95: quantile(sorted, 0.95),
            p99: quantile(sorted, 0.99),
        }
    }
}

/// Report shared by the normality and stopping experiments. Fields that do
/// not apply to a given mode are `None`; wall-clock is kept for logging but
/// deliberately excluded from the serialized form so identical configs give
/// byte-identical JSON.
#[derive(Debug, Clone, Serialize)]
pub struct DistributionReport {
    pub name: String,
    pub replications: usize,
    pub non_stopped: usize,
    /// per-coordinate one-sample KS distance vs the standard normal
    pub ks: Vec<f64>,
    pub ks_two_sample: Option<f64>,
    pub quantiles: Vec<Quantiles>,
    /// stable-mode limit of tau(h)/h
    pub limit: Option<f64>,
    /// boundary-mode normalization constant b
    pub b: Option<f64>,
    pub mu: Option<Vec<f64>>,
    pub gamma: Option<u8>,
    #[serde(skip)]
    pub wall_clock_secs: f64,
    /// raw per-replication values (residual coordinates or normalized tau),
    /// exposed for CSV dumps but not serialized
    #[serde(skip)]
    pub raw: Vec<Vec<f64>>,
}

/// Run `n` independent replications of `f(k)` for k = 0..n, optionally on a
/// dedicated pool of `jobs` threads, preserving replication order.
pub fn run_replications<T, F>(n: usize, jobs: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    use rayon::prelude::*;
    let work = || (0..n as u64).into_par_iter().map(&f).collect::<Result<Vec<T>>>();
    if jobs == 0 {
        work()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidParam(format!("thread pool: {e}")))?;
        pool.install(work)
    }
}

fn precheck(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.skip_conditions {
        return Ok(());
    }
    let report = check_conditions(
        &cfg.theta,
        DEFAULT_UNIT_TOL,
        crate::conditions::DEFAULT_PD_TOL,
    )?;
    if report.all_hold() {
        Ok(())
    } else {
        Err(Error::ConditionsFail)
    }
}

fn check_nonstops(nonstops: usize, total: usize) -> Result<()> {
    if nonstops * 100 > total {
        Err(Error::TooManyNonStops { nonstops, total })
    } else {
        Ok(())
    }
}

/// Monte Carlo check of the asymptotic normality of the normalized residual
/// `M_tau^{1/2}(theta_hat - theta)/sigma` at stopping.
pub fn normality_experiment(cfg: &ExperimentConfig) -> Result<DistributionReport> {
    precheck(cfg)?;
    let start = Instant::now();
    let p = cfg.theta.p();
    let sigma = cfg.noise.sigma();
    let outcomes = run_replications(cfg.replications, cfg.jobs, |k| {
        let mut stream = ProcessStream::new(&cfg.theta, cfg.noise.clone(), cfg.seed ^ k);
        let res = sequential_estimate(&mut stream, p, cfg.h, cfg.noise.sigma2, cfg.max_n)?;
        if !res.stopped {
            return Ok(None);
        }
        let z = normalized_residual(&res, &cfg.theta, sigma)?;
        Ok(Some(z.iter().copied().collect::<Vec<f64>>()))
    })?;
    let non_stopped = outcomes.iter().filter(|o| o.is_none()).count();
    check_nonstops(non_stopped, cfg.replications)?;
    let raw: Vec<Vec<f64>> = outcomes.into_iter().flatten().collect();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut ks = Vec::with_capacity(p);
    let mut quantiles = Vec::with_capacity(p);
    for j in 0..p {
        let mut coord: Vec<f64> = raw.iter().map(|z| z[j]).collect();
        coord.sort_by(f64::total_cmp);
        ks.push(ks_one_sample_sorted(&coord, |x| normal.cdf(x))?);
        quantiles.push(Quantiles::from_sorted(&coord));
    }
    Ok(DistributionReport {
        name: "normality".into(),
        replications: cfg.replications,
        non_stopped,
        ks,
        ks_two_sample: None,
        quantiles,
        limit: None,
        b: None,
        mu: None,
        gamma: None,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        raw,
    })
}

/// Monte Carlo check of the stopping-time limit laws: for stable theta the
/// ratio tau(h)/h against sigma^2/trF, for boundary theta the normalized
/// tau(h)/(b sqrt(h)) against samples of the matching nu law.
pub fn stopping_experiment(cfg: &ExperimentConfig) -> Result<DistributionReport> {
    let start = Instant::now();
    let roots = char_roots(&cfg.theta, DEFAULT_UNIT_TOL)?;
    let region = classify_region(&roots);
    let boundary = match region {
        RegionClass::Stable => false,
        RegionClass::BoundaryGamma { .. } => true,
        other => return Err(Error::NotBoundary(format!("{other}"))),
    };
    let p = cfg.theta.p();
    let taus = run_replications(cfg.replications, cfg.jobs, |k| {
        let mut stream = ProcessStream::new(&cfg.theta, cfg.noise.clone(), cfg.seed ^ k);
        let res = sequential_estimate(&mut stream, p, cfg.h, cfg.noise.sigma2, cfg.max_n)?;
        Ok(if res.stopped { Some(res.tau as f64) } else { None })
    })?;
    let non_stopped = taus.iter().filter(|t| t.is_none()).count();
    check_nonstops(non_stopped, cfg.replications)?;
    let taus: Vec<f64> = taus.into_iter().flatten().collect();

    let (name, normalized, ks2, limit, b, mu, gamma) = if boundary {
        let spec = limit_constants(&cfg.theta, cfg.noise.sigma2)?;
        let index = spec.gamma.gamma_index().expect("boundary classification");
        let scale = spec.b * cfg.h.sqrt();
        let normalized: Vec<f64> = taus.iter().map(|t| t / scale).collect();
        let grid = BrownianConfig::new(cfg.nu_steps_per_unit, 1.0, cfg.seed ^ NU_SEED_SALT)?;
        let nu = sample_nu(index, &spec.mu, &grid, normalized.len())?;
        let ks2 = ks_two_sample(&normalized, &nu)?;
        (
            "stopping-boundary".to_string(),
            normalized,
            Some(ks2),
            None,
            Some(spec.b),
            Some(spec.mu.clone()),
            Some(index),
        )
    } else {
        let limit = tau_limit_stable(&cfg.theta, cfg.noise.sigma2)?;
        let normalized: Vec<f64> = taus.iter().map(|t| t / cfg.h).collect();
        (
            "stopping-stable".to_string(),
            normalized,
            None,
            Some(limit),
            None,
            None,
            None,
        )
    };

    let mut sorted = normalized.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(DistributionReport {
        name,
        replications: cfg.replications,
        non_stopped,
        ks: vec![],
        ks_two_sample: ks2,
        quantiles: vec![Quantiles::from_sorted(&sorted)],
        limit,
        b,
        mu,
        gamma,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        raw: normalized.iter().map(|&t| vec![t]).collect(),
    })
}

/// Per-seed deviations of M_n / sum x_{k-1}^2 from L(theta), Frobenius norm.
#[derive(Debug, Clone, Serialize)]
pub struct FisherRatioReport {
    pub n: usize,
    /// running maxima are taken over steps m..=n with m = n/10
    pub m: usize,
    pub terminal: Vec<f64>,
    pub running_max: Vec<f64>,
    pub median_terminal: f64,
    pub p90_terminal: f64,
    pub median_running_max: f64,
    pub p90_running_max: f64,
}

/// Track the Fisher-ratio deviation along a single trajectory per seed.
pub fn fisher_ratio_experiment(
    theta: &ParamVector,
    noise: &NoiseSpec,
    n: usize,
    seeds: &[u64],
) -> Result<FisherRatioReport> {
    if n == 0 || seeds.is_empty() {
        return Err(Error::EmptyInput("n >= 1 and at least one seed".into()));
    }
    let report = check_conditions(theta, DEFAULT_UNIT_TOL, crate::conditions::DEFAULT_PD_TOL)?;
    if !report.cond3 {
        return Err(Error::ConditionsFail);
    }
    let l = build_l(theta)?;
    let m0 = (n / 10).max(1);
    let p = theta.p();
    let per_seed: Vec<(f64, f64)> = seeds
        .iter()
        .map(|&seed| {
            let mut stream = ProcessStream::new(theta, noise.clone(), seed);
            let mut state = FisherState::new(p);
            let mut run_max = 0.0f64;
            let mut term = 0.0f64;
            for step in 1..=n {
                state.update(stream.next_value()?)?;
                if step >= m0 {
                    let dev = fisher_deviation(state.m(), &l);
                    run_max = run_max.max(dev);
                    term = dev;
                }
            }
            Ok((term, run_max))
        })
        .collect::<Result<_>>()?;
    let mut terminal: Vec<f64> = per_seed.iter().map(|x| x.0).collect();
    let mut running_max: Vec<f64> = per_seed.iter().map(|x| x.1).collect();
    let raw_terminal = terminal.clone();
    let raw_running = running_max.clone();
    terminal.sort_by(f64::total_cmp);
    running_max.sort_by(f64::total_cmp);
    Ok(FisherRatioReport {
        n,
        m: m0,
        median_terminal: quantile(&terminal, 0.5),
        p90_terminal: quantile(&terminal, 0.9),
        median_running_max: quantile(&running_max, 0.5),
        p90_running_max: quantile(&running_max, 0.9),
        terminal: raw_terminal,
        running_max: raw_running,
    })
}

fn fisher_deviation(m: &DMatrix<f64>, l: &DMatrix<f64>) -> f64 {
    let denom = m[(0, 0)];
    if denom <= 0.0 {
        return l.norm();
    }
    (m / denom - l).norm()
}

fn ks_one_sample_sorted<F: Fn(f64) -> f64>(sorted: &[f64], cdf: F) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::EmptyInput("ks_one_sample".into()));
    }
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    Ok(d)
}

/// Exact one-sample KS distance `sup_x |F_n(x) - F(x)|`.
pub fn ks_one_sample<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<f64> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    ks_one_sample_sorted(&sorted, cdf)
}

/// Exact two-sample KS distance between the empirical CDFs of `a` and `b`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("ks_two_sample".into()));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < sa.len() && j < sb.len() {
        let x = sa[i].min(sb[j]);
        while i < sa.len() && sa[i] <= x {
            i += 1;
        }
        while j < sb.len() && sb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}
