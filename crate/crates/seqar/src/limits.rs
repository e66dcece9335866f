//! Limit theory of the stopping time: transformation matrices Q_i, the
//! constants b_i and mu_j, Brownian-path discretization, the integrated
//! squared-path functionals J_1..J_5 and samplers for the first-passage
//! laws nu_1..nu_7, plus the stable-case limit sigma^2 / tr F.
//!
//! Normalization: the stopping rule uses the threshold `h sigma^2`, so every
//! b_i here carries an extra sigma^2 relative to the bare-threshold
//! formulas; at sigma^2 = 1 the constants coincide with the bare ones, and
//! they are sigma-invariant because kappa_ij is proportional to sigma^2.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::conditions::stationary_limit;
use crate::error::{Error, Result};
use crate::polyroots::{
    char_roots, classify_region, factor_unit_roots, poly_mul, ParamVector, RegionClass,
    UnitFactorization, DEFAULT_UNIT_TOL,
};

/// Hard cap (in time units) for first-passage sampling; the functionals are
/// recurrent, so hitting this signals a bug.
pub const HORIZON_CAP: f64 = 1e6;

/// Grid configuration for Brownian-path discretization.
#[derive(Debug, Clone, Serialize)]
pub struct BrownianConfig {
    pub steps_per_unit: usize,
    pub horizon: f64,
    pub seed: u64,
}

impl BrownianConfig {
    pub fn new(steps_per_unit: usize, horizon: f64, seed: u64) -> Result<Self> {
        if steps_per_unit == 0 || !(horizon > 0.0) {
            return Err(Error::InvalidParam(
                "steps_per_unit must be >= 1 and horizon > 0".into(),
            ));
        }
        if steps_per_unit < 100 {
            eprintln!(
                "warning: steps_per_unit = {steps_per_unit} < 100 is too coarse for distributional use"
            );
        }
        Ok(Self {
            steps_per_unit,
            horizon,
            seed,
        })
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.steps_per_unit as f64
    }
}

/// Discretized standard Brownian motions on a common grid.
#[derive(Debug, Clone)]
pub struct BrownianPaths {
    pub dt: f64,
    /// each path starts at 0; length = horizon * steps_per_unit + 1
    pub paths: Vec<Vec<f64>>,
}

/// Limit law specification for a boundary point.
#[derive(Debug, Clone, Serialize)]
pub struct LimitSpec {
    pub gamma: RegionClass,
    #[serde(serialize_with = "crate::report::serialize_matrix")]
    pub q: DMatrix<f64>,
    pub b: f64,
    /// mu_1 for Gamma4; mu_2 for Gamma5/6; (mu_3, mu_4) for Gamma7.
    pub mu: Vec<f64>,
    pub phi: Option<f64>,
}

fn place_shifted_rows(q: &mut DMatrix<f64>, start: usize, filter: &[f64], count: usize) {
    for r in 0..count {
        for (j, c) in filter.iter().enumerate() {
            q[(start + r, r + j)] = *c;
        }
    }
}

/// Build the transformation matrix whose rows are the component filters:
/// each unit-root component's row(s) apply the product of all *other*
/// factors; the stable component's rows apply the product of the unit-root
/// factors, shifted. Gamma4 follows the joint (z^2 - 1) treatment; Gamma7
/// is constructed by analogy with Gamma5 in the row order
/// (-1)-component, (+1)-component, pair rows, stable rows.
pub fn q_matrix(
    theta: &ParamVector,
    fac: &UnitFactorization,
    gamma: &RegionClass,
) -> Result<DMatrix<f64>> {
    let p = theta.p();
    let index = gamma
        .gamma_index()
        .ok_or_else(|| Error::NotBoundary(format!("{gamma}")))?;
    let (d1, d2, d3) = match index {
        1 => (1, 0, 0),
        2 => (0, 1, 0),
        3 => (0, 0, 1),
        4 => (1, 1, 0),
        5 => (1, 0, 1),
        6 => (0, 1, 1),
        7 => (1, 1, 1),
        _ => return Err(Error::NotBoundary(format!("Gamma{index}"))),
    };
    if (fac.delta1, fac.delta2, fac.delta3) != (d1, d2, d3) {
        return Err(Error::InvalidParam(format!(
            "factorization deltas ({},{},{}) inconsistent with Gamma{index}",
            fac.delta1, fac.delta2, fac.delta3
        )));
    }

    let f_neg = [1.0, 1.0];
    let f_pos = [1.0, -1.0];
    let f_pair: Option<Vec<f64>> = fac.phi.map(|phi| vec![1.0, -2.0 * phi.cos(), 1.0]);
    let stable = fac.stable_poly();
    let r = fac.r();

    let mul_opt = |mut acc: Vec<f64>, use_neg: bool, use_pos: bool, use_pair: bool| {
        if use_neg {
            acc = poly_mul(&acc, &f_neg);
        }
        if use_pos {
            acc = poly_mul(&acc, &f_pos);
        }
        if use_pair {
            acc = poly_mul(&acc, f_pair.as_ref().expect("pair factor"));
        }
        acc
    };

    let mut q = DMatrix::zeros(p, p);
    match index {
        1 | 2 => {
            // single real unit root: its filter is the stable factor itself
            place_shifted_rows(&mut q, 0, &stable, 1);
            let unit = if index == 1 { &f_neg } else { &f_pos };
            place_shifted_rows(&mut q, 1, unit, r);
        }
        3 => {
            place_shifted_rows(&mut q, 0, &stable, 2);
            place_shifted_rows(&mut q, 2, f_pair.as_ref().unwrap(), r);
        }
        4 => {
            // both real unit roots handled jointly: u_n = u_{n-2} + eps_n
            place_shifted_rows(&mut q, 0, &stable, 2);
            place_shifted_rows(&mut q, 2, &[1.0, 0.0, -1.0], r);
        }
        5 | 6 => {
            let real_other = mul_opt(stable.clone(), false, false, true);
            place_shifted_rows(&mut q, 0, &real_other, 1);
            let pair_other = mul_opt(stable.clone(), index == 5, index == 6, false);
            place_shifted_rows(&mut q, 1, &pair_other, 2);
            let unit_prod = mul_opt(vec![1.0], index == 5, index == 6, true);
            place_shifted_rows(&mut q, 3, &unit_prod, r);
        }
        7 => {
            let neg_other = mul_opt(stable.clone(), false, true, true);
            place_shifted_rows(&mut q, 0, &neg_other, 1);
            let pos_other = mul_opt(stable.clone(), true, false, true);
            place_shifted_rows(&mut q, 1, &pos_other, 1);
            let pair_other = mul_opt(stable.clone(), true, true, false);
            place_shifted_rows(&mut q, 2, &pair_other, 2);
            let unit_prod = mul_opt(vec![1.0], true, true, true);
            place_shifted_rows(&mut q, 4, &unit_prod, r);
        }
        _ => unreachable!(),
    }
    Ok(q)
}

/// Compute the limit-law constants for a boundary theta.
pub fn limit_constants(theta: &ParamVector, sigma2: f64) -> Result<LimitSpec> {
    limit_constants_with_tol(theta, sigma2, DEFAULT_UNIT_TOL)
}

pub fn limit_constants_with_tol(
    theta: &ParamVector,
    sigma2: f64,
    tol: f64,
) -> Result<LimitSpec> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidParam(format!("sigma2 {sigma2} must be > 0")));
    }
    let roots = char_roots(theta, tol)?;
    let region = classify_region(&roots);
    let index = match region {
        RegionClass::BoundaryGamma { index, .. } => index,
        RegionClass::Stable => {
            return Err(Error::NotBoundary(
                "theta is stable; use tau_limit_stable for the tau(h)/h limit".into(),
            ))
        }
        other => return Err(Error::NotBoundary(format!("{other}"))),
    };
    let fac = factor_unit_roots(theta, tol)?;
    let q = q_matrix(theta, &fac, &region)?;
    let qqt = &q * q.transpose();
    let inv = qqt
        .clone()
        .try_inverse()
        .ok_or(Error::Unsolvable { cond: f64::INFINITY })?;
    // kappa_ij = sigma^2 <(Q Q')^{-1}>_ij
    let kap = |i: usize, j: usize| sigma2 * inv[(i, j)];
    let phi = fac.phi;

    let (b2, mu) = match index {
        1 | 2 => (sigma2 / kap(0, 0), vec![]),
        3 => {
            let phi = phi.expect("Gamma3 carries phi");
            let denom = kap(0, 0) + kap(1, 1) + (kap(0, 1) + kap(1, 0)) * phi.cos();
            (4.0 * sigma2 * phi.sin().powi(2) / denom, vec![])
        }
        4 => {
            let mut r1 = 0.0;
            let mut r2 = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    let v = inv[(i, j)];
                    r1 += v;
                    r2 += if (i + j) % 2 == 0 { v } else { -v };
                }
            }
            r1 *= sigma2 / 4.0;
            r2 *= sigma2 / 4.0;
            (sigma2 / r1, vec![r2 / r1])
        }
        5 | 6 => {
            let phi = phi.expect("Gamma5/6 carry phi");
            let denom = kap(1, 1) + kap(2, 2) + (kap(1, 2) + kap(2, 1)) * phi.cos();
            let b2 = 4.0 * sigma2 * phi.sin().powi(2) / denom;
            let mu2 = kap(0, 0) * b2 / sigma2;
            (b2, vec![mu2])
        }
        7 => {
            let phi = phi.expect("Gamma7 carries phi");
            let denom = kap(2, 2) + kap(3, 3) + (kap(2, 3) + kap(3, 2)) * phi.cos();
            let b2 = 4.0 * sigma2 * phi.sin().powi(2) / denom;
            let mu3 = kap(0, 0) * b2 / sigma2;
            let mu4 = kap(1, 1) * b2 / sigma2;
            (b2, vec![mu3, mu4])
        }
        _ => unreachable!(),
    };

    Ok(LimitSpec {
        gamma: region,
        q,
        b: b2.sqrt(),
        mu,
        phi,
    })
}

/// Number of independent Brownian motions backing nu_i, and the mu count
/// its functional requires.
pub fn nu_requirements(i: u8) -> Result<(usize, usize)> {
    match i {
        1 | 2 => Ok((1, 0)),
        3 => Ok((2, 0)),
        4 => Ok((2, 1)),
        5 | 6 => Ok((3, 1)),
        7 => Ok((4, 2)),
        _ => Err(Error::InvalidParam(format!("nu index {i} outside 1..=7"))),
    }
}

fn j_kind_paths(kind: u8) -> Result<(usize, usize)> {
    match kind {
        1 => Ok((1, 0)),
        2 => Ok((2, 0)),
        3 => Ok((2, 1)),
        4 => Ok((3, 1)),
        5 => Ok((4, 2)),
        _ => Err(Error::InvalidParam(format!("J kind {kind} outside 1..=5"))),
    }
}

fn integrand(kind: u8, x: &[f64], mu: &[f64]) -> f64 {
    match kind {
        1 => x[0] * x[0],
        2 => x[0] * x[0] + x[1] * x[1],
        3 => x[0] * x[0] + mu[0] * x[1] * x[1],
        4 => x[0] * x[0] + x[1] * x[1] + mu[0] * x[2] * x[2],
        5 => x[0] * x[0] + x[1] * x[1] + mu[0] * x[2] * x[2] + mu[1] * x[3] * x[3],
        _ => unreachable!(),
    }
}

/// Generate `count` independent discretized standard Brownian motions.
/// Increments have variance dt; deterministic per seed.
pub fn brownian_paths(count: usize, cfg: &BrownianConfig) -> Result<BrownianPaths> {
    if count == 0 || count > 4 {
        return Err(Error::InvalidParam(format!("count {count} outside 1..=4")));
    }
    let steps = (cfg.horizon * cfg.steps_per_unit as f64).ceil() as usize;
    let sd = cfg.dt().sqrt();
    let paths = (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ i as u64);
            let mut w = Vec::with_capacity(steps + 1);
            let mut acc = 0.0;
            w.push(acc);
            for _ in 0..steps {
                let z: f64 = rng.sample(StandardNormal);
                acc += sd * z;
                w.push(acc);
            }
            w
        })
        .collect();
    Ok(BrownianPaths {
        dt: cfg.dt(),
        paths,
    })
}

/// Left-endpoint Riemann approximation of J_kind over [0, t].
pub fn functional_j(kind: u8, paths: &BrownianPaths, mu: &[f64], t: f64) -> Result<f64> {
    let (need_paths, need_mu) = j_kind_paths(kind)?;
    if paths.paths.len() < need_paths {
        return Err(Error::InvalidParam(format!(
            "J{kind} needs {need_paths} paths, got {}",
            paths.paths.len()
        )));
    }
    if mu.len() < need_mu {
        return Err(Error::MissingMu {
            kind,
            expected: need_mu,
            got: mu.len(),
        });
    }
    let m = ((t / paths.dt).round() as usize).min(paths.paths[0].len() - 1);
    let mut acc = 0.0;
    let mut point = vec![0.0; need_paths];
    for k in 0..m {
        for (slot, path) in point.iter_mut().zip(&paths.paths) {
            *slot = path[k];
        }
        acc += integrand(kind, &point, mu) * paths.dt;
    }
    Ok(acc)
}

fn nu_kind(i: u8) -> u8 {
    match i {
        1 | 2 => 1,
        3 => 2,
        4 => 3,
        5 | 6 => 4,
        7 => 5,
        _ => unreachable!(),
    }
}

fn sample_one_nu(
    kind: u8,
    n_paths: usize,
    mu: &[f64],
    dt: f64,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = dt.sqrt();
    let mut state = vec![0.0f64; n_paths];
    let mut j = 0.0;
    let mut m = 0u64;
    loop {
        j += integrand(kind, &state, mu) * dt;
        m += 1;
        let t = m as f64 * dt;
        if j >= 1.0 {
            // crossing happened inside (t - dt, t]; report the left grid
            // point (downward bias of at most one step)
            return Ok(t - dt);
        }
        if t > HORIZON_CAP {
            return Err(Error::HorizonExceeded(HORIZON_CAP));
        }
        for s in state.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *s += sd * z;
        }
    }
}

/// Draw `n_samples` first-passage times of the functional backing nu_i at
/// level 1. Per-sample seeds are `cfg.seed ^ sample_index`, so parallel and
/// serial runs agree.
pub fn sample_nu(i: u8, mu: &[f64], cfg: &BrownianConfig, n_samples: usize) -> Result<Vec<f64>> {
    let (n_paths, need_mu) = nu_requirements(i)?;
    if mu.len() < need_mu {
        return Err(Error::MissingMu {
            kind: nu_kind(i),
            expected: need_mu,
            got: mu.len(),
        });
    }
    let kind = nu_kind(i);
    let dt = cfg.dt();
    (0..n_samples as u64)
        .into_par_iter()
        .map(|s| sample_one_nu(kind, n_paths, mu, dt, cfg.seed ^ s))
        .collect()
}

/// Coupled coarse/fine first-passage times: the fine grid drives both, and
/// the coarse grid (every `factor`-th point) sees the same Brownian values,
/// so the difference isolates the discretization bias.
pub fn sample_nu_coupled(
    i: u8,
    mu: &[f64],
    cfg: &BrownianConfig,
    factor: usize,
    n_samples: usize,
) -> Result<Vec<(f64, f64)>> {
    let (n_paths, need_mu) = nu_requirements(i)?;
    if mu.len() < need_mu {
        return Err(Error::MissingMu {
            kind: nu_kind(i),
            expected: need_mu,
            got: mu.len(),
        });
    }
    if factor < 2 {
        return Err(Error::InvalidParam("factor must be >= 2".into()));
    }
    let kind = nu_kind(i);
    let fine_dt = cfg.dt();
    let coarse_dt = fine_dt * factor as f64;
    let sd = fine_dt.sqrt();
    (0..n_samples as u64)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ s);
            let mut state = vec![0.0f64; n_paths];
            let mut j_fine = 0.0;
            let mut j_coarse = 0.0;
            let mut t_fine: Option<f64> = None;
            let mut t_coarse: Option<f64> = None;
            let mut m = 0u64;
            loop {
                let f = integrand(kind, &state, mu);
                if t_fine.is_none() {
                    j_fine += f * fine_dt;
                }
                if t_coarse.is_none() && m % factor as u64 == 0 {
                    j_coarse += f * coarse_dt;
                }
                m += 1;
                let t = m as f64 * fine_dt;
                if t_fine.is_none() && j_fine >= 1.0 {
                    t_fine = Some(t - fine_dt);
                }
                if t_coarse.is_none() && m % factor as u64 == 0 && j_coarse >= 1.0 {
                    t_coarse = Some(t - coarse_dt);
                }
                if let (Some(tc), Some(tf)) = (t_coarse, t_fine) {
                    return Ok((tc, tf));
                }
                if t > HORIZON_CAP {
                    return Err(Error::HorizonExceeded(HORIZON_CAP));
                }
                for s in state.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *s += sd * z;
                }
            }
        })
        .collect()
}

/// Stable-case limit of tau(h)/h: sigma^2 / tr F.
pub fn tau_limit_stable(theta: &ParamVector, sigma2: f64) -> Result<f64> {
    let st = stationary_limit(theta, sigma2)?;
    Ok(sigma2 / st.trace_f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{NoiseLaw, NoiseSpec, NoiseSource, ProcessStream};
    use crate::polyroots::theta_from_roots;
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;

    fn theta(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec()).unwrap()
    }

    fn fac_and_region(th: &ParamVector) -> (UnitFactorization, RegionClass) {
        let rs = char_roots(th, DEFAULT_UNIT_TOL).unwrap();
        (
            factor_unit_roots(th, DEFAULT_UNIT_TOL).unwrap(),
            classify_region(&rs),
        )
    }

    #[test]
    fn q_gamma2_p1() {
        let th = theta(&[1.0]);
        let (fac, region) = fac_and_region(&th);
        let q = q_matrix(&th, &fac, &region).unwrap();
        assert_eq!(q, DMatrix::from_row_slice(1, 1, &[1.0]));
    }

    #[test]
    fn q_gamma1_p2_stable_half() {
        // roots {-1, 0.5}: theta = (-0.5, 0.5), beta_1 = -0.5
        let th = theta_from_roots(&[Complex64::new(-1.0, 0.0), Complex64::new(0.5, 0.0)]).unwrap();
        let (fac, region) = fac_and_region(&th);
        let q = q_matrix(&th, &fac, &region).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[1.0, -0.5, 1.0, 1.0]);
        assert!((q - want).norm() < 1e-12);
    }

    #[test]
    fn q_gamma4_p2_identity() {
        let th = theta(&[0.0, 1.0]);
        let (fac, region) = fac_and_region(&th);
        let q = q_matrix(&th, &fac, &region).unwrap();
        assert!((q - DMatrix::<f64>::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn constants_gamma2_b_one() {
        let spec = limit_constants(&theta(&[1.0]), 1.0).unwrap();
        assert_eq!(spec.gamma.gamma_index(), Some(2));
        assert_abs_diff_eq!(spec.b, 1.0, epsilon = 1e-12);
        assert!(spec.mu.is_empty());
    }

    #[test]
    fn constants_gamma1_b_one() {
        let spec = limit_constants(&theta(&[-1.0]), 1.0).unwrap();
        assert_eq!(spec.gamma.gamma_index(), Some(1));
        assert_abs_diff_eq!(spec.b, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn constants_gamma4_example() {
        let spec = limit_constants(&theta(&[0.0, 1.0]), 1.0).unwrap();
        assert_eq!(spec.gamma.gamma_index(), Some(4));
        assert_abs_diff_eq!(spec.b * spec.b, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(spec.mu[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn constants_sigma_invariant() {
        for th in [theta(&[1.0]), theta(&[-1.0]), theta(&[1.0, -1.0]), theta(&[0.0, 1.0])] {
            let base = limit_constants(&th, 1.0).unwrap();
            for sigma2 in [0.25, 4.0] {
                let other = limit_constants(&th, sigma2).unwrap();
                assert_abs_diff_eq!(other.b, base.b, epsilon = 1e-12);
                for (a, b) in other.mu.iter().zip(base.mu.iter()) {
                    assert_abs_diff_eq!(a, b, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn constants_reject_stable() {
        assert!(matches!(
            limit_constants(&theta(&[0.5]), 1.0),
            Err(Error::NotBoundary(_))
        ));
    }

    #[test]
    fn q_row_filters_satisfy_component_recursions() {
        // Gamma1 with stable root 0.5: u_n = -u_{n-1} + eps_n
        let th = theta_from_roots(&[Complex64::new(-1.0, 0.0), Complex64::new(0.5, 0.0)]).unwrap();
        let (fac, region) = fac_and_region(&th);
        let q = q_matrix(&th, &fac, &region).unwrap();
        let table = vec![0.7, -0.3, 1.1, 0.2, -0.9];
        let spec = NoiseSpec::new(NoiseLaw::Table(table.clone()), 1.0).unwrap();
        let mut stream = ProcessStream::new(&th, spec.clone(), 0);
        let mut xs = vec![0.0, 0.0]; // presample
        for _ in 0..200 {
            xs.push(stream.next_value().unwrap());
        }
        let mut noise = NoiseSource::new(spec, 0);
        let eps: Vec<f64> = (0..200).map(|_| noise.draw()).collect();
        // xs[i] holds x_{i-1} (two presample zeros first), so x_n = xs[n+1]
        let u = |n: usize| q[(0, 0)] * xs[n + 1] + q[(0, 1)] * xs[n];
        for n in 1..=200 {
            let lhs = u(n) + u(n - 1);
            assert!((lhs - eps[n - 1]).abs() < 1e-9, "step {n}: {lhs} vs {}", eps[n - 1]);
        }
        // v_n = x_n + x_{n-1} satisfies v_n + beta_1 v_{n-1} = eps_n
        let v = |n: usize| q[(1, 0)] * xs[n + 1] + q[(1, 1)] * xs[n];
        for n in 1..=200 {
            let lhs = v(n) + fac.stable_coeffs[0] * v(n - 1);
            assert!((lhs - eps[n - 1]).abs() < 1e-9);
        }
    }

    #[test]
    fn gamma5_constants_finite_and_positive() {
        let phi = 1.2;
        let roots = [
            Complex64::new(-1.0, 0.0),
            Complex64::from_polar(1.0, phi),
            Complex64::from_polar(1.0, -phi),
            Complex64::new(0.3, 0.0),
        ];
        let th = theta_from_roots(&roots).unwrap();
        let spec = limit_constants(&th, 1.0).unwrap();
        assert_eq!(spec.gamma.gamma_index(), Some(5));
        assert!(spec.b > 0.0 && spec.b.is_finite());
        assert_eq!(spec.mu.len(), 1);
        assert!(spec.mu[0].is_finite());
    }

    #[test]
    fn gamma7_constants_by_analogy() {
        let phi = 0.9;
        let roots = [
            Complex64::new(-1.0, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::from_polar(1.0, phi),
            Complex64::from_polar(1.0, -phi),
            Complex64::new(-0.4, 0.0),
        ];
        let th = theta_from_roots(&roots).unwrap();
        let spec = limit_constants(&th, 1.0).unwrap();
        assert_eq!(spec.gamma.gamma_index(), Some(7));
        assert!(spec.b > 0.0 && spec.b.is_finite());
        assert_eq!(spec.mu.len(), 2);
    }

    #[test]
    fn brownian_start_and_determinism() {
        let cfg = BrownianConfig::new(1000, 1.0, 9).unwrap();
        let a = brownian_paths(2, &cfg).unwrap();
        let b = brownian_paths(2, &cfg).unwrap();
        assert_eq!(a.paths, b.paths);
        assert_eq!(a.paths[0][0], 0.0);
        assert_eq!(a.paths[1][0], 0.0);
    }

    #[test]
    fn brownian_terminal_variance() {
        let n = 10_000;
        let mut sumsq = 0.0;
        for i in 0..n {
            let cfg = BrownianConfig::new(200, 1.0, 1000 + i).unwrap();
            let w = brownian_paths(1, &cfg).unwrap();
            let last = *w.paths[0].last().unwrap();
            sumsq += last * last;
        }
        let var = sumsq / n as f64;
        assert!((var - 1.0).abs() < 0.03, "var {var}");
    }

    #[test]
    fn j_zero_time_and_identity() {
        let cfg = BrownianConfig::new(500, 1.0, 4).unwrap();
        let w = brownian_paths(2, &cfg).unwrap();
        for kind in 1..=2u8 {
            assert_eq!(functional_j(kind, &w, &[], 0.0).unwrap(), 0.0);
        }
        // J2(x,y;t) = J1(x;t) + J1(y;t) exactly on the grid
        let j2 = functional_j(2, &w, &[], 0.7).unwrap();
        let j1x = functional_j(1, &w, &[], 0.7).unwrap();
        let wy = BrownianPaths {
            dt: w.dt,
            paths: vec![w.paths[1].clone()],
        };
        let j1y = functional_j(1, &wy, &[], 0.7).unwrap();
        assert_abs_diff_eq!(j2, j1x + j1y, epsilon = 1e-12);
    }

    #[test]
    fn j_missing_mu_is_error() {
        let cfg = BrownianConfig::new(500, 1.0, 4).unwrap();
        let w = brownian_paths(2, &cfg).unwrap();
        assert!(matches!(
            functional_j(3, &w, &[], 1.0),
            Err(Error::MissingMu { .. })
        ));
    }

    #[test]
    fn nu_samples_positive_and_deterministic() {
        let cfg = BrownianConfig::new(200, 1.0, 11).unwrap();
        let a = sample_nu(2, &[], &cfg, 50).unwrap();
        let b = sample_nu(2, &[], &cfg, 50).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|&t| t > 0.0));
    }

    #[test]
    fn nu1_nu2_same_law_same_seed() {
        let cfg = BrownianConfig::new(200, 1.0, 12).unwrap();
        let a = sample_nu(1, &[], &cfg, 20).unwrap();
        let b = sample_nu(2, &[], &cfg, 20).unwrap();
        assert_eq!(a, b);
    }

    /// Frozen regression constant: median of nu_2 over 10^4 samples on the
    /// 10^4 steps/unit grid at seed 0xF0E2, pinned when the sampler was
    /// validated against the 10^5 grid (coupled-refinement drift ~1e-4).
    /// The run is deterministic, so any movement means the sampler changed.
    #[test]
    fn nu2_median_regression() {
        let cfg = BrownianConfig::new(10_000, 1.0, 0xF0E2).unwrap();
        let mut s = sample_nu(2, &[], &cfg, 10_000).unwrap();
        s.sort_by(f64::total_cmp);
        let median = crate::experiments::quantile(&s, 0.5);
        assert_abs_diff_eq!(median, 1.86445, epsilon = 1e-9);
    }

    #[test]
    fn tau_limit_closed_forms() {
        assert_abs_diff_eq!(tau_limit_stable(&theta(&[0.0]), 1.0).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            tau_limit_stable(&theta(&[0.5]), 1.0).unwrap(),
            0.75,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            tau_limit_stable(&theta(&[0.0, 0.0]), 1.0).unwrap(),
            0.5,
            epsilon = 1e-12
        );
        // AR(1) grid: sigma^2/trF = 1 - theta^2
        for t in [-0.9, -0.4, 0.1, 0.6, 0.95] {
            assert_abs_diff_eq!(
                tau_limit_stable(&theta(&[t]), 2.0).unwrap(),
                1.0 - t * t,
                epsilon = 1e-10
            );
        }
    }
}
