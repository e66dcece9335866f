//! Characteristic-polynomial analysis for the AR(p) model: roots of
//! `P(z) = z^p - theta_1 z^{p-1} - ... - theta_p`, companion matrix,
//! stability/boundary classification and unit-root factorization.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance on `| |z| - 1 |` for unit-circle membership.
pub const DEFAULT_UNIT_TOL: f64 = 1e-9;

/// AR(p) coefficient vector `(theta_1, ..., theta_p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    coeffs: Vec<f64>,
}

impl ParamVector {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidParam("p must be >= 1".into()));
        }
        if let Some(bad) = coeffs.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidParam(format!("non-finite entry {bad}")));
        }
        Ok(Self { coeffs })
    }

    pub fn p(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Monic coefficients of `P(z)` in descending powers: `[1, -theta_1, ..., -theta_p]`.
    pub fn char_poly(&self) -> Vec<f64> {
        let mut c = Vec::with_capacity(self.p() + 1);
        c.push(1.0);
        c.extend(self.coeffs.iter().map(|t| -t));
        c
    }
}

/// Roots of the characteristic polynomial with multiplicities.
#[derive(Debug, Clone)]
pub struct RootSet {
    /// Distinct roots with multiplicities; conjugate-closed, sorted by (re, im).
    pub roots: Vec<(Complex64, usize)>,
    /// Tolerance used for unit-circle membership and root coincidence.
    pub tol: f64,
    /// Max multiplicity among roots on the unit circle (0 if none).
    pub rho: usize,
}

impl RootSet {
    pub fn p(&self) -> usize {
        self.roots.iter().map(|(_, m)| m).sum()
    }

    /// Roots repeated by multiplicity.
    pub fn expanded(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.p());
        for (z, m) in &self.roots {
            for _ in 0..*m {
                out.push(*z);
            }
        }
        out
    }
}

/// Region of the parameter space relative to the stability region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum RegionClass {
    /// All roots strictly inside the unit circle.
    Stable,
    /// One of the boundary strata Gamma_1..Gamma_7; `phi` is the angle of
    /// the conjugate unit pair when the stratum carries one.
    BoundaryGamma { index: u8, phi: Option<f64> },
    /// On the closed region but matching no Gamma stratum (e.g. repeated
    /// unit roots, two distinct complex unit pairs).
    BoundaryOther,
    /// Some root strictly outside the unit circle.
    Explosive,
}

impl RegionClass {
    pub fn gamma_index(&self) -> Option<u8> {
        match self {
            RegionClass::BoundaryGamma { index, .. } => Some(*index),
            _ => None,
        }
    }
}

impl std::fmt::Display for RegionClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RegionClass::Stable => write!(f, "Stable"),
            RegionClass::BoundaryGamma { index, phi: Some(phi) } => {
                write!(f, "Gamma{index}(phi={phi:.6})")
            }
            RegionClass::BoundaryGamma { index, phi: None } => write!(f, "Gamma{index}"),
            RegionClass::BoundaryOther => write!(f, "BoundaryOther"),
            RegionClass::Explosive => write!(f, "Explosive"),
        }
    }
}

/// Factorization `P(z) = (z+1)^d1 (z-1)^d2 (z^2 - 2 z cos(phi) + 1)^d3 phi(z)`
/// with `phi(z) = z^r + beta_1 z^{r-1} + ... + beta_r` having all roots
/// strictly inside the unit circle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnitFactorization {
    pub delta1: u8,
    pub delta2: u8,
    pub delta3: u8,
    pub phi: Option<f64>,
    /// `(beta_1, ..., beta_r)`; empty when r = 0.
    pub stable_coeffs: Vec<f64>,
}

impl UnitFactorization {
    pub fn r(&self) -> usize {
        self.stable_coeffs.len()
    }

    /// Monic stable factor coefficients, descending: `[1, beta_1, ..., beta_r]`.
    pub fn stable_poly(&self) -> Vec<f64> {
        let mut c = Vec::with_capacity(self.r() + 1);
        c.push(1.0);
        c.extend_from_slice(&self.stable_coeffs);
        c
    }

    /// Re-expand the factorization into monic descending coefficients.
    pub fn expand(&self) -> Vec<f64> {
        let mut poly = self.stable_poly();
        if self.delta1 == 1 {
            poly = poly_mul(&poly, &[1.0, 1.0]);
        }
        if self.delta2 == 1 {
            poly = poly_mul(&poly, &[1.0, -1.0]);
        }
        if self.delta3 == 1 {
            let phi = self.phi.expect("delta3 = 1 requires phi");
            poly = poly_mul(&poly, &[1.0, -2.0 * phi.cos(), 1.0]);
        }
        poly
    }
}

/// Companion matrix of theta: first row `theta_1..theta_p`, identity block below.
pub fn companion_matrix(theta: &ParamVector) -> DMatrix<f64> {
    let p = theta.p();
    let mut a = DMatrix::zeros(p, p);
    for (j, t) in theta.coeffs().iter().enumerate() {
        a[(0, j)] = *t;
    }
    for k in 1..p {
        a[(k, k - 1)] = 1.0;
    }
    a
}

/// Multiply polynomials given by descending coefficient vectors.
pub fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Evaluate a polynomial with descending real coefficients at a complex point.
pub fn poly_eval(coeffs: &[f64], z: Complex64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for c in coeffs {
        acc = acc * z + c;
    }
    acc
}

/// Divide a monic polynomial by the linear factor `z - root` (synthetic
/// division); returns the monic quotient and the remainder.
fn poly_div_linear(coeffs: &[f64], root: f64) -> (Vec<f64>, f64) {
    let mut quot = Vec::with_capacity(coeffs.len() - 1);
    let mut acc = 0.0;
    for c in &coeffs[..coeffs.len() - 1] {
        acc = acc * root + c;
        quot.push(acc);
    }
    let rem = acc * root + coeffs[coeffs.len() - 1];
    (quot, rem)
}

/// Divide a monic polynomial by the monic quadratic `z^2 + b z + c`;
/// returns the quotient and the linear remainder `(r1, r0)`.
fn poly_div_quadratic(coeffs: &[f64], b: f64, c: f64) -> (Vec<f64>, (f64, f64)) {
    let n = coeffs.len() - 1; // degree
    debug_assert!(n >= 2);
    let mut work = coeffs.to_vec();
    let mut quot = Vec::with_capacity(n - 1);
    for i in 0..=(n - 2) {
        let q = work[i];
        quot.push(q);
        work[i + 1] -= q * b;
        work[i + 2] -= q * c;
    }
    (quot, (work[n - 1], work[n]))
}

/// Find all roots of the monic polynomial (descending coefficients) by the
/// Durand-Kerner iteration. Independent of any eigenvalue routine.
fn durand_kerner(coeffs: &[f64]) -> Result<Vec<Complex64>> {
    let n = coeffs.len() - 1;
    if n == 0 {
        return Ok(vec![]);
    }
    if n == 1 {
        return Ok(vec![Complex64::new(-coeffs[1], 0.0)]);
    }
    // Cauchy-style bound on root moduli.
    let radius = 1.0 + coeffs[1..].iter().map(|c| c.abs()).fold(0.0, f64::max);
    let seed = Complex64::new(0.4, 0.9);
    let mut z: Vec<Complex64> = (0..n).map(|k| seed.powu(k as u32 + 1) * radius).collect();

    let mut converged = false;
    for _ in 0..1000 {
        let mut max_step: f64 = 0.0;
        for k in 0..n {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..n {
                if j != k {
                    denom *= z[k] - z[j];
                }
            }
            if denom.norm() == 0.0 {
                // coincident iterates; nudge apart
                z[k] += Complex64::new(1e-8, 1e-8);
                max_step = f64::MAX;
                continue;
            }
            let delta = poly_eval(coeffs, z[k]) / denom;
            z[k] -= delta;
            max_step = max_step.max(delta.norm() / (1.0 + z[k].norm()));
        }
        if max_step < 1e-14 {
            converged = true;
            break;
        }
    }

    let residual = z
        .iter()
        .map(|&zi| poly_eval(coeffs, zi).norm())
        .fold(0.0, f64::max);
    // Multiple roots limit attainable residual; scale the bound by radius^n.
    let bound = 1e-6 * radius.powi(n as i32).max(1.0);
    if !converged && residual > bound {
        return Err(Error::RootsNotConverged {
            coeffs: coeffs.to_vec(),
            residual,
        });
    }
    Ok(z)
}

/// Enforce conjugate closure: snap near-real roots to the real axis and
/// average conjugate partners.
fn symmetrize_conjugates(roots: &mut [Complex64], tol: f64) {
    for z in roots.iter_mut() {
        if z.im.abs() <= tol {
            *z = Complex64::new(z.re, 0.0);
        }
    }
    let mut pos: Vec<usize> = (0..roots.len()).filter(|&i| roots[i].im > 0.0).collect();
    let neg: Vec<usize> = (0..roots.len()).filter(|&i| roots[i].im < 0.0).collect();
    let mut used = vec![false; neg.len()];
    pos.sort_by(|&a, &b| roots[a].re.partial_cmp(&roots[b].re).unwrap());
    for &i in &pos {
        let mut best: Option<(usize, f64)> = None;
        for (k, &j) in neg.iter().enumerate() {
            if used[k] {
                continue;
            }
            let d = (roots[i] - roots[j].conj()).norm();
            if best.map_or(true, |(_, bd)| d < bd) {
                best = Some((k, d));
            }
        }
        if let Some((k, _)) = best {
            let j = neg[k];
            used[k] = true;
            let avg = (roots[i] + roots[j].conj()) * 0.5;
            roots[i] = avg;
            roots[j] = avg.conj();
        }
    }
}

fn sort_key(a: &Complex64, b: &Complex64) -> std::cmp::Ordering {
    a.re.partial_cmp(&b.re)
        .unwrap()
        .then(a.im.partial_cmp(&b.im).unwrap())
}

/// Compute the roots of the characteristic polynomial of `theta`, cluster
/// coincident roots within `tol` into multiplicities and set `rho`.
pub fn char_roots(theta: &ParamVector, tol: f64) -> Result<RootSet> {
    if !(tol > 0.0 && tol <= 1e-3) {
        return Err(Error::InvalidParam(format!("tol {tol} outside (0, 1e-3]")));
    }
    let coeffs = theta.char_poly();
    let mut raw = durand_kerner(&coeffs)?;
    symmetrize_conjugates(&mut raw, tol);
    raw.sort_by(sort_key);

    // Cluster by pairwise distance <= tol.
    let mut assigned = vec![false; raw.len()];
    let mut clusters: Vec<(Complex64, usize)> = Vec::new();
    for i in 0..raw.len() {
        if assigned[i] {
            continue;
        }
        let mut members = vec![raw[i]];
        assigned[i] = true;
        for j in (i + 1)..raw.len() {
            if !assigned[j] && (raw[j] - raw[i]).norm() <= tol {
                members.push(raw[j]);
                assigned[j] = true;
            }
        }
        let mean = members.iter().sum::<Complex64>() / members.len() as f64;
        clusters.push((mean, members.len()));
    }
    clusters.sort_by(|a, b| sort_key(&a.0, &b.0));

    let rho = clusters
        .iter()
        .filter(|(z, _)| (z.norm() - 1.0).abs() <= tol)
        .map(|(_, m)| *m)
        .max()
        .unwrap_or(0);

    Ok(RootSet {
        roots: clusters,
        tol,
        rho,
    })
}

/// Classify a root set against the stability region and the boundary
/// strata Gamma_1..Gamma_7.
pub fn classify_region(roots: &RootSet) -> RegionClass {
    let tol = roots.tol;
    if roots.roots.iter().all(|(z, _)| z.norm() < 1.0 - tol) {
        return RegionClass::Stable;
    }
    if roots.roots.iter().any(|(z, _)| z.norm() > 1.0 + tol) {
        return RegionClass::Explosive;
    }

    // All roots on the closed disk; inspect the unit-circle ones.
    let unit: Vec<&(Complex64, usize)> = roots
        .roots
        .iter()
        .filter(|(z, _)| (z.norm() - 1.0).abs() <= tol)
        .collect();
    if unit.iter().any(|(_, m)| *m > 1) {
        return RegionClass::BoundaryOther;
    }

    let mut neg = 0usize;
    let mut pos = 0usize;
    let mut pairs: Vec<f64> = Vec::new();
    for (z, _) in &unit {
        if z.im == 0.0 {
            if (z.re + 1.0).abs() <= tol {
                neg += 1;
            } else if (z.re - 1.0).abs() <= tol {
                pos += 1;
            } else {
                return RegionClass::BoundaryOther;
            }
        } else if z.im > 0.0 {
            pairs.push(z.arg());
        }
    }

    let phi = pairs.first().copied();
    match (neg, pos, pairs.len()) {
        (1, 0, 0) => RegionClass::BoundaryGamma { index: 1, phi: None },
        (0, 1, 0) => RegionClass::BoundaryGamma { index: 2, phi: None },
        (0, 0, 1) => RegionClass::BoundaryGamma { index: 3, phi },
        (1, 1, 0) => RegionClass::BoundaryGamma { index: 4, phi: None },
        (1, 0, 1) => RegionClass::BoundaryGamma { index: 5, phi },
        (0, 1, 1) => RegionClass::BoundaryGamma { index: 6, phi },
        (1, 1, 1) => RegionClass::BoundaryGamma { index: 7, phi },
        _ => RegionClass::BoundaryOther,
    }
}

/// Factor the unit roots out of the characteristic polynomial. Supports at
/// most one root at -1, one at +1 and one conjugate unit pair (Condition 2
/// region); everything else is an `UnsupportedBoundary` error.
pub fn factor_unit_roots(theta: &ParamVector, tol: f64) -> Result<UnitFactorization> {
    let roots = char_roots(theta, tol)?;
    let region = classify_region(&roots);
    match region {
        RegionClass::Explosive => {
            return Err(Error::UnsupportedBoundary(
                "explosive parameter vector".into(),
            ))
        }
        RegionClass::BoundaryOther => {
            return Err(Error::UnsupportedBoundary(
                "repeated unit roots or multiple distinct unit pairs".into(),
            ))
        }
        RegionClass::Stable => {
            return Ok(UnitFactorization {
                delta1: 0,
                delta2: 0,
                delta3: 0,
                phi: None,
                stable_coeffs: theta.coeffs().iter().map(|t| -t).collect(),
            })
        }
        RegionClass::BoundaryGamma { .. } => {}
    }

    let (index, phi) = match region {
        RegionClass::BoundaryGamma { index, phi } => (index, phi),
        _ => unreachable!(),
    };
    let (delta1, delta2, delta3) = match index {
        1 => (1, 0, 0),
        2 => (0, 1, 0),
        3 => (0, 0, 1),
        4 => (1, 1, 0),
        5 => (1, 0, 1),
        6 => (0, 1, 1),
        7 => (1, 1, 1),
        _ => unreachable!(),
    };

    let mut poly = theta.char_poly();
    if delta1 == 1 {
        let (q, _rem) = poly_div_linear(&poly, -1.0);
        poly = q;
    }
    if delta2 == 1 {
        let (q, _rem) = poly_div_linear(&poly, 1.0);
        poly = q;
    }
    if delta3 == 1 {
        let phi = phi.expect("pair stratum carries phi");
        let (q, _rem) = poly_div_quadratic(&poly, -2.0 * phi.cos(), 1.0);
        poly = q;
    }

    Ok(UnitFactorization {
        delta1,
        delta2,
        delta3,
        phi,
        stable_coeffs: poly[1..].to_vec(),
    })
}

/// Build theta from a conjugate-closed set of roots by expanding the monic
/// polynomial and negating the lower coefficients.
pub fn theta_from_roots(roots: &[Complex64]) -> Result<ParamVector> {
    if roots.is_empty() {
        return Err(Error::InvalidParam("need at least one root".into()));
    }
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    for z in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); coeffs.len() + 1];
        for (i, c) in coeffs.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * z;
        }
        coeffs = next;
    }
    let max_im = coeffs.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
    if max_im > 1e-9 {
        return Err(Error::InvalidParam(format!(
            "roots are not conjugate-closed (imag residue {max_im:e})"
        )));
    }
    ParamVector::new(coeffs[1..].iter().map(|c| -c.re).collect())
}
