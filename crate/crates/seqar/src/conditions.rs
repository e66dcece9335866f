//! Conditions 1-3 on the parameter vector: the kappa linear system, the
//! Toeplitz matrix L(theta), and the stationary limit F with
//! Lambda = p F / tr F.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::polyroots::{
    char_roots, classify_region, companion_matrix, ParamVector, RegionClass,
};

/// Condition-number threshold above which the kappa system counts as singular.
pub const COND_THRESHOLD: f64 = 1e12;
/// Default positive-definiteness floor on the smallest eigenvalue of L.
pub const DEFAULT_PD_TOL: f64 = 1e-8;

/// Verdicts for Conditions 1-3 plus everything computed along the way.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub cond1: bool,
    pub cond2: bool,
    pub cond3: bool,
    /// Solution of the kappa system; `None` when the system is singular.
    pub kappa: Option<Vec<f64>>,
    #[serde(serialize_with = "crate::report::serialize_opt_matrix")]
    pub l_matrix: Option<DMatrix<f64>>,
    pub min_eig_l: Option<f64>,
    pub region: RegionClass,
}

impl ConditionReport {
    pub fn all_hold(&self) -> bool {
        self.cond1 && self.cond2 && self.cond3
    }
}

/// Stationary limit of M_n / n for stable theta.
#[derive(Debug, Clone)]
pub struct StationaryLimit {
    pub f: DMatrix<f64>,
    pub trace_f: f64,
    /// `p F / tr F`; unit diagonal by stationarity.
    pub lambda: DMatrix<f64>,
}

/// Coefficient matrix and right-hand side of the (p-1)-dimensional kappa
/// system: row 1 is `Y_1 - sum_{l=2}^p theta_l Y_{l-1} = theta_1`, row j is
/// `-sum_{k<j} theta_{j-k} Y_k + Y_j - sum_{k<=p-j} theta_{k+j} Y_k = theta_j`.
fn kappa_system(theta: &ParamVector) -> (DMatrix<f64>, DVector<f64>) {
    let p = theta.p();
    let n = p - 1;
    let th = theta.coeffs(); // th[i] = theta_{i+1}
    let mut a = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    for j in 1..=n {
        b[j - 1] = th[j - 1];
        for m in 1..=n {
            let mut c = 0.0;
            if m == j {
                c += 1.0;
            }
            if m < j {
                c -= th[j - m - 1]; // theta_{j-m}
            }
            if m + j <= p {
                c -= th[m + j - 1]; // theta_{m+j}
            }
            a[(j - 1, m - 1)] += c;
        }
    }
    (a, b)
}

/// Solve the kappa system. Returns the empty vector for p = 1.
pub fn solve_kappa(theta: &ParamVector) -> Result<Vec<f64>> {
    let p = theta.p();
    if p == 1 {
        return Ok(vec![]);
    }
    let (a, b) = kappa_system(theta);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if cond >= COND_THRESHOLD {
        return Err(Error::Unsolvable { cond });
    }
    let y = svd
        .solve(&b, 0.0)
        .map_err(|_| Error::Unsolvable { cond })?;
    Ok(y.iter().copied().collect())
}

/// Symmetric Toeplitz matrix with first row `(1, kappa_1, ..., kappa_{p-1})`.
pub fn build_l(theta: &ParamVector) -> Result<DMatrix<f64>> {
    let kappa = solve_kappa(theta)?;
    Ok(toeplitz_from_kappa(&kappa))
}

pub fn toeplitz_from_kappa(kappa: &[f64]) -> DMatrix<f64> {
    let p = kappa.len() + 1;
    DMatrix::from_fn(p, p, |i, j| {
        let d = i.abs_diff(j);
        if d == 0 {
            1.0
        } else {
            kappa[d - 1]
        }
    })
}

/// Check Conditions 1-3 at `theta`. Failures are encoded in the report,
/// never raised.
pub fn check_conditions(theta: &ParamVector, tol: f64, pd_tol: f64) -> Result<ConditionReport> {
    let roots = char_roots(theta, tol)?;
    let region = classify_region(&roots);
    let cond1 = roots
        .roots
        .iter()
        .all(|(z, _)| z.norm() <= 1.0 + tol);
    let cond2 = roots
        .roots
        .iter()
        .filter(|(z, _)| (z.norm() - 1.0).abs() <= tol)
        .all(|(_, m)| *m == 1);

    let (kappa, l_matrix, min_eig_l) = match solve_kappa(theta) {
        Ok(kappa) => {
            let l = toeplitz_from_kappa(&kappa);
            let eig = l.clone().symmetric_eigen();
            let min_eig = eig.eigenvalues.min();
            (Some(kappa), Some(l), Some(min_eig))
        }
        Err(_) => (None, None, None),
    };
    let cond3 = min_eig_l.map_or(false, |e| e > pd_tol);

    Ok(ConditionReport {
        cond1,
        cond2,
        cond3,
        kappa,
        l_matrix,
        min_eig_l,
        region,
    })
}

/// Solve the stationary covariance equation `F = A F A' + sigma2 e1 e1'`
/// as a p^2-dimensional linear system and form Lambda = p F / tr F.
pub fn stationary_limit(theta: &ParamVector, sigma2: f64) -> Result<StationaryLimit> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidParam(format!("sigma2 {sigma2} must be > 0")));
    }
    let roots = char_roots(theta, crate::polyroots::DEFAULT_UNIT_TOL)?;
    if classify_region(&roots) != RegionClass::Stable {
        return Err(Error::NotStable(format!(
            "stationary limit requires all roots inside the unit circle, got {}",
            classify_region(&roots)
        )));
    }
    let p = theta.p();
    let a = companion_matrix(theta);
    let kron = a.kronecker(&a);
    let lhs = DMatrix::identity(p * p, p * p) - kron;
    let mut rhs = DVector::zeros(p * p);
    rhs[0] = sigma2; // vec(sigma2 e1 e1') in column-major order
    let vec_f = lhs
        .lu()
        .solve(&rhs)
        .ok_or(Error::Unsolvable { cond: f64::INFINITY })?;
    let f = DMatrix::from_column_slice(p, p, vec_f.as_slice());
    // symmetrize away solver round-off
    let f = (&f + f.transpose()) * 0.5;
    let trace_f = f.trace();
    let lambda = &f * (p as f64 / trace_f);
    Ok(StationaryLimit { f, trace_f, lambda })
}
