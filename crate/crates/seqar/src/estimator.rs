//! Observed-Fisher recursion, least squares estimate with the paper's
//! singular-matrix convention, the stopping rule tau(h) and the normalized
//! residual whose law tends to the standard p-variate normal.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::polyroots::ParamVector;
use crate::process::ProcessStream;

/// Reciprocal-condition floor below which M counts as singular and the LSE
/// falls back to the zero vector.
pub const SINGULAR_RCOND: f64 = 1e-12;
/// Default cap on consumed observations for the stopping rule.
pub const DEFAULT_MAX_N: usize = 100_000_000;

/// Anything that can feed observations to the stopping rule. `None` means
/// the source is exhausted (e.g. a finite CSV file).
pub trait ObservationSource {
    fn next_obs(&mut self) -> Result<Option<f64>>;
}

impl ObservationSource for ProcessStream {
    fn next_obs(&mut self) -> Result<Option<f64>> {
        self.next_value().map(Some)
    }
}

/// Finite source over a slice of observations.
pub struct SliceSource<'a> {
    data: &'a [f64],
    pos: usize,
}

impl<'a> SliceSource<'a> {
    pub fn new(data: &'a [f64]) -> Self {
        Self { data, pos: 0 }
    }
}

impl ObservationSource for SliceSource<'_> {
    fn next_obs(&mut self) -> Result<Option<f64>> {
        if self.pos >= self.data.len() {
            return Ok(None);
        }
        let x = self.data[self.pos];
        self.pos += 1;
        Ok(Some(x))
    }
}

/// Streaming state of the observed Fisher information:
/// `M = sum X_{k-1} X_{k-1}'`, `S = sum X_{k-1} x_k`, with the trace kept
/// incrementally.
#[derive(Debug, Clone)]
pub struct FisherState {
    n: usize,
    m: DMatrix<f64>,
    s: DVector<f64>,
    trace: f64,
    /// last p observations, most recent first (zero presample initially)
    lagwin: Vec<f64>,
}

impl FisherState {
    pub fn new(p: usize) -> Self {
        Self {
            n: 0,
            m: DMatrix::zeros(p, p),
            s: DVector::zeros(p),
            trace: 0.0,
            lagwin: vec![0.0; p],
        }
    }

    pub fn p(&self) -> usize {
        self.lagwin.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn s(&self) -> &DVector<f64> {
        &self.s
    }

    pub fn trace(&self) -> f64 {
        self.trace
    }

    /// Fold in the next observation. The lag window *before* the update is
    /// the regressor X_{n} for x_new = x_{n+1}.
    pub fn update(&mut self, x_new: f64) -> Result<()> {
        if !x_new.is_finite() {
            return Err(Error::NonFinite(format!("observation {x_new}")));
        }
        let p = self.p();
        for i in 0..p {
            let xi = self.lagwin[i];
            self.s[i] += xi * x_new;
            for j in 0..p {
                self.m[(i, j)] += xi * self.lagwin[j];
            }
            self.trace += xi * xi;
        }
        self.lagwin.rotate_right(1);
        self.lagwin[0] = x_new;
        self.n += 1;
        Ok(())
    }
}

/// LSE `M^{-1} S`, or the zero vector when M is singular (the paper's
/// `M_n^{-1} = 0 otherwise` convention, with an rcond guard in place of a
/// determinant test).
pub fn lse(state: &FisherState) -> DVector<f64> {
    let eig = state.m.clone().symmetric_eigen();
    let max_eig = eig.eigenvalues.amax();
    if max_eig <= 0.0 {
        return DVector::zeros(state.p());
    }
    let min_abs = eig.eigenvalues.iter().map(|e| e.abs()).fold(f64::MAX, f64::min);
    if min_abs / max_eig < SINGULAR_RCOND {
        return DVector::zeros(state.p());
    }
    let proj = eig.eigenvectors.transpose() * &state.s;
    let scaled = DVector::from_fn(state.p(), |i, _| proj[i] / eig.eigenvalues[i]);
    &eig.eigenvectors * scaled
}

/// Outcome of the stopping rule tau(h) = inf{n >= 1: tr M_n >= h sigma^2}.
#[derive(Debug, Clone, Serialize)]
pub struct SequentialResult {
    pub tau: usize,
    pub theta_hat: Vec<f64>,
    #[serde(serialize_with = "crate::report::serialize_matrix")]
    pub m_tau: DMatrix<f64>,
    pub trace: f64,
    /// `tr M_tau - h sigma^2`; nonnegative iff stopped.
    pub overshoot: f64,
    pub stopped: bool,
}

/// Consume observations until the Fisher trace first reaches `h * sigma2`.
/// Exhaustion or hitting `max_n` yields a `stopped = false` result, not an
/// error.
pub fn sequential_estimate(
    source: &mut dyn ObservationSource,
    p: usize,
    h: f64,
    sigma2: f64,
    max_n: usize,
) -> Result<SequentialResult> {
    if !(h > 0.0) {
        return Err(Error::InvalidParam(format!("h {h} must be > 0")));
    }
    let threshold = h * sigma2;
    let mut state = FisherState::new(p);
    let mut stopped = false;
    while state.n() < max_n {
        match source.next_obs()? {
            Some(x) => state.update(x)?,
            None => break,
        }
        if state.trace() >= threshold {
            stopped = true;
            break;
        }
    }
    let theta_hat = lse(&state);
    Ok(SequentialResult {
        tau: state.n(),
        theta_hat: theta_hat.iter().copied().collect(),
        trace: state.trace(),
        overshoot: state.trace() - threshold,
        m_tau: state.m().clone(),
        stopped,
    })
}

/// Symmetric PSD square root via eigendecomposition; eigenvalues in
/// `[-1e-12, 0)` are clipped to zero.
pub fn sym_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let asym = (m - m.transpose()).norm();
    if asym > 1e-10 * (1.0 + m.norm()) {
        return Err(Error::NotPsd(format!("asymmetry {asym:e}")));
    }
    let eig = m.clone().symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(1.0);
    let mut sq = eig.eigenvalues.clone();
    for e in sq.iter_mut() {
        if *e < -1e-12 * scale {
            return Err(Error::NotPsd(format!("negative eigenvalue {e:e}")));
        }
        *e = e.max(0.0).sqrt();
    }
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&sq) * v.transpose())
}

/// `M_tau^{1/2} (theta_hat - theta) / sigma`, the Theorem 2.1 statistic.
pub fn normalized_residual(
    res: &SequentialResult,
    theta_true: &ParamVector,
    sigma: f64,
) -> Result<DVector<f64>> {
    if !res.stopped {
        return Err(Error::NotStopped);
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidParam(format!("sigma {sigma} must be > 0")));
    }
    let root = sym_sqrt(&res.m_tau)?;
    let diff = DVector::from_iterator(
        theta_true.p(),
        res.theta_hat
            .iter()
            .zip(theta_true.coeffs())
            .map(|(hat, t)| hat - t),
    );
    Ok(root * diff / sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{simulate, NoiseLaw, NoiseSpec};
    use approx::assert_abs_diff_eq;

    fn theta(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn update_p1_hand_values() {
        let mut st = FisherState::new(1);
        st.update(1.0).unwrap(); // X_0 = (0)
        assert_eq!(st.m()[(0, 0)], 0.0);
        assert_eq!(st.s()[0], 0.0);
        st.update(2.0).unwrap(); // X_1 = (1)
        assert_eq!(st.m()[(0, 0)], 1.0);
        assert_eq!(st.s()[0], 2.0);
    }

    #[test]
    fn update_p2_hand_values() {
        let mut st = FisherState::new(2);
        st.update(1.0).unwrap();
        st.update(1.0).unwrap();
        assert_eq!(st.m(), &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn lse_singular_is_zero() {
        let mut st = FisherState::new(1);
        st.update(1.0).unwrap(); // M = [0]
        assert_eq!(lse(&st), DVector::from_element(1, 0.0));
    }

    #[test]
    fn lse_p1_ratio() {
        let mut st = FisherState::new(1);
        st.update(1.0).unwrap();
        st.update(2.0).unwrap();
        assert_abs_diff_eq!(lse(&st)[0], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn noiseless_impulse_identifies_theta() {
        let spec = NoiseSpec::new(NoiseLaw::Table(vec![1.0, 0.0, 0.0, 0.0, 0.0]), 1.0).unwrap();
        let s = simulate(&theta(&[0.5]), spec, 5, 0).unwrap();
        let mut st = FisherState::new(1);
        for &x in s.observed() {
            st.update(x).unwrap();
        }
        assert_abs_diff_eq!(lse(&st)[0], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn streaming_matches_batch_sums() {
        let th = theta(&[0.4, -0.3, 0.1]);
        let spec = NoiseSpec::new(NoiseLaw::Gaussian, 1.0).unwrap();
        let s = simulate(&th, spec, 300, 5).unwrap();
        let p = 3i64;
        let mut st = FisherState::new(3);
        for &x in s.observed() {
            st.update(x).unwrap();
        }
        for i in 0..p {
            let mut want_s = 0.0;
            for k in 1..=s.n() as i64 {
                want_s += s.at(k - 1 - i) * s.at(k);
            }
            assert!((st.s()[i as usize] - want_s).abs() <= 1e-10 * want_s.abs().max(1.0));
            for j in 0..p {
                let mut want = 0.0;
                for k in 1..=s.n() as i64 {
                    want += s.at(k - 1 - i) * s.at(k - 1 - j);
                }
                let got = st.m()[(i as usize, j as usize)];
                assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0));
            }
        }
        assert_abs_diff_eq!(st.trace(), st.m().trace(), epsilon = 1e-9);
    }

    #[test]
    fn stopping_rule_first_crossing() {
        let ones = vec![1.0; 100];
        let mut src = SliceSource::new(&ones);
        let res = sequential_estimate(&mut src, 1, 2.0, 1.0, 1000).unwrap();
        assert!(res.stopped);
        assert_eq!(res.tau, 3); // traces 0, 1, 2
        assert_eq!(res.overshoot, 0.0);
    }

    #[test]
    fn stopping_rule_big_first_value() {
        let data = vec![5.0, 0.0, 0.0];
        let mut src = SliceSource::new(&data);
        let res = sequential_estimate(&mut src, 1, 20.0, 1.0, 1000).unwrap();
        assert!(res.stopped);
        assert_eq!(res.tau, 2); // tr M_2 = 25 >= 20
    }

    #[test]
    fn exhaustion_is_not_an_error() {
        let data = vec![0.1, 0.1, 0.1];
        let mut src = SliceSource::new(&data);
        let res = sequential_estimate(&mut src, 1, 1e6, 1.0, 1000).unwrap();
        assert!(!res.stopped);
        assert_eq!(res.tau, 3);
        assert!(res.overshoot < 0.0);
    }

    #[test]
    fn exhaustive_first_crossing_on_tables() {
        // for several deterministic tables, check stopping never happens below
        // the threshold and always at the first crossing
        let tables: [&[f64]; 3] = [&[1.0, 2.0, 0.5, 3.0], &[0.2; 10], &[2.0, 0.0, 1.0]];
        for table in tables {
            let data: Vec<f64> = table.iter().cycle().take(60).copied().collect();
            for h in [0.5, 1.0, 3.0, 10.0] {
                let mut src = SliceSource::new(&data);
                let res = sequential_estimate(&mut src, 2, h, 1.0, 1000).unwrap();
                if res.stopped {
                    let mut st = FisherState::new(2);
                    for &x in &data[..res.tau] {
                        st.update(x).unwrap();
                    }
                    assert!(st.trace() >= h);
                    let mut prev = FisherState::new(2);
                    for &x in &data[..res.tau - 1] {
                        prev.update(x).unwrap();
                    }
                    assert!(prev.trace() < h);
                }
            }
        }
    }

    #[test]
    fn sym_sqrt_diagonal() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 9.0]);
        let r = sym_sqrt(&m).unwrap();
        assert_abs_diff_eq!(r[(0, 0)], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r[(1, 1)], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn sym_sqrt_random_psd() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let b = DMatrix::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0));
            let m = &b * b.transpose();
            let r = sym_sqrt(&m).unwrap();
            assert!((&r * &r - &m).norm() / m.norm() <= 1e-10);
        }
    }

    #[test]
    fn sym_sqrt_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(sym_sqrt(&m).is_err());
    }

    #[test]
    fn residual_hand_value() {
        let res = SequentialResult {
            tau: 10,
            theta_hat: vec![1.0],
            m_tau: DMatrix::from_row_slice(1, 1, &[4.0]),
            trace: 4.0,
            overshoot: 0.0,
            stopped: true,
        };
        let r = normalized_residual(&res, &theta(&[0.5]), 2.0).unwrap();
        assert_abs_diff_eq!(r[0], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn residual_requires_stopped() {
        let res = SequentialResult {
            tau: 10,
            theta_hat: vec![1.0],
            m_tau: DMatrix::from_row_slice(1, 1, &[4.0]),
            trace: 4.0,
            overshoot: -1.0,
            stopped: false,
        };
        assert!(matches!(
            normalized_residual(&res, &theta(&[0.5]), 1.0),
            Err(Error::NotStopped)
        ));
    }
}
