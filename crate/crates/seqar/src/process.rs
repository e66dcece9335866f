//! AR(p) simulation with pluggable zero-mean noise laws and deterministic
//! seeding. The RNG is ChaCha8 seeded via `seed_from_u64`; per-replication
//! substreams are derived as `seed ^ replication_index`, so all reported
//! numbers are reproducible bit-for-bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::polyroots::ParamVector;

/// Noise law; every stochastic law has mean 0 and variance exactly `sigma2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", content = "table")]
pub enum NoiseLaw {
    Gaussian,
    Rademacher,
    Uniform,
    /// Cyclic table of raw values; exists to make deterministic
    /// hand-checkable tests possible. Values are used as-is.
    Table(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub law: NoiseLaw,
    pub sigma2: f64,
}

impl NoiseSpec {
    pub fn new(law: NoiseLaw, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidParam(format!("sigma2 {sigma2} must be > 0")));
        }
        if let NoiseLaw::Table(t) = &law {
            if t.is_empty() {
                return Err(Error::InvalidParam("noise table must be non-empty".into()));
            }
        }
        Ok(Self { law, sigma2 })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }
}

/// Draws noise values; deterministic per seed.
pub struct NoiseSource {
    spec: NoiseSpec,
    rng: ChaCha8Rng,
    table_pos: usize,
}

impl NoiseSource {
    pub fn new(spec: NoiseSpec, seed: u64) -> Self {
        Self {
            spec,
            rng: ChaCha8Rng::seed_from_u64(seed),
            table_pos: 0,
        }
    }

    pub fn draw(&mut self) -> f64 {
        let sigma = self.spec.sigma();
        match &self.spec.law {
            NoiseLaw::Gaussian => {
                let z: f64 = self.rng.sample(StandardNormal);
                sigma * z
            }
            NoiseLaw::Rademacher => {
                if self.rng.gen::<bool>() {
                    sigma
                } else {
                    -sigma
                }
            }
            NoiseLaw::Uniform => {
                let half = sigma * 3f64.sqrt();
                self.rng.gen_range(-half..half)
            }
            NoiseLaw::Table(t) => {
                let v = t[self.table_pos % t.len()];
                self.table_pos += 1;
                v
            }
        }
    }
}

/// Simulated series. The p presample values `x_0 = ... = x_{1-p} = 0` are
/// stored up front; `observed()` is `x_1..x_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesBuffer {
    p: usize,
    values: Vec<f64>,
}

impl SeriesBuffer {
    pub fn from_observations(p: usize, obs: &[f64]) -> Self {
        let mut values = vec![0.0; p];
        values.extend_from_slice(obs);
        Self { p, values }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.values.len() - self.p
    }

    /// `x_1..x_n`.
    pub fn observed(&self) -> &[f64] {
        &self.values[self.p..]
    }

    /// `x_k` for `k` in `1-p ..= n`.
    pub fn at(&self, k: i64) -> f64 {
        let idx = k + self.p as i64 - 1;
        self.values[idx as usize]
    }
}

/// Streaming AR(p) generator; emits x_1, x_2, ... one at a time.
pub struct ProcessStream {
    theta: Vec<f64>,
    noise: NoiseSource,
    /// last p observations, most recent first
    lag: Vec<f64>,
    index: usize,
}

impl ProcessStream {
    pub fn new(theta: &ParamVector, noise: NoiseSpec, seed: u64) -> Self {
        Self {
            theta: theta.coeffs().to_vec(),
            noise: NoiseSource::new(noise, seed),
            lag: vec![0.0; theta.p()],
            index: 0,
        }
    }

    /// Next observation; `OverflowDetected` if the recursion leaves f64 range.
    pub fn next_value(&mut self) -> Result<f64> {
        let mut x: f64 = self
            .theta
            .iter()
            .zip(self.lag.iter())
            .map(|(t, l)| t * l)
            .sum();
        x += self.noise.draw();
        self.index += 1;
        if !x.is_finite() {
            return Err(Error::OverflowDetected { index: self.index });
        }
        self.lag.rotate_right(1);
        self.lag[0] = x;
        Ok(x)
    }
}

/// Batch simulation of n observations; identical (seed, parameters) give
/// bit-identical output.
pub fn simulate(theta: &ParamVector, noise: NoiseSpec, n: usize, seed: u64) -> Result<SeriesBuffer> {
    if n == 0 {
        return Err(Error::InvalidParam("n must be >= 1".into()));
    }
    let mut stream = ProcessStream::new(theta, noise, seed);
    let mut obs = Vec::with_capacity(n);
    for _ in 0..n {
        obs.push(stream.next_value()?);
    }
    Ok(SeriesBuffer::from_observations(theta.p(), &obs))
}

/// Write observations as CSV with header `k,x`; presample omitted.
pub fn write_csv<W: Write>(mut w: W, series: &SeriesBuffer) -> Result<W> {
    let ctx = "writing csv".to_string();
    let io = |e| Error::Io { context: ctx.clone(), source: e };
    writeln!(w, "k,x").map_err(io)?;
    for (i, x) in series.observed().iter().enumerate() {
        writeln!(w, "{},{}", i + 1, x).map_err(|e| Error::Io {
            context: ctx.clone(),
            source: e,
        })?;
    }
    Ok(w)
}

/// Read a `k,x` CSV back into observations (in k order as written).
pub fn read_csv<R: BufRead>(r: R) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::Io {
            context: format!("reading csv line {}", lineno + 1),
            source: e,
        })?;
        let line = line.trim();
        if lineno == 0 {
            if line != "k,x" {
                return Err(Error::CsvParse {
                    line: 1,
                    msg: format!("expected header 'k,x', got '{line}'"),
                });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(2, ',');
        let (k, x) = (parts.next(), parts.next());
        let x = match (k, x) {
            (Some(_), Some(x)) => x.trim().parse::<f64>().map_err(|e| Error::CsvParse {
                line: lineno + 1,
                msg: format!("bad x value: {e}"),
            })?,
            _ => {
                return Err(Error::CsvParse {
                    line: lineno + 1,
                    msg: "expected 'k,x' row".into(),
                })
            }
        };
        out.push(x);
    }
    Ok(out)
}
