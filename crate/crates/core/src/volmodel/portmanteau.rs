//! Peña-Rodríguez log-determinant portmanteau test with Monte Carlo p-values.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::stats::mix_seed;

/// Which transform of the series is tested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Transform {
    Level,
    Squared,
}

impl Transform {
    fn apply(self, x: &[f64]) -> Vec<f64> {
        match self {
            Transform::Level => x.to_vec(),
            Transform::Squared => x.iter().map(|v| v * v).collect(),
        }
    }

    fn key(self) -> u64 {
        match self {
            Transform::Level => 1,
            Transform::Squared => 2,
        }
    }
}

/// Sample autocorrelations at lags `1..=m` (demeaned, divisor n).
pub fn autocorrelations(x: &[f64], m: usize) -> Result<Vec<f64>> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let d: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let c0: f64 = d.iter().map(|v| v * v).sum();
    if !(c0 > 0.0 && c0.is_finite()) {
        return Err(Error::DegenerateVariance("autocorrelations of a constant series".into()));
    }
    Ok((1..=m).map(|k| d[k..].iter().zip(&d[..n - k]).map(|(a, b)| a * b).sum::<f64>() / c0).collect())
}

/// `-n/(m+1) · ln det R_m`, where `R_m` is the `(m+1)×(m+1)` Toeplitz autocorrelation matrix.
pub fn pr_statistic(x: &[f64], m: usize) -> Result<f64> {
    if m == 0 || x.len() <= m {
        return Err(Error::InvalidArgument(format!("need 1 <= m < n, got m = {m}, n = {}", x.len())));
    }
    let rho = autocorrelations(x, m)?;
    let r = DMatrix::from_fn(m + 1, m + 1, |i, j| if i == j { 1.0 } else { rho[i.abs_diff(j) - 1] });
    let chol = r
        .cholesky()
        .ok_or_else(|| Error::Singular("autocorrelation matrix is not positive definite".into()))?;
    let ln_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    if !ln_det.is_finite() {
        return Err(Error::Singular("autocorrelation matrix is singular".into()));
    }
    Ok(-(x.len() as f64) / (m as f64 + 1.0) * ln_det)
}

/// Statistics of `reps` iid Gaussian series of length `n`, transformed like the data.
pub fn null_statistics(n: usize, m: usize, reps: usize, transform: Transform, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(reps);
    let mut buf = vec![0.0; n];
    while out.len() < reps {
        for v in buf.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        if let Ok(s) = pr_statistic(&transform.apply(&buf), m) {
            out.push(s);
        }
    }
    out
}

fn p_from_null(observed: f64, null: &[f64]) -> f64 {
    null.iter().filter(|&&s| s >= observed).count() as f64 / null.len() as f64
}

/// Monte Carlo p-value of the level series.
pub fn pena_rodriguez_pvalue(series: &[f64], m: usize, reps: usize, seed: u64) -> Result<f64> {
    pvalue_with(series, m, reps, Transform::Level, seed)
}

pub fn pvalue_with(series: &[f64], m: usize, reps: usize, transform: Transform, seed: u64) -> Result<f64> {
    if reps < 100 {
        return Err(Error::InvalidArgument(format!("at least 100 Monte Carlo replications required, got {reps}")));
    }
    let observed = pr_statistic(&transform.apply(series), m)?;
    Ok(p_from_null(observed, &null_statistics(series.len(), m, reps, transform, seed)))
}

/// Null tables shared across fits; keyed by length, lag, replication count and transform,
/// each generated from its own seed so contents do not depend on request order.
#[derive(Debug, Clone)]
pub struct PrNullCache {
    base_seed: u64,
    tables: Arc<Mutex<HashMap<(usize, usize, usize, Transform), Arc<Vec<f64>>>>>,
}

impl PrNullCache {
    pub fn new(base_seed: u64) -> Self {
        Self {
            base_seed,
            tables: Arc::default(),
        }
    }

    pub fn pvalue(&self, series: &[f64], m: usize, reps: usize, transform: Transform) -> Result<f64> {
        if reps < 100 {
            return Err(Error::InvalidArgument(format!("at least 100 Monte Carlo replications required, got {reps}")));
        }
        let observed = pr_statistic(&transform.apply(series), m)?;
        let key = (series.len(), m, reps, transform);
        let cached = self.tables.lock().expect("cache lock").get(&key).cloned();
        let table = match cached {
            Some(t) => t,
            None => {
                let seed = mix_seed(mix_seed(mix_seed(self.base_seed, key.0 as u64), (m as u64) << 32 | reps as u64), transform.key());
                let t = Arc::new(null_statistics(key.0, m, reps, transform, seed));
                self.tables.lock().expect("cache lock").entry(key).or_insert(t).clone()
            }
        };
        Ok(p_from_null(observed, &table))
    }
}
