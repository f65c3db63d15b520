//! Cross-correlations of standardized residuals and Hong's kernel-weighted Q statistic.
//!
//! For a candidate edge `source -> target` the statistic is built from
//! `ρ(k) = Σ_t target_t · source_{t-k} / (T · sqrt(C_tt(0) C_ss(0)))`, i.e. the target's
//! present against the source's past. Products are not demeaned and the divisor is `T`.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::alignment::HongFrame;
use crate::error::{Error, Result};
use crate::stats::normal_sf;

/// Triangular kernel with support `(-1, 1)`.
pub fn bartlett_weight(z: f64) -> f64 {
    if z.abs() < 1.0 {
        1.0 - z.abs()
    } else {
        0.0
    }
}

/// Cross-correlations at lags `0..=max_lag`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcfResult {
    pub rho: Vec<f64>,
    pub t: usize,
}

pub fn cross_correlations(target: &[f64], source: &[f64], max_lag: usize) -> Result<CcfResult> {
    let t = target.len();
    if source.len() != t {
        return Err(Error::InvalidArgument(format!("residual lengths differ: {} vs {}", t, source.len())));
    }
    if t <= max_lag {
        return Err(Error::InsufficientData(format!("T = {t} must exceed the maximal lag {max_lag}")));
    }
    let c_tt: f64 = target.iter().map(|v| v * v).sum::<f64>();
    let c_ss: f64 = source.iter().map(|v| v * v).sum::<f64>();
    if !(c_tt > 0.0 && c_ss > 0.0 && c_tt.is_finite() && c_ss.is_finite()) {
        return Err(Error::DegenerateVariance("zero-variance residual vector".into()));
    }
    let scale = (c_tt * c_ss).sqrt();
    let rho = (0..=max_lag)
        .map(|k| target[k..].iter().zip(&source[..t - k]).map(|(a, b)| a * b).sum::<f64>() / scale)
        .collect();
    Ok(CcfResult { rho, t })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Lags `k >= 1` only.
    Lagged,
    /// Lag 0 added to the leading sum, for markets closing at the same instant.
    Instantaneous,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Lagged => "lagged",
            Variant::Instantaneous => "instantaneous",
        })
    }
}

/// Centering and scale of Q over lags `1..=max_k`; `max_k` beyond `M - 1` only adds zeros.
fn hong_moments(t: usize, m: usize, max_k: usize) -> (f64, f64) {
    let tf = t as f64;
    let mut centre = 0.0;
    let mut var = 0.0;
    for k in 1..=max_k {
        let w = bartlett_weight(k as f64 / m as f64);
        let kf = k as f64;
        centre += (1.0 - kf / tf) * w * w;
        var += (1.0 - kf / tf) * (1.0 - (kf + 1.0) / tf) * w.powi(4);
    }
    (centre, (2.0 * var).sqrt())
}

/// Hong's Q with bandwidth `m` from correlations at lags `0..=M-1` (or more).
pub fn hong_q(ccf: &CcfResult, m: usize, variant: Variant) -> Result<f64> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!("bandwidth M = {m} must be at least 2")));
    }
    if ccf.t <= m {
        return Err(Error::InsufficientData(format!("T = {} must exceed M = {m}", ccf.t)));
    }
    if ccf.rho.len() < m {
        return Err(Error::InvalidArgument(format!("need correlations up to lag {}, got {}", m - 1, ccf.rho.len().saturating_sub(1))));
    }
    let tf = ccf.t as f64;
    let mut lead: f64 = (1..m).map(|k| bartlett_weight(k as f64 / m as f64).powi(2) * ccf.rho[k].powi(2)).sum();
    if variant == Variant::Instantaneous {
        lead += ccf.rho[0].powi(2);
    }
    let (centre, scale) = hong_moments(ccf.t, m, m - 1);
    Ok((tf * lead - centre) / scale)
}

/// Reference evaluation summing every lag up to `T - 1`, kernel zeros included.
pub fn hong_q_full_sum(target: &[f64], source: &[f64], m: usize, variant: Variant) -> Result<f64> {
    let ccf = cross_correlations(target, source, target.len() - 1)?;
    let tf = ccf.t as f64;
    let mut lead = 0.0;
    for k in 1..ccf.t {
        lead += bartlett_weight(k as f64 / m as f64).powi(2) * ccf.rho[k].powi(2);
    }
    if variant == Variant::Instantaneous {
        lead += ccf.rho[0].powi(2);
    }
    let (centre, scale) = hong_moments(ccf.t, m, ccf.t - 1);
    Ok((tf * lead - centre) / scale)
}

/// Family level `alpha / (N (N - 1))` for all ordered pairs of `n_markets`.
pub fn bonferroni_level(alpha: f64, n_markets: usize) -> f64 {
    let pairs = n_markets * n_markets.saturating_sub(1);
    alpha / pairs.max(1) as f64
}

/// One-sided upper-tail p-value and the rejection at `level`.
pub fn decide(q: f64, level: f64) -> Result<(f64, bool)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("significance level {level} outside (0, 1)")));
    }
    let p = normal_sf(q);
    Ok((p, p < level))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalityDecision {
    pub source: String,
    pub target: String,
    pub variant: Variant,
    pub q: f64,
    pub p_value: f64,
    pub reject: bool,
    pub level_used: f64,
}

/// Test `source -> target` on an aligned frame.
pub fn test_pair(frame: &HongFrame, source: &str, target: &str, m: usize, variant: Variant, level: f64) -> Result<CausalityDecision> {
    let ccf = cross_correlations(&frame.target, &frame.source, m - 1)?;
    let q = hong_q(&ccf, m, variant)?;
    let (p_value, reject) = decide(q, level)?;
    Ok(CausalityDecision {
        source: source.to_string(),
        target: target.to_string(),
        variant,
        q,
        p_value,
        reject,
        level_used: level,
    })
}

/// `source,target,variant,Q,p,reject`
pub fn write_tests_csv<W: Write>(writer: W, decisions: &[CausalityDecision]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["source", "target", "variant", "Q", "p", "reject"])?;
    for d in decisions {
        wtr.write_record([
            d.source.clone(),
            d.target.clone(),
            d.variant.to_string(),
            d.q.to_string(),
            d.p_value.to_string(),
            d.reject.to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<tests csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn bartlett_values() {
        assert_eq!(bartlett_weight(0.0), 1.0);
        assert!((bartlett_weight(0.4) - 0.6).abs() < 1e-15);
        assert_eq!(bartlett_weight(1.0), 0.0);
        assert_eq!(bartlett_weight(-1.5), 0.0);
    }

    #[test]
    fn self_correlation_is_one() {
        let x = gaussian(50, 1);
        assert!((cross_correlations(&x, &x, 3).unwrap().rho[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn shifted_alternating_sequence() {
        let t = 40;
        let s_j: Vec<f64> = (0..t).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let s_i: Vec<f64> = (0..t).map(|k| if k == 0 { 1.0 } else { s_j[k - 1] }).collect();
        let c = cross_correlations(&s_i, &s_j, 2).unwrap();
        assert!((c.rho[1] - (t as f64 - 1.0) / t as f64).abs() < 1e-14);
    }

    #[test]
    fn independent_series_have_small_correlations() {
        let t = 500;
        let bound = 3.0 / (t as f64).sqrt();
        let ok = (0..200)
            .filter(|&s| cross_correlations(&gaussian(t, 2 * s), &gaussian(t, 2 * s + 1), 4).unwrap().rho.iter().all(|r| r.abs() < bound))
            .count();
        assert!(ok >= 198, "{ok}");
    }

    #[test]
    fn zero_correlation_plug_in() {
        let (t, m) = (100, 5);
        let ccf = CcfResult { rho: vec![0.0; m], t };
        let tf = t as f64;
        let mut c = 0.0;
        let mut v = 0.0;
        for k in 1..m {
            let w = 1.0 - k as f64 / m as f64;
            c += (1.0 - k as f64 / tf) * w * w;
            v += (1.0 - k as f64 / tf) * (1.0 - (k as f64 + 1.0) / tf) * w.powi(4);
        }
        let q = hong_q(&ccf, m, Variant::Lagged).unwrap();
        assert!((q + c / (2.0 * v).sqrt()).abs() < 1e-14);
        assert!(q < 0.0);
    }

    #[test]
    fn bonferroni_for_twenty_markets() {
        let l = bonferroni_level(0.01, 20);
        assert!((l - 0.01 / 380.0).abs() < 1e-20);
        assert!((l - 2.6316e-5).abs() < 1e-9);
    }

    #[test]
    fn decisions_at_reference_points() {
        let (p, r) = decide(0.0, 0.4).unwrap();
        assert_eq!(p, 0.5);
        assert!(!r);
        let (p, r) = decide(4.5, bonferroni_level(0.01, 20)).unwrap();
        // upper tail at 4.5 from a 30-digit evaluation
        assert!((p / 3.397_673_124_730_062e-6 - 1.0).abs() < 1e-8, "{p:e}");
        assert!(r);
        assert!(decide(1.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn truncated_equals_full_sum(seed in 0u64..10_000, t in 20usize..120, m in 2usize..8, inst in any::<bool>()) {
            let a = gaussian(t, seed);
            let b = gaussian(t, seed + 77_777);
            let v = if inst { Variant::Instantaneous } else { Variant::Lagged };
            let q = hong_q(&cross_correlations(&a, &b, m - 1).unwrap(), m, v).unwrap();
            let full = hong_q_full_sum(&a, &b, m, v).unwrap();
            prop_assert_eq!(q, full);
        }

        #[test]
        fn scale_invariance(seed in 0u64..10_000, ca in 0.01f64..100.0, cb in 0.01f64..100.0) {
            let a = gaussian(80, seed);
            let b = gaussian(80, seed + 1);
            let sa: Vec<f64> = a.iter().map(|v| v * ca).collect();
            let sb: Vec<f64> = b.iter().map(|v| v * cb).collect();
            let q1 = hong_q(&cross_correlations(&a, &b, 4).unwrap(), 5, Variant::Lagged).unwrap();
            let q2 = hong_q(&cross_correlations(&sa, &sb, 4).unwrap(), 5, Variant::Lagged).unwrap();
            prop_assert!((q1 - q2).abs() <= 1e-10 * q1.abs().max(1.0));
        }

        #[test]
        fn monotone_in_each_correlation(rho in proptest::collection::vec(-0.5f64..0.5, 5), k in 1usize..5, bump in 1e-3f64..0.3) {
            let base = CcfResult { rho: rho.clone(), t: 200 };
            let mut up = rho.clone();
            up[k] = up[k].signum() * (up[k].abs() + bump);
            if up[k] == 0.0 { up[k] = bump; }
            let q0 = hong_q(&base, 5, Variant::Lagged).unwrap();
            let q1 = hong_q(&CcfResult { rho: up, t: 200 }, 5, Variant::Lagged).unwrap();
            prop_assert!(q1 > q0);
        }

        #[test]
        fn instantaneous_adds_lag_zero(seed in 0u64..10_000) {
            let a = gaussian(60, seed);
            let b = gaussian(60, seed + 3);
            let ccf = cross_correlations(&a, &b, 4).unwrap();
            let (_, scale) = hong_moments(60, 5, 4);
            let diff = hong_q(&ccf, 5, Variant::Instantaneous).unwrap() - hong_q(&ccf, 5, Variant::Lagged).unwrap();
            prop_assert!(diff >= 0.0);
            prop_assert!((diff - 60.0 * ccf.rho[0].powi(2) / scale).abs() < 1e-10);
        }
    }
}
