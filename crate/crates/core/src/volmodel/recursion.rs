//! Conditional mean and variance recursions, the likelihood, and the unconstrained
//! parameterization used by the optimizer.

use serde::{Deserialize, Serialize};

use super::sged::Sged;
use super::{ModelSpec, VarianceFamily};
use crate::stats;

/// Natural parameters of an ARMA(p,q)-GARCH(r,s) model.
///
/// `gamma` is empty for `garch`. For `gjr` it is the extra ARCH weight on negative
/// shocks; for `egarch` it is the signed-shock coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmaGarchParams {
    pub intercept: f64,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    pub omega: f64,
    pub alpha: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub nu: f64,
    pub xi: f64,
}

impl ArmaGarchParams {
    pub fn matches(&self, spec: &ModelSpec) -> bool {
        let asym = if spec.family == VarianceFamily::Garch { 0 } else { spec.r };
        self.ar.len() == spec.p
            && self.ma.len() == spec.q
            && self.alpha.len() == spec.r
            && self.beta.len() == spec.s
            && self.gamma.len() == asym
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Filtered {
    pub eps: Vec<f64>,
    pub sigma2: Vec<f64>,
}

impl Filtered {
    pub fn std_residuals(&self) -> Vec<f64> {
        self.eps.iter().zip(&self.sigma2).map(|(e, s2)| e / s2.sqrt()).collect()
    }
}

/// Mean residuals with zero pre-sample values.
pub fn mean_residuals(returns: &[f64], params: &ArmaGarchParams) -> Vec<f64> {
    let n = returns.len();
    let z: Vec<f64> = returns.iter().map(|r| r - params.intercept).collect();
    let mut eps = vec![0.0; n];
    for t in 0..n {
        let mut e = z[t];
        for (i, phi) in params.ar.iter().enumerate() {
            if t > i {
                e -= phi * z[t - i - 1];
            }
        }
        for (j, theta) in params.ma.iter().enumerate() {
            if t > j {
                e -= theta * eps[t - j - 1];
            }
        }
        eps[t] = e;
    }
    eps
}

/// Variance path; `None` when it leaves `(0, inf)`.
///
/// Pre-sample shocks are 0 and pre-sample variances equal the sample variance of `eps`.
pub fn variance_path(eps: &[f64], family: VarianceFamily, params: &ArmaGarchParams) -> Option<Vec<f64>> {
    let n = eps.len();
    let s0 = stats::variance(eps);
    if !(s0.is_finite() && s0 > 0.0) {
        return None;
    }
    let mut s2 = vec![0.0; n];
    match family {
        VarianceFamily::Garch | VarianceFamily::Gjr => {
            for t in 0..n {
                let mut v = params.omega;
                for (k, a) in params.alpha.iter().enumerate() {
                    if t > k {
                        let e = eps[t - k - 1];
                        let w = if family == VarianceFamily::Gjr && e < 0.0 { a + params.gamma[k] } else { *a };
                        v += w * e * e;
                    }
                }
                for (l, b) in params.beta.iter().enumerate() {
                    v += b * if t > l { s2[t - l - 1] } else { s0 };
                }
                if !(v.is_finite() && v > 0.0) {
                    return None;
                }
                s2[t] = v;
            }
        }
        VarianceFamily::Egarch => {
            let ln0 = s0.ln();
            let mut ln_s2 = vec![0.0; n];
            for t in 0..n {
                let mut v = params.omega;
                for k in 0..params.alpha.len() {
                    if t > k {
                        let eta = eps[t - k - 1] / s2[t - k - 1].sqrt();
                        v += params.alpha[k] * eta.abs() + params.gamma[k] * eta;
                    }
                }
                for (l, b) in params.beta.iter().enumerate() {
                    v += b * if t > l { ln_s2[t - l - 1] } else { ln0 };
                }
                let e = v.exp();
                if !(e.is_finite() && e > 0.0) {
                    return None;
                }
                ln_s2[t] = v;
                s2[t] = e;
            }
        }
    }
    Some(s2)
}

pub fn filter(returns: &[f64], family: VarianceFamily, params: &ArmaGarchParams) -> Option<Filtered> {
    let eps = mean_residuals(returns, params);
    let sigma2 = variance_path(&eps, family, params)?;
    Some(Filtered { eps, sigma2 })
}

/// Log-likelihood; `-inf` when parameters are invalid or the variance path degenerates.
pub fn log_likelihood(returns: &[f64], family: VarianceFamily, params: &ArmaGarchParams) -> f64 {
    let Ok(dist) = Sged::new(params.nu, params.xi) else {
        return f64::NEG_INFINITY;
    };
    let Some(f) = filter(returns, family, params) else {
        return f64::NEG_INFINITY;
    };
    let ll: f64 = f
        .eps
        .iter()
        .zip(&f.sigma2)
        .map(|(e, s2)| dist.ln_pdf(e / s2.sqrt()) - 0.5 * s2.ln())
        .sum();
    if ll.is_finite() {
        ll
    } else {
        f64::NEG_INFINITY
    }
}

/// Number of free parameters, used by the information criterion.
pub fn param_count(spec: &ModelSpec) -> usize {
    let asym = if spec.family == VarianceFamily::Garch { 0 } else { spec.r };
    1 + spec.p + spec.q + 1 + spec.r + asym + spec.s + 2
}

const NU_MIN: f64 = 0.5;
/// Magnitude bound on EGARCH shock coefficients.
const EGARCH_BOUND: f64 = 1.0;
const NU_MAX: f64 = 50.0;

/// Partial autocorrelations in `(-1, 1)` to the coefficients of a stationary `1 - Σ φ_k z^k`.
pub fn pacf_to_ar(pacf: &[f64]) -> Vec<f64> {
    let mut phi: Vec<f64> = Vec::with_capacity(pacf.len());
    for (k, &psi) in pacf.iter().enumerate() {
        let prev = phi.clone();
        for j in 0..k {
            phi[j] = prev[j] - psi * prev[k - 1 - j];
        }
        phi.push(psi);
    }
    phi
}

/// Weights `exp(v_i) / (1 + Σ exp(v))`: non-negative with sum below one.
fn simplex_weights(v: &[f64]) -> Vec<f64> {
    let top = v.iter().copied().fold(0.0_f64, f64::max);
    let denom = (-top).exp() + v.iter().map(|x| (x - top).exp()).sum::<f64>();
    v.iter().map(|x| (x - top).exp() / denom).collect()
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Map an unconstrained vector to natural parameters.
///
/// Layout: intercept, AR partials, MA partials, then per family
/// - garch: ln ω, ARCH/GARCH simplex logits
/// - gjr: ln ω, envelope/GARCH simplex logits, asymmetry splits
/// - egarch: ω, bounded α and γ, GARCH partials
///
/// and finally the shape and skew coordinates.
pub fn unpack(spec: &ModelSpec, u: &[f64]) -> ArmaGarchParams {
    debug_assert_eq!(u.len(), param_count(spec));
    let (p, q, r, s) = (spec.p, spec.q, spec.r, spec.s);
    let mut at = 0;
    let mut take = |k: usize| {
        let out = &u[at..at + k];
        at += k;
        out
    };
    let intercept = take(1)[0];
    let ar = pacf_to_ar(&take(p).iter().map(|x| x.tanh()).collect::<Vec<_>>());
    let ma: Vec<f64> = pacf_to_ar(&take(q).iter().map(|x| x.tanh()).collect::<Vec<_>>()).iter().map(|c| -c).collect();
    let (omega, alpha, gamma, beta) = match spec.family {
        VarianceFamily::Garch => {
            let omega = take(1)[0].exp();
            let w = simplex_weights(take(r + s));
            (omega, w[..r].to_vec(), vec![], w[r..].to_vec())
        }
        VarianceFamily::Gjr => {
            let omega = take(1)[0].exp();
            let w = simplex_weights(take(r + s));
            let split = take(r);
            let mut alpha = Vec::with_capacity(r);
            let mut gamma = Vec::with_capacity(r);
            for k in 0..r {
                let th = split[k].tanh();
                let (pos, neg) = if th >= 0.0 { (w[k], w[k] * (1.0 - th)) } else { (w[k] * (1.0 + th), w[k]) };
                // weights on negative shocks are `neg`, so the asymmetry term is neg - pos
                alpha.push(pos);
                gamma.push(neg - pos);
            }
            (omega, alpha, gamma, w[r..].to_vec())
        }
        VarianceFamily::Egarch => {
            let omega = take(1)[0];
            let alpha: Vec<f64> = take(r).iter().map(|x| EGARCH_BOUND * x.tanh()).collect();
            let gamma: Vec<f64> = take(r).iter().map(|x| EGARCH_BOUND * x.tanh()).collect();
            let beta = pacf_to_ar(&take(s).iter().map(|x| x.tanh()).collect::<Vec<_>>());
            (omega, alpha, gamma, beta)
        }
    };
    let nu = NU_MIN + (NU_MAX - NU_MIN) * logistic(take(1)[0]);
    let xi = (2.0 * take(1)[0].tanh()).exp();
    ArmaGarchParams { intercept, ar, ma, omega, alpha, gamma, beta, nu, xi }
}

/// Heuristic start in unconstrained coordinates: no ARMA dynamics, persistence 0.95,
/// normal innovations.
pub fn start_vector(spec: &ModelSpec, returns: &[f64]) -> Vec<f64> {
    let (p, q, r, s) = (spec.p, spec.q, spec.r, spec.s);
    let var = stats::variance(returns).max(1e-12);
    let mut u = vec![stats::mean(returns)];
    u.extend(std::iter::repeat_n(0.0, p + q));
    let (a_total, b_total) = (0.05, 0.90);
    let residual = 1.0 - a_total - b_total;
    match spec.family {
        VarianceFamily::Garch | VarianceFamily::Gjr => {
            u.push((var * residual).ln());
            u.extend(std::iter::repeat_n((a_total / r as f64 / residual).ln(), r));
            u.extend(std::iter::repeat_n((b_total / s as f64 / residual).ln(), s));
            if spec.family == VarianceFamily::Gjr {
                u.extend(std::iter::repeat_n(0.0, r));
            }
        }
        VarianceFamily::Egarch => {
            u.push(var.ln() * (1.0 - b_total));
            u.extend(std::iter::repeat_n((0.1 / r as f64 / EGARCH_BOUND).atanh(), r));
            u.extend(std::iter::repeat_n(0.0, r));
            u.push(b_total.atanh());
            u.extend(std::iter::repeat_n(0.0, s - 1));
        }
    }
    // ν = 2, ξ = 1
    let frac: f64 = (2.0 - NU_MIN) / (NU_MAX - NU_MIN);
    u.push((frac / (1.0 - frac)).ln());
    u.push(0.0);
    u
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(p: usize, q: usize, r: usize, s: usize, family: VarianceFamily) -> ModelSpec {
        ModelSpec::new(p, q, r, s, family).unwrap()
    }

    // roots of 1 - Σ φ z^k outside the unit circle, checked through the companion matrix
    fn is_stationary(phi: &[f64]) -> bool {
        let k = phi.len();
        if k == 0 {
            return true;
        }
        let mut m = nalgebra::DMatrix::<f64>::zeros(k, k);
        for j in 0..k {
            m[(0, j)] = phi[j];
        }
        for i in 1..k {
            m[(i, i - 1)] = 1.0;
        }
        m.complex_eigenvalues().iter().all(|z| z.norm() < 1.0)
    }

    #[test]
    fn pacf_map_small_cases() {
        assert_eq!(pacf_to_ar(&[0.5]), vec![0.5]);
        let phi = pacf_to_ar(&[0.5, 0.3]);
        assert!((phi[0] - 0.35).abs() < 1e-15 && (phi[1] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn garch_constraints_hold_for_any_input() {
        let sp = spec(2, 1, 3, 2, VarianceFamily::Garch);
        for seed in 0..200u64 {
            let u: Vec<f64> = (0..param_count(&sp)).map(|k| ((seed * 31 + k as u64 * 17) % 97) as f64 / 8.0 - 6.0).collect();
            let p = unpack(&sp, &u);
            assert!(p.matches(&sp));
            assert!(p.omega > 0.0);
            assert!(p.alpha.iter().chain(&p.beta).all(|&x| x >= 0.0));
            assert!(p.alpha.iter().sum::<f64>() + p.beta.iter().sum::<f64>() < 1.0);
            assert!(is_stationary(&p.ar));
            assert!(is_stationary(&p.ma.iter().map(|c| -c).collect::<Vec<_>>()));
            assert!(p.nu > 0.5 && p.nu < 50.0 && p.xi > 0.0);
        }
    }

    #[test]
    fn gjr_weights_non_negative() {
        let sp = spec(1, 1, 2, 1, VarianceFamily::Gjr);
        for seed in 0..200u64 {
            let u: Vec<f64> = (0..param_count(&sp)).map(|k| ((seed * 13 + k as u64 * 29) % 89) as f64 / 7.0 - 6.0).collect();
            let p = unpack(&sp, &u);
            for k in 0..2 {
                assert!(p.alpha[k] >= 0.0 && p.alpha[k] + p.gamma[k] >= 0.0);
                assert!(p.alpha[k].max(p.alpha[k] + p.gamma[k]) <= 1.0);
            }
        }
    }

    #[test]
    fn start_decodes_to_intended_values() {
        let r = [0.3, -0.2, 0.5, 0.1, -0.4, 0.2];
        for fam in [VarianceFamily::Garch, VarianceFamily::Gjr, VarianceFamily::Egarch] {
            let sp = spec(1, 1, 2, 2, fam);
            let p = unpack(&sp, &start_vector(&sp, &r));
            assert!((p.nu - 2.0).abs() < 1e-12 && (p.xi - 1.0).abs() < 1e-12);
            assert_eq!(p.ar, vec![0.0]);
            if fam != VarianceFamily::Egarch {
                assert!((p.alpha.iter().sum::<f64>() - 0.05).abs() < 1e-12);
                assert!((p.beta.iter().sum::<f64>() - 0.90).abs() < 1e-12);
            } else {
                assert!((p.beta[0] - 0.9).abs() < 1e-12 && p.beta[1].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gjr_without_asymmetry_equals_garch() {
        let r: Vec<f64> = (0..120).map(|t| ((t * 7919) % 113) as f64 / 40.0 - 1.4).collect();
        let params = ArmaGarchParams {
            intercept: 0.02,
            ar: vec![0.2],
            ma: vec![-0.1],
            omega: 0.1,
            alpha: vec![0.08, 0.02],
            gamma: vec![0.0, 0.0],
            beta: vec![0.85],
            nu: 1.6,
            xi: 1.1,
        };
        let garch = ArmaGarchParams { gamma: vec![], ..params.clone() };
        let a = log_likelihood(&r, VarianceFamily::Gjr, &params);
        let b = log_likelihood(&r, VarianceFamily::Garch, &garch);
        assert!(a.is_finite());
        assert_eq!(a, b);
    }

    #[test]
    fn negative_shock_weight_applies() {
        let eps = [0.0, -1.0, 1.0];
        let p = ArmaGarchParams {
            intercept: 0.0,
            ar: vec![],
            ma: vec![],
            omega: 0.1,
            alpha: vec![0.1],
            gamma: vec![0.2],
            beta: vec![0.0],
            nu: 2.0,
            xi: 1.0,
        };
        let s2 = variance_path(&eps, VarianceFamily::Gjr, &p).unwrap();
        assert!((s2[2] - (0.1 + 0.3)).abs() < 1e-15);
        let s2 = variance_path(&[0.0, -1.0, 1.0, 0.0], VarianceFamily::Gjr, &p).unwrap();
        assert!((s2[3] - (0.1 + 0.1)).abs() < 1e-15);
    }
}
