//! Bayesian spatial probit models on edge indicators.
//!
//! Latent `y*` with `y = 1{y* >= 0}` and unit disturbance variance:
//! lag form `y* = ρ W y* + X β + u`, error form `y* = X β + e` with `e = λ W e + u`.
//! Single-site Gibbs sweeps over the latent vector, then a block draw of `(s, β)`: the
//! spatial parameter `s` takes a random-walk Metropolis step on its `β`-integrated
//! conditional (own random stream, uniform prior over the stable interval within `(-1, 1)`), then `β` is
//! drawn from its Gaussian conditional.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::design::{SlotWeights, SpatialDesign};
use super::truncnorm::sign_constrained;
use crate::error::{Error, Result};
use crate::stats::{mix_seed, Z_TWO_SIDED as CRITICAL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpatialModel {
    /// Spatial lag (autoregressive) probit.
    Sar,
    /// Spatial error probit.
    Sem,
    /// No spatial term.
    Probit,
}

impl SpatialModel {
    pub fn as_str(self) -> &'static str {
        match self {
            SpatialModel::Sar => "sar",
            SpatialModel::Sem => "sem",
            SpatialModel::Probit => "probit",
        }
    }

    pub fn spatial_name(self) -> Option<&'static str> {
        match self {
            SpatialModel::Sar => Some("rho"),
            SpatialModel::Sem => Some("lambda"),
            SpatialModel::Probit => None,
        }
    }
}

impl fmt::Display for SpatialModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SpatialModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sar" | "lag" => Ok(SpatialModel::Sar),
            "sem" | "error" => Ok(SpatialModel::Sem),
            "probit" => Ok(SpatialModel::Probit),
            other => Err(Error::InvalidArgument(format!("unknown model {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerOptions {
    pub draws: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Precision of the zero-mean normal prior on each `β` component.
    pub beta_prior_precision: f64,
    pub initial_step: f64,
    /// Hold the spatial parameter at this value instead of sampling it.
    pub fixed_spatial: Option<f64>,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        Self {
            draws: 1000,
            burn_in: 200,
            seed: 0,
            beta_prior_precision: 1e-8,
            initial_step: 0.1,
            fixed_spatial: None,
        }
    }
}

const TUNE_EVERY: usize = 50;
const TARGET_ACCEPTANCE: (f64, f64) = (0.25, 0.45);

#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub model: SpatialModel,
    pub names: Vec<String>,
    /// Retained draws, one row per iteration.
    pub beta: Vec<Vec<f64>>,
    /// Retained spatial draws; empty for [`SpatialModel::Probit`].
    pub spatial: Vec<f64>,
    /// Metropolis acceptance rate after burn-in.
    pub acceptance: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefSummary {
    pub param: String,
    pub post_mean: f64,
    pub post_sd: f64,
    pub sig10: bool,
    pub sig05: bool,
    pub sig01: bool,
}


impl CoefSummary {
    pub fn from_draws(param: impl Into<String>, draws: &[f64]) -> Self {
        let n = draws.len() as f64;
        let post_mean = draws.iter().sum::<f64>() / n;
        let post_sd = (draws.iter().map(|d| (d - post_mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let z = if post_sd > 0.0 { (post_mean / post_sd).abs() } else { 0.0 };
        Self {
            param: param.into(),
            post_mean,
            post_sd,
            sig10: z > CRITICAL[0],
            sig05: z > CRITICAL[1],
            sig01: z > CRITICAL[2],
        }
    }
}

impl Posterior {
    pub fn beta_column(&self, k: usize) -> Vec<f64> {
        self.beta.iter().map(|row| row[k]).collect()
    }

    pub fn summaries(&self) -> Vec<CoefSummary> {
        let mut out: Vec<CoefSummary> = self.names.iter().enumerate().map(|(k, name)| CoefSummary::from_draws(name.clone(), &self.beta_column(k))).collect();
        if let Some(name) = self.model.spatial_name() {
            out.push(CoefSummary::from_draws(name, &self.spatial));
        }
        out
    }
}

struct Chain<'a> {
    model: SpatialModel,
    x: &'a DMatrix<f64>,
    wx: DMatrix<f64>,
    w: &'a SlotWeights,
    positive: Vec<bool>,
    /// `Σ_k W_ki²` per column.
    col_sq: Vec<f64>,
    ystar: Vec<f64>,
    beta: DVector<f64>,
    spatial: f64,
}

impl Chain<'_> {
    /// `A v = v - s W v`.
    fn apply_a(&self, v: &[f64]) -> Vec<f64> {
        let wv = self.w.mul(v);
        v.iter().zip(wv).map(|(a, b)| a - self.spatial * b).collect()
    }

    fn mean(&self) -> Vec<f64> {
        (&*self.x * &self.beta).iter().copied().collect()
    }

    /// Quadratic-form residual whose squared norm is the latent log density (up to constants).
    fn residual(&self) -> Vec<f64> {
        let mean = self.mean();
        match self.model {
            SpatialModel::Sem => {
                let e: Vec<f64> = self.ystar.iter().zip(&mean).map(|(y, m)| y - m).collect();
                self.apply_a(&e)
            }
            _ => self.apply_a(&self.ystar).iter().zip(&mean).map(|(a, m)| a - m).collect(),
        }
    }

    /// One single-site sweep. Both models share the latent precision `A'A`.
    fn sweep_latent(&mut self, rng: &mut ChaCha8Rng) {
        let mut r = self.residual();
        let s = self.spatial;
        for i in 0..self.ystar.len() {
            let col = self.w.col(i);
            let q = 1.0 + s * s * self.col_sq[i];
            let dot = r[i] - s * col.iter().map(|&(k, w)| w * r[k]).sum::<f64>();
            let sd = q.recip().sqrt();
            let mu = self.ystar[i] - dot / q;
            let new = sign_constrained(mu, sd, self.positive[i], rng);
            let delta = new - self.ystar[i];
            self.ystar[i] = new;
            r[i] += delta;
            for &(k, w) in col {
                r[k] -= s * w * delta;
            }
        }
    }

    /// Sufficient moments of `(y*, W y*)` against `(X, W X)` for the blocked `(s, β)` update.
    fn moments(&self) -> Moments {
        let y = DVector::from_column_slice(&self.ystar);
        let b = DVector::from_vec(self.w.mul(&self.ystar));
        let xt = self.x.transpose();
        let zt = self.wx.transpose();
        Moments {
            model: self.model,
            yy: y.dot(&y),
            yb: y.dot(&b),
            bb: b.dot(&b),
            xy: &xt * &y,
            xb: &xt * &b,
            zy: &zt * &y,
            zb: &zt * &b,
            xx: &xt * &*self.x,
            xz: &xt * &self.wx,
            zz: &zt * &self.wx,
        }
    }

    fn draw_beta(&mut self, mom: &Moments, tau: f64, rng: &mut ChaCha8Rng) -> Result<()> {
        let (precision, q, _) = mom.at(self.spatial, tau);
        let k = q.len();
        let chol = precision.cholesky().ok_or_else(|| Error::Singular("posterior precision of beta".into()))?;
        let mean = chol.solve(&q);
        let z = DVector::from_fn(k, |_, _| StandardNormal.sample(rng));
        // L' v = z gives Var(v) = (L L')^{-1}
        let v = chol.l().transpose().solve_upper_triangular(&z).ok_or_else(|| Error::Singular("cholesky factor".into()))?;
        self.beta = mean + v;
        Ok(())
    }
}

/// With `ỹ = A y*` and `X̃ = X` (lag) or `A X` (error), the Gaussian pieces of the
/// `β`-integrated likelihood are polynomials in the spatial parameter `s`.
struct Moments {
    model: SpatialModel,
    yy: f64,
    yb: f64,
    bb: f64,
    xy: DVector<f64>,
    xb: DVector<f64>,
    zy: DVector<f64>,
    zb: DVector<f64>,
    xx: DMatrix<f64>,
    xz: DMatrix<f64>,
    zz: DMatrix<f64>,
}

impl Moments {
    /// `(X̃'X̃ + τI, X̃'ỹ, ỹ'ỹ)` at `s`.
    fn at(&self, s: f64, tau: f64) -> (DMatrix<f64>, DVector<f64>, f64) {
        let k = self.xx.nrows();
        let yy = self.yy - 2.0 * s * self.yb + s * s * self.bb;
        let (xtx, q) = match self.model {
            SpatialModel::Sem => (
                &self.xx - s * (&self.xz + self.xz.transpose()) + s * s * &self.zz,
                &self.xy - s * (&self.xb + &self.zy) + s * s * &self.zb,
            ),
            _ => (self.xx.clone(), &self.xy - s * &self.xb),
        };
        (xtx + DMatrix::identity(k, k) * tau, q, yy)
    }

    /// Log density of `s` given `y*` with `β` integrated out, up to a constant.
    fn log_marginal(&self, w: &SlotWeights, s: f64, tau: f64) -> f64 {
        let (p, q, yy) = self.at(s, tau);
        let Some(chol) = p.cholesky() else {
            return f64::NEG_INFINITY;
        };
        let half_logdet: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum();
        w.log_det(s) - half_logdet - 0.5 * (yy - q.dot(&chol.solve(&q)))
    }
}

/// Stable interval of the spatial parameter intersected with `(-1, 1)`.
pub fn prior_support(w: &SlotWeights) -> (f64, f64) {
    let (lo, hi) = w.stable_interval();
    (lo.max(-1.0), hi.min(1.0))
}

/// Run one chain.
pub fn sample(design: &SpatialDesign, w: &SlotWeights, model: SpatialModel, opts: &SamplerOptions) -> Result<Posterior> {
    design.check()?;
    if opts.draws < 2 {
        return Err(Error::InvalidArgument("at least two retained draws are needed".into()));
    }
    let m = design.len();
    let empty;
    let w = match model {
        SpatialModel::Probit => {
            empty = SlotWeights::empty(m);
            &empty
        }
        _ => {
            if w.len() != m {
                return Err(Error::InvalidArgument(format!("weight matrix has {} rows for {m} slots", w.len())));
            }
            w
        }
    };
    let (lower, upper) = prior_support(w);
    if let Some(s) = opts.fixed_spatial {
        if !(s > lower && s < upper) {
            return Err(Error::InvalidArgument(format!("fixed spatial parameter {s} outside ({lower}, {upper})")));
        }
    }

    let x = &design.x;
    let mut wx = DMatrix::zeros(m, x.ncols());
    for c in 0..x.ncols() {
        let col: Vec<f64> = x.column(c).iter().copied().collect();
        wx.set_column(c, &DVector::from_vec(w.mul(&col)));
    }
    let positive: Vec<bool> = design.y.iter().map(|v| *v >= 0.5).collect();
    let mut chain = Chain {
        model,
        x,
        wx,
        w,
        col_sq: (0..m).map(|i| w.col(i).iter().map(|e| e.1 * e.1).sum()).collect(),
        ystar: positive.iter().map(|&p| if p { 0.5 } else { -0.5 }).collect(),
        positive,
        beta: DVector::zeros(x.ncols()),
        spatial: opts.fixed_spatial.unwrap_or(0.0),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut mh_rng = ChaCha8Rng::seed_from_u64(mix_seed(opts.seed, 0x5eed_5a7a));
    let mut step = opts.initial_step;
    let sample_spatial = model != SpatialModel::Probit && opts.fixed_spatial.is_none();

    let total = opts.burn_in + opts.draws;
    let mut beta_draws = Vec::with_capacity(opts.draws);
    let mut spatial_draws = Vec::with_capacity(opts.draws);
    let (mut window_acc, mut kept_acc) = (0usize, 0usize);
    for it in 0..total {
        chain.sweep_latent(&mut rng);
        let mom = chain.moments();
        if sample_spatial {
            let z: f64 = StandardNormal.sample(&mut mh_rng);
            let u: f64 = rand::Rng::random(&mut mh_rng);
            let proposal = chain.spatial + step * z;
            let tau = opts.beta_prior_precision;
            let accepted = proposal > lower && proposal < upper && u.ln() < mom.log_marginal(w, proposal, tau) - mom.log_marginal(w, chain.spatial, tau);
            if accepted {
                chain.spatial = proposal;
            }
            if it < opts.burn_in {
                window_acc += accepted as usize;
                if (it + 1) % TUNE_EVERY == 0 {
                    let rate = window_acc as f64 / TUNE_EVERY as f64;
                    if rate < TARGET_ACCEPTANCE.0 {
                        step *= 0.7;
                    } else if rate > TARGET_ACCEPTANCE.1 {
                        step *= 1.4;
                    }
                    window_acc = 0;
                }
            } else {
                kept_acc += accepted as usize;
            }
        }
        chain.draw_beta(&mom, opts.beta_prior_precision, &mut rng)?;
        if it >= opts.burn_in {
            beta_draws.push(chain.beta.iter().copied().collect());
            if model != SpatialModel::Probit {
                spatial_draws.push(chain.spatial);
            }
        }
    }
    Ok(Posterior {
        model,
        names: design.names.clone(),
        beta: beta_draws,
        spatial: spatial_draws,
        acceptance: if sample_spatial { kept_acc as f64 / opts.draws as f64 } else { 0.0 },
        step,
    })
}

/// Monte Carlo standard error of a chain mean from non-overlapping batch means.
pub fn batch_means_se(draws: &[f64]) -> f64 {
    let n = draws.len();
    let size = ((n as f64).sqrt().floor() as usize).max(1);
    let batches = n / size;
    if batches < 2 {
        return f64::NAN;
    }
    let means: Vec<f64> = (0..batches).map(|b| draws[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64).collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::design::edge_slots;

    fn toy_design(n_markets: usize, seed: u64) -> SpatialDesign {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = edge_slots(n_markets).len();
        let x = DMatrix::from_fn(m, 3, |_, c| if c == 0 { 1.0 } else { rng.random::<f64>() * 2.0 - 1.0 });
        let y = (0..m)
            .map(|r| {
                let eta = -0.3 + 0.8 * x[(r, 1)] - 0.5 * x[(r, 2)];
                let u: f64 = StandardNormal.sample(&mut rng);
                if eta + u >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        SpatialDesign {
            y,
            x,
            names: vec!["intercept".into(), "a".into(), "b".into()],
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let d = toy_design(6, 1);
        let w = SlotWeights::for_markets(6).unwrap();
        let opts = SamplerOptions { draws: 50, burn_in: 20, seed: 4, ..Default::default() };
        let a = sample(&d, &w, SpatialModel::Sar, &opts).unwrap();
        let b = sample(&d, &w, SpatialModel::Sar, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.beta.len(), 50);
        assert_eq!(a.summaries().len(), 4);
        assert_eq!(a.summaries()[3].param, "rho");
    }

    #[test]
    fn lag_model_without_neighbours_follows_the_ordinary_path() {
        let d = toy_design(5, 2);
        let opts = SamplerOptions { draws: 60, burn_in: 10, seed: 8, ..Default::default() };
        let plain = sample(&d, &SlotWeights::empty(d.len()), SpatialModel::Probit, &opts).unwrap();
        let lag = sample(&d, &SlotWeights::empty(d.len()), SpatialModel::Sar, &opts).unwrap();
        let err = sample(&d, &SlotWeights::empty(d.len()), SpatialModel::Sem, &opts).unwrap();
        assert_eq!(plain.beta, lag.beta);
        assert_eq!(plain.beta, err.beta);
    }

    #[test]
    fn spatial_draws_stay_in_the_stable_interval() {
        let d = toy_design(5, 3);
        let w = SlotWeights::for_markets(5).unwrap();
        let (lo, hi) = prior_support(&w);
        assert_eq!(lo, -1.0);
        for model in [SpatialModel::Sar, SpatialModel::Sem] {
            let p = sample(&d, &w, model, &SamplerOptions { draws: 300, burn_in: 200, seed: 1, ..Default::default() }).unwrap();
            assert!(p.spatial.iter().all(|s| *s > lo && *s < hi));
            assert!(p.acceptance > 0.1 && p.acceptance < 0.7, "{}", p.acceptance);
        }
    }

    #[test]
    fn fixed_parameter_is_held() {
        let d = toy_design(4, 5);
        let w = SlotWeights::for_markets(4).unwrap();
        let p = sample(&d, &w, SpatialModel::Sem, &SamplerOptions { draws: 20, burn_in: 5, fixed_spatial: Some(0.2), ..Default::default() }).unwrap();
        assert!(p.spatial.iter().all(|s| *s == 0.2));
        assert!(sample(&d, &w, SpatialModel::Sem, &SamplerOptions { fixed_spatial: Some(1.5), ..Default::default() }).is_err());
    }

    #[test]
    fn constant_indicator_is_rejected() {
        let mut d = toy_design(4, 6);
        d.y.iter_mut().for_each(|v| *v = 0.0);
        let w = SlotWeights::for_markets(4).unwrap();
        assert!(matches!(sample(&d, &w, SpatialModel::Sar, &SamplerOptions::default()), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn moments_match_dense_products() {
        let d = toy_design(4, 9);
        let w = SlotWeights::for_markets(4).unwrap();
        let wd = w.to_dense();
        for model in [SpatialModel::Sar, SpatialModel::Sem] {
            let mut wx = DMatrix::zeros(d.len(), 3);
            wx.copy_from(&(&wd * &d.x));
            let chain = Chain {
                model,
                x: &d.x,
                wx,
                w: &w,
                positive: vec![true; d.len()],
                col_sq: vec![0.0; d.len()],
                ystar: (0..d.len()).map(|k| (k as f64 * 0.37).sin()).collect(),
                beta: DVector::zeros(3),
                spatial: 0.0,
            };
            let s = -0.4;
            let a = DMatrix::<f64>::identity(d.len(), d.len()) - s * &wd;
            let y = DVector::from_column_slice(&chain.ystar);
            let xt = if model == SpatialModel::Sem { &a * &d.x } else { d.x.clone() };
            let yt = &a * &y;
            let (p, q, yy) = chain.moments().at(s, 0.5);
            let p_dense = xt.transpose() * &xt + DMatrix::identity(3, 3) * 0.5;
            assert!((p - p_dense).amax() < 1e-10);
            assert!((q - xt.transpose() * &yt).amax() < 1e-10);
            assert!((yy - yt.dot(&yt)).abs() < 1e-10);
        }
    }

    #[test]
    fn significance_thresholds() {
        let s = CoefSummary::from_draws("x", &[1.0, 2.0, 3.0]);
        assert_eq!((s.post_mean, s.post_sd), (2.0, 1.0));
        assert!(s.sig10 && s.sig05 && !s.sig01);
        assert!("lag".parse::<SpatialModel>().unwrap() == SpatialModel::Sar);
    }

    #[test]
    fn batch_means_of_iid_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let se = batch_means_se(&x);
        assert!((se / 0.01 - 1.0).abs() < 0.3, "{se}");
    }
}
