//! ARMA(p,q)-GARCH(r,s) filters with skewed-GED innovations.
//!
//! [`fit`] maximises the likelihood for one specification; [`select_model`] walks a grid
//! by ascending total order and keeps the first level whose residuals pass both
//! portmanteau diagnostics, choosing by BIC within it.

mod portmanteau;
mod recursion;
mod sged;

use std::fmt;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use portmanteau::{autocorrelations, null_statistics, pena_rodriguez_pvalue, pr_statistic, pvalue_with, PrNullCache, Transform};
pub use recursion::{filter, log_likelihood, mean_residuals, pacf_to_ar, param_count, unpack, variance_path, ArmaGarchParams, Filtered};
pub use sged::{sged_logdensity, Sged};

use crate::error::{Error, Result};
use crate::optim::{minimize, BfgsOptions, NelderMeadOptions};
use crate::stats::{self, mix_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceFamily {
    Garch,
    Egarch,
    Gjr,
}

impl VarianceFamily {
    pub const ALL: [VarianceFamily; 3] = [VarianceFamily::Garch, VarianceFamily::Egarch, VarianceFamily::Gjr];

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "garch" => Ok(Self::Garch),
            "egarch" => Ok(Self::Egarch),
            "gjr" => Ok(Self::Gjr),
            other => Err(Error::InvalidArgument(format!("unknown variance family `{other}`"))),
        }
    }
}

impl fmt::Display for VarianceFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Garch => "garch",
            Self::Egarch => "egarch",
            Self::Gjr => "gjr",
        })
    }
}

pub const MAX_ORDER: usize = 4;

/// Orders of the mean and variance equations. AR/MA orders may be 0, ARCH/GARCH orders may not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModelSpec {
    pub p: usize,
    pub q: usize,
    pub r: usize,
    pub s: usize,
    pub family: VarianceFamily,
}

impl ModelSpec {
    pub fn new(p: usize, q: usize, r: usize, s: usize, family: VarianceFamily) -> Result<Self> {
        if p > MAX_ORDER || q > MAX_ORDER || !(1..=MAX_ORDER).contains(&r) || !(1..=MAX_ORDER).contains(&s) {
            return Err(Error::InvalidArgument(format!(
                "orders out of range: p = {p}, q = {q} must be in 0..={MAX_ORDER}; r = {r}, s = {s} in 1..={MAX_ORDER}"
            )));
        }
        Ok(Self { p, q, r, s, family })
    }

    pub fn total_order(&self) -> usize {
        self.p + self.q + self.r + self.s
    }

    /// All orders in `lo..=4` (mean) and `1..=4` (variance) for the given families.
    pub fn grid(families: &[VarianceFamily], include_zero_mean_orders: bool) -> Vec<ModelSpec> {
        let lo = if include_zero_mean_orders { 0 } else { 1 };
        let mut out = Vec::new();
        for &family in families {
            for p in lo..=MAX_ORDER {
                for q in lo..=MAX_ORDER {
                    for r in 1..=MAX_ORDER {
                        for s in 1..=MAX_ORDER {
                            out.push(ModelSpec { p, q, r, s, family });
                        }
                    }
                }
            }
        }
        out
    }

    fn seed_key(&self) -> u64 {
        let fam = match self.family {
            VarianceFamily::Garch => 0,
            VarianceFamily::Egarch => 1,
            VarianceFamily::Gjr => 2,
        };
        (((fam * 8 + self.p as u64) * 8 + self.q as u64) * 8 + self.r as u64) * 8 + self.s as u64
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ARMA({},{})-{}({},{})", self.p, self.q, self.family, self.r, self.s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFlag {
    Ok,
    DiagnosticsFailed,
}

impl fmt::Display for FitFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ok => "ok",
            Self::DiagnosticsFailed => "diagnostics_failed",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub pr_resid_p: f64,
    pub pr_sq_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolFit {
    pub spec: ModelSpec,
    pub params: ArmaGarchParams,
    pub log_likelihood: f64,
    pub bic: f64,
    pub std_residuals: Vec<f64>,
    pub sigma2: Vec<f64>,
    /// Log-likelihood at each multi-start initial point.
    pub start_log_likelihoods: Vec<f64>,
    pub diagnostics: Option<Diagnostics>,
    pub flag: FitFlag,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub starts: usize,
    pub seed: u64,
    /// Standard deviation of start perturbations in unconstrained coordinates.
    pub perturbation: f64,
    pub nelder_mead: NelderMeadOptions,
    pub bfgs: BfgsOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            starts: 5,
            seed: 0,
            perturbation: 0.5,
            nelder_mead: NelderMeadOptions::default(),
            bfgs: BfgsOptions::default(),
        }
    }
}

pub const MIN_FIT_LENGTH: usize = 40;

/// Maximum-likelihood fit of one specification from deterministic multi-starts.
pub fn fit(returns: &[f64], spec: ModelSpec, opts: &FitOptions) -> Result<VolFit> {
    if returns.len() < MIN_FIT_LENGTH {
        return Err(Error::InsufficientData(format!("{} returns, need at least {MIN_FIT_LENGTH}", returns.len())));
    }
    if returns.iter().any(|r| !r.is_finite()) {
        return Err(Error::InvalidArgument("non-finite return".into()));
    }
    if stats::variance(returns) <= 1e-14 * stats::mean(returns).abs().max(1.0).powi(2) {
        return Err(Error::DegenerateVariance("return series is constant".into()));
    }
    let n = returns.len() as f64;
    let objective = |u: &[f64]| -log_likelihood(returns, spec.family, &unpack(&spec, u)) / n;

    let base = start_vector_for(&spec, returns);
    let noise = Normal::new(0.0, opts.perturbation).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut start_lls = Vec::with_capacity(opts.starts);
    let mut any_converged = false;
    for k in 0..opts.starts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(opts.seed, k as u64));
        let mut start = base.clone();
        // infeasible perturbations are redrawn
        for attempt in 0..20 {
            if k == 0 && attempt == 0 {
                break;
            }
            start = base.iter().map(|b| b + noise.sample(&mut rng)).collect();
            if objective(&start).is_finite() {
                break;
            }
        }
        let v0 = objective(&start);
        if !v0.is_finite() {
            continue;
        }
        start_lls.push(-v0 * n);
        let m = minimize(objective, &start, opts.nelder_mead, opts.bfgs);
        if !m.value.is_finite() {
            continue;
        }
        any_converged |= m.converged;
        if best.as_ref().is_none_or(|(v, _)| m.value < *v) {
            best = Some((m.value, m.x));
        }
    }
    let Some((_, u)) = best.filter(|_| any_converged) else {
        return Err(Error::NonConvergence(format!("{spec}: no start converged")));
    };
    let params = unpack(&spec, &u);
    let filtered = filter(returns, spec.family, &params)
        .ok_or_else(|| Error::NonConvergence(format!("{spec}: degenerate variance path at optimum")))?;
    let ll = log_likelihood(returns, spec.family, &params);
    Ok(VolFit {
        spec,
        bic: -2.0 * ll + param_count(&spec) as f64 * n.ln(),
        log_likelihood: ll,
        std_residuals: filtered.std_residuals(),
        sigma2: filtered.sigma2,
        params,
        start_log_likelihoods: start_lls,
        diagnostics: None,
        flag: FitFlag::Ok,
    })
}

fn start_vector_for(spec: &ModelSpec, returns: &[f64]) -> Vec<f64> {
    recursion::start_vector(spec, returns)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionConfig {
    pub fit: FitOptions,
    pub pr_lags: usize,
    pub pr_reps: usize,
    pub pr_level: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            fit: FitOptions::default(),
            pr_lags: 10,
            pr_reps: 500,
            pr_level: 0.05,
        }
    }
}

/// Both portmanteau p-values; a singular autocorrelation matrix counts as a failed test.
pub fn diagnose(fit: &VolFit, cfg: &SelectionConfig, cache: &PrNullCache) -> Diagnostics {
    let p = |t| cache.pvalue(&fit.std_residuals, cfg.pr_lags, cfg.pr_reps, t).unwrap_or(f64::NAN);
    Diagnostics {
        pr_resid_p: p(Transform::Level),
        pr_sq_p: p(Transform::Squared),
    }
}

/// A fitted grid point as seen by the selection rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub total_order: usize,
    pub bic: f64,
    pub passes: bool,
}

/// Index of the selected candidate and whether it is a diagnostics fallback.
///
/// Survivors of the smallest total order win, ties broken by BIC, then by position.
/// Without survivors the overall best BIC is returned flagged.
pub fn choose(candidates: &[Candidate]) -> Option<(usize, bool)> {
    let by_bic = |a: &(usize, &Candidate), b: &(usize, &Candidate)| a.1.bic.total_cmp(&b.1.bic).then(a.0.cmp(&b.0));
    let survivor = candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| c.passes)
        .min_by(|a, b| a.1.total_order.cmp(&b.1.total_order).then_with(|| by_bic(a, b)));
    if let Some((k, _)) = survivor {
        return Some((k, false));
    }
    candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| c.bic.is_finite())
        .min_by(by_bic)
        .map(|(k, _)| (k, true))
}

/// Select a specification from `grid`.
///
/// Levels of equal total order are fitted in ascending order and evaluation stops at
/// the first level with a survivor, which gives the same answer as [`choose`] on the
/// full grid.
pub fn select_model(returns: &[f64], grid: &[ModelSpec], cfg: &SelectionConfig, cache: &PrNullCache) -> Result<VolFit> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty model grid".into()));
    }
    let mut levels: Vec<usize> = grid.iter().map(|s| s.total_order()).collect();
    levels.sort_unstable();
    levels.dedup();

    let mut fitted: Vec<VolFit> = Vec::new();
    let mut last_error = None;
    for level in levels {
        for spec in grid.iter().filter(|s| s.total_order() == level) {
            let opts = FitOptions {
                seed: mix_seed(cfg.fit.seed, spec.seed_key()),
                ..cfg.fit
            };
            match fit(returns, *spec, &opts) {
                Ok(mut f) => {
                    f.diagnostics = Some(diagnose(&f, cfg, cache));
                    fitted.push(f);
                }
                Err(e @ (Error::DegenerateVariance(_) | Error::InsufficientData(_) | Error::InvalidArgument(_))) => return Err(e),
                Err(e) => last_error = Some(e),
            }
        }
        let candidates: Vec<Candidate> = fitted.iter().map(|f| candidate(f, cfg.pr_level)).collect();
        if let Some((k, false)) = choose(&candidates) {
            return Ok(fitted.swap_remove(k));
        }
    }
    let candidates: Vec<Candidate> = fitted.iter().map(|f| candidate(f, cfg.pr_level)).collect();
    match choose(&candidates) {
        Some((k, flagged)) => {
            let mut f = fitted.swap_remove(k);
            if flagged {
                f.flag = FitFlag::DiagnosticsFailed;
            }
            Ok(f)
        }
        None => Err(last_error.unwrap_or_else(|| Error::NonConvergence("no grid specification could be fitted".into()))),
    }
}

fn candidate(f: &VolFit, level: f64) -> Candidate {
    let passes = f.diagnostics.is_some_and(|d| d.pr_resid_p > level && d.pr_sq_p > level);
    Candidate {
        total_order: f.spec.total_order(),
        bic: f.bic,
        passes,
    }
}

/// Simulate `n` returns after discarding `burn` warm-up draws.
pub fn simulate(spec: &ModelSpec, params: &ArmaGarchParams, n: usize, burn: usize, seed: u64) -> Result<Vec<f64>> {
    if !params.matches(spec) {
        return Err(Error::InvalidArgument(format!("parameters do not match {spec}")));
    }
    let dist = Sged::new(params.nu, params.xi)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = n + burn;
    let (mut eps, mut z, mut s2) = (vec![0.0; total], vec![0.0; total], vec![0.0; total]);
    let persistence: f64 = params.alpha.iter().sum::<f64>()
        + params.gamma.iter().sum::<f64>() / 2.0
        + params.beta.iter().sum::<f64>();
    let uncond = match spec.family {
        VarianceFamily::Egarch => (params.omega / (1.0 - params.beta.iter().sum::<f64>())).exp(),
        _ if persistence < 1.0 => params.omega / (1.0 - persistence),
        _ => params.omega.max(1e-6) * 100.0,
    };
    let mut ln_s2 = vec![0.0; total];
    for t in 0..total {
        let lag_eps = |k: usize| if t > k { eps[t - k - 1] } else { 0.0 };
        let lag_s2 = |l: usize| if t > l { s2[t - l - 1] } else { uncond };
        let v = match spec.family {
            VarianceFamily::Garch | VarianceFamily::Gjr => {
                let mut v = params.omega;
                for (k, a) in params.alpha.iter().enumerate() {
                    let e = lag_eps(k);
                    let w = if spec.family == VarianceFamily::Gjr && e < 0.0 { a + params.gamma[k] } else { *a };
                    v += w * e * e;
                }
                for (l, b) in params.beta.iter().enumerate() {
                    v += b * lag_s2(l);
                }
                v
            }
            VarianceFamily::Egarch => {
                let mut v = params.omega;
                for k in 0..spec.r {
                    if t > k {
                        let eta = eps[t - k - 1] / s2[t - k - 1].sqrt();
                        v += params.alpha[k] * eta.abs() + params.gamma[k] * eta;
                    }
                }
                for (l, b) in params.beta.iter().enumerate() {
                    v += b * if t > l { ln_s2[t - l - 1] } else { uncond.ln() };
                }
                ln_s2[t] = v;
                v.exp()
            }
        };
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidArgument(format!("variance path explodes at step {t}")));
        }
        s2[t] = v;
        eps[t] = v.sqrt() * dist.sample(&mut rng);
        let mut zt = eps[t];
        for (i, phi) in params.ar.iter().enumerate() {
            if t > i {
                zt += phi * z[t - i - 1];
            }
        }
        for (j, theta) in params.ma.iter().enumerate() {
            if t > j {
                zt += theta * eps[t - j - 1];
            }
        }
        z[t] = zt;
    }
    Ok(z[burn..].iter().map(|v| v + params.intercept).collect())
}

/// One row of the per-window fit report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub market: String,
    pub window: usize,
    pub p: usize,
    pub q: usize,
    pub r: usize,
    pub s: usize,
    pub family: VarianceFamily,
    pub loglik: f64,
    pub bic: f64,
    pub pr_resid_p: f64,
    pub pr_sq_p: f64,
    pub flag: FitFlag,
}

impl FitRecord {
    pub fn new(market: &str, window: usize, fit: &VolFit) -> Self {
        let d = fit.diagnostics.unwrap_or(Diagnostics { pr_resid_p: f64::NAN, pr_sq_p: f64::NAN });
        Self {
            market: market.to_string(),
            window,
            p: fit.spec.p,
            q: fit.spec.q,
            r: fit.spec.r,
            s: fit.spec.s,
            family: fit.spec.family,
            loglik: fit.log_likelihood,
            bic: fit.bic,
            pr_resid_p: d.pr_resid_p,
            pr_sq_p: d.pr_sq_p,
            flag: fit.flag,
        }
    }
}

pub fn write_fit_report<W: Write>(writer: W, records: &[FitRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for r in records {
        wtr.serialize(r)?;
    }
    if records.is_empty() {
        wtr.write_record(["market", "window", "p", "q", "r", "s", "family", "loglik", "bic", "pr_resid_p", "pr_sq_p", "flag"])?;
    }
    wtr.flush().map_err(|e| Error::io("<fit report>", e))?;
    Ok(())
}
