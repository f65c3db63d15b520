//! Size and power experiments for the kernel causality test on GARCH data.

use gcnet::alignment::HongFrame;
use gcnet::causality::{test_pair, Variant};
use gcnet::stats::mix_seed;
use gcnet::volmodel::{fit, simulate, ArmaGarchParams, FitOptions, ModelSpec, VarianceFamily};
use gcnet::Result;

/// Zero-mean GARCH(1,1), Gaussian innovations.
pub fn garch11(omega: f64, alpha: f64, beta: f64) -> (ModelSpec, ArmaGarchParams) {
    let spec = ModelSpec::new(0, 0, 1, 1, VarianceFamily::Garch).expect("valid orders");
    let params = ArmaGarchParams {
        intercept: 0.0,
        ar: vec![],
        ma: vec![],
        omega,
        alpha: vec![alpha],
        gamma: vec![],
        beta: vec![beta],
        nu: 2.0,
        xi: 1.0,
    };
    (spec, params)
}

#[derive(Debug, Clone, Copy)]
pub struct Design {
    /// `y_t = coefficient · x_{t-1} + e_t`.
    pub coefficient: f64,
    pub t: usize,
    pub bandwidth: usize,
    pub level: f64,
    pub starts: usize,
}

/// Rejection frequencies of `x -> y` and `y -> x` over `reps` replications.
pub fn rejection_rates(design: Design, reps: usize, seed: u64) -> Result<(f64, f64)> {
    let (spec, params) = garch11(0.05, 0.10, 0.85);
    let opts = |s: u64| FitOptions { starts: design.starts, seed: s, ..FitOptions::default() };
    let (mut fwd, mut rev) = (0usize, 0usize);
    for r in 0..reps as u64 {
        let s = mix_seed(seed, r);
        let x = simulate(&spec, &params, design.t + 1, 500, mix_seed(s, 1))?;
        let e = simulate(&spec, &params, design.t, 500, mix_seed(s, 2))?;
        let y: Vec<f64> = (0..design.t).map(|k| design.coefficient * x[k] + e[k]).collect();
        let x = &x[1..];
        let zx = fit(x, spec, &opts(mix_seed(s, 3)))?.std_residuals;
        let zy = fit(&y, spec, &opts(mix_seed(s, 4)))?.std_residuals;
        let forward = HongFrame { source: zx.clone(), target: zy.clone() };
        let reverse = HongFrame { source: zy, target: zx };
        fwd += test_pair(&forward, "x", "y", design.bandwidth, Variant::Lagged, design.level)?.reject as usize;
        rev += test_pair(&reverse, "y", "x", design.bandwidth, Variant::Lagged, design.level)?.reject as usize;
    }
    Ok((fwd as f64 / reps as f64, rev as f64 / reps as f64))
}
