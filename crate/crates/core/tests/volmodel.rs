use gcnet::volmodel::{
    fit, log_likelihood, select_model, simulate, ArmaGarchParams, FitFlag, FitOptions, ModelSpec, PrNullCache, SelectionConfig,
    VarianceFamily,
};
use statrs::function::gamma::gamma;

/// Straight-line ARMA(1,1)-GARCH(1,1) skewed-GED log-likelihood, written independently of
/// the library recursion.
fn brute_force_loglik(r: &[f64], mu: f64, phi: f64, theta: f64, omega: f64, alpha: f64, beta: f64, nu: f64, xi: f64) -> f64 {
    let n = r.len();
    let mut eps = vec![0.0; n];
    for t in 0..n {
        let z_prev = if t == 0 { 0.0 } else { r[t - 1] - mu };
        let e_prev = if t == 0 { 0.0 } else { eps[t - 1] };
        eps[t] = (r[t] - mu) - phi * z_prev - theta * e_prev;
    }
    let e_mean = eps.iter().sum::<f64>() / n as f64;
    let s0 = eps.iter().map(|e| (e - e_mean) * (e - e_mean)).sum::<f64>() / n as f64;

    let m1 = gamma(2.0 / nu) / gamma(1.0 / nu);
    let m2 = gamma(3.0 / nu) / gamma(1.0 / nu);
    let m = m1 * (xi - 1.0 / xi);
    let sd = (m2 * (xi.powi(3) + xi.powi(-3)) / (xi + 1.0 / xi) - m * m).sqrt();
    let c = nu / (2.0 * gamma(1.0 / nu));
    let dens = |x: f64| {
        let y = m + sd * x;
        let z = if y < 0.0 { y * xi } else { y / xi };
        sd * 2.0 / (xi + 1.0 / xi) * c * (-z.abs().powf(nu)).exp()
    };

    let mut ll = 0.0;
    let mut s2_prev = s0;
    let mut e_prev = 0.0;
    for t in 0..n {
        let s2 = omega + alpha * e_prev * e_prev + beta * s2_prev;
        ll += dens(eps[t] / s2.sqrt()).ln() - 0.5 * s2.ln();
        s2_prev = s2;
        e_prev = eps[t];
    }
    ll
}

#[test]
fn likelihood_matches_brute_force() {
    let spec = ModelSpec::new(1, 1, 1, 1, VarianceFamily::Garch).unwrap();
    let p = ArmaGarchParams {
        intercept: 0.03,
        ar: vec![0.4],
        ma: vec![-0.2],
        omega: 0.05,
        alpha: vec![0.1],
        gamma: vec![],
        beta: vec![0.85],
        nu: 1.4,
        xi: 1.2,
    };
    let r = simulate(&spec, &p, 500, 200, 17).unwrap();
    let lib = log_likelihood(&r, VarianceFamily::Garch, &p);
    let oracle = brute_force_loglik(&r, 0.03, 0.4, -0.2, 0.05, 0.1, 0.85, 1.4, 1.2);
    assert!((lib - oracle).abs() < 1e-8, "{lib} vs {oracle}");
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[test]
fn garch_parameters_recovered() {
    let spec = ModelSpec::new(0, 0, 1, 1, VarianceFamily::Garch).unwrap();
    let truth = ArmaGarchParams {
        intercept: 0.0,
        ar: vec![],
        ma: vec![],
        omega: 0.05,
        alpha: vec![0.10],
        gamma: vec![],
        beta: vec![0.85],
        nu: 2.0,
        xi: 1.0,
    };
    let mut err = (vec![], vec![], vec![]);
    for seed in 0..20 {
        let r = simulate(&spec, &truth, 2000, 500, 100 + seed).unwrap();
        let f = fit(&r, spec, &FitOptions { seed, ..FitOptions::default() }).unwrap();
        err.0.push((f.params.omega - 0.05).abs());
        err.1.push((f.params.alpha[0] - 0.10).abs());
        err.2.push((f.params.beta[0] - 0.85).abs());
        let m = gcnet::stats::mean(&f.std_residuals);
        let v = gcnet::stats::variance(&f.std_residuals);
        assert!(m.abs() < 0.1 && (v - 1.0).abs() < 0.15, "residual moments {m} {v}");
    }
    let (eo, ea, eb) = (median(err.0), median(err.1), median(err.2));
    assert!(eo <= 0.05 && ea <= 0.06 && eb <= 0.08, "median errors ω {eo}, α {ea}, β {eb}");
}

#[test]
fn gjr_fit_never_worse_than_garch() {
    let spec = ModelSpec::new(1, 1, 1, 1, VarianceFamily::Garch).unwrap();
    let truth = ArmaGarchParams {
        intercept: 0.05,
        ar: vec![0.1],
        ma: vec![0.0],
        omega: 0.1,
        alpha: vec![0.08],
        gamma: vec![],
        beta: vec![0.88],
        nu: 1.5,
        xi: 0.9,
    };
    for seed in 0..3 {
        let r = simulate(&spec, &truth, 65, 300, seed).unwrap();
        let g = fit(&r, spec, &FitOptions { seed, ..FitOptions::default() }).unwrap();
        let gjr_spec = ModelSpec { family: VarianceFamily::Gjr, ..spec };
        let j = fit(&r, gjr_spec, &FitOptions { seed, ..FitOptions::default() }).unwrap();
        // the asymmetric model contains the symmetric one, up to optimizer tolerance
        assert!(j.log_likelihood >= g.log_likelihood - 1e-3 * g.log_likelihood.abs().max(1.0), "{} < {}", j.log_likelihood, g.log_likelihood);
    }
}

#[test]
fn fallback_when_every_fit_fails_diagnostics() {
    // alternating variance regimes: squared residuals keep a negative lag-1 correlation no
    // non-negative GARCH recursion can absorb
    let mut state = 12345u64;
    let mut uniform = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let r: Vec<f64> = (0..200)
        .map(|t| {
            let g = (-2.0 * uniform().ln()).sqrt() * (2.0 * std::f64::consts::PI * uniform()).cos();
            g * if t % 2 == 0 { 0.2 } else { 3.0 }
        })
        .collect();
    let grid: Vec<ModelSpec> = ModelSpec::grid(&[VarianceFamily::Garch], false).into_iter().filter(|s| s.total_order() <= 5).collect();
    let cfg = SelectionConfig { pr_reps: 200, ..SelectionConfig::default() };
    let f = select_model(&r, &grid, &cfg, &PrNullCache::new(1)).unwrap();
    assert_eq!(f.flag, FitFlag::DiagnosticsFailed);
    let d = f.diagnostics.unwrap();
    assert!(d.pr_sq_p <= 0.05);
}

#[test]
fn well_specified_series_selects_lowest_order() {
    let spec = ModelSpec::new(1, 1, 1, 1, VarianceFamily::Garch).unwrap();
    let truth = ArmaGarchParams {
        intercept: 0.0,
        ar: vec![0.05],
        ma: vec![0.0],
        omega: 0.1,
        alpha: vec![0.05],
        gamma: vec![],
        beta: vec![0.9],
        nu: 1.8,
        xi: 1.0,
    };
    let r = simulate(&spec, &truth, 65, 300, 3).unwrap();
    let grid = ModelSpec::grid(&VarianceFamily::ALL, false);
    let f = select_model(&r, &grid, &SelectionConfig::default(), &PrNullCache::new(2)).unwrap();
    assert_eq!(f.flag, FitFlag::Ok);
    assert_eq!(f.spec.total_order(), 4);
}
