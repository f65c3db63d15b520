//! Linear time trend with heteroskedasticity and autocorrelation consistent errors.
//!
//! Quadratic-spectral kernel; the automatic bandwidth follows the Newey-West (1994)
//! plug-in rule on the slope score `t · û_t`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{normal_sf, Z_TWO_SIDED as CRITICAL};

pub const MIN_TREND_LENGTH: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bandwidth {
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendResult {
    pub n: usize,
    pub intercept: f64,
    pub slope: f64,
    pub se: f64,
    pub t: f64,
    pub p_value: f64,
    pub bandwidth: f64,
    pub stars: String,
}

/// Quadratic-spectral kernel.
pub fn qs_kernel(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        return 1.0;
    }
    let z = 6.0 * PI * x / 5.0;
    25.0 / (12.0 * PI * PI * x * x) * (z.sin() / z - z.cos())
}

pub fn stars(t: f64) -> &'static str {
    let z = t.abs();
    if z > CRITICAL[2] {
        "***"
    } else if z > CRITICAL[1] {
        "**"
    } else if z > CRITICAL[0] {
        "*"
    } else {
        ""
    }
}

fn autocov(h: &[f64], lag: usize) -> f64 {
    h[lag..].iter().zip(h).map(|(a, b)| a * b).sum::<f64>() / h.len() as f64
}

/// Newey-West (1994) plug-in bandwidth for the quadratic-spectral kernel.
pub fn nw_bandwidth(h: &[f64]) -> f64 {
    let n = h.len() as f64;
    let lags = ((4.0 * (n / 100.0).powf(2.0 / 25.0)).floor() as usize).min(h.len() - 1);
    let mut s0 = autocov(h, 0);
    let mut s2 = 0.0;
    for j in 1..=lags {
        let g = autocov(h, j);
        s0 += 2.0 * g;
        s2 += 2.0 * (j * j) as f64 * g;
    }
    if s0 == 0.0 {
        return 0.0;
    }
    1.3221 * ((s2 / s0).powi(2) * n).powf(0.2)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HacOptions {
    pub bandwidth: Bandwidth,
    /// Fit a VAR(1) to the scores, apply the kernel to its residuals and recolour.
    pub prewhite: bool,
    /// Scale the variance by `n / (n - 2)`.
    pub small_sample: bool,
}

impl HacOptions {
    pub fn with_bandwidth(bandwidth: Bandwidth) -> Self {
        Self { bandwidth, ..Self::default() }
    }
}

type Mat2 = [[f64; 2]; 2];

fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut c = [[0.0; 2]; 2];
    for r in 0..2 {
        for k in 0..2 {
            c[r][k] = a[r][0] * b[0][k] + a[r][1] * b[1][k];
        }
    }
    c
}

fn transpose(a: &Mat2) -> Mat2 {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

fn inverse(a: &Mat2) -> Option<Mat2> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if det.abs() < 1e-300 {
        return None;
    }
    Some([[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]])
}

/// Kernel-weighted sum `Σ_j k(j/bw) Γ_j` over all lags (unscaled).
fn kernel_sum(fs: [&[f64]; 2], bw: f64) -> Mat2 {
    let n = fs[0].len();
    let cross = |a: &[f64], b: &[f64], lag: usize| a[lag..].iter().zip(b).map(|(x, z)| x * z).sum::<f64>();
    let mut s = [[0.0; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            s[r][c] = cross(fs[r], fs[c], 0);
        }
    }
    if bw > 0.0 {
        for j in 1..n {
            let k = qs_kernel(j as f64 / bw);
            for r in 0..2 {
                for c in 0..2 {
                    s[r][c] += k * (cross(fs[r], fs[c], j) + cross(fs[c], fs[r], j));
                }
            }
        }
    }
    s
}

/// OLS of `y_t` on `(1, t)`, `t = 1..n`, with a kernel-weighted sandwich variance of the slope.
pub fn hac_trend(y: &[f64], bandwidth: Bandwidth) -> Result<TrendResult> {
    hac_trend_with(y, &HacOptions::with_bandwidth(bandwidth))
}

pub fn hac_trend_with(y: &[f64], opts: &HacOptions) -> Result<TrendResult> {
    let n = y.len();
    if n < MIN_TREND_LENGTH {
        return Err(Error::InsufficientData(format!("trend needs at least {MIN_TREND_LENGTH} points, got {n}")));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("trend series has non-finite values".into()));
    }
    let nf = n as f64;
    let tbar = (nf + 1.0) / 2.0;
    let ybar = y.iter().sum::<f64>() / nf;
    let sxx: f64 = (1..=n).map(|t| (t as f64 - tbar).powi(2)).sum();
    let slope = (1..=n).zip(y).map(|(t, v)| (t as f64 - tbar) * (v - ybar)).sum::<f64>() / sxx;
    let intercept = ybar - slope * tbar;
    let resid: Vec<f64> = (1..=n).zip(y).map(|(t, v)| v - intercept - slope * t as f64).collect();

    // scores x_t û_t for x_t = (1, t)
    let f0 = resid.clone();
    let f1: Vec<f64> = resid.iter().enumerate().map(|(k, u)| (k + 1) as f64 * u).collect();

    let (e0, e1, colour) = if opts.prewhite {
        // VAR(1) without intercept: f_t = A f_{t-1} + e_t
        let lagged = kernel_sum_lag1(&f0, &f1);
        let (xx, xy) = lagged;
        let a = inverse(&xx).map(|inv| transpose(&mat_mul(&inv, &xy)));
        match a {
            Some(a) => {
                let e0: Vec<f64> = (1..n).map(|t| f0[t] - a[0][0] * f0[t - 1] - a[0][1] * f1[t - 1]).collect();
                let e1: Vec<f64> = (1..n).map(|t| f1[t] - a[1][0] * f0[t - 1] - a[1][1] * f1[t - 1]).collect();
                let i_minus_a = [[1.0 - a[0][0], -a[0][1]], [-a[1][0], 1.0 - a[1][1]]];
                (e0, e1, inverse(&i_minus_a))
            }
            None => (f0, f1, None),
        }
    } else {
        (f0, f1, None)
    };
    let bw = match opts.bandwidth {
        Bandwidth::Auto => {
            let scale = if e1.len() < n { (nf / e1.len() as f64).powf(0.2) } else { 1.0 };
            nw_bandwidth(&e1) * scale
        }
        Bandwidth::Fixed(b) if b >= 0.0 => b,
        Bandwidth::Fixed(b) => return Err(Error::InvalidArgument(format!("negative bandwidth {b}"))),
    };
    let mut s = kernel_sum([&e0, &e1], bw);
    if let Some(c) = colour {
        let m = e0.len() as f64;
        s = mat_mul(&mat_mul(&c, &s), &transpose(&c));
        // rescale the residual-based sum to n observations
        for row in s.iter_mut() {
            for v in row.iter_mut() {
                *v *= nf / m;
            }
        }
    }
    // (X'X)^{-1} row for the slope
    let st: f64 = (1..=n).map(|t| t as f64).sum();
    let stt: f64 = (1..=n).map(|t| (t * t) as f64).sum();
    let det = nf * stt - st * st;
    let b = [-st / det, nf / det];
    let mut var = b[0] * b[0] * s[0][0] + 2.0 * b[0] * b[1] * s[0][1] + b[1] * b[1] * s[1][1];
    if opts.small_sample {
        var *= nf / (nf - 2.0);
    }
    let se = var.max(0.0).sqrt();
    let t = if se > 0.0 { slope / se } else { f64::NAN };
    Ok(TrendResult {
        n,
        intercept,
        slope,
        se,
        t,
        p_value: if t.is_finite() { 2.0 * normal_sf(t.abs()) } else { f64::NAN },
        bandwidth: bw,
        stars: stars(t).to_string(),
    })
}

/// `(Σ f_{t-1} f_{t-1}', Σ f_{t-1} f_t')` for the VAR(1) prewhitening regression.
fn kernel_sum_lag1(f0: &[f64], f1: &[f64]) -> (Mat2, Mat2) {
    let n = f0.len();
    let mut xx = [[0.0; 2]; 2];
    let mut xy = [[0.0; 2]; 2];
    for t in 1..n {
        let prev = [f0[t - 1], f1[t - 1]];
        let cur = [f0[t], f1[t]];
        for r in 0..2 {
            for c in 0..2 {
                xx[r][c] += prev[r] * prev[c];
                xy[r][c] += prev[r] * cur[c];
            }
        }
    }
    (xx, xy)
}
