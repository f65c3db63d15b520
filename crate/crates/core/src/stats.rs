//! Small numerical helpers shared across modules.

use statrs::function::erf::erfc;

/// Upper-tail probability `1 - Φ(z)` of the standard normal.
///
/// Evaluated through `erfc` so the far tail keeps full relative precision.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Standard normal distribution function `Φ(z)`.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Two-sided critical values of the standard normal at the 10%, 5% and 1% levels.
pub const Z_TWO_SIDED: [f64; 3] = [1.644_853_626_951_472_2, 1.959_963_984_540_054, 2.575_829_303_548_900_4];

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population variance (divisor `n`).
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (divisor `n - 1`).
pub fn sample_sd(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    (variance(x) * n / (n - 1.0)).sqrt()
}

/// SplitMix64 step, used to derive independent seeds from a base seed and a task key.
pub fn mix_seed(base: u64, key: u64) -> u64 {
    let mut z = base ^ key.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a seed from a base seed and a string label (e.g. a market id).
pub fn seed_for_label(base: u64, label: &str) -> u64 {
    label
        .bytes()
        .fold(mix_seed(base, 0x5eed), |acc, b| mix_seed(acc, b as u64))
}
