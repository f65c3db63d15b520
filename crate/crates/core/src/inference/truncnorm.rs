//! One-sided truncated normal draws.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

/// `Z ~ N(0, 1)` conditioned on `Z >= a`.
///
/// Naive rejection below zero (acceptance at least one half), exponential proposals otherwise.
pub fn std_lower<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    if a < 0.0 {
        loop {
            let z: f64 = StandardNormal.sample(rng);
            if z >= a {
                return z;
            }
        }
    }
    let rate = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let e: f64 = Exp1.sample(rng);
        let z = a + e / rate;
        let u: f64 = rng.random();
        if u <= (-0.5 * (z - rate) * (z - rate)).exp() {
            return z;
        }
    }
}

/// `X ~ N(mean, sd²)` restricted to `X >= 0` when `positive`, else to `X < 0`.
pub fn sign_constrained<R: Rng + ?Sized>(mean: f64, sd: f64, positive: bool, rng: &mut R) -> f64 {
    if positive {
        mean + sd * std_lower(-mean / sd, rng)
    } else {
        let x = mean - sd * std_lower(mean / sd, rng);
        // the boundary has probability zero but may appear through rounding
        if x >= 0.0 {
            -f64::MIN_POSITIVE
        } else {
            x
        }
    }
}
