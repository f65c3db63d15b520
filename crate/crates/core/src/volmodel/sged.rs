//! Skewed generalized error distribution, standardized to mean 0 and variance 1.
//!
//! The symmetric GED kernel `g(z) ∝ exp(-|z|^ν)` is skewed by scaling the positive half
//! by `ξ` and the negative half by `1/ξ`, then shifted and rescaled.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sged {
    nu: f64,
    xi: f64,
    mean: f64,
    sd: f64,
    log_norm: f64,
}

impl Sged {
    pub fn new(nu: f64, xi: f64) -> Result<Self> {
        if !(nu.is_finite() && nu > 0.0 && xi.is_finite() && xi > 0.0) {
            return Err(Error::InvalidArgument(format!("skewed GED needs ν > 0 and ξ > 0, got ν = {nu}, ξ = {xi}")));
        }
        let lg1 = ln_gamma(1.0 / nu);
        let m1 = (ln_gamma(2.0 / nu) - lg1).exp();
        let m2 = (ln_gamma(3.0 / nu) - lg1).exp();
        let mean = m1 * (xi - 1.0 / xi);
        let raw2 = m2 * (xi.powi(3) + xi.powi(-3)) / (xi + 1.0 / xi);
        let var = raw2 - mean * mean;
        if !(var.is_finite() && var > 0.0) {
            return Err(Error::InvalidArgument(format!("skewed GED variance not finite for ν = {nu}, ξ = {xi}")));
        }
        let sd = var.sqrt();
        let log_norm = (2.0 / (xi + 1.0 / xi)).ln() + (nu / 2.0).ln() - lg1 + sd.ln();
        Ok(Self { nu, xi, mean, sd, log_norm })
    }

    pub fn normal() -> Self {
        Self::new(2.0, 1.0).expect("valid")
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    /// Log density of the standardized variable.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        let y = self.mean + self.sd * x;
        let z = if y >= 0.0 { y / self.xi } else { y * self.xi };
        self.log_norm - z.abs().powf(self.nu)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let g = Gamma::new(1.0 / self.nu, 1.0).expect("positive shape");
        let a = g.sample(rng).powf(1.0 / self.nu);
        let p_pos = self.xi * self.xi / (1.0 + self.xi * self.xi);
        let y = if rng.random::<f64>() < p_pos { self.xi * a } else { -a / self.xi };
        (y - self.mean) / self.sd
    }
}

/// Checked log density.
pub fn sged_logdensity(x: f64, nu: f64, xi: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite argument {x}")));
    }
    Ok(Sged::new(nu, xi)?.ln_pdf(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // composite Simpson on [a, b] with n (even) panels
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for k in 1..n {
            s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    // integrate over both sides of the kink at the mode of the unstandardized kernel
    fn moment(d: &Sged, r: i32) -> f64 {
        let kink = -d.mean / d.sd;
        let f = |x: f64| x.powi(r) * d.ln_pdf(x).exp();
        simpson(f, -60.0, kink, 200_000) + simpson(f, kink, 60.0, 200_000)
    }

    #[test]
    fn normal_at_zero() {
        let v = sged_logdensity(0.0, 2.0, 1.0).unwrap();
        assert!((v + 0.918_938_533_204_672_7).abs() < 1e-12);
        assert!((Sged::normal().ln_pdf(1.3) - (-0.5 * 1.69 - 0.918_938_533_204_672_7)).abs() < 1e-12);
    }

    #[test]
    fn integrates_to_one() {
        for (nu, xi) in [(2.0, 1.0), (1.5, 1.3), (1.1, 0.7), (4.0, 1.8), (0.9, 1.2)] {
            let d = Sged::new(nu, xi).unwrap();
            assert!((moment(&d, 0) - 1.0).abs() < 1e-6, "mass for ({nu}, {xi})");
        }
    }

    #[test]
    fn unit_variance_after_standardization() {
        let d = Sged::new(1.5, 1.3).unwrap();
        assert!(moment(&d, 1).abs() < 1e-6);
        assert!((moment(&d, 2) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn symmetric_when_unskewed() {
        let d = Sged::new(1.3, 1.0).unwrap();
        for x in [0.1, 0.7, 2.5] {
            assert!((d.ln_pdf(x) - d.ln_pdf(-x)).abs() < 1e-14);
        }
    }

    #[test]
    fn draws_are_standardized() {
        let d = Sged::new(1.4, 1.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..200_000).map(|_| d.sample(&mut rng)).collect();
        let m = crate::stats::mean(&xs);
        let v = crate::stats::variance(&xs);
        assert!(m.abs() < 0.01, "{m}");
        assert!((v - 1.0).abs() < 0.02, "{v}");
        // share of draws below the kink equals the negative-half mass 1/(1+ξ²)
        let below = xs.iter().filter(|&&x| x < -d.mean / d.sd).count() as f64 / xs.len() as f64;
        assert!((below - 1.0 / (1.0 + 2.25)).abs() < 0.005);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(sged_logdensity(0.0, 0.0, 1.0).is_err());
        assert!(sged_logdensity(0.0, 2.0, -1.0).is_err());
        assert!(sged_logdensity(f64::NAN, 2.0, 1.0).is_err());
    }
}
