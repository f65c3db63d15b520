//! Spatial probit designs and a maximum-likelihood reference fit.

use gcnet::inference::{edge_slots, SlotWeights, SpatialDesign, SpatialModel};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const PROBIT_BETA: [f64; 3] = [-1.0, -0.5, 0.3];

/// Covariates of a 20-market layout: UTC closes spread over the day, US last in the list,
/// time columns standardized to mean 0 and unit variance.
pub fn layout_covariates(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let closes: Vec<i64> = (0..n).map(|_| rng.random_range(0..96) * 15).collect();
    let us = n - 1;
    let slots = edge_slots(n);
    let mut x = DMatrix::<f64>::zeros(slots.len(), 3);
    for (r, &(i, j)) in slots.iter().enumerate() {
        x[(r, 0)] = 1.0;
        x[(r, 1)] = (closes[j] - closes[i]).rem_euclid(1440) as f64;
        x[(r, 2)] = (closes[i] - closes[us]).rem_euclid(1440) as f64;
    }
    for c in 1..3 {
        let col: Vec<f64> = x.column(c).iter().copied().collect();
        let m = col.iter().sum::<f64>() / col.len() as f64;
        let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
        for r in 0..col.len() {
            x[(r, c)] = (col[r] - m) / sd;
        }
    }
    x
}

/// Draw indicators from the lag or error latent model by dense solves.
pub fn simulate_indicators(x: &DMatrix<f64>, w: &SlotWeights, model: SpatialModel, beta: &[f64], spatial: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = x.nrows();
    let a = DMatrix::<f64>::identity(m, m) - spatial * w.to_dense();
    let lu = a.lu();
    let u = DVector::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
    let xb = x * DVector::from_column_slice(beta);
    let ystar = match model {
        SpatialModel::Sar => lu.solve(&(xb + u)).expect("nonsingular"),
        SpatialModel::Sem => xb + lu.solve(&u).expect("nonsingular"),
        SpatialModel::Probit => xb + u,
    };
    ystar.iter().map(|v| if *v >= 0.0 { 1.0 } else { 0.0 }).collect()
}

pub fn design(x: DMatrix<f64>, y: Vec<f64>) -> SpatialDesign {
    SpatialDesign { y, x, names: vec!["intercept".into(), "time_in_out".into(), "time_to_us".into()] }
}

/// Maximum-likelihood probit by Newton-Raphson on the log-likelihood.
pub fn ml_probit(x: &DMatrix<f64>, y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    use statrs::distribution::{Continuous, ContinuousCDF, Normal};
    let nd = Normal::standard();
    let k = x.ncols();
    let mut b = DVector::<f64>::zeros(k);
    let mut info = DMatrix::<f64>::zeros(k, k);
    for _ in 0..100 {
        let mut grad = DVector::<f64>::zeros(k);
        info.fill(0.0);
        for r in 0..x.nrows() {
            let xr = x.row(r).transpose();
            let eta = xr.dot(&b);
            let (pdf, cdf, sf) = (nd.pdf(eta), nd.cdf(eta), nd.sf(eta));
            let g = if y[r] >= 0.5 { pdf / cdf } else { -pdf / sf };
            grad += &xr * g;
            // expected information
            info += &xr * xr.transpose() * (pdf * pdf / (cdf * sf));
        }
        let step = info.clone().cholesky().expect("positive definite").solve(&grad);
        b += &step;
        if step.amax() < 1e-12 {
            break;
        }
    }
    let cov = info.try_inverse().expect("invertible");
    (b.iter().copied().collect(), (0..k).map(|i| cov[(i, i)].sqrt()).collect())
}
