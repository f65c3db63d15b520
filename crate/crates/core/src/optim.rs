//! Derivative-free and quasi-Newton minimisation of smooth objectives on `R^n`.
//!
//! Non-finite objective values are treated as `+inf`, so a parameter map may signal
//! an infeasible point by returning `NaN`.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_iter: usize,
    /// Stop when the simplex value spread falls below `reltol · (|f_best| + reltol)`.
    pub reltol: f64,
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            reltol: 1e-8,
            initial_step: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Gradient infinity-norm at convergence.
    pub gtol: f64,
    /// Relative decrease of an accepted step below which the search stops.
    pub reltol: f64,
    /// Relative step of the central-difference gradient.
    pub fd_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            gtol: 1e-5,
            reltol: 1e-10,
            fd_step: 1e-5,
        }
    }
}

fn eval<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64]) -> f64 {
    let v = f(x);
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Adaptive Nelder-Mead (coefficients scaled with the dimension).
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: NelderMeadOptions) -> Minimum {
    let n = x0.len();
    if n == 0 {
        let value = eval(&mut f, x0);
        return Minimum { x: vec![], value, iterations: 0, converged: value.is_finite() };
    }
    let nf = n as f64;
    let (alpha, gamma, rho, sigma) = (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf);

    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for k in 0..n {
        let mut v = x0.to_vec();
        v[k] += if v[k].abs() > 1e-8 { opts.initial_step * v[k].abs().max(1.0) } else { opts.initial_step };
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(&mut f, v)).collect();

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&k| simplex[k].clone()).collect();
        values = order.iter().map(|&k| values[k]).collect();

        if values[n].is_finite() && values[n] - values[0] <= opts.reltol * (values[0].abs() + opts.reltol) {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..n).map(|d| simplex[..n].iter().map(|v| v[d]).sum::<f64>() / nf).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|d| centroid[d] + t * (simplex[n][d] - centroid[d])).collect() };

        let xr = along(-alpha);
        let fr = eval(&mut f, &xr);
        if fr < values[0] {
            let xe = along(-alpha * gamma);
            let fe = eval(&mut f, &xe);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[n] {
            let xc = along(-alpha * rho);
            let fc = eval(&mut f, &xc);
            (xc, fc)
        } else {
            let xc = along(rho);
            let fc = eval(&mut f, &xc);
            (xc, fc)
        };
        if fc < values[n].min(fr) {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        for k in 1..=n {
            for d in 0..n {
                simplex[k][d] = simplex[0][d] + sigma * (simplex[k][d] - simplex[0][d]);
            }
            values[k] = eval(&mut f, &simplex[k]);
        }
    }
    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).expect("non-empty simplex");
    Minimum {
        x: simplex[best].clone(),
        value: values[best],
        iterations,
        converged,
    }
}

/// Central-difference gradient.
pub fn numerical_gradient<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], rel_step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            let h = rel_step * x[k].abs().max(1.0);
            probe[k] = x[k] + h;
            let up = eval(f, &probe);
            probe[k] = x[k] - h;
            let down = eval(f, &probe);
            probe[k] = x[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// BFGS with finite-difference gradients and Armijo backtracking.
pub fn bfgs<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: BfgsOptions) -> Minimum {
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let mut fx = eval(&mut f, x.as_slice());
    if n == 0 || !fx.is_finite() {
        return Minimum { x: x0.to_vec(), value: fx, iterations: 0, converged: n == 0 && fx.is_finite() };
    }
    let mut g = DVector::from_vec(numerical_gradient(&mut f, x.as_slice(), opts.fd_step));
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut fresh = true;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        if g.iter().any(|v| !v.is_finite()) {
            break;
        }
        if g.amax() <= opts.gtol {
            converged = true;
            break;
        }
        iterations += 1;
        let mut dir = -(&h * &g);
        let mut slope = g.dot(&dir);
        if slope >= 0.0 {
            h = DMatrix::identity(n, n);
            fresh = true;
            dir = -g.clone();
            slope = g.dot(&dir);
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &x + t * &dir;
            let ft = eval(&mut f, trial.as_slice());
            if ft <= fx + 1e-4 * t * slope {
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            if fresh {
                // steepest descent makes no progress: accuracy limit of the objective
                converged = true;
                break;
            }
            h = DMatrix::identity(n, n);
            fresh = true;
            continue;
        };
        let g_new = DVector::from_vec(numerical_gradient(&mut f, x_new.as_slice(), opts.fd_step));
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let eye = DMatrix::<f64>::identity(n, n);
            let left = &eye - rho * &s * y.transpose();
            let right = &eye - rho * &y * s.transpose();
            h = &left * &h * &right + rho * &s * s.transpose();
            fresh = false;
        }
        let stalled = fx - f_new <= opts.reltol * (fx.abs() + opts.reltol);
        x = x_new;
        fx = f_new;
        g = g_new;
        if stalled {
            converged = true;
            break;
        }
    }
    Minimum {
        x: x.as_slice().to_vec(),
        value: fx,
        iterations,
        converged,
    }
}

/// Nelder-Mead to reach the basin, then BFGS to polish.
pub fn minimize<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], nm: NelderMeadOptions, qn: BfgsOptions) -> Minimum {
    let coarse = nelder_mead(&mut f, x0, nm);
    let fine = bfgs(&mut f, &coarse.x, qn);
    if fine.value <= coarse.value {
        Minimum {
            iterations: coarse.iterations + fine.iterations,
            converged: fine.converged || coarse.converged,
            ..fine
        }
    } else {
        coarse
    }
}
