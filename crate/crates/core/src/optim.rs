//! Derivative-free minimisation and finite-difference helpers.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadOptions {
    /// Stop when every vertex lies within this distance of the best one,
    /// measured per coordinate relative to max(|x_i|, 1).
    pub rel_diameter_tol: f64,
    /// Also stop when the vertex values agree to this relative tolerance
    /// (0 disables the test).
    #[serde(default)]
    pub rel_value_tol: f64,
    /// Cap on objective evaluations (across restarts).
    pub max_evals: usize,
    /// Extra restarts from the current best point after convergence.
    pub restarts: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            rel_diameter_tol: 1e-4,
            rel_value_tol: 0.0,
            max_evals: 2000,
            restarts: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub evaluations: usize,
    pub converged: bool,
    /// Best objective value after each iteration.
    pub trace: Vec<f64>,
}

/// Nelder–Mead with dimension-adaptive coefficients. Infinite objective
/// values are allowed and simply rank last.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], steps: &[f64], opts: &NelderMeadOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let mut evals = 0usize;
    let mut trace = Vec::new();
    let mut best_x = x0.to_vec();
    let mut best_f = f(x0);
    evals += 1;
    let mut converged = false;
    for round in 0..=opts.restarts {
        let (x, fx, ok) = nm_run(&mut f, &best_x, steps, opts, &mut evals, &mut trace);
        let improved = fx < best_f - 1e-12 * (1.0 + best_f.abs());
        if fx <= best_f {
            best_x = x;
            best_f = fx;
        }
        converged = ok;
        if !ok || (round > 0 && !improved) {
            break;
        }
    }
    Minimum {
        x: best_x,
        f: best_f,
        evaluations: evals,
        converged,
        trace,
    }
}

fn nm_run<F>(
    f: &mut F,
    x0: &[f64],
    steps: &[f64],
    opts: &NelderMeadOptions,
    evals: &mut usize,
    trace: &mut Vec<f64>,
) -> (Vec<f64>, f64, bool)
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    if n == 0 {
        let v = f(x0);
        *evals += 1;
        return (Vec::new(), v, true);
    }
    let nf = n as f64;
    let (alpha, gamma, rho, sigma) = if n <= 2 {
        (1.0, 2.0, 0.5, 0.5)
    } else {
        (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf)
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)));
    *evals += 1;
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += steps[i];
        let fv = f(&v);
        *evals += 1;
        simplex.push((v, fv));
    }
    let order = |s: &mut Vec<(Vec<f64>, f64)>| {
        s.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Greater));
    };
    loop {
        order(&mut simplex);
        trace.push(simplex[0].1);
        let best = &simplex[0].0;
        let diameter = simplex[1..]
            .iter()
            .flat_map(|(v, _)| v.iter().zip(best).map(|(a, b)| (a - b).abs() / b.abs().max(1.0)))
            .fold(0.0_f64, f64::max);
        let (lo, hi) = (simplex[0].1, simplex[n].1);
        let flat = hi - lo <= opts.rel_value_tol * (lo.abs() + opts.rel_value_tol);
        if (diameter <= opts.rel_diameter_tol || flat) && lo.is_finite() {
            return (simplex[0].0.clone(), simplex[0].1, true);
        }
        if *evals >= opts.max_evals {
            return (simplex[0].0.clone(), simplex[0].1, false);
        }
        let mut centroid = vec![0.0; n];
        for (v, _) in &simplex[..n] {
            for i in 0..n {
                centroid[i] += v[i] / nf;
            }
        }
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|i| centroid[i] + t * (worst.0[i] - centroid[i])).collect() };
        let xr = along(-alpha);
        let fr = f(&xr);
        *evals += 1;
        if fr < simplex[0].1 {
            let xe = along(-gamma);
            let fe = f(&xe);
            *evals += 1;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst.1 {
            let xc = along(-rho);
            let fc = f(&xc);
            (xc, fc)
        } else {
            let xc = along(rho);
            let fc = f(&xc);
            (xc, fc)
        };
        *evals += 1;
        if fc < worst.1.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        let x_best = simplex[0].0.clone();
        for (v, fv) in simplex.iter_mut().skip(1) {
            for i in 0..n {
                v[i] = x_best[i] + sigma * (v[i] - x_best[i]);
            }
            *fv = f(v);
            *evals += 1;
        }
    }
}

/// Central-difference gradient with steps `h`.
pub fn numeric_gradient<F>(mut f: F, x: &[f64], h: &[f64]) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut g = vec![0.0; x.len()];
    let mut y = x.to_vec();
    for i in 0..x.len() {
        y[i] = x[i] + h[i];
        let fp = f(&y);
        y[i] = x[i] - h[i];
        let fm = f(&y);
        y[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h[i]);
    }
    g
}

/// Hessian by central differences of a gradient function, symmetrised.
pub fn hessian_from_gradient<G>(mut grad: G, x: &[f64], h: &[f64]) -> DMatrix<f64>
where
    G: FnMut(&[f64]) -> Vec<f64>,
{
    let n = x.len();
    let mut hm = DMatrix::zeros(n, n);
    let mut y = x.to_vec();
    for j in 0..n {
        y[j] = x[j] + h[j];
        let gp = grad(&y);
        y[j] = x[j] - h[j];
        let gm = grad(&y);
        y[j] = x[j];
        for i in 0..n {
            hm[(i, j)] = (gp[i] - gm[i]) / (2.0 * h[j]);
        }
    }
    (&hm + hm.transpose()) * 0.5
}

/// Hessian by second central differences of the function itself.
pub fn numeric_hessian<F>(mut f: F, x: &[f64], h: &[f64]) -> DMatrix<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x.len();
    let f0 = f(x);
    let mut hm = DMatrix::zeros(n, n);
    let mut y = x.to_vec();
    for i in 0..n {
        y[i] = x[i] + h[i];
        let fp = f(&y);
        y[i] = x[i] - h[i];
        let fm = f(&y);
        y[i] = x[i];
        hm[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let mut e = |si: f64, sj: f64| {
                y[i] = x[i] + si * h[i];
                y[j] = x[j] + sj * h[j];
                let v = f(&y);
                y[i] = x[i];
                y[j] = x[j];
                v
            };
            let v = (e(1.0, 1.0) - e(1.0, -1.0) - e(-1.0, 1.0) + e(-1.0, -1.0)) / (4.0 * h[i] * h[j]);
            hm[(i, j)] = v;
            hm[(j, i)] = v;
        }
    }
    hm
}

/// Newton iterations with step halving, used to polish a simplex optimum
/// when the gradient is available.
pub fn newton_polish<F, G>(mut f: F, mut grad: G, x0: &[f64], h: &[f64], iters: usize) -> (Vec<f64>, f64)
where
    F: FnMut(&[f64]) -> f64,
    G: FnMut(&[f64]) -> Vec<f64>,
{
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    for _ in 0..iters {
        let g = grad(&x);
        let hm = hessian_from_gradient(&mut grad, &x, h);
        let Some(chol) = hm.cholesky() else { break };
        let gnorm = g.iter().map(|v| v * v).sum::<f64>();
        let step = chol.solve(&DVector::from_vec(g));
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..30 {
            let y: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a - t * s).collect();
            let fy = f(&y);
            // Near the optimum f changes below rounding; accept on a smaller gradient.
            let flat = fy <= fx + 1e-13 * (1.0 + fx.abs())
                && grad(&y).iter().map(|v| v * v).sum::<f64>() < gnorm;
            if fy < fx || flat {
                moved = true;
                x = y;
                fx = fy.min(fx);
                break;
            }
            t *= 0.5;
        }
        if !moved || step.norm() * t < 1e-13 {
            break;
        }
    }
    (x, fx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn minimises_rosenbrock() {
        let opts = NelderMeadOptions {
            rel_diameter_tol: 1e-8,
            rel_value_tol: 0.0,
            max_evals: 5000,
            restarts: 2,
        };
        let m = nelder_mead(rosenbrock, &[-1.2, 1.0], &[0.5, 0.5], &opts);
        assert!(m.converged);
        assert_abs_diff_eq!(m.x[0], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(m.x[1], 1.0, epsilon = 1e-6);
        assert!(m.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn handles_infinite_regions_and_budget() {
        let f = |x: &[f64]| if x[0] < 0.0 { f64::INFINITY } else { (x[0] - 2.0).powi(2) + x[1].powi(2) + x[2].powi(2) };
        let m = nelder_mead(f, &[1.0, 1.0, 1.0], &[1.0; 3], &NelderMeadOptions::default());
        assert!(m.converged);
        assert_abs_diff_eq!(m.x[0], 2.0, epsilon = 1e-3);
        let capped = NelderMeadOptions {
            max_evals: 10,
            ..Default::default()
        };
        let m = nelder_mead(f, &[1.0, 1.0, 1.0], &[1.0; 3], &capped);
        assert!(!m.converged);
    }

    #[test]
    fn derivatives_of_quadratic() {
        let f = |x: &[f64]| 3.0 * x[0] * x[0] + x[0] * x[1] + 2.0 * x[1] * x[1];
        let g = numeric_gradient(f, &[1.0, 2.0], &[1e-5, 1e-5]);
        assert_abs_diff_eq!(g[0], 8.0, epsilon = 1e-8);
        assert_abs_diff_eq!(g[1], 9.0, epsilon = 1e-8);
        let h = numeric_hessian(f, &[1.0, 2.0], &[1e-3, 1e-3]);
        assert_abs_diff_eq!(h, DMatrix::from_row_slice(2, 2, &[6.0, 1.0, 1.0, 4.0]), epsilon = 1e-6);
        let grad = |x: &[f64]| vec![6.0 * x[0] + x[1], x[0] + 4.0 * x[1] - 1.0];
        let f2 = |x: &[f64]| f(x) - x[1];
        let (x, _) = newton_polish(f2, grad, &[5.0, -3.0], &[1e-4, 1e-4], 5);
        assert_abs_diff_eq!(x[0], -1.0 / 23.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], 6.0 / 23.0, epsilon = 1e-12);
    }
}
