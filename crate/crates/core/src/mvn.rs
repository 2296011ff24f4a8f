//! Multivariate normal distribution function.
//!
//! Dimensions one and two are evaluated in closed form / by deterministic
//! quadrature. Higher dimensions use Genz's separation-of-variables
//! transform with prioritised variable reordering, integrated by a
//! randomly shifted Kronecker lattice with the baker's transform and
//! antithetic pairs. Shifts come from a seeded generator, so a call with the
//! same seed is a deterministic function of its inputs.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;

const PRIMES: [u32; 48] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193,
    197, 199, 211, 223,
];

/// Largest supported dimension after marginalisation of infinite limits.
pub const MAX_DIM: usize = PRIMES.len() + 1;

/// Relative variance below which a coordinate is treated as degenerate.
const DEGENERATE_VAR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvnOptions {
    /// Target absolute error (three standard errors across shifts).
    pub abs_tol: f64,
    /// Cap on integrand evaluations (each antithetic pair counts as two).
    pub max_samples: usize,
    /// Number of independent random shifts.
    pub shifts: usize,
    /// Lattice points per shift in the first pass.
    pub min_points: usize,
    /// When set, use exactly this many points per shift and skip adaptation.
    pub fixed_points: Option<usize>,
    pub seed: u64,
}

impl Default for MvnOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-5,
            max_samples: 2_000_000,
            shifts: 12,
            min_points: 64,
            fixed_points: None,
            seed: 0x5eed_cafe,
        }
    }
}

impl MvnOptions {
    /// Fixed-budget options for likelihood evaluation inside an optimizer.
    pub fn fixed(points_per_shift: usize, shifts: usize, seed: u64) -> Self {
        Self {
            fixed_points: Some(points_per_shift),
            shifts,
            seed,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MvnEstimate {
    pub prob: f64,
    /// Error estimate (0 for closed-form dimensions).
    pub error: f64,
    /// False when the sample budget ran out before `abs_tol` was met.
    pub converged: bool,
}

impl MvnEstimate {
    fn exact(prob: f64) -> Self {
        Self {
            prob,
            error: 0.0,
            converged: true,
        }
    }
}

/// P(Z ≤ upper) for Z ~ N(0, cov).
///
/// `+∞` limits are marginalised out; a `−∞` limit gives probability 0.
/// Coordinates with zero variance are constant zero and contribute an
/// indicator.
pub fn mvn_cdf(upper: &[f64], cov: &DMatrix<f64>, opts: &MvnOptions) -> Result<MvnEstimate> {
    let n = upper.len();
    if cov.nrows() != n || cov.ncols() != n {
        return Err(Error::input(format!(
            "dimension mismatch: {} limits for a {}x{} covariance",
            n,
            cov.nrows(),
            cov.ncols()
        )));
    }
    if upper.iter().any(|v| v.is_nan()) {
        return Err(Error::input("NaN integration limit"));
    }
    let max_var = (0..n).map(|i| cov[(i, i)]).fold(0.0_f64, f64::max);
    let var_floor = DEGENERATE_VAR * max_var.max(1e-300);
    let mut keep = Vec::with_capacity(n);
    for i in 0..n {
        let var = cov[(i, i)];
        if var < -1e-8 * max_var.max(1.0) || var.is_nan() {
            return Err(Error::domain("covariance has a negative variance"));
        }
        if upper[i] == f64::INFINITY {
            continue;
        }
        if upper[i] == f64::NEG_INFINITY {
            return Ok(MvnEstimate::exact(0.0));
        }
        if var <= var_floor {
            if upper[i] < 0.0 {
                return Ok(MvnEstimate::exact(0.0));
            }
            continue;
        }
        keep.push(i);
    }
    let d = keep.len();
    if d > MAX_DIM {
        return Err(Error::input(format!("dimension {d} exceeds supported maximum {MAX_DIM}")));
    }
    let sd: Vec<f64> = keep.iter().map(|&i| cov[(i, i)].sqrt()).collect();
    let b: Vec<f64> = keep.iter().zip(&sd).map(|(&i, s)| upper[i] / s).collect();
    let corr = DMatrix::from_fn(d, d, |r, c| {
        if r == c {
            1.0
        } else {
            cov[(keep[r], keep[c])] / (sd[r] * sd[c])
        }
    });
    match d {
        0 => Ok(MvnEstimate::exact(1.0)),
        1 => Ok(MvnEstimate::exact(normal::cdf(b[0]))),
        2 => Ok(MvnEstimate::exact(normal::bvn_cdf(b[0], b[1], corr[(0, 1)]))),
        _ => Ok(qmc(&b, &corr, opts)),
    }
}

/// Reordered Cholesky factor and limits for the separation-of-variables
/// integrand.
struct Sov {
    b: Vec<f64>,
    /// Packed lower triangle, row by row: row i is l[i(i+1)/2 ..][..=i].
    l: Vec<f64>,
}

fn truncated_mean(z: f64) -> f64 {
    // E[Z | Z < z] for standard normal Z.
    let p = normal::cdf(z);
    if p > 1e-300 {
        -normal::pdf(z) / p
    } else {
        z
    }
}

fn reorder(b_in: &[f64], corr: &DMatrix<f64>) -> Sov {
    let d = b_in.len();
    let mut c = corr.clone();
    let mut b = b_in.to_vec();
    let mut l = vec![vec![0.0; d]; d];
    let mut y = vec![0.0; d];
    for i in 0..d {
        // Pick the remaining variable with the smallest conditional probability.
        let mut best = i;
        let mut best_key = (f64::INFINITY, f64::INFINITY);
        for j in i..d {
            let mut s = c[(j, j)];
            let mut mean = 0.0;
            for k in 0..i {
                s -= l[j][k] * l[j][k];
                mean += l[j][k] * y[k];
            }
            let p = if s > DEGENERATE_VAR {
                normal::cdf((b[j] - mean) / s.sqrt())
            } else if b[j] - mean >= 0.0 {
                1.0
            } else {
                0.0
            };
            let key = (p, b[j]);
            if key.0 < best_key.0 || (key.0 == best_key.0 && key.1 < best_key.1) {
                best_key = key;
                best = j;
            }
        }
        if best != i {
            c.swap_rows(i, best);
            c.swap_columns(i, best);
            b.swap(i, best);
            l.swap(i, best);
        }
        let mut s = c[(i, i)];
        let mut mean = 0.0;
        for k in 0..i {
            s -= l[i][k] * l[i][k];
            mean += l[i][k] * y[k];
        }
        if s > DEGENERATE_VAR {
            let lii = s.sqrt();
            l[i][i] = lii;
            for j in (i + 1)..d {
                let mut v = c[(j, i)];
                for k in 0..i {
                    v -= l[j][k] * l[i][k];
                }
                l[j][i] = v / lii;
            }
            y[i] = truncated_mean((b[i] - mean) / lii);
        } else {
            l[i][i] = 0.0;
            for row in l.iter_mut().skip(i + 1) {
                row[i] = 0.0;
            }
            y[i] = 0.0;
        }
    }
    let packed = l.iter().enumerate().flat_map(|(i, row)| row[..=i].to_vec()).collect();
    Sov { b, l: packed }
}

impl Sov {
    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        let start = i * (i + 1) / 2;
        &self.l[start..start + i + 1]
    }

    fn integrand(&self, w: &[f64], y: &mut [f64]) -> f64 {
        let d = self.b.len();
        let mut e = self.limit_prob(0, 0.0);
        let mut prod = e;
        let mut diag_prev = self.l[0];
        for i in 1..d {
            if prod == 0.0 {
                return 0.0;
            }
            let prev = i - 1;
            y[prev] = if diag_prev > 0.0 {
                let u = (w[prev] * e).clamp(1e-300, 1.0 - 1e-16);
                normal::quantile(u)
            } else {
                0.0
            };
            let row = self.row(i);
            let mean: f64 = row[..i].iter().zip(&y[..i]).map(|(a, b)| a * b).sum();
            diag_prev = row[i];
            e = self.limit_prob(i, mean);
            prod *= e;
        }
        prod
    }

    #[inline]
    fn limit_prob(&self, i: usize, mean: f64) -> f64 {
        let lii = self.row(i)[i];
        let slack = self.b[i] - mean;
        if lii > 0.0 {
            normal::cdf_fast(slack / lii)
        } else if slack >= 0.0 {
            1.0
        } else {
            0.0
        }
    }
}

fn qmc(b: &[f64], corr: &DMatrix<f64>, opts: &MvnOptions) -> MvnEstimate {
    let sov = reorder(b, corr);
    let d = b.len();
    let dim = d - 1;
    let shifts = opts.shifts.max(1);
    let gen: Vec<f64> = PRIMES[..dim].iter().map(|&p| (p as f64).sqrt().fract()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (d as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let shift_vecs: Vec<Vec<f64>> = (0..shifts)
        .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
        .collect();

    let mut sums = vec![0.0; shifts];
    let mut done = 0usize;
    let mut target = opts.fixed_points.unwrap_or(opts.min_points).max(1);
    let mut w = vec![0.0; dim];
    let mut wa = vec![0.0; dim];
    let mut y = vec![0.0; d];
    loop {
        for (s, shift) in shift_vecs.iter().enumerate() {
            let mut acc = 0.0;
            for k in (done + 1)..=target {
                let kf = k as f64;
                for j in 0..dim {
                    let v = kf * gen[j] + shift[j];
                    let x = v - (v as u64) as f64;
                    let t = (2.0 * x - 1.0).abs();
                    w[j] = t;
                    wa[j] = 1.0 - t;
                }
                acc += 0.5 * (sov.integrand(&w, &mut y) + sov.integrand(&wa, &mut y));
            }
            sums[s] += acc;
        }
        done = target;
        let means: Vec<f64> = sums.iter().map(|s| s / done as f64).collect();
        let mean = means.iter().sum::<f64>() / shifts as f64;
        let error = if shifts > 1 {
            let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (shifts as f64 - 1.0);
            3.0 * (var / shifts as f64).sqrt()
        } else {
            f64::NAN
        };
        let converged = error <= opts.abs_tol;
        if opts.fixed_points.is_some() || converged || 4 * done * shifts > opts.max_samples {
            return MvnEstimate {
                prob: mean.clamp(0.0, 1.0),
                error,
                converged,
            };
        }
        target = done * 2;
    }
}
