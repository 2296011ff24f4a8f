//! Exact simulation of Hüsler–Reiss max-stable vectors and of the
//! associated multivariate Pareto distribution.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::HrStructure;
use crate::linalg;
use crate::margins::GevParams;
use crate::mvn::MvnOptions;
use crate::stats;

/// Marginal scale of simulated draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum MarginMode {
    Frechet,
    Gev { params: Vec<GevParams> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSpec {
    pub hr: HrStructure,
    pub n: usize,
    pub seed: u64,
    pub margins: MarginMode,
}

/// Log-normal spectral vectors normalised at each anchor.
struct SpectralSampler {
    gamma: DMatrix<f64>,
    /// Cholesky factor of Σ^{(k)} for every anchor k.
    chol: Vec<DMatrix<f64>>,
}

impl SpectralSampler {
    fn new(hr: &HrStructure) -> Result<Self> {
        let m = hr.dim();
        let chol = (0..m)
            .map(|k| {
                if m == 1 {
                    Ok(DMatrix::zeros(0, 0))
                } else {
                    linalg::psd_cholesky(&hr.sigma(k)?)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            gamma: hr.gamma().clone(),
            chol,
        })
    }

    fn dim(&self) -> usize {
        self.gamma.nrows()
    }

    /// exp(W^{(k)} − Γ(·, k)/2) with W^{(k)}_k = 0.
    fn draw(&self, k: usize, rng: &mut ChaCha8Rng, z: &mut [f64], out: &mut [f64]) {
        let m = self.dim();
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let l = &self.chol[k];
        let mut r = 0;
        for j in 0..m {
            if j == k {
                out[j] = 1.0;
                continue;
            }
            let mut w = 0.0;
            for c in 0..=r {
                w += l[(r, c)] * z[c];
            }
            out[j] = (w - 0.5 * self.gamma[(j, k)]).exp();
            r += 1;
        }
    }
}

fn draw_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Exact max-stable draws with unit Fréchet margins (extremal functions).
pub fn sample_hr(hr: &HrStructure, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::input("sample size must be positive"));
    }
    let s = SpectralSampler::new(hr)?;
    let m = s.dim();
    Ok((0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = draw_rng(seed, i);
            let mut z = vec![0.0; m.saturating_sub(1)];
            let mut y = vec![0.0; m];
            let mut out = vec![0.0; m];
            for k in 0..m {
                let mut e: f64 = rng.sample(Exp1);
                let mut zeta = 1.0 / e;
                while zeta > out[k] {
                    s.draw(k, &mut rng, &mut z, &mut y);
                    if (0..k).all(|j| zeta * y[j] < out[j]) {
                        for j in 0..m {
                            out[j] = out[j].max(zeta * y[j]);
                        }
                    }
                    e += rng.sample::<f64, _>(Exp1);
                    zeta = 1.0 / e;
                }
            }
            out
        })
        .collect())
}

/// Draws from the exponent measure restricted to {max_j x_j > 1} and
/// normalised, i.e. P(X ∈ A) = ν(A)/V(1, …, 1).
pub fn sample_pareto(hr: &HrStructure, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::input("sample size must be positive"));
    }
    let s = SpectralSampler::new(hr)?;
    let m = s.dim();
    Ok((0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = draw_rng(seed, i);
            let mut z = vec![0.0; m.saturating_sub(1)];
            let mut y = vec![0.0; m];
            loop {
                let k = rng.random_range(0..m);
                s.draw(k, &mut rng, &mut z, &mut y);
                let r = 1.0 / (1.0 - rng.random::<f64>());
                let above = y.iter().filter(|v| r * **v > 1.0).count();
                if rng.random::<f64>() * above as f64 <= 1.0 {
                    return y.iter().map(|v| r * v).collect();
                }
            }
        })
        .collect())
}

/// Monte Carlo estimate of ν(A) for a set A inside {max_j x_j > 1}, with
/// its standard error. Uses ν(A) = m·E[1_A(X)/N(X)] where X = R·Y^{(K)},
/// K is a uniform anchor, R is standard Pareto and N counts the
/// coordinates of X above one.
pub fn measure_mc<F>(hr: &HrStructure, n: usize, seed: u64, in_set: F) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> bool + Sync,
{
    if n < 2 {
        return Err(Error::input("Monte Carlo needs at least two draws"));
    }
    let s = SpectralSampler::new(hr)?;
    let m = s.dim();
    let vals: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = draw_rng(seed, i);
            let mut z = vec![0.0; m.saturating_sub(1)];
            let mut y = vec![0.0; m];
            let k = rng.random_range(0..m);
            s.draw(k, &mut rng, &mut z, &mut y);
            let r = 1.0 / (1.0 - rng.random::<f64>());
            for v in y.iter_mut() {
                *v *= r;
            }
            if !in_set(&y) {
                return 0.0;
            }
            let above = y.iter().filter(|v| **v > 1.0).count().max(1);
            m as f64 / above as f64
        })
        .collect();
    let mean = stats::mean(&vals);
    let se = stats::std_dev(&vals) / (n as f64).sqrt();
    Ok((mean, se))
}

/// Pareto-scale events whose law above `u0` is exactly the normalised
/// exponent measure: with probability V(u0·1) an event is u0·Y with Y from
/// [`sample_pareto`], otherwise every coordinate is uniform on (1, u0).
/// Needs V(u0·1) ≤ 1.
pub fn sample_tail_events(hr: &HrStructure, n: usize, u0: f64, seed: u64) -> Result<Vec<Vec<f64>>> {
    let opts = MvnOptions {
        abs_tol: 1e-4,
        ..MvnOptions::default()
    };
    let v1 = crate::hr_core::HrEvaluator::new(hr.clone(), opts).exponent_measure(&vec![1.0; hr.dim()])?;
    let p = v1 / u0;
    if !(u0 > 1.0) || p > 1.0 {
        return Err(Error::domain(format!(
            "level {u0} is too low: exceedance mass {p:.3} exceeds one"
        )));
    }
    let tail = sample_pareto(hr, n, seed)?;
    let m = hr.dim();
    Ok(tail
        .into_iter()
        .enumerate()
        .map(|(i, y)| {
            let mut rng = draw_rng(seed ^ 0x7a11, i as u64);
            if rng.random::<f64>() < p {
                y.iter().map(|v| u0 * v).collect()
            } else {
                (0..m).map(|_| 1.0 + (u0 - 1.0) * rng.random::<f64>()).collect()
            }
        })
        .collect())
}

/// b + a·(η^ξ − 1)/ξ per column (log η when ξ = 0).
pub fn to_gev_margins(draws: &[Vec<f64>], params: &[GevParams]) -> Result<Vec<Vec<f64>>> {
    draws
        .iter()
        .map(|row| {
            if row.len() != params.len() {
                return Err(Error::input("one GEV parameter set per column is required"));
            }
            Ok(row
                .iter()
                .zip(params)
                .map(|(eta, g)| {
                    let l = eta.ln();
                    let z = if g.shape == 0.0 { l } else { (g.shape * l).exp_m1() / g.shape };
                    g.loc + g.scale * z
                })
                .collect())
        })
        .collect()
}

pub fn simulate(spec: &SimSpec) -> Result<Vec<Vec<f64>>> {
    let draws = sample_hr(&spec.hr, spec.n, spec.seed)?;
    match &spec.margins {
        MarginMode::Frechet => Ok(draws),
        MarginMode::Gev { params } => to_gev_margins(&draws, params),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::madogram_theta;
    use crate::hr_core::{tests::random_hr, HrEvaluator};
    use crate::kernels::theta_model;
    use crate::stats::{ks_one_sample, ks_two_sample};
    use approx::assert_relative_eq;

    fn biv(g: f64) -> HrStructure {
        HrStructure::from_gamma(DMatrix::from_row_slice(2, 2, &[0.0, g, g, 0.0])).unwrap()
    }

    fn frechet_cdf(x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            (-1.0 / x).exp()
        }
    }

    #[test]
    fn univariate_is_standard_frechet() {
        let hr = HrStructure::from_gamma(DMatrix::zeros(1, 1)).unwrap();
        let d: Vec<f64> = sample_hr(&hr, 20_000, 1).unwrap().into_iter().map(|r| r[0]).collect();
        assert!(ks_one_sample(&d, frechet_cdf).unwrap().p_value > 0.01);
    }

    #[test]
    fn coincident_columns_are_identical() {
        let g = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0]);
        let hr = HrStructure::from_gamma(g).unwrap();
        for r in sample_hr(&hr, 2000, 3).unwrap() {
            assert_eq!(r[0], r[1]);
        }
    }

    #[test]
    fn madogram_matches_model_theta() {
        let d = sample_hr(&biv(4.0), 20_000, 5).unwrap();
        let a: Vec<f64> = d.iter().map(|r| r[0]).collect();
        let b: Vec<f64> = d.iter().map(|r| r[1]).collect();
        let t = madogram_theta(&a, &b, 20).unwrap();
        assert!((t - theta_model(4.0)).abs() < 0.02, "{t}");
    }

    #[test]
    fn joint_cdf_matches_exponent_measure() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let hr = random_hr(3, &mut rng);
        let ev = HrEvaluator::with_defaults(hr.clone());
        let n = 40_000;
        let d = sample_hr(&hr, n, 9).unwrap();
        for u in [2.0, 5.0, 10.0] {
            let p = (-ev.exponent_measure(&[u; 3]).unwrap()).exp();
            let emp = d.iter().filter(|r| r.iter().all(|v| *v <= u)).count() as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((emp - p).abs() < 3.0 * se, "u={u}: {emp} vs {p}");
        }
    }

    #[test]
    fn max_stability() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let hr = random_hr(3, &mut rng);
        let k = 5;
        let a = sample_hr(&hr, 10_000, 1).unwrap();
        let b = sample_hr(&hr, 10_000 * k, 2).unwrap();
        for j in 0..3 {
            let x: Vec<f64> = a.iter().map(|r| r[j]).collect();
            let y: Vec<f64> = b
                .chunks(k)
                .map(|c| c.iter().map(|r| r[j]).fold(0.0, f64::max) / k as f64)
                .collect();
            assert!(ks_two_sample(&x, &y).unwrap().p_value > 0.01);
        }
    }

    #[test]
    fn pareto_sampler_matches_exponent_measure() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let hr = random_hr(3, &mut rng);
        let ev = HrEvaluator::with_defaults(hr.clone());
        let n = 40_000;
        let d = sample_pareto(&hr, n, 4).unwrap();
        let v1 = ev.exponent_measure(&[1.0; 3]).unwrap();
        assert!(d.iter().all(|r| r.iter().cloned().fold(0.0, f64::max) > 1.0));
        // P(X ∉ [0, x]) = V(x)/V(1) for x ≥ 1.
        let x = [1.5, 3.0, 2.0];
        let p = ev.exponent_measure(&x).unwrap() / v1;
        let emp = d.iter().filter(|r| r.iter().zip(&x).any(|(a, b)| a > b)).count() as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((emp - p).abs() < 3.0 * se, "{emp} vs {p}");
    }

    #[test]
    fn tail_events_exceed_with_exponent_measure_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let hr = random_hr(4, &mut rng);
        let ev = HrEvaluator::with_defaults(hr.clone());
        let n = 40_000;
        let d = sample_tail_events(&hr, n, 6.0, 1).unwrap();
        for u in [6.0, 10.0] {
            let p = ev.exponent_measure(&[u; 4]).unwrap();
            let emp = d.iter().filter(|r| r.iter().any(|v| *v > u)).count() as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((emp - p).abs() < 3.0 * se, "{emp} vs {p}");
        }
        assert!(sample_tail_events(&hr, 10, 1.01, 1).is_err());
    }

    #[test]
    fn gev_margins_and_determinism() {
        let g = [GevParams::new(0.0, 1.0, 1.0).unwrap(), GevParams::new(0.0, 1.0, 0.5).unwrap(), GevParams::new(0.0, 1.0, 0.0).unwrap()];
        let out = to_gev_margins(&[vec![3.0, 4.0, 2.0]], &g).unwrap();
        assert_relative_eq!(out[0][0], 2.0, max_relative = 1e-15);
        assert_relative_eq!(out[0][1], 2.0, max_relative = 1e-15);
        assert_relative_eq!(out[0][2], 2f64.ln(), max_relative = 1e-15);
        let hr = biv(1.0);
        let gumbel = GevParams::new(0.0, 1.0, 0.0).unwrap();
        let spec = SimSpec {
            hr: hr.clone(),
            n: 20_000,
            seed: 77,
            margins: MarginMode::Gev { params: vec![gumbel; 2] },
        };
        let a = simulate(&spec).unwrap();
        assert_eq!(a, simulate(&spec).unwrap());
        let col: Vec<f64> = a.iter().map(|r| r[1]).collect();
        assert!(ks_one_sample(&col, |x| (-(-x).exp()).exp()).unwrap().p_value > 0.01);
        // Thread count does not change the output.
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| simulate(&spec).unwrap());
        assert_eq!(a, b);
    }
}
