//! Hüsler–Reiss exponent measure, spectral density and censored
//! likelihood contributions.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernels::HrStructure;
use crate::linalg;
use crate::mvn::{mvn_cdf, MvnOptions};

/// Variogram values at or below this are treated as coincident locations.
pub const COINCIDENT_TOL: f64 = 1e-12;

/// One event on the Pareto scale with per-coordinate thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct CensoredTerm {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    /// Indices with x_j > u_j, ascending.
    pub exceed: Vec<usize>,
}

impl CensoredTerm {
    pub fn new(x: Vec<f64>, u: Vec<f64>) -> Result<Self> {
        if x.len() != u.len() {
            return Err(Error::input("event and threshold lengths differ"));
        }
        if u.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::domain("thresholds must be positive and finite"));
        }
        if x.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::domain("event values must be positive and finite"));
        }
        let exceed = (0..x.len()).filter(|&j| x[j] > u[j]).collect();
        Ok(Self { x, u, exceed })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Number of exceeding coordinates b = |K|.
    pub fn b(&self) -> usize {
        self.exceed.len()
    }
}

/// Evaluation context for one HR model: caches the anchored covariance
/// matrices and carries the MVN integration settings.
#[derive(Debug)]
pub struct HrEvaluator {
    hr: HrStructure,
    opts: MvnOptions,
    sigmas: Vec<OnceLock<DMatrix<f64>>>,
    /// Present when some locations coincide (Γ = 0); V is then evaluated on
    /// the collapsed model.
    collapsed: Option<(Vec<Vec<usize>>, Box<HrEvaluator>)>,
}

impl HrEvaluator {
    pub fn new(hr: HrStructure, opts: MvnOptions) -> Self {
        let m = hr.dim();
        let mut group_of = vec![usize::MAX; m];
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for i in 0..m {
            if group_of[i] != usize::MAX {
                continue;
            }
            group_of[i] = groups.len();
            let mut g = vec![i];
            for j in (i + 1)..m {
                if group_of[j] == usize::MAX && hr.gamma_at(i, j) <= COINCIDENT_TOL {
                    group_of[j] = groups.len();
                    g.push(j);
                }
            }
            groups.push(g);
        }
        let collapsed = if groups.len() < m {
            let reps: Vec<usize> = groups.iter().map(|g| g[0]).collect();
            let inner = HrEvaluator::new(hr.restrict(&reps), opts.clone());
            Some((groups, Box::new(inner)))
        } else {
            None
        };
        Self {
            sigmas: (0..m).map(|_| OnceLock::new()).collect(),
            hr,
            opts,
            collapsed,
        }
    }

    pub fn with_defaults(hr: HrStructure) -> Self {
        Self::new(hr, MvnOptions::default())
    }

    pub fn hr(&self) -> &HrStructure {
        &self.hr
    }

    pub fn dim(&self) -> usize {
        self.hr.dim()
    }

    pub fn options(&self) -> &MvnOptions {
        &self.opts
    }

    fn sigma(&self, anchor: usize) -> &DMatrix<f64> {
        self.sigmas[anchor].get_or_init(|| {
            self.hr
                .sigma_raw(anchor)
                .expect("anchor index checked by caller")
        })
    }

    /// V(x) together with an integration error estimate.
    pub fn exponent_measure_with_error(&self, x: &[f64]) -> Result<(f64, f64)> {
        let m = self.dim();
        if x.len() != m {
            return Err(Error::input(format!("expected {m} coordinates, got {}", x.len())));
        }
        if x.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::domain("exponent measure needs positive arguments"));
        }
        if let Some((groups, inner)) = &self.collapsed {
            let xr: Vec<f64> = groups
                .iter()
                .map(|g| g.iter().map(|&j| x[j]).fold(f64::INFINITY, f64::min))
                .collect();
            return inner.exponent_measure_with_error(&xr);
        }
        let mut value = 0.0;
        let mut error = 0.0;
        let mut upper = vec![0.0; m.saturating_sub(1)];
        for k in 0..m {
            if x[k] == f64::INFINITY {
                continue;
            }
            let mut r = 0;
            for j in 0..m {
                if j == k {
                    continue;
                }
                upper[r] = (x[j] / x[k]).ln() + 0.5 * self.hr.gamma_at(j, k);
                r += 1;
            }
            let est = mvn_cdf(&upper, self.sigma(k), &self.opts)?;
            value += est.prob / x[k];
            error += est.error / x[k];
        }
        Ok((value, error))
    }

    /// Exponent measure V(x); coordinates may be +∞.
    pub fn exponent_measure(&self, x: &[f64]) -> Result<f64> {
        Ok(self.exponent_measure_with_error(x)?.0)
    }

    /// Probability 1 − V(u) that an event lies entirely below `u`.
    pub fn below_threshold_mass(&self, u: &[f64]) -> Result<f64> {
        let v = self.exponent_measure(u)?;
        if v >= 1.0 {
            return Err(Error::Range(format!(
                "V(u) = {v:.4} >= 1: thresholds are too low for the tail approximation, raise them"
            )));
        }
        Ok(1.0 - v)
    }

    /// log g(ω) of the spectral density, anchored at the first coordinate.
    pub fn log_spectral_density(&self, omega: &[f64]) -> Result<f64> {
        self.log_spectral_density_anchored(omega, 0)
    }

    pub fn log_spectral_density_anchored(&self, omega: &[f64], anchor: usize) -> Result<f64> {
        let m = self.dim();
        if m < 2 {
            return Err(Error::domain("spectral density needs at least two locations"));
        }
        if omega.len() != m || anchor >= m {
            return Err(Error::input("spectral point has the wrong dimension"));
        }
        if omega.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::domain("spectral density is evaluated at interior points only"));
        }
        let total: f64 = omega.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!("spectral point sums to {total}, not 1")));
        }
        let wa = omega[anchor];
        let tilde: DVector<f64> = DVector::from_iterator(
            m - 1,
            (0..m)
                .filter(|&j| j != anchor)
                .map(|j| (omega[j] / wa).ln() + 0.5 * self.hr.gamma_at(j, anchor)),
        );
        let log_phi = linalg::mvn_log_pdf(&tilde, self.sigma(anchor))
            .map_err(|_| Error::domain("singular covariance in spectral density (coincident locations)"))?;
        let log_jac: f64 = omega.iter().map(|w| w.ln()).sum::<f64>() + wa.ln();
        Ok(log_phi - log_jac)
    }

    pub fn spectral_density(&self, omega: &[f64]) -> Result<f64> {
        Ok(self.log_spectral_density(omega)?.exp())
    }

    /// log f_K(x) for the censored likelihood, anchored at the first
    /// exceeding coordinate.
    pub fn log_censored_density(&self, term: &CensoredTerm) -> Result<f64> {
        let anchor = *term
            .exceed
            .first()
            .ok_or_else(|| Error::input("censored density needs at least one exceedance"))?;
        self.log_censored_density_anchored(term, anchor)
    }

    pub fn censored_density(&self, term: &CensoredTerm) -> Result<f64> {
        Ok(self.log_censored_density(term)?.exp())
    }

    /// As [`Self::log_censored_density`] with an explicit anchor from K.
    pub fn log_censored_density_anchored(&self, term: &CensoredTerm, anchor: usize) -> Result<f64> {
        let m = self.dim();
        if term.dim() != m {
            return Err(Error::input(format!("expected {m} coordinates, got {}", term.dim())));
        }
        if !term.exceed.contains(&anchor) {
            return Err(Error::input("anchor must be an exceeding coordinate"));
        }
        let xa = term.x[anchor];
        let sigma = self.sigma(anchor);
        // Positions within Σ^{(anchor)} (which omits the anchor).
        let pos = |j: usize| if j < anchor { j } else { j - 1 };
        let mut k_idx = Vec::new();
        let mut k_tilde = Vec::new();
        let mut c_idx = Vec::new();
        let mut c_tilde = Vec::new();
        let mut log_jac = 2.0 * xa.ln();
        for j in 0..m {
            if j == anchor {
                continue;
            }
            let exceeds = term.x[j] > term.u[j];
            let z = if exceeds { term.x[j] } else { term.u[j] };
            let t = (z / xa).ln() + 0.5 * self.hr.gamma_at(j, anchor);
            if exceeds {
                k_idx.push(pos(j));
                k_tilde.push(t);
                log_jac += z.ln();
            } else {
                c_idx.push(pos(j));
                c_tilde.push(t);
            }
        }
        if k_idx.is_empty() {
            let p = mvn_cdf(&c_tilde, sigma, &self.opts)?.prob;
            return Ok(p.ln() - log_jac);
        }
        let s_kk = linalg::submatrix(sigma, &k_idx, &k_idx);
        let chol = s_kk
            .clone()
            .cholesky()
            .ok_or_else(|| Error::domain("singular covariance among exceeding coordinates"))?;
        let xk = DVector::from_vec(k_tilde);
        let log_phi = linalg::mvn_log_pdf(&xk, &s_kk)?;
        if c_idx.is_empty() {
            return Ok(log_phi - log_jac);
        }
        let s_kc = linalg::submatrix(sigma, &k_idx, &c_idx);
        let y = chol.solve(&s_kc);
        let mu = y.transpose() * &xk;
        let mut s_c = linalg::submatrix(sigma, &c_idx, &c_idx) - s_kc.transpose() * &y;
        for i in 0..s_c.nrows() {
            for j in 0..i {
                let v = 0.5 * (s_c[(i, j)] + s_c[(j, i)]);
                s_c[(i, j)] = v;
                s_c[(j, i)] = v;
            }
            s_c[(i, i)] = s_c[(i, i)].max(0.0);
        }
        let upper: Vec<f64> = c_tilde.iter().zip(mu.iter()).map(|(t, m)| t - m).collect();
        let p = mvn_cdf(&upper, &s_c, &self.opts)?.prob;
        Ok(log_phi + p.ln() - log_jac)
    }
}

/// V(x) with default integration settings.
pub fn exponent_measure_v(hr: &HrStructure, x: &[f64]) -> Result<f64> {
    HrEvaluator::with_defaults(hr.clone()).exponent_measure(x)
}

pub fn spectral_density(hr: &HrStructure, omega: &[f64]) -> Result<f64> {
    HrEvaluator::with_defaults(hr.clone()).spectral_density(omega)
}

pub fn censored_density(hr: &HrStructure, term: &CensoredTerm) -> Result<f64> {
    HrEvaluator::with_defaults(hr.clone()).censored_density(term)
}

pub fn below_threshold_mass(hr: &HrStructure, u: &[f64]) -> Result<f64> {
    HrEvaluator::with_defaults(hr.clone()).below_threshold_mass(u)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::kernels::biv_exponent;
    use crate::normal;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use std::f64::consts::PI;

    /// Γ from a fractal variogram |s − t|^α on random planar points.
    pub(crate) fn random_hr(m: usize, rng: &mut ChaCha8Rng) -> HrStructure {
        let alpha = 0.5 + 1.5 * rng.random::<f64>();
        let scale = 0.2 + 2.0 * rng.random::<f64>();
        let pts: Vec<[f64; 2]> = (0..m).map(|_| [rng.random::<f64>() * 2.0, rng.random::<f64>() * 2.0]).collect();
        let g = DMatrix::from_fn(m, m, |i, j| {
            let d = ((pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2)).sqrt();
            if i == j {
                0.0
            } else {
                scale * d.powf(alpha)
            }
        });
        HrStructure::from_gamma(g).unwrap()
    }

    fn biv(g: f64) -> HrStructure {
        HrStructure::from_gamma(DMatrix::from_row_slice(2, 2, &[0.0, g, g, 0.0])).unwrap()
    }

    /// Monte-Carlo oracle E[max_j exp(W_j − Γ_j1/2)/x_j] with W_1 = 0.
    pub(crate) fn mc_exponent(hr: &HrStructure, x: &[f64], n: usize, seed: u64) -> (f64, f64) {
        let m = hr.dim();
        let l = linalg::psd_cholesky(&hr.sigma(0).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut s, mut s2) = (0.0, 0.0);
        let mut z = vec![0.0; m - 1];
        for _ in 0..n {
            for v in z.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let mut best = 1.0 / x[0];
            for j in 1..m {
                let w: f64 = (0..j).map(|c| l[(j - 1, c)] * z[c]).sum();
                best = best.max((w - 0.5 * hr.gamma_at(j, 0)).exp() / x[j]);
            }
            s += best;
            s2 += best * best;
        }
        let mean = s / n as f64;
        (mean, ((s2 / n as f64 - mean * mean) / n as f64).sqrt())
    }

    #[test]
    fn univariate_and_bivariate() {
        let one = HrStructure::from_gamma(DMatrix::zeros(1, 1)).unwrap();
        assert_eq!(exponent_measure_v(&one, &[4.0]).unwrap(), 0.25);
        for g in [0.1, 1.0, 4.0, 25.0] {
            let hr = biv(g);
            for x in [0.5, 1.0, 5.0] {
                for y in [0.5, 1.0, 5.0] {
                    let v = exponent_measure_v(&hr, &[x, y]).unwrap();
                    assert_relative_eq!(v, biv_exponent(g, x, y), max_relative = 1e-12);
                }
            }
        }
    }

    #[test]
    fn infinite_coordinates_marginalise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let hr = random_hr(4, &mut rng);
        let v = exponent_measure_v(&hr, &[2.5, f64::INFINITY, f64::INFINITY, f64::INFINITY]).unwrap();
        assert_eq!(v, 0.4);
        let hr2 = hr.restrict(&[0, 2]);
        let a = exponent_measure_v(&hr, &[2.5, f64::INFINITY, 0.7, f64::INFINITY]).unwrap();
        let b = exponent_measure_v(&hr2, &[2.5, 0.7]).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }

    #[test]
    fn trivariate_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for rep in 0..3 {
            let hr = random_hr(3, &mut rng);
            let x = [0.5 + rng.random::<f64>() * 3.0, 0.5 + rng.random::<f64>() * 3.0, 0.5 + rng.random::<f64>() * 3.0];
            let v = exponent_measure_v(&hr, &x).unwrap();
            let (mc, se) = mc_exponent(&hr, &x, 200_000, rep);
            assert!((v - mc).abs() < 3.5 * se, "V = {v}, MC = {mc} ± {se}");
        }
    }

    #[test]
    fn coincident_locations_collapse() {
        let g = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 2.0, 0.0, 0.0, 2.0, 2.0, 2.0, 0.0]);
        let hr = HrStructure::from_gamma(g).unwrap();
        let v = exponent_measure_v(&hr, &[3.0, 1.5, 2.0]).unwrap();
        assert_relative_eq!(v, biv_exponent(2.0, 1.5, 2.0), max_relative = 1e-12);
        let zero = HrStructure::from_gamma(DMatrix::zeros(4, 4)).unwrap();
        assert_relative_eq!(exponent_measure_v(&zero, &[3.0, 2.0, 5.0, 4.0]).unwrap(), 0.5);
    }

    #[test]
    fn below_threshold_examples() {
        let one = HrStructure::from_gamma(DMatrix::zeros(1, 1)).unwrap();
        assert_relative_eq!(below_threshold_mass(&one, &[10.0]).unwrap(), 0.9);
        let hr = biv(4.0);
        assert_relative_eq!(below_threshold_mass(&hr, &[10.0, 10.0]).unwrap(), 0.831731, epsilon = 1e-6);
        assert_eq!(below_threshold_mass(&hr, &[f64::INFINITY, f64::INFINITY]).unwrap(), 1.0);
        assert!(matches!(below_threshold_mass(&hr, &[1.0, 1.0]), Err(Error::Range(_))));
    }

    #[test]
    fn spectral_example() {
        let g = spectral_density(&biv(1.0), &[0.5, 0.5]).unwrap();
        let expect = 8.0 / (2.0 * PI).sqrt() * (-0.125f64).exp();
        assert_relative_eq!(g, expect, max_relative = 1e-14);
        assert_relative_eq!(g, 2.81653, epsilon = 1e-5);
        assert!(spectral_density(&biv(1.0), &[1.0, 0.0]).is_err());
        assert!(spectral_density(&biv(1.0), &[0.5, 0.6]).is_err());
    }

    #[test]
    fn spectral_anchor_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in [2, 3, 5] {
            let ev = HrEvaluator::with_defaults(random_hr(m, &mut rng));
            let w: Vec<f64> = (0..m).map(|_| 0.1 + rng.random::<f64>()).collect();
            let s: f64 = w.iter().sum();
            let w: Vec<f64> = w.iter().map(|v| v / s).collect();
            let base = ev.log_spectral_density_anchored(&w, 0).unwrap();
            for a in 1..m {
                let other = ev.log_spectral_density_anchored(&w, a).unwrap();
                assert!((base - other).abs() < 1e-10, "m={m} anchor {a}: {base} vs {other}");
            }
        }
    }

    /// ∫ ω_j g(ω) dω over the simplex via log-ratio coordinates.
    fn spectral_moments(ev: &HrEvaluator) -> Vec<f64> {
        let m = ev.dim();
        let (lim, h) = (14.0, 0.05);
        let n = (2.0 * lim / h) as i64;
        let mut out = vec![0.0; m];
        let mut t = vec![0.0; m];
        let mut idx = vec![0i64; m - 1];
        loop {
            for (k, i) in idx.iter().enumerate() {
                t[k + 1] = -lim + *i as f64 * h - 1.0;
            }
            let mx = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = t.iter().map(|v| (v - mx).exp()).collect();
            let s: f64 = e.iter().sum();
            let w: Vec<f64> = e.iter().map(|v| v / s).collect();
            let g = ev.spectral_density(&w).unwrap();
            let jac: f64 = w.iter().product();
            for j in 0..m {
                out[j] += w[j] * g * jac * h.powi(m as i32 - 1);
            }
            let mut k = 0;
            loop {
                if k == m - 1 {
                    return out;
                }
                idx[k] += 1;
                if idx[k] <= n {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }

    #[test]
    fn spectral_moment_constraints() {
        for g in [0.3, 1.0, 4.0] {
            for mom in spectral_moments(&HrEvaluator::with_defaults(biv(g))) {
                assert_relative_eq!(mom, 1.0, epsilon = 1e-6);
            }
        }
        let g = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 2.0, 1.0, 0.0, 1.5, 2.0, 1.5, 0.0]);
        let ev = HrEvaluator::with_defaults(HrStructure::from_gamma(g).unwrap());
        for mom in spectral_moments(&ev) {
            assert_relative_eq!(mom, 1.0, epsilon = 1e-6);
        }
    }

    /// −∂^|K| V / ∂x_K by central differences with one Richardson step,
    /// the remaining coordinates held at `u`.
    pub(crate) fn fd_density(ev: &HrEvaluator, term: &CensoredTerm) -> f64 {
        let d: Vec<f64> = [4e-2, 2e-2, 1e-2].iter().map(|r| fd_step(ev, term, *r)).collect();
        let r1 = (4.0 * d[1] - d[0]) / 3.0;
        let r2 = (4.0 * d[2] - d[1]) / 3.0;
        (16.0 * r2 - r1) / 15.0
    }

    fn fd_step(ev: &HrEvaluator, term: &CensoredTerm, rel: f64) -> f64 {
        let b = term.b();
        let hs: Vec<f64> = term.exceed.iter().map(|&j| rel * term.x[j]).collect();
        let mut total = 0.0;
        for mask in 0..(1u32 << b) {
            let mut z: Vec<f64> = (0..term.dim())
                .map(|j| if term.x[j] > term.u[j] { term.x[j] } else { term.u[j] })
                .collect();
            let mut sign = 1.0;
            for (i, &j) in term.exceed.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    z[j] += hs[i];
                } else {
                    z[j] -= hs[i];
                    sign = -sign;
                }
            }
            total += sign * ev.exponent_measure(&z).unwrap();
        }
        let denom: f64 = hs.iter().map(|h| 2.0 * h).product();
        -total / denom
    }

    #[test]
    fn bivariate_censored_closed_forms() {
        for g in [0.2, 1.0, 4.0] {
            let ev = HrEvaluator::with_defaults(biv(g));
            let (x1, u) = (7.0, 3.0);
            let t = CensoredTerm::new(vec![x1, 2.0], vec![u, u]).unwrap();
            let f = ev.censored_density(&t).unwrap();
            let a = g.sqrt();
            let closed = normal::cdf(((u / x1).ln() + g / 2.0) / a) / (x1 * x1);
            assert_relative_eq!(f, closed, max_relative = 1e-12);
            assert_relative_eq!(f, fd_density(&ev, &t), max_relative = 1e-6);

            let t = CensoredTerm::new(vec![x1, 4.5], vec![u, u]).unwrap();
            let f = ev.censored_density(&t).unwrap();
            let z = ((4.5f64 / x1).ln() + g / 2.0) / a;
            let closed = normal::pdf(z) / a / (x1 * x1 * 4.5);
            assert_relative_eq!(f, closed, max_relative = 1e-12);
            assert_relative_eq!(f, fd_density(&ev, &t), max_relative = 1e-6);
        }
    }

    #[test]
    fn trivariate_censored_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..4 {
            let ev = HrEvaluator::with_defaults(random_hr(3, &mut rng));
            for mask in 1u32..8 {
                let u: Vec<f64> = (0..3).map(|_| 1.0 + 4.0 * rng.random::<f64>()).collect();
                let x: Vec<f64> = (0..3)
                    .map(|j| {
                        if mask & (1 << j) != 0 {
                            u[j] * (1.05 + 1.5 * rng.random::<f64>())
                        } else {
                            u[j] * (0.3 + 0.65 * rng.random::<f64>())
                        }
                    })
                    .collect();
                let t = CensoredTerm::new(x, u).unwrap();
                let f = ev.censored_density(&t).unwrap();
                let fd = fd_density(&ev, &t);
                assert_relative_eq!(f, fd, max_relative = 1e-4);
            }
        }
    }

    #[test]
    fn censored_anchor_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in [3, 5] {
            let ev = HrEvaluator::with_defaults(random_hr(m, &mut rng));
            let u = vec![2.0; m];
            let x: Vec<f64> = (0..m).map(|j| if j % 2 == 0 { 3.0 + j as f64 } else { 1.0 }).collect();
            let t = CensoredTerm::new(x, u).unwrap();
            let base = ev.log_censored_density_anchored(&t, t.exceed[0]).unwrap();
            for &a in &t.exceed[1..] {
                let other = ev.log_censored_density_anchored(&t, a).unwrap();
                assert!((base - other).abs() < 1e-8, "{base} vs {other}");
            }
        }
    }

    #[test]
    fn full_exceedance_matches_spectral_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for m in [2, 3, 4] {
            let ev = HrEvaluator::with_defaults(random_hr(m, &mut rng));
            let x: Vec<f64> = (0..m).map(|_| 2.0 + 10.0 * rng.random::<f64>()).collect();
            let r: f64 = x.iter().sum();
            let w: Vec<f64> = x.iter().map(|v| v / r).collect();
            let t = CensoredTerm::new(x, vec![1.0; m]).unwrap();
            let lhs = ev.log_censored_density(&t).unwrap();
            let rhs = ev.log_spectral_density(&w).unwrap() - (m as f64 + 1.0) * r.ln();
            assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
        }
    }

    #[test]
    fn coincident_exceedances_are_singular() {
        let g = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 2.0, 0.0, 0.0, 2.0, 2.0, 2.0, 0.0]);
        let ev = HrEvaluator::with_defaults(HrStructure::from_gamma(g).unwrap());
        let t = CensoredTerm::new(vec![3.0, 4.0, 1.0], vec![2.0; 3]).unwrap();
        assert!(matches!(ev.censored_density(&t), Err(Error::Domain(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn homogeneity_and_monotonicity(seed in 0u64..10_000, m in 2usize..6, lam in prop::sample::select(vec![0.5, 2.0, 10.0])) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ev = HrEvaluator::with_defaults(random_hr(m, &mut rng));
            let x: Vec<f64> = (0..m).map(|_| 0.3 + 5.0 * rng.random::<f64>()).collect();
            let v = ev.exponent_measure(&x).unwrap();
            let xs: Vec<f64> = x.iter().map(|v| v * lam).collect();
            let vs = ev.exponent_measure(&xs).unwrap();
            prop_assert!((vs * lam - v).abs() <= 1e-9 * v);
            let mut bigger = x.clone();
            bigger[seed as usize % m] *= 1.5;
            prop_assert!(ev.exponent_measure(&bigger).unwrap() <= v + 1e-12);
            prop_assert!(v >= x.iter().map(|z| 1.0 / z).fold(0.0, f64::max) - 1e-5);
            prop_assert!(v <= x.iter().map(|z| 1.0 / z).sum::<f64>() + 1e-5);
        }

        #[test]
        fn station_permutation_invariance(seed in 0u64..10_000, m in 2usize..7) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let hr = random_hr(m, &mut rng);
            let x: Vec<f64> = (0..m).map(|_| 0.3 + 5.0 * rng.random::<f64>()).collect();
            let mut perm: Vec<usize> = (0..m).collect();
            perm.rotate_left(1 + seed as usize % m);
            let v = exponent_measure_v(&hr, &x).unwrap();
            let xp: Vec<f64> = perm.iter().map(|&i| x[i]).collect();
            let vp = exponent_measure_v(&hr.restrict(&perm), &xp).unwrap();
            prop_assert!((v - vp).abs() <= 1e-8);
        }
    }
}
