//! Joint tail risk from a fitted model: simultaneous exceedances at several
//! locations, groupwise maxima and network-wide return levels.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hr_core::HrEvaluator;
use crate::kernels::HrStructure;
use crate::margins::{frechet_transform, return_level, GevParams, RegionalModel};
use crate::mvn::MvnOptions;
use crate::network::{CatchmentSummary, NetLocation, RiverNetwork};
use crate::simulate::measure_mc;

/// Largest group handled by inclusion–exclusion (2^k − 1 terms).
pub const MAX_EXACT: usize = 12;

/// Marginal model at one query location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteMargin {
    pub id: String,
    pub gev: GevParams,
    /// Marginal threshold; levels below it are refused.
    #[serde(default)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    /// Discharge in m³/s, mapped through the marginal GEV.
    Discharge(f64),
    /// Quantile of the per-event marginal distribution: the level is
    /// exceeded by a fraction 1 − p of events at that site.
    Quantile(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskQuery {
    pub sites: Vec<SiteMargin>,
    pub levels: Vec<Level>,
    /// Mean number of multivariate events per year.
    pub events_per_year: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskMethod {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskOptions {
    pub mvn: MvnOptions,
    pub mc_draws: usize,
    pub seed: u64,
    /// Use Monte Carlo even when inclusion–exclusion is feasible.
    pub force_mc: bool,
}

impl Default for RiskOptions {
    fn default() -> Self {
        Self {
            mvn: MvnOptions {
                abs_tol: 1e-7,
                ..MvnOptions::default()
            },
            mc_draws: 200_000,
            seed: 0x0005_1ce5,
            force_mc: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exceedance {
    /// Levels on the unit Fréchet scale.
    pub frechet_levels: Vec<f64>,
    /// Expected number of events per year exceeding every level.
    pub rate: f64,
    /// Probability that a single event exceeds every level (rate / K).
    pub per_event: f64,
    /// Probability of at least one such event in a year.
    pub annual: f64,
    /// Error estimate on `rate` (integration error or Monte Carlo SE).
    pub std_error: f64,
    pub method: RiskMethod,
}

fn frechet_level(site: &SiteMargin, level: Level, k: f64) -> Result<f64> {
    let u = match level {
        Level::Quantile(p) => {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::input(format!("quantile level {p} must lie in (0, 1)")));
            }
            1.0 / (k * (1.0 - p))
        }
        Level::Discharge(x) => {
            if let Some(t) = site.threshold {
                if x < t {
                    return Err(Error::Range(format!(
                        "level {x} at {} is below the marginal threshold {t}; the tail approximation only holds above it",
                        site.id
                    )));
                }
            }
            frechet_transform(&site.gev, x)
        }
    };
    if !(u > 0.0) || u * k < 1.0 {
        return Err(Error::Range(format!(
            "level at {} maps to a per-event exceedance probability above one; the tail approximation is asymptotic",
            site.id
        )));
    }
    Ok(u)
}

/// ν(∩_j {x_j > u_j}) by inclusion–exclusion over the exponent measures of
/// all sub-vectors. Returns the value and the summed integration error.
pub fn joint_measure_exact(hr: &HrStructure, u: &[f64], mvn: &MvnOptions) -> Result<(f64, f64)> {
    let k = hr.dim();
    if u.len() != k {
        return Err(Error::input(format!("expected {k} levels, got {}", u.len())));
    }
    if k > MAX_EXACT {
        return Err(Error::input(format!(
            "inclusion-exclusion is limited to {MAX_EXACT} locations"
        )));
    }
    if u.contains(&f64::INFINITY) {
        return Ok((0.0, 0.0));
    }
    let terms: Vec<(f64, f64)> = (1u32..(1 << k))
        .into_par_iter()
        .map(|mask| {
            let idx: Vec<usize> = (0..k).filter(|j| mask & (1 << j) != 0).collect();
            let sign = if idx.len() % 2 == 1 { 1.0 } else { -1.0 };
            if idx.len() == 1 {
                return Ok((sign / u[idx[0]], 0.0));
            }
            let sub: Vec<f64> = idx.iter().map(|&j| u[j]).collect();
            let ev = HrEvaluator::new(hr.restrict(&idx), mvn.clone());
            let (v, e) = ev.exponent_measure_with_error(&sub)?;
            Ok((sign * v, e))
        })
        .collect::<Result<_>>()?;
    let value: f64 = terms.iter().map(|t| t.0).sum();
    let error: f64 = terms.iter().map(|t| t.1).sum();
    let cap = u.iter().map(|v| 1.0 / v).fold(f64::INFINITY, f64::min);
    Ok((value.clamp(0.0, cap), error))
}

/// Monte Carlo version of [`joint_measure_exact`] for any group size.
pub fn joint_measure_mc(hr: &HrStructure, u: &[f64], n: usize, seed: u64) -> Result<(f64, f64)> {
    if u.len() != hr.dim() {
        return Err(Error::input(format!("expected {} levels, got {}", hr.dim(), u.len())));
    }
    if u.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::domain("levels must be positive"));
    }
    if u.contains(&f64::INFINITY) {
        return Ok((0.0, 0.0));
    }
    let scale = u.iter().cloned().fold(f64::INFINITY, f64::min);
    let rel: Vec<f64> = u.iter().map(|v| v / scale).collect();
    let (v, se) = measure_mc(hr, n, seed, |x| x.iter().zip(&rel).all(|(a, b)| a > b))?;
    Ok((v / scale, se / scale))
}

/// Probability that all sites of `query` exceed their levels during one
/// event and within a year. `hr` must describe the same sites in order.
pub fn joint_exceedance(hr: &HrStructure, query: &RiskQuery, opts: &RiskOptions) -> Result<Exceedance> {
    let m = query.sites.len();
    if m == 0 {
        return Err(Error::input("a risk query needs at least one location"));
    }
    if query.levels.len() != m || hr.dim() != m {
        return Err(Error::input("sites, levels and dependence structure must have the same length"));
    }
    let k = query.events_per_year;
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::input(format!("events per year must be positive, got {k}")));
    }
    let u = query
        .sites
        .iter()
        .zip(&query.levels)
        .map(|(s, l)| frechet_level(s, *l, k))
        .collect::<Result<Vec<_>>>()?;
    let (method, (rate, err)) = if m <= MAX_EXACT && !opts.force_mc {
        (RiskMethod::Exact, joint_measure_exact(hr, &u, &opts.mvn)?)
    } else {
        (RiskMethod::MonteCarlo, joint_measure_mc(hr, &u, opts.mc_draws, opts.seed)?)
    };
    Ok(Exceedance {
        frechet_levels: u,
        rate,
        per_event: rate / k,
        annual: -(-rate).exp_m1(),
        std_error: err,
        method,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMaxRow {
    pub p: f64,
    /// log u_p under the fitted model.
    pub model: f64,
    /// Complete dependence (θ = 1).
    pub dependence: f64,
    /// Independence (θ = m).
    pub independence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMax {
    pub theta: f64,
    pub size: usize,
    pub rows: Vec<GroupMaxRow>,
}

/// Quantiles of the groupwise maximum on the Gumbel scale. With
/// P(max_j η_j ≤ u) = exp(−θ/u) the p-quantile is log θ − log(−log p).
pub fn group_max_quantiles(hr: &HrStructure, probs: &[f64], mvn: &MvnOptions) -> Result<GroupMax> {
    let m = hr.dim();
    if m == 0 {
        return Err(Error::input("group is empty"));
    }
    if let Some(p) = probs.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(Error::input(format!("probability {p} must lie in (0, 1)")));
    }
    let theta = HrEvaluator::new(hr.clone(), mvn.clone()).exponent_measure(&vec![1.0; m])?;
    let rows = probs
        .iter()
        .map(|&p| {
            let g = -(-p.ln()).ln();
            GroupMaxRow {
                p,
                model: theta.ln() + g,
                dependence: g,
                independence: (m as f64).ln() + g,
            }
        })
        .collect();
    Ok(GroupMax { theta, size: m, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnMapRow {
    pub segment: u32,
    pub offset_km: f64,
    pub x: f64,
    pub y: f64,
    pub region: String,
    pub t_years: f64,
    pub level: f64,
}

/// Return levels at points every `step_km` along every segment. `site`
/// supplies the region and catchment summary of each sampled point.
pub fn network_return_map<F>(
    model: &RegionalModel,
    net: &RiverNetwork,
    t_years: &[f64],
    step_km: f64,
    site: F,
) -> Result<Vec<ReturnMapRow>>
where
    F: Fn(&NetLocation) -> Result<(String, CatchmentSummary)> + Sync,
{
    if t_years.is_empty() {
        return Err(Error::input("no return periods given"));
    }
    let points = net.sample_points(step_km)?;
    let rows: Vec<Vec<ReturnMapRow>> = points
        .par_iter()
        .map(|loc| {
            let (region, summary) = site(loc)?;
            let gev = model.predict(&region, &summary)?;
            let [x, y] = net.point(loc)?;
            t_years
                .iter()
                .map(|&t| {
                    Ok(ReturnMapRow {
                        segment: loc.segment,
                        offset_km: loc.offset_km,
                        x,
                        y,
                        region: region.clone(),
                        t_years: t,
                        level: return_level(&gev, t)?,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hr_core::tests::random_hr;
    use crate::margins::tail_prob;
    use crate::normal;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn biv(g: f64) -> HrStructure {
        HrStructure::from_gamma(DMatrix::from_row_slice(2, 2, &[0.0, g, g, 0.0])).unwrap()
    }

    fn unit_site(id: &str) -> SiteMargin {
        SiteMargin {
            id: id.into(),
            gev: GevParams::new(1.0, 1.0, 1.0).unwrap(),
            threshold: None,
        }
    }

    /// ∫_a^∞ x⁻² P(x·Y > b) dx with log Y ~ N(−Γ/2, Γ), by Simpson's rule
    /// in s = log(1/x).
    fn quadrature(g: f64, a: f64, b: f64) -> f64 {
        let sd = g.sqrt();
        let f = |s: f64| s.exp() * normal::sf(((b).ln() + s + g / 2.0) / sd);
        let hi = -a.ln();
        let lo = hi - 60.0;
        let n = 20_000;
        let h = (hi - lo) / n as f64;
        let mut acc = f(lo) + f(hi);
        for i in 1..n {
            acc += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    }

    fn direct_biv(g: f64, x: f64, y: f64) -> f64 {
        let s = g.sqrt();
        let v = normal::cdf(s / 2.0 + (y / x).ln() / s) / x + normal::cdf(s / 2.0 + (x / y).ln() / s) / y;
        1.0 / x + 1.0 / y - v
    }

    #[test]
    fn pair_matches_direct_form_and_quadrature() {
        for g in [0.3, 1.0, 4.0] {
            for (a, b) in [(2.0, 2.0), (5.0, 20.0), (50.0, 8.0)] {
                let (v, _) = joint_measure_exact(&biv(g), &[a, b], &MvnOptions::default()).unwrap();
                assert!((v - direct_biv(g, a, b)).abs() < 1e-10, "{g} {a} {b}");
                let q = quadrature(g, a, b);
                assert!((v - q).abs() < 1e-9, "{v} {q}");
            }
        }
    }

    #[test]
    fn single_site_reduces_to_tail_prob() {
        let hr = HrStructure::from_gamma(DMatrix::zeros(1, 1)).unwrap();
        let gev = GevParams::new(100.0, 30.0, 0.1).unwrap();
        let q = RiskQuery {
            sites: vec![SiteMargin {
                id: "A".into(),
                gev,
                threshold: Some(80.0),
            }],
            levels: vec![Level::Discharge(250.0)],
            events_per_year: 4.0,
        };
        let r = joint_exceedance(&hr, &q, &RiskOptions::default()).unwrap();
        assert!((r.per_event - tail_prob(&gev, 250.0, 4.0)).abs() < 1e-14);
    }

    #[test]
    fn levels_below_threshold_are_refused() {
        let hr = biv(1.0);
        let mut a = unit_site("A");
        a.threshold = Some(3.0);
        let q = RiskQuery {
            sites: vec![a, unit_site("B")],
            levels: vec![Level::Discharge(2.0), Level::Discharge(5.0)],
            events_per_year: 2.0,
        };
        assert!(matches!(joint_exceedance(&hr, &q, &RiskOptions::default()), Err(Error::Range(_))));
        let q = RiskQuery {
            sites: vec![unit_site("A"), unit_site("B")],
            levels: vec![Level::Discharge(0.5), Level::Discharge(5.0)],
            events_per_year: 1.0,
        };
        assert!(matches!(joint_exceedance(&hr, &q, &RiskOptions::default()), Err(Error::Range(_))));
    }

    #[test]
    fn monte_carlo_agrees_with_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for k in 2..=4 {
            let hr = random_hr(k, &mut rng);
            let u: Vec<f64> = (0..k).map(|_| rng.random_range(1.0..4.0)).collect();
            let (exact, _) = joint_measure_exact(&hr, &u, &MvnOptions::default()).unwrap();
            let (mc, se) = joint_measure_mc(&hr, &u, 200_000, 11).unwrap();
            assert!((exact - mc).abs() < 3.0 * se, "k={k} {exact} {mc} {se}");
        }
    }

    #[test]
    fn group_max_reference_cases() {
        let one = HrStructure::from_gamma(DMatrix::zeros(1, 1)).unwrap();
        let gm = group_max_quantiles(&one, &[0.5, 0.9], &MvnOptions::default()).unwrap();
        for r in &gm.rows {
            assert!((r.model - (-(-r.p.ln()).ln())).abs() < 1e-12);
        }
        let twin = group_max_quantiles(&biv(0.0), &[0.5, 0.9], &MvnOptions::default()).unwrap();
        assert!((twin.theta - 1.0).abs() < 1e-10);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let hr = random_hr(3, &mut rng);
        let opts = MvnOptions::default();
        let gm = group_max_quantiles(&hr, &[0.9], &opts).unwrap();
        let v = HrEvaluator::new(hr, opts).exponent_measure(&[1.0; 3]).unwrap();
        assert!((gm.theta - v).abs() < 1e-8);
        assert!(gm.rows[0].dependence <= gm.rows[0].model && gm.rows[0].model <= gm.rows[0].independence);
    }

    #[test]
    fn return_map_matches_stations_and_grows_with_period() {
        use crate::margins::{Covariate, RegionCoefficients};
        use crate::toy::{toy_network, toy_summary};
        let net = toy_network();
        let model = RegionalModel {
            covariates: vec![Covariate::Area],
            regions: vec![RegionCoefficients {
                name: "R".into(),
                alpha: vec![0.5],
                beta: vec![0.6],
                shape: 0.1,
                se_alpha: vec![0.0],
                se_beta: vec![0.0],
                se_shape: 0.0,
                nll: 0.0,
            }],
        };
        let rows = network_return_map(&model, &net, &[10.0, 100.0], 10.0, |l| {
            Ok(("R".to_string(), toy_summary(&net, *l)?))
        })
        .unwrap();
        assert!(!rows.is_empty());
        for pair in rows.chunks(2) {
            assert!(pair[1].level > pair[0].level);
        }
        let loc = NetLocation::new(rows[0].segment, rows[0].offset_km);
        let gev = model.predict("R", &toy_summary(&net, loc).unwrap()).unwrap();
        assert!((rows[0].level - return_level(&gev, 10.0).unwrap()).abs() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn bounded_and_monotone(g in 0.05f64..9.0, a in 1.0f64..30.0, b in 1.0f64..30.0, c in 1.0f64..30.0, bump in 1.01f64..3.0) {
            let hr = HrStructure::from_gamma(DMatrix::from_row_slice(3, 3, &[
                0.0, g, 1.5 * g,
                g, 0.0, g,
                1.5 * g, g, 0.0,
            ])).unwrap();
            let opts = MvnOptions::default();
            let (v, _) = joint_measure_exact(&hr, &[a, b, c], &opts).unwrap();
            prop_assert!(v >= 0.0);
            prop_assert!(v <= 1.0 / a.max(b).max(c) + 1e-12);
            let (w, _) = joint_measure_exact(&hr, &[a * bump, b, c], &opts).unwrap();
            prop_assert!(w <= v + 1e-6);
        }
    }
}
