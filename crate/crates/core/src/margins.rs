//! Univariate tail models: GEV transforms, the Poisson point process
//! threshold likelihood, regional covariate models and return levels.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::network::CatchmentSummary;
use crate::optim::{self, NelderMeadOptions};

/// GEV parameters: location b, scale a > 0, shape ξ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GevParams {
    pub loc: f64,
    pub scale: f64,
    pub shape: f64,
}

/// Below this |ξz| the Box–Cox type expressions use their series expansion.
const SERIES_W: f64 = 1e-3;

/// log(1 + ξz)/ξ, or `None` outside the support.
fn log_box_cox(xi: f64, z: f64) -> Option<f64> {
    let w = xi * z;
    if w.abs() < SERIES_W {
        // z·log1p(w)/w
        let s = 1.0 - w / 2.0 + w * w / 3.0 - w.powi(3) / 4.0 + w.powi(4) / 5.0 - w.powi(5) / 6.0;
        return Some(z * s);
    }
    let t = 1.0 + w;
    if t > 0.0 {
        Some(t.ln() / xi)
    } else {
        None
    }
}

/// ∂/∂ξ of log(1 + ξz)/ξ inside the support.
fn dlog_box_cox_dxi(xi: f64, z: f64) -> f64 {
    let w = xi * z;
    if w.abs() < SERIES_W {
        let s = -0.5 + 2.0 * w / 3.0 - 0.75 * w * w + 0.8 * w.powi(3) - 5.0 * w.powi(4) / 6.0 + 6.0 * w.powi(5) / 7.0;
        return z * z * s;
    }
    let t = 1.0 + w;
    -t.ln() / (xi * xi) + z / (xi * t)
}

impl GevParams {
    pub fn new(loc: f64, scale: f64, shape: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) || !loc.is_finite() || !shape.is_finite() {
            return Err(Error::domain(format!("invalid GEV parameters ({loc}, {scale}, {shape})")));
        }
        Ok(Self { loc, scale, shape })
    }

    pub fn standardize(&self, x: f64) -> f64 {
        (x - self.loc) / self.scale
    }

    pub fn in_support(&self, x: f64) -> bool {
        log_box_cox(self.shape, self.standardize(x)).is_some()
    }

    /// log U(x), `None` outside the support.
    pub fn log_frechet(&self, x: f64) -> Option<f64> {
        log_box_cox(self.shape, self.standardize(x))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        (-1.0 / frechet_transform(self, x)).exp()
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain(format!("probability {p} outside (0, 1)")));
        }
        let y = -p.ln();
        let xi = self.shape;
        let l = y.ln();
        let z = if xi == 0.0 { -l } else { (-xi * l).exp_m1() / xi };
        Ok(self.loc + self.scale * z)
    }
}

/// U(x) = (1 + ξ(x − b)/a)₊^{1/ξ}: unit Fréchet scale. Points below the
/// lower endpoint map to 0, points above a finite upper endpoint to ∞.
pub fn frechet_transform(gev: &GevParams, x: f64) -> f64 {
    match gev.log_frechet(x) {
        Some(l) => l.exp(),
        None if gev.shape > 0.0 => 0.0,
        None => f64::INFINITY,
    }
}

/// Same transform on an already standardized value.
pub fn frechet_standardized(shape: f64, z: f64) -> f64 {
    let g = GevParams {
        loc: 0.0,
        scale: 1.0,
        shape,
    };
    frechet_transform(&g, z)
}

/// P{X > u} ≈ (1/n)·(1 + ξ(u − b)/a)₊^{−1/ξ} for one of n observations per
/// year, capped at 1.
pub fn tail_prob(gev: &GevParams, u: f64, n_per_year: f64) -> f64 {
    (1.0 / (n_per_year * frechet_transform(gev, u))).min(1.0)
}

/// Level exceeded on average once every `t_years` years.
pub fn return_level(gev: &GevParams, t_years: f64) -> Result<f64> {
    if !(t_years > 1.0) {
        return Err(Error::domain(format!("return period {t_years} must exceed 1")));
    }
    gev.quantile(1.0 - 1.0 / t_years)
}

/// Negative log-likelihood of the Poisson point process model for
/// exceedances of `q` over `n_years` years; +∞ outside the support.
pub fn ppp_nll(gev: &GevParams, exceedances: &[f64], q: f64, n_years: f64) -> f64 {
    if !(gev.scale > 0.0) {
        return f64::INFINITY;
    }
    let Some(lq) = gev.log_frechet(q) else {
        return f64::INFINITY;
    };
    let mut nll = n_years * (-lq).exp();
    let log_a = gev.scale.ln();
    for &x in exceedances {
        match gev.log_frechet(x) {
            Some(l) => nll += log_a + (1.0 + gev.shape) * l,
            None => return f64::INFINITY,
        }
    }
    nll
}

/// Partial derivatives of log U(x) with respect to (b, a, ξ).
fn dlog_frechet(gev: &GevParams, x: f64) -> Option<(f64, [f64; 3])> {
    let z = gev.standardize(x);
    let xi = gev.shape;
    let l = log_box_cox(xi, z)?;
    let t = 1.0 + xi * z;
    let db = -1.0 / (gev.scale * t);
    let da = -z / (gev.scale * t);
    Some((l, [db, da, dlog_box_cox_dxi(xi, z)]))
}

/// Gradient of [`ppp_nll`] with respect to (loc, scale, shape).
pub fn ppp_nll_grad(gev: &GevParams, exceedances: &[f64], q: f64, n_years: f64) -> Result<[f64; 3]> {
    let (lq, dq) = dlog_frechet(gev, q).ok_or_else(|| Error::domain("threshold outside the GEV support"))?;
    let w = -n_years * (-lq).exp();
    let mut g = [w * dq[0], w * dq[1], w * dq[2]];
    for &x in exceedances {
        let (l, d) = dlog_frechet(gev, x).ok_or_else(|| Error::domain("exceedance outside the GEV support"))?;
        let c = 1.0 + gev.shape;
        g[0] += c * d[0];
        g[1] += 1.0 / gev.scale + c * d[1];
        g[2] += l + c * d[2];
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationFit {
    pub gev: GevParams,
    /// Standard errors of (loc, scale, shape); NaN when the observed
    /// information is not positive definite. The shape SE is 0 for
    /// Gumbel fits.
    pub se: [f64; 3],
    pub nll: f64,
    pub threshold: f64,
    pub n_exceedances: usize,
    pub n_years: f64,
    pub evaluations: usize,
}

fn check_exceedances(exceedances: &[f64], q: f64, n_years: f64) -> Result<()> {
    if !(n_years > 0.0) {
        return Err(Error::input("number of years must be positive"));
    }
    if exceedances.len() < 3 {
        return Err(Error::estimation(format!(
            "{} exceedances are too few for a tail fit",
            exceedances.len()
        )));
    }
    if exceedances.iter().any(|x| !(x.is_finite() && *x > q)) {
        return Err(Error::input("all exceedances must be finite and above the threshold"));
    }
    let first = exceedances[0];
    if exceedances.iter().all(|x| *x == first) {
        return Err(Error::estimation("all exceedances are equal; the tail scale is not identifiable"));
    }
    Ok(())
}

/// Exponential-tail starting values: a = mean excess, b from the rate.
fn gumbel_start(exceedances: &[f64], q: f64, n_years: f64) -> (f64, f64) {
    let n = exceedances.len() as f64;
    let a = exceedances.iter().map(|x| x - q).sum::<f64>() / n;
    (q + a * (n / n_years).ln(), a)
}

fn fd_steps(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| 1e-4 * v.abs().max(1e-2)).collect()
}

fn inverse_se(h: &DMatrix<f64>) -> Vec<f64> {
    match h.clone().cholesky() {
        Some(c) => c.inverse().diagonal().iter().map(|v| v.sqrt()).collect(),
        None => vec![f64::NAN; h.nrows()],
    }
}

/// Maximum likelihood fit of the point process model to one station.
pub fn fit_station(exceedances: &[f64], q: f64, n_years: f64) -> Result<StationFit> {
    check_exceedances(exceedances, q, n_years)?;
    let (b0, a0) = gumbel_start(exceedances, q, n_years);
    let obj = |t: &[f64]| {
        let g = GevParams {
            loc: t[0],
            scale: t[1].exp(),
            shape: t[2],
        };
        ppp_nll(&g, exceedances, q, n_years)
    };
    let opts = NelderMeadOptions {
        rel_diameter_tol: 1e-8,
        rel_value_tol: 0.0,
        max_evals: 4000,
        restarts: 2,
    };
    let mut best: Option<optim::Minimum> = None;
    for xi0 in [0.0, 0.2, -0.1] {
        let m = optim::nelder_mead(obj, &[b0, a0.ln(), xi0], &[0.5 * a0, 0.2, 0.1], &opts);
        if best.as_ref().is_none_or(|b| m.f < b.f) {
            best = Some(m);
        }
    }
    let m = best.expect("at least one start");
    if !m.f.is_finite() {
        return Err(Error::Convergence {
            message: "point process likelihood is infinite at every start".into(),
            evaluations: m.evaluations,
            trace: m.trace,
        });
    }
    let natural = [m.x[0], m.x[1].exp(), m.x[2]];
    let f_nat = |t: &[f64]| match GevParams::new(t[0], t[1], t[2]) {
        Ok(g) => ppp_nll(&g, exceedances, q, n_years),
        Err(_) => f64::INFINITY,
    };
    let g_nat = |t: &[f64]| {
        GevParams::new(t[0], t[1], t[2])
            .and_then(|g| ppp_nll_grad(&g, exceedances, q, n_years))
            .map(|g| g.to_vec())
            .unwrap_or_else(|_| vec![f64::NAN; 3])
    };
    let (x, f) = optim::newton_polish(f_nat, g_nat, &natural, &fd_steps(&natural), 20);
    let h = optim::hessian_from_gradient(g_nat, &x, &fd_steps(&x));
    let se = inverse_se(&h);
    Ok(StationFit {
        gev: GevParams::new(x[0], x[1], x[2])?,
        se: [se[0], se[1], se[2]],
        nll: f,
        threshold: q,
        n_exceedances: exceedances.len(),
        n_years,
        evaluations: m.evaluations,
    })
}

/// Fit with ξ fixed at 0.
pub fn fit_station_gumbel(exceedances: &[f64], q: f64, n_years: f64) -> Result<StationFit> {
    check_exceedances(exceedances, q, n_years)?;
    let (b0, a0) = gumbel_start(exceedances, q, n_years);
    let f = |t: &[f64]| match GevParams::new(t[0], t[1], 0.0) {
        Ok(g) => ppp_nll(&g, exceedances, q, n_years),
        Err(_) => f64::INFINITY,
    };
    let g = |t: &[f64]| {
        GevParams::new(t[0], t[1], 0.0)
            .and_then(|g| ppp_nll_grad(&g, exceedances, q, n_years))
            .map(|g| vec![g[0], g[1]])
            .unwrap_or_else(|_| vec![f64::NAN; 2])
    };
    let (x, nll) = optim::newton_polish(f, g, &[b0, a0], &fd_steps(&[b0, a0]), 50);
    let h = optim::hessian_from_gradient(g, &x, &fd_steps(&x));
    let se = inverse_se(&h);
    Ok(StationFit {
        gev: GevParams::new(x[0], x[1], 0.0)?,
        se: [se[0], se[1], 0.0],
        nll,
        threshold: q,
        n_exceedances: exceedances.len(),
        n_years,
        evaluations: 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Likelihood-ratio test of a restricted model against a larger one.
pub fn lr_test(nll_restricted: f64, nll_full: f64, df: usize) -> Result<LrTest> {
    if df == 0 {
        return Err(Error::input("likelihood ratio test needs df >= 1"));
    }
    let statistic = (2.0 * (nll_restricted - nll_full)).max(0.0);
    let chi = ChiSquared::new(df as f64).map_err(|e| Error::domain(e.to_string()))?;
    Ok(LrTest {
        statistic,
        df,
        p_value: chi.sf(statistic),
    })
}

/// Catchment covariate entering the regional log-linear model as log P.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariate {
    /// Constant term (log P = 1).
    Intercept,
    Latitude,
    Area,
    Altitude,
    Slope,
}

impl Covariate {
    pub const CATCHMENT: [Covariate; 4] = [Covariate::Latitude, Covariate::Area, Covariate::Altitude, Covariate::Slope];

    pub fn design_value(self, s: &CatchmentSummary) -> Result<f64> {
        let p = match self {
            Covariate::Intercept => return Ok(1.0),
            Covariate::Latitude => s.centroid_latitude_deg,
            Covariate::Area => s.area_km2,
            Covariate::Altitude => s.mean_altitude_m,
            Covariate::Slope => s.mean_slope,
        };
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::input(format!("covariate {self} = {p} must be positive for the log model")));
        }
        Ok(p.ln())
    }
}

impl fmt::Display for Covariate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Covariate::Intercept => "intercept",
            Covariate::Latitude => "latitude",
            Covariate::Area => "area",
            Covariate::Altitude => "altitude",
            Covariate::Slope => "slope",
        })
    }
}

impl FromStr for Covariate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "intercept" | "const" => Ok(Covariate::Intercept),
            "latitude" | "lat" => Ok(Covariate::Latitude),
            "area" | "size" => Ok(Covariate::Area),
            "altitude" | "alt" => Ok(Covariate::Altitude),
            "slope" => Ok(Covariate::Slope),
            other => Err(Error::input(format!("unknown covariate '{other}'"))),
        }
    }
}

/// Exceedance data of one station for marginal fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct StationMargins {
    pub id: String,
    pub region: String,
    pub summary: CatchmentSummary,
    pub exceedances: Vec<f64>,
    pub threshold: f64,
    pub n_years: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionCoefficients {
    pub name: String,
    /// log scale = Σ_k alpha_k · log P_k.
    pub alpha: Vec<f64>,
    /// log location = Σ_k beta_k · log P_k.
    pub beta: Vec<f64>,
    pub shape: f64,
    pub se_alpha: Vec<f64>,
    pub se_beta: Vec<f64>,
    pub se_shape: f64,
    pub nll: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionalModel {
    pub covariates: Vec<Covariate>,
    pub regions: Vec<RegionCoefficients>,
}

impl RegionalModel {
    pub fn region(&self, name: &str) -> Result<&RegionCoefficients> {
        self.regions
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| Error::input(format!("unknown region '{name}'")))
    }

    /// Predicted GEV parameters for a (possibly ungauged) location.
    pub fn predict(&self, region: &str, summary: &CatchmentSummary) -> Result<GevParams> {
        let r = self.region(region)?;
        let x = design_row(&self.covariates, summary)?;
        region_gev(&r.alpha, &r.beta, r.shape, &x)
    }

    /// Total negative log-likelihood over all regions.
    pub fn nll(&self) -> f64 {
        self.regions.iter().map(|r| r.nll).sum()
    }

    pub fn n_parameters(&self) -> usize {
        self.regions.len() * (2 * self.covariates.len() + 1)
    }
}

fn design_row(cov: &[Covariate], s: &CatchmentSummary) -> Result<Vec<f64>> {
    cov.iter().map(|c| c.design_value(s)).collect()
}

fn region_gev(alpha: &[f64], beta: &[f64], shape: f64, x: &[f64]) -> Result<GevParams> {
    let la: f64 = alpha.iter().zip(x).map(|(c, v)| c * v).sum();
    let lb: f64 = beta.iter().zip(x).map(|(c, v)| c * v).sum();
    GevParams::new(lb.exp(), la.exp(), shape)
}

/// Columns of `x` that are linear combinations of earlier ones.
fn collinear_columns(x: &DMatrix<f64>) -> Vec<usize> {
    let mut bad = Vec::new();
    let mut kept: Vec<usize> = Vec::new();
    for j in 0..x.ncols() {
        let mut cols = kept.clone();
        cols.push(j);
        let sub = DMatrix::from_fn(x.nrows(), cols.len(), |r, c| x[(r, cols[c])]);
        let sv = sub.singular_values();
        let max = sv.max();
        if sv.len() > x.nrows() || sv.min() <= 1e-10 * max.max(1e-300) || cols.len() > x.nrows() {
            bad.push(j);
        } else {
            kept.push(j);
        }
    }
    bad
}

fn region_nll(theta: &[f64], p: usize, design: &[Vec<f64>], data: &[&StationMargins]) -> f64 {
    let mut total = 0.0;
    for (x, st) in design.iter().zip(data) {
        match region_gev(&theta[..p], &theta[p..2 * p], theta[2 * p], x) {
            Ok(g) => total += ppp_nll(&g, &st.exceedances, st.threshold, st.n_years),
            Err(_) => return f64::INFINITY,
        }
    }
    total
}

fn region_grad(theta: &[f64], p: usize, design: &[Vec<f64>], data: &[&StationMargins]) -> Vec<f64> {
    let mut g = vec![0.0; 2 * p + 1];
    for (x, st) in design.iter().zip(data) {
        let Ok(gev) = region_gev(&theta[..p], &theta[p..2 * p], theta[2 * p], x) else {
            return vec![f64::NAN; 2 * p + 1];
        };
        let Ok(d) = ppp_nll_grad(&gev, &st.exceedances, st.threshold, st.n_years) else {
            return vec![f64::NAN; 2 * p + 1];
        };
        for k in 0..p {
            g[k] += d[1] * gev.scale * x[k];
            g[p + k] += d[0] * gev.loc * x[k];
        }
        g[2 * p] += d[2];
    }
    g
}

/// Independence-likelihood fit of the regional log-linear model; regions
/// share no parameters and are fitted separately.
pub fn fit_regional(data: &[StationMargins], covariates: &[Covariate]) -> Result<RegionalModel> {
    if covariates.is_empty() {
        return Err(Error::input("regional model needs at least one covariate"));
    }
    let mut names: Vec<String> = Vec::new();
    for s in data {
        if !names.contains(&s.region) {
            names.push(s.region.clone());
        }
    }
    let p = covariates.len();
    let mut regions = Vec::new();
    for name in names {
        let members: Vec<&StationMargins> = data.iter().filter(|s| s.region == name).collect();
        let design: Vec<Vec<f64>> = members
            .iter()
            .map(|s| design_row(covariates, &s.summary))
            .collect::<Result<_>>()?;
        let xm = DMatrix::from_fn(members.len(), p, |r, c| design[r][c]);
        let bad = collinear_columns(&xm);
        if !bad.is_empty() {
            let cols: Vec<String> = bad.iter().map(|&j| covariates[j].to_string()).collect();
            return Err(Error::input(format!(
                "region '{name}': covariate design is rank deficient; collinear columns: {}",
                cols.join(", ")
            )));
        }
        // Start from least squares on per-station estimates.
        let mut log_a = Vec::new();
        let mut log_b = Vec::new();
        let mut shapes = Vec::new();
        for s in &members {
            check_exceedances(&s.exceedances, s.threshold, s.n_years)?;
            let fit = fit_station(&s.exceedances, s.threshold, s.n_years).or_else(|_| fit_station_gumbel(&s.exceedances, s.threshold, s.n_years))?;
            if fit.gev.loc <= 0.0 {
                return Err(Error::domain(format!(
                    "station '{}' has a nonpositive location estimate; the log-linear model needs positive locations",
                    s.id
                )));
            }
            log_a.push(fit.gev.scale.ln());
            log_b.push(fit.gev.loc.ln());
            shapes.push(fit.gev.shape);
        }
        let svd = xm.clone().svd(true, true);
        let ca = svd.solve(&DVector::from_vec(log_a), 1e-12).map_err(|e| Error::estimation(e.to_string()))?;
        let cb = svd.solve(&DVector::from_vec(log_b), 1e-12).map_err(|e| Error::estimation(e.to_string()))?;
        let mut sorted = shapes.clone();
        sorted.sort_by(f64::total_cmp);
        let xi0 = sorted[sorted.len() / 2];
        let mut theta0: Vec<f64> = ca.iter().chain(cb.iter()).copied().collect();
        theta0.push(xi0);
        let obj = |t: &[f64]| region_nll(t, p, &design, &members);
        let grad = |t: &[f64]| region_grad(t, p, &design, &members);
        let steps: Vec<f64> = theta0.iter().map(|v| 0.02 * v.abs().max(0.5)).collect();
        let opts = NelderMeadOptions {
            rel_diameter_tol: 1e-7,
            rel_value_tol: 0.0,
            max_evals: 6000,
            restarts: 2,
        };
        let m = optim::nelder_mead(obj, &theta0, &steps, &opts);
        let start = if m.f <= obj(&theta0) { m.x.clone() } else { theta0.clone() };
        let h = fd_steps(&start);
        let (theta, nll) = optim::newton_polish(obj, grad, &start, &h, 50);
        if !nll.is_finite() {
            return Err(Error::Convergence {
                message: format!("regional fit for '{name}' did not reach a finite likelihood"),
                evaluations: m.evaluations,
                trace: m.trace,
            });
        }
        let hm = optim::hessian_from_gradient(grad, &theta, &fd_steps(&theta));
        let se = inverse_se(&hm);
        regions.push(RegionCoefficients {
            name,
            alpha: theta[..p].to_vec(),
            beta: theta[p..2 * p].to_vec(),
            shape: theta[2 * p],
            se_alpha: se[..p].to_vec(),
            se_beta: se[p..2 * p].to_vec(),
            se_shape: se[2 * p],
            nll,
        });
    }
    Ok(RegionalModel {
        covariates: covariates.to_vec(),
        regions,
    })
}
