//! Estimation of the dependence parameters from Pareto-scale events by the
//! spectral and censored likelihoods, with bootstrap standard errors.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_4;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hr_core::{CensoredTerm, HrEvaluator};
use crate::kernels::{KernelGeometry, KernelParams, KernelVariant, Param, StationSet};
use crate::mvn::MvnOptions;
use crate::network::RiverNetwork;
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::stats::{pairwise_sum, quantile, std_dev};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    Spectral,
    Censored,
}

impl std::str::FromStr for FitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "spectral" => Ok(FitMethod::Spectral),
            "censored" => Ok(FitMethod::Censored),
            other => Err(Error::input(format!("unknown fit method '{other}'"))),
        }
    }
}

/// Closed search interval for each parameter. λ's, τ and c are searched on
/// the log scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub lambda_riv: [f64; 2],
    pub lambda_euc: [f64; 2],
    pub tau_km: [f64; 2],
    pub alpha: [f64; 2],
    pub beta_rad: [f64; 2],
    pub c: [f64; 2],
}

impl Default for ParamBox {
    fn default() -> Self {
        Self {
            lambda_riv: [1e-4, 20.0],
            lambda_euc: [1e-8, 10.0],
            tau_km: [1.0, 1e5],
            alpha: [0.01, 2.0],
            beta_rad: [FRAC_PI_4, 3.0 * FRAC_PI_4],
            c: [0.05, 20.0],
        }
    }
}

impl ParamBox {
    pub fn bounds(&self, p: Param) -> [f64; 2] {
        match p {
            Param::LambdaRiv => self.lambda_riv,
            Param::LambdaEuc => self.lambda_euc,
            Param::Tau => self.tau_km,
            Param::Alpha => self.alpha,
            Param::Beta => self.beta_rad,
            Param::C => self.c,
        }
    }

    fn log_scale(p: Param) -> bool {
        !matches!(p, Param::Alpha | Param::Beta)
    }

    pub fn validate(&self) -> Result<()> {
        for p in Param::ALL {
            let [lo, hi] = self.bounds(p);
            if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                return Err(Error::input(format!("empty search interval for {}", p.name())));
            }
            if Self::log_scale(p) && lo <= 0.0 {
                return Err(Error::input(format!("{} needs a positive lower bound", p.name())));
            }
        }
        let check = |p: Param, lo: f64, hi: f64| {
            let [a, b] = self.bounds(p);
            if a < lo || b > hi {
                Err(Error::input(format!("{} interval [{a}, {b}] leaves [{lo}, {hi}]", p.name())))
            } else {
                Ok(())
            }
        };
        check(Param::Alpha, f64::MIN_POSITIVE, 2.0)?;
        check(Param::Beta, FRAC_PI_4 - 1e-12, 3.0 * FRAC_PI_4 + 1e-12)
    }

    /// Whether the free parameters of `params` lie in the box.
    pub fn contains(&self, params: &KernelParams) -> bool {
        params.variant.free_parameters().iter().all(|p| {
            let [lo, hi] = self.bounds(*p);
            let v = params.get(*p);
            v >= lo && v <= hi
        })
    }

    /// Copy of `params` with every free coordinate at least `margin` away
    /// from the box edges on the search scale.
    pub fn pull_inside(&self, params: &KernelParams, margin: f64) -> KernelParams {
        let mut out = *params;
        for p in params.variant.free_parameters() {
            let t = self.unit_coord(*p, params.get(*p)).clamp(margin, 1.0 - margin);
            out.set(*p, self.unit_value(*p, t));
        }
        out
    }

    fn unit_coord(&self, p: Param, v: f64) -> f64 {
        let [lo, hi] = self.bounds(p);
        if Self::log_scale(p) {
            (v.ln() - lo.ln()) / (hi.ln() - lo.ln())
        } else {
            (v - lo) / (hi - lo)
        }
    }

    fn unit_value(&self, p: Param, t: f64) -> f64 {
        let [lo, hi] = self.bounds(p);
        let t = t.clamp(0.0, 1.0);
        if Self::log_scale(p) {
            (lo.ln() + t * (hi.ln() - lo.ln())).exp().clamp(lo, hi)
        } else {
            (lo + t * (hi - lo)).clamp(lo, hi)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub method: FitMethod,
    /// Spectral radius as an empirical quantile of ‖X‖₁ ...
    pub spectral_quantile: f64,
    /// ... unless given explicitly.
    pub spectral_threshold: Option<f64>,
    /// Censoring level on the Pareto scale, common to all stations ...
    pub censor_level: f64,
    /// ... unless given per station.
    pub censor_levels: Option<Vec<f64>>,
    pub bounds: ParamBox,
    /// Grid points per free parameter for the spectral start.
    pub grid_points: usize,
    pub optimizer: NelderMeadOptions,
    /// Lattice points per shift and number of shifts for every Gaussian
    /// distribution function inside the censored likelihood.
    pub qmc_points: usize,
    pub qmc_shifts: usize,
    pub qmc_seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            method: FitMethod::Censored,
            spectral_quantile: 0.9,
            spectral_threshold: None,
            censor_level: 10.0,
            censor_levels: None,
            bounds: ParamBox::default(),
            grid_points: 4,
            optimizer: NelderMeadOptions {
                restarts: 0,
                rel_value_tol: 1e-9,
                ..NelderMeadOptions::default()
            },
            qmc_points: 64,
            qmc_shifts: 1,
            qmc_seed: 0x0dd5_eed5,
        }
    }
}

impl FitConfig {
    pub fn spectral() -> Self {
        Self {
            method: FitMethod::Spectral,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        if !(self.spectral_quantile > 0.0 && self.spectral_quantile < 1.0) {
            return Err(Error::input("spectral quantile must lie in (0, 1)"));
        }
        if self.grid_points == 0 || self.qmc_points == 0 || self.qmc_shifts == 0 {
            return Err(Error::input("grid and QMC sizes must be positive"));
        }
        Ok(())
    }

    fn mvn(&self) -> MvnOptions {
        MvnOptions::fixed(self.qmc_points, self.qmc_shifts, self.qmc_seed)
    }

    /// Per-station censoring levels.
    pub fn censor_thresholds(&self, m: usize) -> Result<Vec<f64>> {
        let u = match &self.censor_levels {
            Some(v) if v.len() != m => {
                return Err(Error::input(format!("{} censoring levels for {m} stations", v.len())))
            }
            Some(v) => v.clone(),
            None => vec![self.censor_level; m],
        };
        if u.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::input("censoring levels must be positive"));
        }
        Ok(u)
    }

    /// Radius u of the spectral likelihood for these events.
    pub fn spectral_radius(&self, events: &[Vec<f64>]) -> Result<f64> {
        if let Some(u) = self.spectral_threshold {
            return Ok(u);
        }
        let norms: Vec<f64> = complete(events).map(|x| x.iter().sum()).collect();
        quantile(&norms, self.spectral_quantile)
    }
}

fn complete(events: &[Vec<f64>]) -> impl Iterator<Item = &Vec<f64>> {
    events.iter().filter(|x| x.iter().all(|v| v.is_finite()))
}

fn check_events(events: &[Vec<f64>], m: usize) -> Result<()> {
    if events.is_empty() {
        return Err(Error::estimation("no events"));
    }
    for (i, x) in events.iter().enumerate() {
        if x.len() != m {
            return Err(Error::input(format!("event {i} has {} values for {m} stations", x.len())));
        }
        if x.iter().any(|v| !v.is_nan() && !(*v > 0.0 && v.is_finite())) {
            return Err(Error::input(format!("event {i} is not on the Pareto scale")));
        }
    }
    Ok(())
}

/// Angular parts ω = X/‖X‖₁ of the complete events with ‖X‖₁ > u.
#[derive(Debug, Clone)]
struct SpectralData {
    omegas: Vec<Vec<f64>>,
}

impl SpectralData {
    fn new(events: &[Vec<f64>], u: f64) -> Result<Self> {
        let omegas: Vec<Vec<f64>> = complete(events)
            .filter_map(|x| {
                let r: f64 = x.iter().sum();
                (r > u).then(|| x.iter().map(|v| v / r).collect())
            })
            .collect();
        if omegas.is_empty() {
            return Err(Error::estimation(format!(
                "threshold too high: no event has L1 norm above {u}"
            )));
        }
        Ok(Self { omegas })
    }

    fn nll(&self, geo: &KernelGeometry, params: &KernelParams) -> Result<f64> {
        let ev = HrEvaluator::new(geo.hr_structure(params)?, MvnOptions::default());
        let terms = self
            .omegas
            .par_iter()
            .map(|w| ev.log_spectral_density(w))
            .collect::<Result<Vec<f64>>>()?;
        Ok(-pairwise_sum(&terms))
    }
}

/// Events grouped by their pattern of observed stations.
#[derive(Debug, Clone)]
struct CensoredData {
    u: Vec<f64>,
    groups: Vec<CensoredGroup>,
    n_exceeding: usize,
}

#[derive(Debug, Clone)]
struct CensoredGroup {
    observed: Vec<usize>,
    n_below: usize,
    /// Distinct exceeding events with their multiplicities.
    terms: Vec<(CensoredTerm, f64)>,
}

impl CensoredData {
    fn new(events: &[Vec<f64>], u: Vec<f64>) -> Result<Self> {
        let mut by_pattern: BTreeMap<Vec<usize>, CensoredGroup> = BTreeMap::new();
        // Identical events (same bits, hence same pattern) share one term.
        let mut seen: BTreeMap<Vec<u64>, usize> = BTreeMap::new();
        let mut n_exceeding = 0;
        for x in events {
            let observed: Vec<usize> = (0..x.len()).filter(|&j| !x[j].is_nan()).collect();
            if observed.is_empty() {
                continue;
            }
            let g = by_pattern.entry(observed.clone()).or_insert_with(|| CensoredGroup {
                observed: observed.clone(),
                n_below: 0,
                terms: Vec::new(),
            });
            if observed.iter().all(|&j| x[j] <= u[j]) {
                g.n_below += 1;
            } else {
                n_exceeding += 1;
                let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
                if let Some(&k) = seen.get(&key) {
                    g.terms[k].1 += 1.0;
                    continue;
                }
                let xs = observed.iter().map(|&j| x[j]).collect();
                let us = observed.iter().map(|&j| u[j]).collect();
                seen.insert(key, g.terms.len());
                g.terms.push((CensoredTerm::new(xs, us)?, 1.0));
            }
        }
        if n_exceeding == 0 {
            return Err(Error::estimation("no event exceeds the censoring levels"));
        }
        Ok(Self {
            u,
            groups: by_pattern.into_values().collect(),
            n_exceeding,
        })
    }

    fn nll(&self, geo: &KernelGeometry, params: &KernelParams, opts: &MvnOptions) -> Result<f64> {
        let hr = geo.hr_structure(params)?;
        let m = hr.dim();
        let mut parts = Vec::with_capacity(self.groups.len() + 1);
        let full = HrEvaluator::new(hr.clone(), opts.clone());
        if full.exponent_measure(&self.u)? >= 1.0 {
            return Ok(f64::INFINITY);
        }
        for g in &self.groups {
            let ev = if g.observed.len() == m {
                None
            } else {
                Some(HrEvaluator::new(hr.restrict(&g.observed), opts.clone()))
            };
            let ev = ev.as_ref().unwrap_or(&full);
            if g.n_below > 0 {
                let us: Vec<f64> = g.observed.iter().map(|&j| self.u[j]).collect();
                let v = ev.exponent_measure(&us)?;
                if v >= 1.0 {
                    return Ok(f64::INFINITY);
                }
                parts.push(g.n_below as f64 * (-v).ln_1p());
            }
            let terms = g
                .terms
                .par_iter()
                .map(|(t, w)| Ok(w * ev.log_censored_density(t)?))
                .collect::<Result<Vec<f64>>>()?;
            parts.push(pairwise_sum(&terms));
        }
        let ll = pairwise_sum(&parts);
        Ok(if ll.is_nan() { f64::INFINITY } else { -ll })
    }
}

enum Objective {
    Spectral(SpectralData),
    Censored(CensoredData, MvnOptions),
}

impl Objective {
    fn build(config: &FitConfig, method: FitMethod, events: &[Vec<f64>], m: usize) -> Result<Self> {
        Ok(match method {
            FitMethod::Spectral => Objective::Spectral(SpectralData::new(events, config.spectral_radius(events)?)?),
            FitMethod::Censored => {
                Objective::Censored(CensoredData::new(events, config.censor_thresholds(m)?)?, config.mvn())
            }
        })
    }

    fn n_used(&self) -> usize {
        match self {
            Objective::Spectral(d) => d.omegas.len(),
            Objective::Censored(d, _) => d.n_exceeding,
        }
    }

    fn nll(&self, geo: &KernelGeometry, params: &KernelParams) -> Result<f64> {
        match self {
            Objective::Spectral(d) => d.nll(geo, params),
            Objective::Censored(d, o) => d.nll(geo, params, o),
        }
    }

    /// Objective for the optimizer: failures count as +∞.
    fn value(&self, geo: &KernelGeometry, params: &KernelParams) -> f64 {
        match self.nll(geo, params) {
            Ok(v) if !v.is_nan() => v,
            _ => f64::INFINITY,
        }
    }
}

fn check_inputs(config: &FitConfig, events: &[Vec<f64>], stations: &StationSet) -> Result<()> {
    config.validate()?;
    check_events(events, stations.len())?;
    if stations.len() < 2 {
        return Err(Error::input("dependence fitting needs at least two stations"));
    }
    Ok(())
}

fn nll_at(
    config: &FitConfig,
    method: FitMethod,
    params: &KernelParams,
    events: &[Vec<f64>],
    net: &RiverNetwork,
    stations: &StationSet,
) -> Result<f64> {
    check_inputs(config, events, stations)?;
    let obj = Objective::build(config, method, events, stations.len())?;
    if params.validate().is_err() || !config.bounds.contains(params) {
        return Ok(f64::INFINITY);
    }
    obj.nll(&KernelGeometry::new(net, stations)?, params)
}

/// Negative spectral log-likelihood; +∞ outside the box.
pub fn spectral_nll(
    config: &FitConfig,
    params: &KernelParams,
    events: &[Vec<f64>],
    net: &RiverNetwork,
    stations: &StationSet,
) -> Result<f64> {
    nll_at(config, FitMethod::Spectral, params, events, net, stations)
}

/// Negative censored log-likelihood; +∞ outside the box or when V(u) ≥ 1.
/// Missing (`NaN`) entries are marginalised out.
pub fn censored_nll(
    config: &FitConfig,
    params: &KernelParams,
    events: &[Vec<f64>],
    net: &RiverNetwork,
    stations: &StationSet,
) -> Result<f64> {
    nll_at(config, FitMethod::Censored, params, events, net, stations)
}

/// Maps unconstrained coordinates onto the free parameters in the box.
struct Coords<'a> {
    base: KernelParams,
    free: Vec<Param>,
    bounds: &'a ParamBox,
}

impl Coords<'_> {
    fn params(&self, z: &[f64]) -> KernelParams {
        let mut p = self.base;
        for (k, v) in self.free.iter().zip(z) {
            let t = 1.0 / (1.0 + (-v).exp());
            p.set(*k, self.bounds.unit_value(*k, t));
        }
        p
    }

    fn z(&self, params: &KernelParams) -> Vec<f64> {
        self.free
            .iter()
            .map(|k| {
                let t = self.bounds.unit_coord(*k, params.get(*k)).clamp(1e-6, 1.0 - 1e-6);
                (t / (1.0 - t)).ln()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub variant: KernelVariant,
    pub method: FitMethod,
    pub estimate: KernelParams,
    pub loglik: f64,
    pub n_events: usize,
    /// Events entering the likelihood: |I| (spectral) or |J| (censored).
    pub n_used: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Free parameters whose estimate sits on the edge of the box.
    pub boundary: Vec<Param>,
    /// Spectral radius or censoring levels actually used.
    pub spectral_threshold: Option<f64>,
    pub censor_levels: Option<Vec<f64>>,
    /// Estimate of the spectral stage for a censored fit.
    pub spectral_start: Option<KernelParams>,
    pub bootstrap: Option<Bootstrap>,
}

impl FitResult {
    pub fn free_parameters(&self) -> &'static [Param] {
        self.variant.free_parameters()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bootstrap {
    /// Componentwise standard deviations over replicates, in the order of
    /// the variant's free parameters.
    pub se: Vec<f64>,
    pub replicates: Vec<Vec<f64>>,
    pub failed: usize,
}

struct Stage {
    estimate: KernelParams,
    nll: f64,
    evaluations: usize,
    converged: bool,
    trace: Vec<f64>,
    boundary: Vec<Param>,
}

fn minimise(
    obj: &Objective,
    geo: &KernelGeometry,
    coords: &Coords,
    start: Vec<f64>,
    step: f64,
    opts: &NelderMeadOptions,
) -> Stage {
    let f = |z: &[f64]| obj.value(geo, &coords.params(z));
    let steps = vec![step; start.len()];
    let m = nelder_mead(f, &start, &steps, opts);
    let estimate = coords.params(&m.x);
    let boundary = coords
        .free
        .iter()
        .filter(|p| {
            let t = coords.bounds.unit_coord(**p, estimate.get(**p));
            !(1e-3..=1.0 - 1e-3).contains(&t)
        })
        .copied()
        .collect();
    Stage {
        estimate,
        nll: m.f,
        evaluations: m.evaluations,
        converged: m.converged,
        trace: m.trace,
        boundary,
    }
}

/// Best point of a regular grid with `g` points per free coordinate
/// (cell midpoints of the unit box).
fn grid_start(obj: &Objective, geo: &KernelGeometry, coords: &Coords, g: usize) -> (Vec<f64>, f64, usize) {
    let d = coords.free.len();
    let total = g.pow(d as u32);
    let level = |i: usize| {
        let t = (2 * i + 1) as f64 / (2 * g) as f64;
        (t / (1.0 - t)).ln()
    };
    let points: Vec<Vec<f64>> = (0..total)
        .map(|mut k| {
            (0..d)
                .map(|_| {
                    let i = k % g;
                    k /= g;
                    level(i)
                })
                .collect()
        })
        .collect();
    let values: Vec<f64> = points.iter().map(|z| obj.value(geo, &coords.params(z))).collect();
    let best = (0..total)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("grid is nonempty");
    (points[best].clone(), values[best], total)
}

fn convergence_error(stage: &Stage, what: &str) -> Error {
    Error::Convergence {
        message: format!("{what} fit stopped at the evaluation cap"),
        evaluations: stage.evaluations,
        trace: stage.trace.clone(),
    }
}

/// Refinement starts at least this far (on the unit search scale) from the
/// box edges; the logit map is flat out there and would pin the simplex.
const START_MARGIN: f64 = 0.02;

/// Full estimation procedure. `start` skips the grid and the spectral stage
/// of a censored fit.
fn fit_inner(
    config: &FitConfig,
    events: &[Vec<f64>],
    geo: &KernelGeometry,
    variant: KernelVariant,
    start: Option<&KernelParams>,
) -> Result<FitResult> {
    let m = geo.dim();
    let coords = Coords {
        base: KernelParams::with_free_values(variant, &[]),
        free: variant.free_parameters().to_vec(),
        bounds: &config.bounds,
    };
    let mut evaluations = 0;
    let mut spectral_start = None;
    let mut spectral_threshold = None;
    let z0 = match (config.method, start) {
        (_, Some(s)) => {
            let mut s = *s;
            s.variant = variant;
            coords.z(&config.bounds.pull_inside(&s.normalized(), START_MARGIN))
        }
        (method, None) => {
            let obj = Objective::build(config, FitMethod::Spectral, events, m)?;
            spectral_threshold = Some(config.spectral_radius(events)?);
            let (z, _, n) = grid_start(&obj, geo, &coords, config.grid_points);
            let stage = minimise(&obj, geo, &coords, z, 0.5, &config.optimizer);
            evaluations += n + stage.evaluations;
            if !stage.converged {
                return Err(convergence_error(&stage, "spectral"));
            }
            if method == FitMethod::Spectral {
                return finish(config, events, variant, &obj, stage, evaluations, spectral_threshold, None);
            }
            spectral_start = Some(stage.estimate);
            coords.z(&config.bounds.pull_inside(&stage.estimate, START_MARGIN))
        }
    };
    let obj = Objective::build(config, config.method, events, m)?;
    if config.method == FitMethod::Spectral {
        spectral_threshold = Some(config.spectral_radius(events)?);
    }
    let stage = minimise(&obj, geo, &coords, z0, 0.3, &config.optimizer);
    evaluations += stage.evaluations;
    if !stage.converged {
        return Err(convergence_error(&stage, "refinement"));
    }
    finish(config, events, variant, &obj, stage, evaluations, spectral_threshold, spectral_start)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    config: &FitConfig,
    events: &[Vec<f64>],
    variant: KernelVariant,
    obj: &Objective,
    stage: Stage,
    evaluations: usize,
    spectral_threshold: Option<f64>,
    spectral_start: Option<KernelParams>,
) -> Result<FitResult> {
    if !stage.nll.is_finite() {
        return Err(Error::estimation("likelihood is not finite anywhere in the search box"));
    }
    let censor_levels = match obj {
        Objective::Censored(d, _) => Some(d.u.clone()),
        Objective::Spectral(_) => None,
    };
    Ok(FitResult {
        variant,
        method: config.method,
        estimate: stage.estimate,
        loglik: -stage.nll,
        n_events: events.len(),
        n_used: obj.n_used(),
        evaluations,
        converged: stage.converged,
        boundary: stage.boundary,
        spectral_threshold,
        censor_levels,
        spectral_start,
        bootstrap: None,
    })
}

/// Fits `variant` to Pareto-scale events. Spectral: grid search then
/// simplex. Censored: the spectral estimate is refined under the censored
/// likelihood.
pub fn fit_dependence(
    config: &FitConfig,
    events: &[Vec<f64>],
    net: &RiverNetwork,
    stations: &StationSet,
    variant: KernelVariant,
) -> Result<FitResult> {
    check_inputs(config, events, stations)?;
    let geo = KernelGeometry::new(net, stations)?;
    fit_inner(config, events, &geo, variant, None)
}

/// As [`fit_dependence`], but refining from a given starting value.
pub fn fit_dependence_from(
    config: &FitConfig,
    events: &[Vec<f64>],
    net: &RiverNetwork,
    stations: &StationSet,
    start: &KernelParams,
) -> Result<FitResult> {
    check_inputs(config, events, stations)?;
    let geo = KernelGeometry::new(net, stations)?;
    fit_inner(config, events, &geo, start.variant, Some(start))
}

/// Nonparametric bootstrap: `b` resamples of the events (with replacement),
/// each refitted. Censored refits start from `fit.estimate`; spectral refits
/// redo the grid search, since spectral estimates often sit on a box edge.
pub fn bootstrap_se(
    config: &FitConfig,
    events: &[Vec<f64>],
    net: &RiverNetwork,
    stations: &StationSet,
    fit: &FitResult,
    b: usize,
    seed: u64,
) -> Result<Bootstrap> {
    if b < 2 {
        return Err(Error::input("the bootstrap needs at least two replicates"));
    }
    check_inputs(config, events, stations)?;
    let geo = KernelGeometry::new(net, stations)?;
    let mut cfg = config.clone();
    cfg.method = fit.method;
    let n = events.len();
    let outcomes: Vec<Option<Vec<f64>>> = (0..b as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r);
            let sample: Vec<Vec<f64>> = (0..n).map(|_| events[rng.random_range(0..n)].clone()).collect();
            let start = (fit.method == FitMethod::Censored).then_some(&fit.estimate);
            fit_inner(&cfg, &sample, &geo, fit.variant, start)
                .ok()
                .map(|f| f.estimate.free_values())
        })
        .collect();
    let failed = outcomes.iter().filter(|o| o.is_none()).count();
    let replicates: Vec<Vec<f64>> = outcomes.into_iter().flatten().collect();
    if replicates.len() < 2 {
        return Err(Error::estimation(format!("{failed} of {b} bootstrap refits failed")));
    }
    let d = fit.variant.free_parameters().len();
    let se = (0..d)
        .map(|k| std_dev(&replicates.iter().map(|r| r[k]).collect::<Vec<_>>()))
        .collect();
    Ok(Bootstrap { se, replicates, failed })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub alpha: f64,
    pub loglik: f64,
    pub estimate: KernelParams,
}

/// Profile log-likelihood over α, maximising the other parameters from
/// `fit.estimate`.
pub fn profile_alpha(
    config: &FitConfig,
    events: &[Vec<f64>],
    net: &RiverNetwork,
    stations: &StationSet,
    fit: &FitResult,
    alphas: &[f64],
) -> Result<Vec<ProfilePoint>> {
    check_inputs(config, events, stations)?;
    let geo = KernelGeometry::new(net, stations)?;
    let obj = Objective::build(config, fit.method, events, stations.len())?;
    let free: Vec<Param> = fit
        .variant
        .free_parameters()
        .iter()
        .copied()
        .filter(|p| *p != Param::Alpha)
        .collect();
    alphas
        .iter()
        .map(|&a| {
            let [lo, hi] = config.bounds.alpha;
            if !(lo..=hi).contains(&a) {
                return Err(Error::input(format!("alpha = {a} outside the search box")));
            }
            let mut base = fit.estimate;
            base.alpha = a;
            let coords = Coords {
                base,
                free: free.clone(),
                bounds: &config.bounds,
            };
            let stage = minimise(&obj, &geo, &coords, coords.z(&base), 0.3, &config.optimizer);
            Ok(ProfilePoint {
                alpha: a,
                loglik: -stage.nll,
                estimate: stage.estimate,
            })
        })
        .collect()
}
