//! Negative-definite dependence kernels on the river network and the
//! quantities derived from them.

use std::collections::HashSet;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, Matrix2, SymmetricEigen, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::network::{CatchmentSummary, FlowRelation, NetLocation, RiverNetwork};
use crate::normal;

/// Kernel family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelVariant {
    /// Γ₁: anisotropic fractal variogram on raw station coordinates.
    Euclid,
    /// Γ₂: anisotropic fractal variogram on hydrological positions.
    Hydro,
    /// Γ₃: river kernel plus anisotropic hydrological variogram.
    Full,
    /// Γ₄: river kernel plus isotropic hydrological variogram.
    FullIso,
}

impl KernelVariant {
    pub const ALL: [KernelVariant; 4] = [
        KernelVariant::Euclid,
        KernelVariant::Hydro,
        KernelVariant::Full,
        KernelVariant::FullIso,
    ];

    pub fn uses_river(self) -> bool {
        matches!(self, KernelVariant::Full | KernelVariant::FullIso)
    }

    pub fn anisotropic(self) -> bool {
        !matches!(self, KernelVariant::FullIso)
    }

    /// Parameters estimated for this variant, in canonical order.
    pub fn free_parameters(self) -> &'static [Param] {
        use Param::*;
        match self {
            KernelVariant::Euclid | KernelVariant::Hydro => &[LambdaEuc, Alpha, Beta, C],
            KernelVariant::Full => &[LambdaRiv, LambdaEuc, Tau, Alpha, Beta, C],
            KernelVariant::FullIso => &[LambdaRiv, LambdaEuc, Tau, Alpha],
        }
    }
}

impl fmt::Display for KernelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelVariant::Euclid => "euclid",
            KernelVariant::Hydro => "hydro",
            KernelVariant::Full => "full",
            KernelVariant::FullIso => "full_iso",
        })
    }
}

impl FromStr for KernelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "euclid" | "gamma1" | "1" => Ok(KernelVariant::Euclid),
            "hydro" | "gamma2" | "2" => Ok(KernelVariant::Hydro),
            "full" | "gamma3" | "3" => Ok(KernelVariant::Full),
            "full_iso" | "gamma4" | "4" => Ok(KernelVariant::FullIso),
            other => Err(Error::input(format!("unknown kernel variant '{other}'"))),
        }
    }
}

/// One of the six dependence parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    LambdaRiv,
    LambdaEuc,
    Tau,
    Alpha,
    Beta,
    C,
}

impl Param {
    pub const ALL: [Param; 6] = [
        Param::LambdaRiv,
        Param::LambdaEuc,
        Param::Tau,
        Param::Alpha,
        Param::Beta,
        Param::C,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Param::LambdaRiv => "lambda_riv",
            Param::LambdaEuc => "lambda_euc",
            Param::Tau => "tau_km",
            Param::Alpha => "alpha",
            Param::Beta => "beta_rad",
            Param::C => "c",
        }
    }
}

pub const BETA_MIN: f64 = FRAC_PI_4;
pub const BETA_MAX: f64 = 3.0 * FRAC_PI_4;

/// Dependence parameters ϑ = (λ_Riv, λ_Euc, τ, α, β, c) with the kernel
/// variant. Γ₁ and Γ₂ carry their single scale in `lambda_euc`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub variant: KernelVariant,
    pub lambda_riv: f64,
    pub lambda_euc: f64,
    pub tau_km: f64,
    pub alpha: f64,
    pub beta_rad: f64,
    pub c: f64,
}

impl KernelParams {
    pub fn full(lambda_riv: f64, lambda_euc: f64, tau_km: f64, alpha: f64, beta_rad: f64, c: f64) -> Self {
        Self {
            variant: KernelVariant::Full,
            lambda_riv,
            lambda_euc,
            tau_km,
            alpha,
            beta_rad,
            c,
        }
    }

    pub fn full_iso(lambda_riv: f64, lambda_euc: f64, tau_km: f64, alpha: f64) -> Self {
        Self {
            variant: KernelVariant::FullIso,
            lambda_riv,
            lambda_euc,
            tau_km,
            alpha,
            beta_rad: FRAC_PI_2,
            c: 1.0,
        }
    }

    /// Γ₁ (`Euclid`) or Γ₂ (`Hydro`) with scale λ.
    pub fn fractal(variant: KernelVariant, lambda: f64, alpha: f64, beta_rad: f64, c: f64) -> Self {
        Self {
            variant,
            lambda_riv: 0.0,
            lambda_euc: lambda,
            tau_km: 1.0,
            alpha,
            beta_rad,
            c,
        }
    }

    /// Resets the parameters the variant does not use to their neutral values.
    pub fn normalized(mut self) -> Self {
        if !self.variant.uses_river() {
            self.lambda_riv = 0.0;
            self.tau_km = 1.0;
        }
        if !self.variant.anisotropic() {
            self.beta_rad = FRAC_PI_2;
            self.c = 1.0;
        }
        self
    }

    pub fn get(&self, p: Param) -> f64 {
        match p {
            Param::LambdaRiv => self.lambda_riv,
            Param::LambdaEuc => self.lambda_euc,
            Param::Tau => self.tau_km,
            Param::Alpha => self.alpha,
            Param::Beta => self.beta_rad,
            Param::C => self.c,
        }
    }

    pub fn set(&mut self, p: Param, v: f64) {
        match p {
            Param::LambdaRiv => self.lambda_riv = v,
            Param::LambdaEuc => self.lambda_euc = v,
            Param::Tau => self.tau_km = v,
            Param::Alpha => self.alpha = v,
            Param::Beta => self.beta_rad = v,
            Param::C => self.c = v,
        }
    }

    /// Values of the variant's free parameters in canonical order.
    pub fn free_values(&self) -> Vec<f64> {
        self.variant.free_parameters().iter().map(|p| self.get(*p)).collect()
    }

    pub fn with_free_values(variant: KernelVariant, values: &[f64]) -> Self {
        let mut out = KernelParams::full(0.0, 0.0, 1.0, 1.0, FRAC_PI_2, 1.0);
        out.variant = variant;
        for (p, v) in variant.free_parameters().iter().zip(values) {
            out.set(*p, *v);
        }
        out.normalized()
    }

    /// Checks the parameter box.
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::domain(format!("{what} = {v} outside its admissible range")));
        if !(self.lambda_riv >= 0.0 && self.lambda_riv.is_finite()) {
            return bad("lambda_riv", self.lambda_riv);
        }
        if !(self.lambda_euc >= 0.0 && self.lambda_euc.is_finite()) {
            return bad("lambda_euc", self.lambda_euc);
        }
        if !(self.tau_km > 0.0 && self.tau_km.is_finite()) {
            return bad("tau_km", self.tau_km);
        }
        if !(self.alpha > 0.0 && self.alpha <= 2.0) {
            return bad("alpha", self.alpha);
        }
        if !(BETA_MIN - 1e-12..=BETA_MAX + 1e-12).contains(&self.beta_rad) {
            return bad("beta_rad", self.beta_rad);
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return bad("c", self.c);
        }
        Ok(())
    }
}

/// A gauged (or query) location together with its catchment summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub id: String,
    /// Raw planar station coordinates (km), used by Γ₁.
    pub coords: [f64; 2],
    pub summary: CatchmentSummary,
}

impl Station {
    pub fn location(&self) -> &NetLocation {
        &self.summary.location
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationSet {
    stations: Vec<Station>,
}

impl StationSet {
    pub fn new(stations: Vec<Station>) -> Result<Self> {
        let mut seen = HashSet::new();
        for s in &stations {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::input(format!("duplicate station id '{}'", s.id)));
            }
            if s.summary.hydro_position.iter().any(|v| !v.is_finite()) {
                return Err(Error::input(format!("station '{}' has no hydrological position", s.id)));
            }
        }
        Ok(Self { stations })
    }

    pub fn len(&self) -> usize {
        self.stations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stations.is_empty()
    }

    pub fn stations(&self) -> &[Station] {
        &self.stations
    }

    pub fn get(&self, i: usize) -> &Station {
        &self.stations[i]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.stations.iter().position(|s| s.id == id)
    }

    /// Sub-set with the given indices, in that order.
    pub fn select(&self, idx: &[usize]) -> Result<StationSet> {
        let mut out = Vec::with_capacity(idx.len());
        for &i in idx {
            out.push(
                self.stations
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::input(format!("station index {i} out of range")))?,
            );
        }
        StationSet::new(out)
    }

    pub fn ids(&self) -> Vec<String> {
        self.stations.iter().map(|s| s.id.clone()).collect()
    }
}

/// Rotation–dilation matrix R(β, c) = [[cos β, −sin β], [c sin β, c cos β]].
pub fn anisotropy_matrix(beta_rad: f64, c: f64) -> Result<Matrix2<f64>> {
    if !(BETA_MIN - 1e-12..=BETA_MAX + 1e-12).contains(&beta_rad) {
        return Err(Error::domain(format!("beta = {beta_rad} outside [pi/4, 3pi/4]")));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::domain(format!("dilation c = {c} must be positive")));
    }
    let (s, co) = beta_rad.sin_cos();
    Ok(Matrix2::new(co, -s, c * s, c * co))
}

/// River kernel Γ_Riv: 0 at identical points, 1 for flow-unconnected pairs,
/// otherwise 1 − (∏ √π_k)(1 − d/τ)₊.
pub fn gamma_riv(params: &KernelParams, net: &RiverNetwork, s: &NetLocation, t: &NetLocation) -> Result<f64> {
    let info = net.flow_relation(s, t)?;
    if info.relation == FlowRelation::Unconnected {
        return Ok(1.0);
    }
    let mut w = 1.0;
    for id in &info.between {
        w *= net.segment(*id)?.junction_weight.sqrt();
    }
    let d = net.river_distance(s, t)?;
    Ok(1.0 - w * (1.0 - d / params.tau_km).max(0.0))
}

fn fractal(params: &KernelParams, diff: Vector2<f64>) -> Result<f64> {
    let v = if params.variant.anisotropic() {
        anisotropy_matrix(params.beta_rad, params.c)? * diff
    } else {
        diff
    };
    let r = v.norm();
    Ok(if r == 0.0 { 0.0 } else { r.powf(params.alpha) })
}

/// Euclidean part ‖R·(H(s) − H(t))‖^α. For Γ₁ the raw station coordinates
/// replace the hydrological positions.
pub fn gamma_euc(params: &KernelParams, a: &Station, b: &Station) -> Result<f64> {
    let (pa, pb) = match params.variant {
        KernelVariant::Euclid => (a.coords, b.coords),
        _ => (a.summary.hydro_position, b.summary.hydro_position),
    };
    fractal(params, Vector2::new(pa[0] - pb[0], pa[1] - pb[1]))
}

/// Combined kernel Γ = λ_Riv·Γ_Riv + λ_Euc·Γ_Euc for the variant.
pub fn gamma(params: &KernelParams, net: &RiverNetwork, a: &Station, b: &Station) -> Result<f64> {
    params.validate()?;
    let euc = params.lambda_euc * gamma_euc(params, a, b)?;
    if params.variant.uses_river() && params.lambda_riv > 0.0 {
        Ok(params.lambda_riv * gamma_riv(params, net, a.location(), b.location())? + euc)
    } else {
        Ok(euc)
    }
}

/// Pairwise Γ matrix for a station tuple together with anchored
/// covariance matrices Σ^{(k)}.
#[derive(Debug, Clone, PartialEq)]
pub struct HrStructure {
    gamma: DMatrix<f64>,
}

impl HrStructure {
    /// Wraps a variogram matrix, checking symmetry, zero diagonal,
    /// nonnegativity and conditional negative definiteness.
    pub fn from_gamma(gamma: DMatrix<f64>) -> Result<Self> {
        let m = gamma.nrows();
        if gamma.ncols() != m || m == 0 {
            return Err(Error::input("variogram matrix must be square and nonempty"));
        }
        for i in 0..m {
            if gamma[(i, i)] != 0.0 {
                return Err(Error::domain("variogram diagonal must be zero"));
            }
            for j in 0..i {
                let (a, b) = (gamma[(i, j)], gamma[(j, i)]);
                if !(a >= 0.0) || !a.is_finite() {
                    return Err(Error::domain(format!("variogram entry ({i},{j}) = {a} is invalid")));
                }
                if (a - b).abs() > 1e-12 * a.abs().max(1.0) {
                    return Err(Error::domain("variogram matrix is not symmetric"));
                }
            }
        }
        let hr = Self { gamma };
        if m > 1 {
            hr.sigma(0)?;
        }
        Ok(hr)
    }

    pub fn dim(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    pub fn gamma_at(&self, i: usize, j: usize) -> f64 {
        self.gamma[(i, j)]
    }

    /// Σ^{(k)}_{ij} = ½{Γ(i,k) + Γ(j,k) − Γ(i,j)} over i, j ≠ k, checked PSD
    /// (eigenvalue floor −1e-8·trace) and clipped to PSD.
    pub fn sigma(&self, anchor: usize) -> Result<DMatrix<f64>> {
        let s = self.sigma_raw(anchor)?;
        let lambda = linalg::check_psd(&s)?;
        if lambda < 0.0 {
            let eig = SymmetricEigen::new(s);
            let clipped = eig.eigenvalues.map(|v| v.max(0.0));
            return Ok(&eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose());
        }
        Ok(s)
    }

    /// Σ^{(k)} without the PSD check.
    pub fn sigma_raw(&self, anchor: usize) -> Result<DMatrix<f64>> {
        let m = self.dim();
        if anchor >= m {
            return Err(Error::input(format!("anchor {anchor} out of range for {m} stations")));
        }
        let idx: Vec<usize> = (0..m).filter(|&i| i != anchor).collect();
        Ok(DMatrix::from_fn(m - 1, m - 1, |r, c| {
            let (i, j) = (idx[r], idx[c]);
            0.5 * (self.gamma[(i, anchor)] + self.gamma[(j, anchor)] - self.gamma[(i, j)])
        }))
    }

    /// Restriction to a subset of stations (in the given order).
    pub fn restrict(&self, idx: &[usize]) -> HrStructure {
        HrStructure {
            gamma: linalg::submatrix(&self.gamma, idx, idx),
        }
    }

    /// Pairwise model extremal coefficients 2Φ(√Γ/2).
    pub fn theta_matrix(&self) -> DMatrix<f64> {
        self.gamma.map(theta_model)
    }
}

/// Evaluates the variogram matrix for `stations` and checks its validity.
pub fn hr_structure(params: &KernelParams, net: &RiverNetwork, stations: &StationSet) -> Result<HrStructure> {
    KernelGeometry::new(net, stations)?.hr_structure(params)
}

#[derive(Debug, Clone, PartialEq)]
struct PairGeometry {
    /// (∏√π, river distance) for flow-connected pairs.
    river: Option<(f64, f64)>,
    raw: Vector2<f64>,
    hydro: Vector2<f64>,
}

/// Pairwise network and planar quantities for a station set, so that Γ can
/// be re-evaluated cheaply for many parameter values.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelGeometry {
    m: usize,
    /// Strict lower triangle, row by row.
    pairs: Vec<PairGeometry>,
}

impl KernelGeometry {
    pub fn new(net: &RiverNetwork, stations: &StationSet) -> Result<Self> {
        let m = stations.len();
        if m == 0 {
            return Err(Error::input("no stations"));
        }
        let mut pairs = Vec::with_capacity(m * (m - 1) / 2);
        for i in 0..m {
            for j in 0..i {
                let (a, b) = (stations.get(i), stations.get(j));
                let info = net.flow_relation(a.location(), b.location())?;
                let river = if info.relation == FlowRelation::Unconnected {
                    None
                } else {
                    Some((
                        net.weight_product(a.location(), b.location())?,
                        net.river_distance(a.location(), b.location())?,
                    ))
                };
                let diff = |p: [f64; 2], q: [f64; 2]| Vector2::new(p[0] - q[0], p[1] - q[1]);
                pairs.push(PairGeometry {
                    river,
                    raw: diff(a.coords, b.coords),
                    hydro: diff(a.summary.hydro_position, b.summary.hydro_position),
                });
            }
        }
        Ok(Self { m, pairs })
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    /// Γ matrix for `params` (validated).
    pub fn gamma_matrix(&self, params: &KernelParams) -> Result<DMatrix<f64>> {
        params.validate()?;
        let rot = if params.variant.anisotropic() {
            Some(anisotropy_matrix(params.beta_rad, params.c)?)
        } else {
            None
        };
        let mut g = DMatrix::zeros(self.m, self.m);
        let mut it = self.pairs.iter();
        for i in 0..self.m {
            for j in 0..i {
                let p = it.next().expect("one entry per pair");
                let diff = if params.variant == KernelVariant::Euclid { p.raw } else { p.hydro };
                let r = match &rot {
                    Some(r) => (r * diff).norm(),
                    None => diff.norm(),
                };
                let mut v = if r == 0.0 { 0.0 } else { params.lambda_euc * r.powf(params.alpha) };
                if params.variant.uses_river() && params.lambda_riv > 0.0 {
                    let riv = match p.river {
                        None => 1.0,
                        Some((w, d)) => 1.0 - w * (1.0 - d / params.tau_km).max(0.0),
                    };
                    v += params.lambda_riv * riv;
                }
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        Ok(g)
    }

    pub fn hr_structure(&self, params: &KernelParams) -> Result<HrStructure> {
        HrStructure::from_gamma(self.gamma_matrix(params)?)
    }
}

/// Extremal coefficient θ = 2Φ(√Γ/2).
pub fn theta_model(gamma_value: f64) -> f64 {
    if gamma_value == f64::INFINITY {
        return 2.0;
    }
    2.0 * normal::cdf(gamma_value.max(0.0).sqrt() / 2.0)
}

/// Bivariate Hüsler–Reiss distribution function P(η_s ≤ x, η_t ≤ y).
pub fn biv_hr_cdf(gamma_value: f64, x: f64, y: f64) -> Result<f64> {
    if !(x > 0.0 && y > 0.0) {
        return Err(Error::domain("bivariate HR cdf needs positive arguments"));
    }
    if !(gamma_value >= 0.0) {
        return Err(Error::domain("variogram value must be nonnegative"));
    }
    Ok((-biv_exponent(gamma_value, x, y)).exp())
}

/// Bivariate exponent measure V(x, y) in closed form.
pub(crate) fn biv_exponent(gamma_value: f64, x: f64, y: f64) -> f64 {
    if gamma_value == f64::INFINITY {
        return 1.0 / x + 1.0 / y;
    }
    if gamma_value == 0.0 {
        return 1.0 / x.min(y);
    }
    let a = gamma_value.sqrt();
    let lr = (y / x).ln();
    normal::cdf(a / 2.0 + lr / a) / x + normal::cdf(a / 2.0 - lr / a) / y
}
