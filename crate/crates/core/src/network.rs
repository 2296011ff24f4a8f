//! Dendritic river networks embedded in the plane.
//!
//! A network is a tree of polyline segments. Every segment except the root
//! drains into exactly one downstream segment, and carries the weight of its
//! branch at that junction. Locations are `(segment, offset)` pairs, with the
//! offset measured in km upstream from the segment's downstream end.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type SegmentId = u32;

/// Tolerance for junction-weight sums and arc-length consistency.
pub const WEIGHT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub id: SegmentId,
    /// Planar coordinates in km, ordered from the downstream end upwards.
    pub polyline: Vec<[f64; 2]>,
    pub arc_length: f64,
    /// `None` only for the root (outlet) segment.
    pub downstream: Option<SegmentId>,
    /// Share π of this branch at its downstream junction, in (0, 1].
    pub junction_weight: f64,
}

impl Segment {
    /// Builds a segment, deriving the arc length from the polyline.
    pub fn new(
        id: SegmentId,
        polyline: Vec<[f64; 2]>,
        downstream: Option<SegmentId>,
        junction_weight: f64,
    ) -> Self {
        let arc_length = polyline_length(&polyline);
        Self {
            id,
            polyline,
            arc_length,
            downstream,
            junction_weight,
        }
    }
}

fn polyline_length(poly: &[[f64; 2]]) -> f64 {
    poly.windows(2)
        .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetLocation {
    pub segment: SegmentId,
    /// km upstream of the segment's downstream end.
    pub offset_km: f64,
}

impl NetLocation {
    pub fn new(segment: SegmentId, offset_km: f64) -> Self {
        Self { segment, offset_km }
    }
}

/// Position of `s` relative to `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowRelation {
    /// `s` lies upstream of `t` on a different segment.
    ConnectedUpstream,
    /// `s` lies downstream of `t` on a different segment.
    ConnectedDownstream,
    SameSegment,
    Unconnected,
}

impl FlowRelation {
    pub fn is_connected(self) -> bool {
        !matches!(self, FlowRelation::Unconnected)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowInfo {
    pub relation: FlowRelation,
    /// Segments strictly between the two locations: the upstream location's
    /// segment inclusive, the downstream one's exclusive. Empty unless the
    /// pair is connected on different segments.
    pub between: Vec<SegmentId>,
}

#[derive(Debug, Clone)]
pub struct RiverNetwork {
    segments: Vec<Segment>,
    index: HashMap<SegmentId, usize>,
    parent: Vec<Option<usize>>,
    /// Distance from the outlet to the downstream end of each segment.
    base: Vec<f64>,
    /// Euler-tour entry/exit times for O(1) ancestor tests.
    tin: Vec<usize>,
    tout: Vec<usize>,
    root: usize,
}

impl RiverNetwork {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::input("network has no segments"));
        }
        let mut index = HashMap::with_capacity(segments.len());
        for (i, s) in segments.iter().enumerate() {
            if index.insert(s.id, i).is_some() {
                return Err(Error::input(format!("duplicate segment id {}", s.id)));
            }
            if s.polyline.len() < 2 {
                return Err(Error::input(format!("segment {} needs at least two vertices", s.id)));
            }
            if s.polyline.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::input(format!("segment {} has non-finite coordinates", s.id)));
            }
            let chord = polyline_length(&s.polyline);
            if !(s.arc_length > 0.0) {
                return Err(Error::input(format!("segment {} has nonpositive length", s.id)));
            }
            if (s.arc_length - chord).abs() > WEIGHT_TOL * chord.max(1.0) {
                return Err(Error::input(format!(
                    "segment {} arc length {} disagrees with polyline length {}",
                    s.id, s.arc_length, chord
                )));
            }
            if !(s.junction_weight > 0.0 && s.junction_weight <= 1.0 + WEIGHT_TOL) {
                return Err(Error::input(format!(
                    "segment {} junction weight {} outside (0, 1]",
                    s.id, s.junction_weight
                )));
            }
        }
        let mut parent = vec![None; segments.len()];
        let mut roots = Vec::new();
        for (i, s) in segments.iter().enumerate() {
            match s.downstream {
                None => roots.push(i),
                Some(d) => {
                    let j = *index.get(&d).ok_or_else(|| {
                        Error::input(format!("segment {} drains into unknown segment {}", s.id, d))
                    })?;
                    if j == i {
                        return Err(Error::input(format!("segment {} drains into itself", s.id)));
                    }
                    parent[i] = Some(j);
                }
            }
        }
        if roots.len() != 1 {
            return Err(Error::input(format!(
                "network must have exactly one root segment, found {}",
                roots.len()
            )));
        }
        let root = roots[0];

        let mut children: Vec<Vec<usize>> = vec![Vec::new(); segments.len()];
        for (i, p) in parent.iter().enumerate() {
            if let Some(p) = p {
                children[*p].push(i);
            }
        }
        let mut sums: BTreeMap<usize, f64> = BTreeMap::new();
        for (i, p) in parent.iter().enumerate() {
            if let Some(p) = p {
                *sums.entry(*p).or_default() += segments[i].junction_weight;
            }
        }
        for (p, total) in sums {
            if (total - 1.0).abs() > WEIGHT_TOL {
                return Err(Error::input(format!(
                    "junction weights at the upstream end of segment {} sum to {}",
                    segments[p].id, total
                )));
            }
        }

        // Depth-first traversal from the root; unreachable segments mean a cycle.
        let n = segments.len();
        let mut base = vec![0.0; n];
        let mut tin = vec![usize::MAX; n];
        let mut tout = vec![0; n];
        let mut clock = 0;
        let mut stack = vec![(root, false)];
        while let Some((v, exiting)) = stack.pop() {
            if exiting {
                tout[v] = clock;
                clock += 1;
                continue;
            }
            tin[v] = clock;
            clock += 1;
            stack.push((v, true));
            for &c in children[v].iter().rev() {
                base[c] = base[v] + segments[v].arc_length;
                stack.push((c, false));
            }
        }
        if let Some(i) = tin.iter().position(|&t| t == usize::MAX) {
            return Err(Error::input(format!(
                "segment {} does not drain to the root (cycle)",
                segments[i].id
            )));
        }
        Ok(Self {
            segments,
            index,
            parent,
            base,
            tin,
            tout,
            root,
        })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, id: SegmentId) -> Result<&Segment> {
        self.idx(id).map(|i| &self.segments[i])
    }

    pub fn root(&self) -> SegmentId {
        self.segments[self.root].id
    }

    fn idx(&self, id: SegmentId) -> Result<usize> {
        self.index
            .get(&id)
            .copied()
            .ok_or_else(|| Error::input(format!("unknown segment id {id}")))
    }

    pub fn validate(&self, loc: &NetLocation) -> Result<usize> {
        let i = self.idx(loc.segment)?;
        let len = self.segments[i].arc_length;
        if !(loc.offset_km >= 0.0 && loc.offset_km <= len * (1.0 + 1e-12)) {
            return Err(Error::input(format!(
                "offset {} km outside segment {} of length {} km",
                loc.offset_km, loc.segment, len
            )));
        }
        Ok(i)
    }

    /// True when segment `a` lies on the downstream path of segment `b`
    /// (inclusive), i.e. `a ∈ D_b`.
    fn is_downstream_of(&self, a: usize, b: usize) -> bool {
        self.tin[a] <= self.tin[b] && self.tout[b] <= self.tout[a]
    }

    /// Distance along the network from the outlet.
    fn outlet_distance(&self, seg: usize, offset: f64) -> f64 {
        self.base[seg] + offset
    }

    /// Segment ids of the downstream set D(t), from the location's own
    /// segment to the root.
    pub fn downstream_set(&self, loc: &NetLocation) -> Result<Vec<SegmentId>> {
        let mut i = self.validate(loc)?;
        let mut out = vec![self.segments[i].id];
        while let Some(p) = self.parent[i] {
            out.push(self.segments[p].id);
            i = p;
        }
        Ok(out)
    }

    fn path_between(&self, up: usize, down: usize) -> Vec<SegmentId> {
        let mut out = Vec::new();
        let mut i = up;
        while i != down {
            out.push(self.segments[i].id);
            i = self.parent[i].expect("downstream segment is an ancestor");
        }
        out
    }

    pub fn flow_relation(&self, s: &NetLocation, t: &NetLocation) -> Result<FlowInfo> {
        let a = self.validate(s)?;
        let b = self.validate(t)?;
        if a == b {
            return Ok(FlowInfo {
                relation: FlowRelation::SameSegment,
                between: Vec::new(),
            });
        }
        if self.is_downstream_of(b, a) {
            Ok(FlowInfo {
                relation: FlowRelation::ConnectedUpstream,
                between: self.path_between(a, b),
            })
        } else if self.is_downstream_of(a, b) {
            Ok(FlowInfo {
                relation: FlowRelation::ConnectedDownstream,
                between: self.path_between(b, a),
            })
        } else {
            Ok(FlowInfo {
                relation: FlowRelation::Unconnected,
                between: Vec::new(),
            })
        }
    }

    /// Shortest distance along the network, through the common junction
    /// for flow-unconnected pairs.
    pub fn river_distance(&self, s: &NetLocation, t: &NetLocation) -> Result<f64> {
        let a = self.validate(s)?;
        let b = self.validate(t)?;
        let ps = self.outlet_distance(a, s.offset_km);
        let pt = self.outlet_distance(b, t.offset_km);
        if a == b || self.is_downstream_of(a, b) || self.is_downstream_of(b, a) {
            return Ok((ps - pt).abs());
        }
        // Lowest common downstream segment; the junction is at its upstream end.
        let mut c = a;
        while !self.is_downstream_of(c, b) {
            c = self.parent[c].expect("root is downstream of everything");
        }
        let junction = self.base[c] + self.segments[c].arc_length;
        Ok(ps + pt - 2.0 * junction)
    }

    /// ∏_{k ∈ B(s,t)} √π_k for a flow-connected pair.
    pub fn weight_product(&self, s: &NetLocation, t: &NetLocation) -> Result<f64> {
        let info = self.flow_relation(s, t)?;
        if info.relation == FlowRelation::Unconnected {
            return Err(Error::domain(format!(
                "locations on segments {} and {} are not flow-connected",
                s.segment, t.segment
            )));
        }
        let mut w = 1.0;
        for id in &info.between {
            w *= self.segment(*id)?.junction_weight.sqrt();
        }
        Ok(w)
    }

    /// Planar coordinates of a network location.
    pub fn point(&self, loc: &NetLocation) -> Result<[f64; 2]> {
        let i = self.validate(loc)?;
        let poly = &self.segments[i].polyline;
        let mut remaining = loc.offset_km;
        for w in poly.windows(2) {
            let len = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
            if remaining <= len && len > 0.0 {
                let f = remaining / len;
                return Ok([w[0][0] + f * (w[1][0] - w[0][0]), w[0][1] + f * (w[1][1] - w[0][1])]);
            }
            remaining -= len;
        }
        Ok(*poly.last().expect("polyline has vertices"))
    }

    /// Nearest network location to a planar point, if within `tol_km`.
    pub fn snap(&self, p: [f64; 2], tol_km: f64) -> Option<(NetLocation, f64)> {
        let mut best: Option<(NetLocation, f64)> = None;
        for s in &self.segments {
            let mut along = 0.0;
            for w in s.polyline.windows(2) {
                let (dx, dy) = (w[1][0] - w[0][0], w[1][1] - w[0][1]);
                let len2 = dx * dx + dy * dy;
                let len = len2.sqrt();
                let f = if len2 > 0.0 {
                    (((p[0] - w[0][0]) * dx + (p[1] - w[0][1]) * dy) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let q = [w[0][0] + f * dx, w[0][1] + f * dy];
                let dist = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
                if best.as_ref().is_none_or(|b| dist < b.1) {
                    let offset = (along + f * len).min(s.arc_length);
                    best = Some((NetLocation::new(s.id, offset), dist));
                }
                along += len;
            }
        }
        best.filter(|b| b.1 <= tol_km)
    }

    /// Points spaced `step_km` apart along every segment (both ends included).
    pub fn sample_points(&self, step_km: f64) -> Result<Vec<NetLocation>> {
        if !(step_km > 0.0) {
            return Err(Error::input("sampling step must be positive"));
        }
        let mut out = Vec::new();
        for s in &self.segments {
            let n = (s.arc_length / step_km).ceil().max(1.0) as usize;
            for k in 0..=n {
                out.push(NetLocation::new(s.id, (k as f64 * step_km).min(s.arc_length)));
            }
            out.dedup_by(|a, b| a.segment == b.segment && a.offset_km == b.offset_km);
        }
        Ok(out)
    }
}

/// Junction weights π_i = E*_i / Σ E* from the integrated altitudes of the
/// merging branches.
pub fn junction_weights_from_altitude(volumes: &[f64]) -> Result<Vec<f64>> {
    if volumes.is_empty() {
        return Err(Error::input("no branch volumes supplied"));
    }
    if let Some(v) = volumes.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::input(format!("branch volume {v} is not positive")));
    }
    let total: f64 = volumes.iter().sum();
    Ok(volumes.iter().map(|v| v / total).collect())
}

/// Regular elevation raster. Cell `(r, c)` has its center at
/// `origin + ((c + ½)·cell, (r + ½)·cell)`; values are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElevationGrid {
    pub nrows: usize,
    pub ncols: usize,
    pub cell_size_km: f64,
    pub origin: [f64; 2],
    /// Altitude (m) or any other positive weighting field such as mean
    /// annual precipitation.
    pub values: Vec<f64>,
    /// Latitude (degrees) of the line y = 0, used for centroid latitudes.
    #[serde(default)]
    pub reference_latitude_deg: f64,
}

/// km per degree of latitude.
const KM_PER_DEG_LAT: f64 = 111.32;

impl ElevationGrid {
    pub fn value(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.ncols + c]
    }

    pub fn center(&self, r: usize, c: usize) -> [f64; 2] {
        [
            self.origin[0] + (c as f64 + 0.5) * self.cell_size_km,
            self.origin[1] + (r as f64 + 0.5) * self.cell_size_km,
        ]
    }

    /// Slope magnitude (m/m) at a cell from central differences, one-sided at
    /// the raster edges.
    fn slope(&self, r: usize, c: usize) -> f64 {
        let cell_m = self.cell_size_km * 1000.0;
        let diff = |lo: f64, hi: f64, span: f64| (hi - lo) / span;
        let dx = if self.ncols < 2 {
            0.0
        } else if c == 0 {
            diff(self.value(r, 0), self.value(r, 1), cell_m)
        } else if c + 1 == self.ncols {
            diff(self.value(r, c - 1), self.value(r, c), cell_m)
        } else {
            diff(self.value(r, c - 1), self.value(r, c + 1), 2.0 * cell_m)
        };
        let dy = if self.nrows < 2 {
            0.0
        } else if r == 0 {
            diff(self.value(0, c), self.value(1, c), cell_m)
        } else if r + 1 == self.nrows {
            diff(self.value(r - 1, c), self.value(r, c), cell_m)
        } else {
            diff(self.value(r - 1, c), self.value(r + 1, c), 2.0 * cell_m)
        };
        let (dx, dy) = (
            if dx.is_finite() { dx } else { 0.0 },
            if dy.is_finite() { dy } else { 0.0 },
        );
        (dx * dx + dy * dy).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatchmentSummary {
    pub location: NetLocation,
    /// Altitude-weighted centroid H(t), km.
    pub hydro_position: [f64; 2],
    /// Integrated altitude E*_t, km²·m.
    pub altitude_volume: f64,
    pub area_km2: f64,
    pub mean_altitude_m: f64,
    pub mean_slope: f64,
    pub centroid_latitude_deg: f64,
}

/// Summarises the sub-catchment given by `mask` (cells as `(row, col)`).
///
/// Integrals are cell-center Riemann sums.
pub fn catchment_summary(
    grid: &ElevationGrid,
    mask: &[(usize, usize)],
    location: NetLocation,
) -> Result<CatchmentSummary> {
    if !(grid.cell_size_km > 0.0) {
        return Err(Error::input("cell size must be positive"));
    }
    if grid.values.len() != grid.nrows * grid.ncols {
        return Err(Error::input("grid value count does not match its shape"));
    }
    if mask.is_empty() {
        return Err(Error::input("catchment mask is empty"));
    }
    let cell_area = grid.cell_size_km * grid.cell_size_km;
    let mut volume = 0.0;
    let mut wx = 0.0;
    let mut wy = 0.0;
    let mut alt_sum = 0.0;
    let mut slope_sum = 0.0;
    for &(r, c) in mask {
        if r >= grid.nrows || c >= grid.ncols {
            return Err(Error::input(format!("mask cell ({r}, {c}) outside the grid")));
        }
        let h = grid.value(r, c);
        if !h.is_finite() {
            return Err(Error::input(format!("mask cell ({r}, {c}) has no altitude")));
        }
        let [x, y] = grid.center(r, c);
        volume += h * cell_area;
        wx += x * h * cell_area;
        wy += y * h * cell_area;
        alt_sum += h;
        slope_sum += grid.slope(r, c);
    }
    if !(volume > 0.0) {
        return Err(Error::input("integrated altitude over the catchment is not positive"));
    }
    let n = mask.len() as f64;
    let hydro_position = [wx / volume, wy / volume];
    Ok(CatchmentSummary {
        location,
        hydro_position,
        altitude_volume: volume,
        area_km2: n * cell_area,
        mean_altitude_m: alt_sum / n,
        mean_slope: slope_sum / n,
        centroid_latitude_deg: grid.reference_latitude_deg + hydro_position[1] / KM_PER_DEG_LAT,
    })
}
