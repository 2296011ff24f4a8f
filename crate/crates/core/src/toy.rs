//! A small synthetic basin: seven segments, ten gauges. Used as a fixture
//! by tests, benchmarks and the command-line demo data.

use crate::error::Result;
use crate::kernels::{KernelParams, Station, StationSet};
use crate::network::{CatchmentSummary, FlowRelation, NetLocation, RiverNetwork, Segment};

/// The parameter vector used to generate the demo data.
pub fn toy_params() -> KernelParams {
    KernelParams::full(0.73, 1.93e-4, 839.0, 1.75, 1.10, 0.64)
}

/// Main stem flowing east to an outlet at (400, 100) km, with two
/// tributaries and two headwater branches.
pub fn toy_network() -> RiverNetwork {
    RiverNetwork::new(vec![
        Segment::new(1, vec![[400.0, 100.0], [300.0, 100.0]], None, 1.0),
        Segment::new(2, vec![[300.0, 100.0], [250.0, 108.0], [200.0, 110.0]], Some(1), 0.7),
        Segment::new(3, vec![[300.0, 100.0], [310.0, 60.0], [300.0, 20.0]], Some(1), 0.3),
        Segment::new(4, vec![[200.0, 110.0], [100.0, 100.0]], Some(2), 0.6),
        Segment::new(5, vec![[200.0, 110.0], [210.0, 200.0]], Some(2), 0.4),
        Segment::new(6, vec![[100.0, 100.0], [60.0, 115.0], [20.0, 120.0]], Some(4), 0.5),
        Segment::new(7, vec![[100.0, 100.0], [90.0, 30.0]], Some(4), 0.5),
    ])
    .expect("toy network is valid")
}

const GAUGES: [(&str, u32, f64); 10] = [
    ("G01", 1, 20.0),
    ("G02", 1, 80.0),
    ("G03", 2, 50.0),
    ("G04", 3, 30.0),
    ("G05", 3, 70.0),
    ("G06", 4, 40.0),
    ("G07", 5, 50.0),
    ("G08", 6, 30.0),
    ("G09", 6, 70.0),
    ("G10", 7, 40.0),
];

/// Crude catchment summary from the river points upstream of `loc`:
/// a 20 km wide strip around the channel whose ground rises westwards.
pub fn toy_summary(net: &RiverNetwork, loc: NetLocation) -> Result<CatchmentSummary> {
    let mut pts = vec![net.point(&loc)?];
    for p in net.sample_points(5.0)? {
        let up = match net.flow_relation(&loc, &p)?.relation {
            FlowRelation::ConnectedDownstream => true,
            FlowRelation::SameSegment => p.offset_km > loc.offset_km,
            _ => false,
        };
        if up {
            pts.push(net.point(&p)?);
        }
    }
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p[1]).sum::<f64>() / n;
    let area = 20.0 * 5.0 * n;
    let alt = 300.0 + 3.0 * (400.0 - cx);
    Ok(CatchmentSummary {
        location: loc,
        hydro_position: [cx, cy],
        altitude_volume: area * alt / 1000.0,
        area_km2: area,
        mean_altitude_m: alt,
        mean_slope: 0.02 + alt / 50_000.0,
        centroid_latitude_deg: 47.0 + cy / 111.0,
    })
}

pub fn toy_stations(net: &RiverNetwork) -> Result<StationSet> {
    let mut out = Vec::with_capacity(GAUGES.len());
    for (id, seg, off) in GAUGES {
        let loc = NetLocation::new(seg, off);
        out.push(Station {
            id: id.to_string(),
            coords: net.point(&loc)?,
            summary: toy_summary(net, loc)?,
        });
    }
    StationSet::new(out)
}

pub fn toy_basin() -> (RiverNetwork, StationSet) {
    let net = toy_network();
    let st = toy_stations(&net).expect("toy gauges lie on the network");
    (net, st)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::hr_structure;

    #[test]
    fn basin_is_consistent() {
        let (net, st) = toy_basin();
        assert_eq!(net.segments().len(), 7);
        assert_eq!(st.len(), 10);
        let hr = hr_structure(&toy_params(), &net, &st).unwrap();
        for k in 0..10 {
            hr.sigma(k).unwrap();
        }
        // Headwater gauges drain less area than the outlet gauge.
        assert!(st.get(8).summary.area_km2 < st.get(0).summary.area_km2);
        let g = hr.gamma();
        assert!(g.iter().all(|v| *v < 6.0), "{g}");
    }
}
