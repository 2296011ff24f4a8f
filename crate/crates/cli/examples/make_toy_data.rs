//! Regenerates the demo data in `data/toy/`:
//!
//!     cargo run -p hrflow-cli --example make_toy_data -- data/toy
//!
//! Daily flows follow X_t = max(a·X_{t−1}, (1 − a)·Z_t) per gauge, with Z_t
//! Hüsler–Reiss vectors from `toy_params` and a = 0.6, so X has unit
//! Fréchet margins and the extremal dependence of Z. A GEV transform with
//! covariate-driven parameters then turns X into discharges.

use std::path::PathBuf;

use chrono::{Datelike, NaiveDate};
use hrflow_core::events::DailyPanel;
use hrflow_core::io::{write_discharges, write_network, write_stations, StationTable};
use hrflow_core::kernels::hr_structure;
use hrflow_core::simulate::sample_hr;
use hrflow_core::toy::{toy_basin, toy_params, toy_summary};

const YEARS: i32 = 50;
const FIRST_YEAR: i32 = 1971;
const AR: f64 = 0.6;
const SEED: u64 = 20_240_601;

fn region(segment: u32) -> &'static str {
    if segment <= 3 {
        "east"
    } else {
        "west"
    }
}

/// Annual-maximum GEV (loc, scale, shape) at a catchment of the given area.
fn gev(region: &str, area_km2: f64) -> (f64, f64, f64) {
    let loc = 5.0 * area_km2.powf(0.6);
    let shape = if region == "east" { 0.1 } else { 0.2 };
    (loc, 0.3 * loc, shape)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data/toy".into()));
    std::fs::create_dir_all(&dir)?;
    let (net, stations) = toy_basin();
    let regions: Vec<String> = stations
        .stations()
        .iter()
        .map(|s| region(s.location().segment).to_string())
        .collect();

    let mut dates = Vec::new();
    for y in FIRST_YEAR..FIRST_YEAR + YEARS {
        let mut d = NaiveDate::from_ymd_opt(y, 6, 1).unwrap();
        while d <= NaiveDate::from_ymd_opt(y, 8, 31).unwrap() {
            dates.push(d);
            d = d.succ_opt().unwrap();
        }
    }
    let season_days = dates.len() as f64 / YEARS as f64;
    let hr = hr_structure(&toy_params(), &net, &stations)?;
    let z = sample_hr(&hr, dates.len(), SEED)?;
    let m = stations.len();
    let mut x = vec![0.0; m];
    let mut values = Vec::with_capacity(dates.len());
    for (i, zi) in z.iter().enumerate() {
        let new_year = i == 0 || dates[i - 1].year() != dates[i].year();
        let row: Vec<f64> = (0..m)
            .map(|j| {
                x[j] = if new_year { zi[j] } else { (AR * x[j]).max((1.0 - AR) * zi[j]) };
                let s = stations.get(j);
                let (b, a, xi) = gev(&regions[j], s.summary.area_km2);
                // Annual maxima of X are close to Fréchet with scale (1 − a)·days.
                let w = x[j] / ((1.0 - AR) * season_days);
                let q = b + a * (w.powf(xi) - 1.0) / xi;
                (q.max(0.05 * b) * 100.0).round() / 100.0
            })
            .collect();
        values.push(row);
    }
    let blocks = dates.iter().map(|d| d.year()).collect();
    let panel = DailyPanel::new(stations.ids(), dates, blocks, values)?;

    write_network(&net, &dir.join("network.toml"))?;
    write_stations(
        &StationTable {
            stations: stations.clone(),
            regions,
        },
        &dir.join("stations.csv"),
    )?;
    write_discharges(&panel, &dir.join("discharges.csv"))?;

    let mut w = csv::Writer::from_path(dir.join("points.csv"))?;
    w.write_record([
        "region",
        "segment",
        "offset_km",
        "hydro_x",
        "hydro_y",
        "altitude_volume",
        "area_km2",
        "mean_altitude_m",
        "mean_slope",
        "centroid_latitude_deg",
    ])?;
    for loc in net.sample_points(5.0)? {
        let s = toy_summary(&net, loc)?;
        w.write_record(&[
            region(loc.segment).to_string(),
            loc.segment.to_string(),
            format!("{:.3}", loc.offset_km),
            format!("{:.4}", s.hydro_position[0]),
            format!("{:.4}", s.hydro_position[1]),
            format!("{:.4}", s.altitude_volume),
            format!("{:.4}", s.area_km2),
            format!("{:.4}", s.mean_altitude_m),
            format!("{:.6}", s.mean_slope),
            format!("{:.6}", s.centroid_latitude_deg),
        ])?;
    }
    w.flush()?;
    println!("wrote {}", dir.display());
    Ok(())
}
