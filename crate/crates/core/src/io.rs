//! File formats: network and model files in TOML, tables in CSV.
//!
//! Network file:
//! ```toml
//! [[segment]]
//! id = 1
//! junction_weight = 1.0
//! polyline = [[400.0, 100.0], [300.0, 100.0]]   # km, downstream end first
//!
//! [[segment]]
//! id = 2
//! downstream = 1
//! junction_weight = 0.7
//! polyline = [[300.0, 100.0], [200.0, 110.0]]
//! ```
//!
//! Station file columns: `id, region, segment, offset_km, hydro_x, hydro_y,
//! altitude_volume, area_km2, mean_altitude_m, mean_slope,
//! centroid_latitude_deg`. Coordinates come from the network.
//!
//! Discharge file columns: `station_id, date, discharge_m3s` (ISO dates,
//! empty discharge for missing).
//!
//! Event file columns: `event, block, start_date, length`, then
//! `raw_<id>` and `pareto_<id>` for every station.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{DailyPanel, Event, EventSet};
use crate::fit::FitResult;
use crate::kernels::{KernelParams, Station, StationSet};
use crate::margins::{GevParams, RegionalModel};
use crate::network::{CatchmentSummary, NetLocation, RiverNetwork, Segment, SegmentId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SegmentRecord {
    id: SegmentId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    downstream: Option<SegmentId>,
    junction_weight: f64,
    polyline: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NetworkFile {
    segment: Vec<SegmentRecord>,
}

pub fn parse_network(text: &str) -> Result<RiverNetwork> {
    let file: NetworkFile = toml::from_str(text)?;
    RiverNetwork::new(
        file.segment
            .into_iter()
            .map(|s| Segment::new(s.id, s.polyline, s.downstream, s.junction_weight))
            .collect(),
    )
}

pub fn network_to_string(net: &RiverNetwork) -> Result<String> {
    let file = NetworkFile {
        segment: net
            .segments()
            .iter()
            .map(|s| SegmentRecord {
                id: s.id,
                downstream: s.downstream,
                junction_weight: s.junction_weight,
                polyline: s.polyline.clone(),
            })
            .collect(),
    };
    Ok(toml::to_string(&file)?)
}

pub fn read_network(path: &Path) -> Result<RiverNetwork> {
    parse_network(&fs::read_to_string(path)?)
}

pub fn write_network(net: &RiverNetwork, path: &Path) -> Result<()> {
    Ok(fs::write(path, network_to_string(net)?)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StationRecord {
    id: String,
    region: String,
    segment: SegmentId,
    offset_km: f64,
    hydro_x: f64,
    hydro_y: f64,
    altitude_volume: f64,
    area_km2: f64,
    mean_altitude_m: f64,
    mean_slope: f64,
    centroid_latitude_deg: f64,
}

/// Gauges with their regions, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct StationTable {
    pub stations: StationSet,
    pub regions: Vec<String>,
}

pub fn read_stations(path: &Path, net: &RiverNetwork) -> Result<StationTable> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut stations = Vec::new();
    let mut regions = Vec::new();
    for rec in rdr.deserialize() {
        let r: StationRecord = rec?;
        let loc = NetLocation::new(r.segment, r.offset_km);
        stations.push(Station {
            coords: net.point(&loc)?,
            summary: CatchmentSummary {
                location: loc,
                hydro_position: [r.hydro_x, r.hydro_y],
                altitude_volume: r.altitude_volume,
                area_km2: r.area_km2,
                mean_altitude_m: r.mean_altitude_m,
                mean_slope: r.mean_slope,
                centroid_latitude_deg: r.centroid_latitude_deg,
            },
            id: r.id,
        });
        regions.push(r.region);
    }
    Ok(StationTable {
        stations: StationSet::new(stations)?,
        regions,
    })
}

pub fn write_stations(table: &StationTable, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (s, region) in table.stations.stations().iter().zip(&table.regions) {
        let c = &s.summary;
        w.serialize(StationRecord {
            id: s.id.clone(),
            region: region.clone(),
            segment: c.location.segment,
            offset_km: c.location.offset_km,
            hydro_x: c.hydro_position[0],
            hydro_y: c.hydro_position[1],
            altitude_volume: c.altitude_volume,
            area_km2: c.area_km2,
            mean_altitude_m: c.mean_altitude_m,
            mean_slope: c.mean_slope,
            centroid_latitude_deg: c.centroid_latitude_deg,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize, Serialize)]
struct DischargeRecord {
    station_id: String,
    date: NaiveDate,
    discharge_m3s: Option<f64>,
}

/// Months kept when building a panel; blocks are calendar years.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Season {
    pub first_month: u32,
    pub last_month: u32,
}

impl Season {
    pub const ALL_YEAR: Season = Season {
        first_month: 1,
        last_month: 12,
    };

    pub fn contains(&self, d: NaiveDate) -> bool {
        (self.first_month..=self.last_month).contains(&d.month())
    }
}

/// Long-format discharges to a panel. Stations keep the order of `order`
/// when given, otherwise sorted ids; a date missing for a station is NaN.
pub fn read_discharges(path: &Path, season: Season, order: Option<&[String]>) -> Result<DailyPanel> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut rows: BTreeMap<NaiveDate, BTreeMap<String, f64>> = BTreeMap::new();
    let mut ids = BTreeSet::new();
    for rec in rdr.deserialize() {
        let r: DischargeRecord = rec?;
        ids.insert(r.station_id.clone());
        if !season.contains(r.date) {
            continue;
        }
        let v = r.discharge_m3s.unwrap_or(f64::NAN);
        if rows.entry(r.date).or_default().insert(r.station_id.clone(), v).is_some() {
            return Err(Error::input(format!("duplicate discharge for {} on {}", r.station_id, r.date)));
        }
    }
    let ids: Vec<String> = match order {
        Some(o) => {
            if let Some(missing) = o.iter().find(|id| !ids.contains(*id)) {
                return Err(Error::input(format!("no discharges for station '{missing}'")));
            }
            o.to_vec()
        }
        None => ids.into_iter().collect(),
    };
    let dates: Vec<NaiveDate> = rows.keys().copied().collect();
    let blocks = dates.iter().map(|d| d.year()).collect();
    let values = rows
        .values()
        .map(|r| ids.iter().map(|id| r.get(id).copied().unwrap_or(f64::NAN)).collect())
        .collect();
    DailyPanel::new(ids, dates, blocks, values)
}

pub fn write_discharges(panel: &DailyPanel, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (j, id) in panel.station_ids().iter().enumerate() {
        for (i, d) in panel.dates().iter().enumerate() {
            let v = panel.value(i, j);
            w.serialize(DischargeRecord {
                station_id: id.clone(),
                date: *d,
                discharge_m3s: if v.is_nan() { None } else { Some(v) },
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

fn parse_value(s: &str) -> Result<f64> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("nan") {
        return Ok(f64::NAN);
    }
    s.parse().map_err(|_| Error::Parse(format!("'{s}' is not a number")))
}

/// Declustered events with raw and Pareto-scale values.
#[derive(Debug, Clone, PartialEq)]
pub struct EventTable {
    pub events: EventSet,
    pub pareto: Vec<Vec<f64>>,
}

pub fn write_events(table: &EventTable, path: &Path) -> Result<()> {
    let ev = &table.events;
    if table.pareto.len() != ev.len() {
        return Err(Error::input("one Pareto row per event is required"));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["event".to_string(), "block".into(), "start_date".into(), "length".into()];
    header.extend(ev.station_ids.iter().map(|id| format!("raw_{id}")));
    header.extend(ev.station_ids.iter().map(|id| format!("pareto_{id}")));
    w.write_record(&header)?;
    for (i, (e, p)) in ev.events.iter().zip(&table.pareto).enumerate() {
        let mut row = vec![(i + 1).to_string(), e.block.to_string(), e.start_date.to_string(), e.len.to_string()];
        row.extend(e.values.iter().map(|v| fmt_value(*v)));
        row.extend(p.iter().map(|v| fmt_value(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an event file. Day indices (`start`, `center`) are not stored and
/// come back as zero; `n_blocks` counts the distinct blocks present.
pub fn read_events(path: &Path) -> Result<EventTable> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.clone();
    let raw_cols: Vec<(usize, String)> = header
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.strip_prefix("raw_").map(|id| (i, id.to_string())))
        .collect();
    let ids: Vec<String> = raw_cols.iter().map(|c| c.1.clone()).collect();
    let pareto_cols = ids
        .iter()
        .map(|id| {
            header
                .iter()
                .position(|h| h == format!("pareto_{id}"))
                .ok_or_else(|| Error::Parse(format!("event file lacks column pareto_{id}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse(format!("event file lacks column {name}")))
    };
    let (cb, cd, cl) = (col("block")?, col("start_date")?, col("length")?);
    let mut events = Vec::new();
    let mut pareto = Vec::new();
    let mut blocks = BTreeSet::new();
    for rec in rdr.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let block: i32 = field(cb).parse().map_err(|_| Error::Parse(format!("bad block '{}'", field(cb))))?;
        let start_date: NaiveDate = field(cd)
            .parse()
            .map_err(|_| Error::Parse(format!("bad date '{}'", field(cd))))?;
        let len: usize = field(cl).parse().map_err(|_| Error::Parse(format!("bad length '{}'", field(cl))))?;
        blocks.insert(block);
        events.push(Event {
            block,
            start: 0,
            len,
            center: 0,
            start_date,
            values: raw_cols.iter().map(|(i, _)| parse_value(field(*i))).collect::<Result<_>>()?,
        });
        pareto.push(pareto_cols.iter().map(|i| parse_value(field(*i))).collect::<Result<_>>()?);
    }
    Ok(EventTable {
        events: EventSet {
            station_ids: ids,
            n_blocks: blocks.len(),
            events,
        },
        pareto,
    })
}

/// Marginal fit of one gauge as stored in a model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationMarginal {
    pub id: String,
    pub region: String,
    pub gev: GevParams,
    pub se: [f64; 3],
    pub threshold: f64,
    pub n_exceedances: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginsSection {
    pub n_years: f64,
    pub stations: Vec<StationMarginal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regional: Option<RegionalModel>,
}

impl MarginsSection {
    pub fn station(&self, id: &str) -> Option<&StationMarginal> {
        self.stations.iter().find(|s| s.id == id)
    }
}

/// Everything downstream stages need: dependence parameters, optional
/// fit report, marginal model and the event rate K.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events_per_year: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margins: Option<MarginsSection>,
}

impl ModelFile {
    pub fn kernel(&self) -> Result<KernelParams> {
        self.kernel
            .ok_or_else(|| Error::input("model file has no [kernel] section"))
    }

    pub fn margins(&self) -> Result<&MarginsSection> {
        self.margins
            .as_ref()
            .ok_or_else(|| Error::input("model file has no [margins] section"))
    }
}

pub fn parse_model(text: &str) -> Result<ModelFile> {
    let m: ModelFile = toml::from_str(text)?;
    if let Some(k) = &m.kernel {
        k.validate()?;
    }
    Ok(m)
}

pub fn read_model(path: &Path) -> Result<ModelFile> {
    parse_model(&fs::read_to_string(path)?)
}

pub fn write_model(model: &ModelFile, path: &Path) -> Result<()> {
    Ok(fs::write(path, toml::to_string(model)?)?)
}
