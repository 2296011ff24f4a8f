use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use hrflow_core::events::{decluster, to_pareto};
use hrflow_core::fit::{bootstrap_se, fit_dependence, FitConfig, FitMethod, FitResult};
use hrflow_core::hr_core::{CensoredTerm, HrEvaluator};
use hrflow_core::io::{
    read_discharges, read_events, read_model, read_network, read_stations, write_discharges, write_events,
    write_model, write_network, write_stations, EventTable, MarginsSection, ModelFile, Season, StationMarginal,
    StationTable,
};
use hrflow_core::kernels::{hr_structure, KernelVariant, Station, StationSet};
use hrflow_core::margins::{fit_regional, fit_station, Covariate, GevParams, StationMargins};
use hrflow_core::network::{CatchmentSummary, NetLocation, RiverNetwork};
use hrflow_core::risk::{
    group_max_quantiles, joint_exceedance, network_return_map, Level, RiskOptions, RiskQuery, SiteMargin,
};
use hrflow_core::simulate::{simulate, MarginMode, SimSpec};
use hrflow_core::stats;

use crate::args::*;
use crate::error::{CliError, CliResult, Kind};
use crate::manifest::Manifest;

pub fn dispatch(cli: &Cli, manifest: &mut Manifest) -> CliResult<()> {
    let mut ctx = Ctx {
        seed: cli.seed,
        out: cli.out.clone(),
        manifest,
    };
    match &cli.command {
        Command::Ingest(a) => ingest(&mut ctx, a),
        Command::Decluster(a) => decluster_cmd(&mut ctx, a),
        Command::FitMargins(a) => fit_margins(&mut ctx, a),
        Command::FitDependence(a) => fit_dependence_cmd(&mut ctx, a),
        Command::Simulate(a) => simulate_cmd(&mut ctx, a),
        Command::Exceed(a) => exceed(&mut ctx, a),
        Command::Groupmax(a) => groupmax(&mut ctx, a),
        Command::Returnmap(a) => returnmap(&mut ctx, a),
        Command::Validate(a) => validate(&mut ctx, a),
    }
}

struct Ctx<'a> {
    seed: u64,
    out: PathBuf,
    manifest: &'a mut Manifest,
}

impl Ctx<'_> {
    /// Runs a reader on an input file, recording it in the manifest.
    fn read<T>(&mut self, path: &Path, f: impl FnOnce(&Path) -> hrflow_core::Result<T>) -> CliResult<T> {
        self.manifest.input(path)?;
        f(path).map_err(|e| CliError::from(e).context(path.display()))
    }

    fn write(&mut self, name: &str, f: impl FnOnce(&Path) -> CliResult<()>) -> CliResult<()> {
        let path = self.out.join(name);
        f(&path).map_err(|e| e.context(path.display()))?;
        self.manifest.output(&path)
    }

    fn basin(&mut self, a: &BasinArgs) -> CliResult<(RiverNetwork, StationTable)> {
        let net = self.read(&a.network, read_network)?;
        let table = self.read(&a.station_file, |p| read_stations(p, &net))?;
        Ok((net, table))
    }
}

fn write_rows<S: Serialize>(path: &Path, rows: &[S]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn season(a: &SeasonArgs) -> CliResult<Season> {
    if a.season_start > a.season_end {
        return Err(CliError::usage("--season-start must not come after --season-end"));
    }
    Ok(Season {
        first_month: a.season_start,
        last_month: a.season_end,
    })
}

#[derive(Serialize)]
struct IngestRow {
    station: String,
    observed_days: usize,
    missing_days: usize,
    mean_m3s: f64,
    max_m3s: f64,
}

fn ingest(ctx: &mut Ctx, a: &IngestArgs) -> CliResult<()> {
    let (net, table) = ctx.basin(&a.basin)?;
    let ids = table.stations.ids();
    let season = season(&a.season)?;
    let panel = ctx.read(&a.discharges, |p| read_discharges(p, season, Some(&ids)))?;
    let rows: Vec<IngestRow> = (0..panel.n_stations())
        .map(|j| {
            let obs: Vec<f64> = panel.column(j).into_iter().filter(|v| !v.is_nan()).collect();
            IngestRow {
                station: ids[j].clone(),
                observed_days: obs.len(),
                missing_days: panel.n_days() - obs.len(),
                mean_m3s: stats::mean(&obs),
                max_m3s: obs.iter().cloned().fold(f64::NAN, f64::max),
            }
        })
        .collect();
    ctx.write("network.toml", |p| Ok(write_network(&net, p)?))?;
    ctx.write("stations.csv", |p| Ok(write_stations(&table, p)?))?;
    ctx.write("discharges.csv", |p| Ok(write_discharges(&panel, p)?))?;
    ctx.write("ingest_summary.csv", |p| write_rows(p, &rows))?;
    println!(
        "{} segments, {} stations, {} days in {} years",
        net.segments().len(),
        ids.len(),
        panel.n_days(),
        panel.n_blocks()
    );
    Ok(())
}

fn decluster_cmd(ctx: &mut Ctx, a: &DeclusterArgs) -> CliResult<()> {
    let order = match (&a.station_file, &a.network) {
        (Some(sf), Some(nf)) => {
            let net = ctx.read(nf, read_network)?;
            Some(ctx.read(sf, |p| read_stations(p, &net))?.stations.ids())
        }
        (Some(_), None) => return Err(CliError::usage("--station-file needs --network")),
        _ => None,
    };
    let season = season(&a.season)?;
    let panel = ctx.read(&a.discharges, |p| read_discharges(p, season, order.as_deref()))?;
    let events = decluster(&panel, a.window, ctx.seed)?;
    let pareto = to_pareto(&events.raw())?;
    println!(
        "{} events in {} years ({:.2} per year)",
        events.len(),
        events.n_blocks,
        events.events_per_block()
    );
    let table = EventTable { events, pareto };
    ctx.write("events.csv", |p| Ok(write_events(&table, p)?))
}

/// Column of `station` in an event table, missing values dropped.
fn event_column(events: &EventTable, station: &str) -> CliResult<Vec<f64>> {
    let j = events
        .events
        .station_ids
        .iter()
        .position(|s| s == station)
        .ok_or_else(|| CliError::input(format!("event file has no column for station '{station}'")))?;
    Ok(events.events.events.iter().map(|e| e.values[j]).filter(|v| !v.is_nan()).collect())
}

#[derive(Serialize)]
struct MarginRow<'a> {
    station: &'a str,
    region: &'a str,
    threshold: f64,
    n_exceedances: usize,
    loc: f64,
    scale: f64,
    shape: f64,
    se_loc: f64,
    se_scale: f64,
    se_shape: f64,
    regional_loc: Option<f64>,
    regional_scale: Option<f64>,
    regional_shape: Option<f64>,
}

fn fit_margins(ctx: &mut Ctx, a: &FitMarginsArgs) -> CliResult<()> {
    if !(a.quantile > 0.0 && a.quantile < 1.0) {
        return Err(CliError::usage("--quantile must lie in (0, 1)"));
    }
    let (_, table) = ctx.basin(&a.basin)?;
    let events = ctx.read(&a.events, read_events)?;
    let n_years = events.events.n_blocks as f64;
    let mut stations = Vec::new();
    let mut data = Vec::new();
    for (s, region) in table.stations.stations().iter().zip(&table.regions) {
        let values = event_column(&events, &s.id)?;
        let q = stats::quantile(&values, a.quantile)?;
        let exc: Vec<f64> = values.into_iter().filter(|v| *v > q).collect();
        let fit = fit_station(&exc, q, n_years).map_err(|e| CliError::from(e).context(format!("station {}", s.id)))?;
        stations.push(StationMarginal {
            id: s.id.clone(),
            region: region.clone(),
            gev: fit.gev,
            se: fit.se,
            threshold: q,
            n_exceedances: exc.len(),
        });
        data.push(StationMargins {
            id: s.id.clone(),
            region: region.clone(),
            summary: s.summary.clone(),
            exceedances: exc,
            threshold: q,
            n_years,
        });
    }
    let regional = if a.covariates.is_empty() {
        None
    } else {
        let cov = a
            .covariates
            .iter()
            .map(|c| c.parse::<Covariate>())
            .collect::<hrflow_core::Result<Vec<_>>>()?;
        Some(fit_regional(&data, &cov)?)
    };
    let predicted: Vec<Option<GevParams>> = table
        .stations
        .stations()
        .iter()
        .zip(&table.regions)
        .map(|(s, r)| regional.as_ref().map(|m| m.predict(r, &s.summary)).transpose())
        .collect::<hrflow_core::Result<_>>()?;
    let rows: Vec<MarginRow> = stations
        .iter()
        .zip(&predicted)
        .map(|(s, p)| MarginRow {
            station: &s.id,
            region: &s.region,
            threshold: s.threshold,
            n_exceedances: s.n_exceedances,
            loc: s.gev.loc,
            scale: s.gev.scale,
            shape: s.gev.shape,
            se_loc: s.se[0],
            se_scale: s.se[1],
            se_shape: s.se[2],
            regional_loc: p.map(|g| g.loc),
            regional_scale: p.map(|g| g.scale),
            regional_shape: p.map(|g| g.shape),
        })
        .collect();
    println!("{:<10} {:>10} {:>10} {:>8} {:>6}", "station", "loc", "scale", "shape", "n");
    for r in &rows {
        println!(
            "{:<10} {:>10.2} {:>10.2} {:>8.3} {:>6}",
            r.station, r.loc, r.scale, r.shape, r.n_exceedances
        );
    }
    if let Some(m) = &regional {
        println!("regional model: {} parameters, nll {:.2}", m.n_parameters(), m.nll());
    }
    ctx.write("margins.csv", |p| write_rows(p, &rows))?;
    let model = ModelFile {
        events_per_year: Some(events.events.events_per_block()),
        kernel: None,
        fit: None,
        margins: Some(MarginsSection {
            n_years,
            stations,
            regional,
        }),
    };
    ctx.write("margins.toml", |p| Ok(write_model(&model, p)?))
}

/// Gauges reordered to match the columns of an event file.
fn stations_for_events(table: &StationTable, events: &EventTable) -> CliResult<StationSet> {
    let idx = events
        .events
        .station_ids
        .iter()
        .map(|id| {
            table
                .stations
                .position(id)
                .ok_or_else(|| CliError::input(format!("station '{id}' of the event file is not in the gauge table")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(table.stations.select(&idx)?)
}

fn variant(v: VariantArg) -> KernelVariant {
    match v {
        VariantArg::Euclid => KernelVariant::Euclid,
        VariantArg::Hydro => KernelVariant::Hydro,
        VariantArg::Full => KernelVariant::Full,
        VariantArg::FullIso => KernelVariant::FullIso,
    }
}

fn report(fit: &FitResult) {
    println!(
        "{} fit of the {} kernel: loglik {:.3}, {} of {} events used, {} evaluations",
        match fit.method {
            FitMethod::Censored => "censored",
            FitMethod::Spectral => "spectral",
        },
        fit.variant,
        fit.loglik,
        fit.n_used,
        fit.n_events,
        fit.evaluations
    );
    let se = fit.bootstrap.as_ref().map(|b| &b.se);
    for (k, p) in fit.free_parameters().iter().enumerate() {
        let v = fit.estimate.get(*p);
        match se {
            Some(se) => println!("  {:<11} {:>12.5e}  ({:.2e})", p.name(), v, se[k]),
            None => println!("  {:<11} {:>12.5e}", p.name(), v),
        }
    }
    if !fit.boundary.is_empty() {
        let names: Vec<&str> = fit.boundary.iter().map(|p| p.name()).collect();
        println!("  on the box edge: {}", names.join(", "));
    }
    if let Some(b) = &fit.bootstrap {
        if b.failed > 0 {
            println!("  {} bootstrap refits failed", b.failed);
        }
    }
}

fn fit_dependence_cmd(ctx: &mut Ctx, a: &FitDependenceArgs) -> CliResult<()> {
    let (net, table) = ctx.basin(&a.basin)?;
    let events = ctx.read(&a.events, read_events)?;
    let stations = stations_for_events(&table, &events)?;
    let mut cfg = FitConfig {
        method: match a.method {
            MethodArg::Censored => FitMethod::Censored,
            MethodArg::Spectral => FitMethod::Spectral,
        },
        spectral_quantile: a.spectral_quantile,
        censor_level: a.censor_level,
        grid_points: a.grid_points,
        qmc_points: a.qmc_points,
        qmc_shifts: a.qmc_shifts,
        ..FitConfig::default()
    };
    cfg.optimizer.max_evals = a.max_evals;
    cfg.validate()?;
    let mut fit = fit_dependence(&cfg, &events.pareto, &net, &stations, variant(a.variant))?;
    if a.bootstrap > 0 {
        fit.bootstrap = Some(bootstrap_se(&cfg, &events.pareto, &net, &stations, &fit, a.bootstrap, ctx.seed)?);
    }
    report(&fit);
    let margins = match &a.margins {
        Some(p) => Some(ctx.read(p, read_model)?.margins()?.clone()),
        None => None,
    };
    let model = ModelFile {
        events_per_year: Some(events.events.events_per_block()),
        kernel: Some(fit.estimate),
        fit: Some(fit),
        margins,
    };
    ctx.write("model.toml", |p| Ok(write_model(&model, p)?))
}

fn simulate_cmd(ctx: &mut Ctx, a: &SimulateArgs) -> CliResult<()> {
    let (net, table) = ctx.basin(&a.basin)?;
    let model = ctx.read(&a.model, read_model)?;
    let hr = hr_structure(&model.kernel()?, &net, &table.stations)?;
    let margins = match a.margins {
        MarginArg::Frechet => MarginMode::Frechet,
        MarginArg::Gev => {
            let m = model.margins()?;
            let params = table
                .stations
                .ids()
                .iter()
                .map(|id| {
                    m.station(id)
                        .map(|s| s.gev)
                        .ok_or_else(|| CliError::input(format!("model has no margins for station '{id}'")))
                })
                .collect::<CliResult<Vec<_>>>()?;
            MarginMode::Gev { params }
        }
    };
    let draws = simulate(&SimSpec {
        hr,
        n: a.n,
        seed: ctx.seed,
        margins,
    })?;
    let ids = table.stations.ids();
    ctx.write("draws.csv", |p| {
        let mut w = csv::Writer::from_path(p)?;
        w.write_record(&ids)?;
        for d in &draws {
            w.write_record(d.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    })?;
    println!("{} draws at {} stations", draws.len(), ids.len());
    Ok(())
}

/// A query location with the margin model that applies to it.
struct Site {
    station: Station,
    margin: Option<SiteMargin>,
}

/// Gauges first, then rows of the site file; margins from the model's gauge
/// fits or, failing that, its regional model.
fn resolve_sites(
    ctx: &mut Ctx,
    net: &RiverNetwork,
    gauges: &StationTable,
    site_file: Option<&Path>,
    model: &ModelFile,
    ids: &[String],
) -> CliResult<Vec<Site>> {
    let extra = match site_file {
        Some(p) => Some(ctx.read(p, |p| read_stations(p, net))?),
        None => None,
    };
    let margins = model.margins.as_ref();
    ids.iter()
        .map(|id| {
            let (table, gauged) = match gauges.stations.position(id) {
                Some(_) => (gauges, true),
                None => match extra.as_ref().filter(|t| t.stations.position(id).is_some()) {
                    Some(t) => (t, false),
                    None => return Err(CliError::input(format!("unknown site '{id}'"))),
                },
            };
            let i = table.stations.position(id).expect("position checked");
            let station = table.stations.get(i).clone();
            let fitted = margins.and_then(|m| m.station(id)).filter(|_| gauged).map(|s| SiteMargin {
                id: id.clone(),
                gev: s.gev,
                threshold: Some(s.threshold),
            });
            let margin = match fitted {
                Some(m) => Some(m),
                None => match margins.and_then(|m| m.regional.as_ref()) {
                    Some(r) => Some(SiteMargin {
                        id: id.clone(),
                        gev: r.predict(&table.regions[i], &station.summary)?,
                        threshold: None,
                    }),
                    None => None,
                },
            };
            Ok(Site { station, margin })
        })
        .collect()
}

#[derive(Serialize)]
struct ExceedRow {
    sites: String,
    level_kind: &'static str,
    levels: String,
    frechet_levels: String,
    rate_per_year: f64,
    per_event: f64,
    annual: f64,
    std_error: f64,
    method: String,
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(";")
}

fn exceed(ctx: &mut Ctx, a: &ExceedArgs) -> CliResult<()> {
    if a.quantile.is_empty() == a.levels.is_empty() {
        return Err(CliError::usage("give exactly one of --quantile and --levels"));
    }
    if !a.levels.is_empty() && a.levels.len() != a.stations.len() {
        return Err(CliError::usage("--levels needs one value per site in --stations"));
    }
    let (net, table) = ctx.basin(&a.basin)?;
    let model = ctx.read(&a.model, read_model)?;
    let k = model
        .events_per_year
        .ok_or_else(|| CliError::input("model file lacks events_per_year"))?;
    let sites = resolve_sites(ctx, &net, &table, a.site_file.as_deref(), &model, &a.stations)?;
    let set = StationSet::new(sites.iter().map(|s| s.station.clone()).collect())?;
    let hr = hr_structure(&model.kernel()?, &net, &set)?;
    let margins: Vec<SiteMargin> = if a.levels.is_empty() {
        // Quantile levels never consult the margin; unit Fréchet stands in.
        sites
            .iter()
            .map(|s| SiteMargin {
                id: s.station.id.clone(),
                gev: GevParams::new(1.0, 1.0, 1.0).expect("unit Fréchet"),
                threshold: None,
            })
            .collect()
    } else {
        sites
            .iter()
            .map(|s| {
                s.margin
                    .clone()
                    .ok_or_else(|| CliError::input(format!("no margin model for site '{}'", s.station.id)))
            })
            .collect::<CliResult<_>>()?
    };
    let opts = RiskOptions {
        mc_draws: a.mc_draws,
        seed: ctx.seed,
        force_mc: a.force_mc,
        ..RiskOptions::default()
    };
    let queries: Vec<(&'static str, Vec<f64>, Vec<Level>)> = if a.levels.is_empty() {
        a.quantile
            .iter()
            .map(|&p| ("quantile", vec![p; sites.len()], vec![Level::Quantile(p); sites.len()]))
            .collect()
    } else {
        vec![(
            "discharge",
            a.levels.clone(),
            a.levels.iter().map(|&x| Level::Discharge(x)).collect(),
        )]
    };
    let mut rows = Vec::new();
    for (kind, values, levels) in queries {
        let q = RiskQuery {
            sites: margins.clone(),
            levels,
            events_per_year: k,
        };
        let e = joint_exceedance(&hr, &q, &opts)?;
        println!(
            "{} {} {}: {:.4e} per year, {:.4e} per event, annual probability {:.4e} (± {:.1e})",
            a.stations.join(","),
            kind,
            join(&values),
            e.rate,
            e.per_event,
            e.annual,
            e.std_error
        );
        rows.push(ExceedRow {
            sites: a.stations.join(";"),
            level_kind: kind,
            levels: join(&values),
            frechet_levels: join(&e.frechet_levels),
            rate_per_year: e.rate,
            per_event: e.per_event,
            annual: e.annual,
            std_error: e.std_error,
            method: serde_json::to_value(e.method)
                .ok()
                .and_then(|v| v.as_str().map(String::from))
                .unwrap_or_default(),
        });
    }
    ctx.write("exceed.csv", |p| write_rows(p, &rows))
}

#[derive(Serialize)]
struct GroupMaxOut {
    p: f64,
    theta: f64,
    size: usize,
    model: f64,
    dependence: f64,
    independence: f64,
}

fn groupmax(ctx: &mut Ctx, a: &GroupmaxArgs) -> CliResult<()> {
    let (net, table) = ctx.basin(&a.basin)?;
    let model = ctx.read(&a.model, read_model)?;
    let ids = if a.stations.is_empty() {
        table.stations.ids()
    } else {
        a.stations.clone()
    };
    let idx = ids
        .iter()
        .map(|id| {
            table
                .stations
                .position(id)
                .ok_or_else(|| CliError::input(format!("unknown station '{id}'")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let set = table.stations.select(&idx)?;
    let hr = hr_structure(&model.kernel()?, &net, &set)?;
    let g = group_max_quantiles(&hr, &a.probs, &RiskOptions::default().mvn)?;
    println!("extremal coefficient of {} sites: {:.4}", g.size, g.theta);
    let rows: Vec<GroupMaxOut> = g
        .rows
        .iter()
        .map(|r| GroupMaxOut {
            p: r.p,
            theta: g.theta,
            size: g.size,
            model: r.model,
            dependence: r.dependence,
            independence: r.independence,
        })
        .collect();
    ctx.write("groupmax.csv", |p| write_rows(p, &rows))
}

#[derive(Debug, Clone, Deserialize)]
struct PointRecord {
    region: String,
    segment: u32,
    offset_km: f64,
    hydro_x: f64,
    hydro_y: f64,
    altitude_volume: f64,
    area_km2: f64,
    mean_altitude_m: f64,
    mean_slope: f64,
    centroid_latitude_deg: f64,
}

fn read_points(path: &Path) -> hrflow_core::Result<Vec<PointRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

fn returnmap(ctx: &mut Ctx, a: &ReturnmapArgs) -> CliResult<()> {
    let net = ctx.read(&a.network, read_network)?;
    let model = ctx.read(&a.model, read_model)?;
    let regional = model
        .margins()?
        .regional
        .as_ref()
        .ok_or_else(|| CliError::input("model file has no regional margin model"))?;
    let points = ctx.read(&a.points, read_points)?;
    let site = |loc: &NetLocation| {
        let p = points
            .iter()
            .filter(|p| p.segment == loc.segment)
            .min_by(|a, b| (a.offset_km - loc.offset_km).abs().total_cmp(&(b.offset_km - loc.offset_km).abs()))
            .ok_or_else(|| hrflow_core::Error::Input(format!("no catchment summary on segment {}", loc.segment)))?;
        Ok((
            p.region.clone(),
            CatchmentSummary {
                location: *loc,
                hydro_position: [p.hydro_x, p.hydro_y],
                altitude_volume: p.altitude_volume,
                area_km2: p.area_km2,
                mean_altitude_m: p.mean_altitude_m,
                mean_slope: p.mean_slope,
                centroid_latitude_deg: p.centroid_latitude_deg,
            },
        ))
    };
    let rows = network_return_map(regional, &net, &a.periods, a.step, site)?;
    println!("{} return levels at {} points", rows.len(), rows.len() / a.periods.len());
    ctx.write("returnmap.csv", |p| write_rows(p, &rows))
}

#[derive(Serialize)]
struct CheckRow {
    check: &'static str,
    max_error: f64,
    tolerance: f64,
    pass: bool,
}

fn validate(ctx: &mut Ctx, a: &ValidateArgs) -> CliResult<()> {
    let (net, table) = ctx.basin(&a.basin)?;
    let model = ctx.read(&a.model, read_model)?;
    let hr = hr_structure(&model.kernel()?, &net, &table.stations)?;
    let m = hr.dim();
    let ev = HrEvaluator::with_defaults(hr);
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let (mut hom, mut marg, mut full, mut anchor) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    for _ in 0..a.points {
        let x: Vec<f64> = (0..m).map(|_| 0.5 + 10.0 * rng.random::<f64>()).collect();
        let v = ev.exponent_measure(&x)?;
        for lam in [0.2, 5.0] {
            let xs: Vec<f64> = x.iter().map(|t| t * lam).collect();
            hom = hom.max((ev.exponent_measure(&xs)? * lam / v - 1.0).abs());
        }
        let j = rng.random_range(0..m);
        let mut z = vec![f64::INFINITY; m];
        z[j] = x[j];
        marg = marg.max((ev.exponent_measure(&z)? * x[j] - 1.0).abs());
        let r: f64 = x.iter().sum();
        let w: Vec<f64> = x.iter().map(|t| t / r).collect();
        let lhs = ev.log_censored_density(&CensoredTerm::new(x.clone(), vec![0.25; m])?)?;
        let l0 = ev.log_spectral_density_anchored(&w, 0)?;
        full = full.max((lhs - (l0 - (m as f64 + 1.0) * r.ln())).abs());
        for k in 1..m {
            anchor = anchor.max((ev.log_spectral_density_anchored(&w, k)? - l0).abs());
        }
    }
    let rows = vec![
        CheckRow {
            check: "homogeneity",
            max_error: hom,
            tolerance: 1e-8,
            pass: hom <= 1e-8,
        },
        CheckRow {
            check: "unit_margins",
            max_error: marg,
            tolerance: 1e-8,
            pass: marg <= 1e-8,
        },
        CheckRow {
            check: "full_exceedance_density",
            max_error: full,
            tolerance: 1e-8,
            pass: full <= 1e-8,
        },
        CheckRow {
            check: "anchor_invariance",
            max_error: anchor,
            tolerance: 1e-8,
            pass: anchor <= 1e-8,
        },
    ];
    for r in &rows {
        println!(
            "{} {:<24} max error {:.2e} (tolerance {:.0e})",
            if r.pass { "PASS" } else { "FAIL" },
            r.check,
            r.max_error,
            r.tolerance
        );
    }
    ctx.write("validate.csv", |p| write_rows(p, &rows))?;
    let failed = rows.iter().filter(|r| !r.pass).count();
    if failed > 0 {
        return Err(CliError::new(Kind::Validation, format!("{failed} of {} checks failed", rows.len())));
    }
    Ok(())
}
