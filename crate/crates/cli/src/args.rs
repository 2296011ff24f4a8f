use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Extremes of river flow: Hüsler–Reiss dependence on river networks.
#[derive(Debug, Parser)]
#[command(name = "hrflow", version, args_override_self = true)]
pub struct Cli {
    /// Seed for every random choice (tie-breaking, bootstrap, simulation).
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,

    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// TOML file with default flags. Top-level keys set global flags, a
    /// table named after the subcommand sets its flags. Command-line flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory, created if needed.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a network, gauges and daily discharges and write them in normal form.
    Ingest(IngestArgs),
    /// Cut daily discharges into independent multivariate events.
    Decluster(DeclusterArgs),
    /// Fit point-process GEV margins per gauge, optionally a regional model.
    FitMargins(FitMarginsArgs),
    /// Fit the dependence kernel to declustered events.
    FitDependence(FitDependenceArgs),
    /// Draw from the fitted max-stable model.
    Simulate(SimulateArgs),
    /// Probability of simultaneous exceedances at several sites.
    Exceed(ExceedArgs),
    /// Quantiles of the maximum over a group of sites.
    Groupmax(GroupmaxArgs),
    /// Return levels along the whole network from the regional model.
    Returnmap(ReturnmapArgs),
    /// Run internal consistency checks against a model file.
    Validate(ValidateArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Decluster(_) => "decluster",
            Command::FitMargins(_) => "fit-margins",
            Command::FitDependence(_) => "fit-dependence",
            Command::Simulate(_) => "simulate",
            Command::Exceed(_) => "exceed",
            Command::Groupmax(_) => "groupmax",
            Command::Returnmap(_) => "returnmap",
            Command::Validate(_) => "validate",
        }
    }
}

#[derive(Debug, Args)]
pub struct BasinArgs {
    /// River network (TOML, one [[segment]] table per segment).
    #[arg(long)]
    pub network: PathBuf,

    /// Gauge table (CSV).
    #[arg(long)]
    pub station_file: PathBuf,
}

#[derive(Debug, Args)]
pub struct SeasonArgs {
    /// First month (1-12) of the season kept in each year.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..=12))]
    pub season_start: u32,

    /// Last month (1-12) of the season.
    #[arg(long, default_value_t = 12, value_parser = clap::value_parser!(u32).range(1..=12))]
    pub season_end: u32,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub basin: BasinArgs,

    /// Daily discharges, long format: station_id,date,discharge_m3s.
    #[arg(long)]
    pub discharges: PathBuf,

    #[command(flatten)]
    pub season: SeasonArgs,
}

#[derive(Debug, Args)]
pub struct DeclusterArgs {
    /// Daily discharges, long format.
    #[arg(long)]
    pub discharges: PathBuf,

    /// Gauge table; fixes the column order of the events.
    #[arg(long)]
    pub station_file: Option<PathBuf>,

    /// Network, needed with --station-file.
    #[arg(long, requires = "station_file")]
    pub network: Option<PathBuf>,

    /// Window length in days.
    #[arg(long, default_value_t = 9)]
    pub window: usize,

    #[command(flatten)]
    pub season: SeasonArgs,
}

#[derive(Debug, Args)]
pub struct FitMarginsArgs {
    #[command(flatten)]
    pub basin: BasinArgs,

    /// Event file from `decluster`.
    #[arg(long)]
    pub events: PathBuf,

    /// Threshold as the empirical quantile of each gauge's event maxima.
    #[arg(long, default_value_t = 0.9)]
    pub quantile: f64,

    /// Covariates of the regional model (intercept, latitude, area,
    /// altitude, slope). No regional model without them.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VariantArg {
    Euclid,
    Hydro,
    Full,
    FullIso,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Censored,
    Spectral,
}

#[derive(Debug, Args)]
pub struct FitDependenceArgs {
    #[command(flatten)]
    pub basin: BasinArgs,

    /// Event file from `decluster`.
    #[arg(long)]
    pub events: PathBuf,

    #[arg(long, value_enum, default_value = "full")]
    pub variant: VariantArg,

    #[arg(long, value_enum, default_value = "censored")]
    pub method: MethodArg,

    /// Bootstrap replicates for standard errors (0 skips the bootstrap).
    #[arg(long, default_value_t = 0)]
    pub bootstrap: usize,

    /// Censoring level on the Pareto scale.
    #[arg(long, default_value_t = 10.0)]
    pub censor_level: f64,

    /// Spectral radius as a quantile of the event sums.
    #[arg(long, default_value_t = 0.9)]
    pub spectral_quantile: f64,

    /// Grid points per parameter for the starting value search.
    #[arg(long, default_value_t = 4)]
    pub grid_points: usize,

    /// Lattice points per shift in every Gaussian CDF.
    #[arg(long, default_value_t = 64)]
    pub qmc_points: usize,

    /// Random shifts per Gaussian CDF.
    #[arg(long, default_value_t = 1)]
    pub qmc_shifts: usize,

    /// Optimizer evaluation budget per stage.
    #[arg(long, default_value_t = 2000)]
    pub max_evals: usize,

    /// Margins file from `fit-margins`, copied into the model.
    #[arg(long)]
    pub margins: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MarginArg {
    Frechet,
    Gev,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub basin: BasinArgs,

    /// Model file from `fit-dependence`.
    #[arg(long)]
    pub model: PathBuf,

    /// Number of draws.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,

    /// Marginal scale of the draws; gev uses the margins in the model.
    #[arg(long, value_enum, default_value = "frechet")]
    pub margins: MarginArg,
}

#[derive(Debug, Args)]
pub struct ExceedArgs {
    #[command(flatten)]
    pub basin: BasinArgs,

    #[arg(long)]
    pub model: PathBuf,

    /// Sites of the query, by id (gauges or rows of --site-file).
    #[arg(long, value_delimiter = ',', required = true)]
    pub stations: Vec<String>,

    /// Per-event marginal quantiles; one query per value, same at all sites.
    #[arg(long, value_delimiter = ',', conflicts_with = "levels")]
    pub quantile: Vec<f64>,

    /// Discharges in m³/s, one per site, for a single query.
    #[arg(long, value_delimiter = ',')]
    pub levels: Vec<f64>,

    /// Extra ungauged sites (gauge table layout); their margins come from
    /// the regional model.
    #[arg(long)]
    pub site_file: Option<PathBuf>,

    /// Monte Carlo draws when the group is too large for the exact sum.
    #[arg(long, default_value_t = 200_000)]
    pub mc_draws: usize,

    /// Use Monte Carlo even for small groups.
    #[arg(long)]
    pub force_mc: bool,
}

#[derive(Debug, Args)]
pub struct GroupmaxArgs {
    #[command(flatten)]
    pub basin: BasinArgs,

    #[arg(long)]
    pub model: PathBuf,

    /// Sites of the group; all gauges when omitted.
    #[arg(long, value_delimiter = ',')]
    pub stations: Vec<String>,

    #[arg(long, value_delimiter = ',', default_values_t = vec![0.5, 0.9, 0.95, 0.99])]
    pub probs: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct ReturnmapArgs {
    #[arg(long)]
    pub network: PathBuf,

    /// Model file with a regional margin model.
    #[arg(long)]
    pub model: PathBuf,

    /// Catchment summaries of network points (gauge table layout without id;
    /// columns region, segment, offset_km, ...). Each sampled point uses the
    /// nearest row on its segment.
    #[arg(long)]
    pub points: PathBuf,

    /// Return periods in years.
    #[arg(long, value_delimiter = ',', default_values_t = vec![100.0])]
    pub periods: Vec<f64>,

    /// Spacing of the sampled points in km.
    #[arg(long, default_value_t = 1.0)]
    pub step: f64,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub basin: BasinArgs,

    #[arg(long)]
    pub model: PathBuf,

    /// Random test points per check.
    #[arg(long, default_value_t = 20)]
    pub points: usize,
}
