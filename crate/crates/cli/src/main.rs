use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use evplan_core::geo::GeoPoint;

mod commands;
mod config;

/// Exit status contract: 0 success, 1 infeasible or empty result, 2 input error.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    Empty(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Infeasible(_) | CliError::Empty(_) => 1,
            CliError::Input(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "evplan", version, about = "EV charging network analysis and congestion-aware trip planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Charger registry CSV (id,lat,lon,ports,power_kw).
    #[arg(long)]
    pub chargers: Option<PathBuf>,
    /// Traffic counts CSV (id,lat,lon,aadt).
    #[arg(long)]
    pub traffic: Option<PathBuf>,
    /// Road nodes CSV (id,lat,lon); requires --edges.
    #[arg(long, requires = "edges")]
    pub nodes: Option<PathBuf>,
    /// Road edges CSV (from,to,length_miles,speed_mph,oneway); requires --nodes.
    #[arg(long, requires = "nodes")]
    pub edges: Option<PathBuf>,
    /// Road network as a GeoJSON FeatureCollection of LineStrings.
    #[arg(long, conflicts_with_all = ["nodes", "edges"])]
    pub roads_geojson: Option<PathBuf>,
    /// EV catalog CSV (name,battery_kwh,rated_range_mi[,soc_min,soc_cv,cv_tau_min]).
    #[arg(long)]
    pub ev_models: Option<PathBuf>,
    /// TOML run configuration; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "evplan-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WeightingArg {
    Weighted,
    Unweighted,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TargetArg {
    Betweenness,
    Degree,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ObjectiveArg {
    Time,
    Distance,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Which traffic points lie within reach of a charger.
    Coverage {
        #[command(flatten)]
        common: Common,
        /// Coverage radius in miles (2 for dense urban areas).
        #[arg(long)]
        radius: Option<f64>,
    },
    /// Propose new charger sites by clustering uncovered demand.
    Site {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        radius: Option<f64>,
        /// Number of sites to propose.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Centrality and percolation of the charger network.
    Robustness {
        #[command(flatten)]
        common: Common,
        /// Largest station spacing joined by an edge, in miles.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, value_enum)]
        weighting: Option<WeightingArg>,
        #[arg(long, value_enum)]
        target_by: Option<TargetArg>,
    },
    /// Plan charging stops for one trip, or for every row of --batch.
    Plan {
        #[command(flatten)]
        common: Common,
        /// Origin as `lat,lon`.
        #[arg(long, required_unless_present = "batch", allow_hyphen_values = true)]
        from: Option<GeoPoint>,
        /// Destination as `lat,lon`.
        #[arg(long, required_unless_present = "batch", allow_hyphen_values = true)]
        to: Option<GeoPoint>,
        /// EV model name from --ev-models or the built-in catalog.
        #[arg(long)]
        ev: Option<String>,
        /// Starting state of charge.
        #[arg(long)]
        soc: Option<f64>,
        /// Weight of waiting time against travel cost.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, value_enum)]
        objective: Option<ObjectiveArg>,
        /// Allow charging past the CC-CV transition when it saves a stop.
        #[arg(long)]
        overshoot: bool,
        /// Average speed for legs not measured on the road network.
        #[arg(long)]
        speed: Option<f64>,
        /// CSV of trips (id,from_lat,from_lon,to_lat,to_lon).
        #[arg(long, conflicts_with_all = ["from", "to"])]
        batch: Option<PathBuf>,
    },
    /// Serve the HTTP API over the loaded dataset.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Allowed browser origin; any origin when omitted.
        #[arg(long)]
        cors_origin: Option<String>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Coverage { common, radius } => commands::coverage(&common, radius),
        Command::Site { common, radius, k } => commands::site(&common, radius, k),
        Command::Robustness {
            common,
            lambda,
            trials,
            weighting,
            target_by,
        } => commands::robustness(&common, lambda, trials, weighting, target_by),
        Command::Plan {
            common,
            from,
            to,
            ev,
            soc,
            alpha,
            objective,
            overshoot,
            speed,
            batch,
        } => commands::plan(
            &common,
            commands::PlanArgs {
                from,
                to,
                ev,
                soc,
                alpha,
                objective,
                overshoot,
                speed,
                batch,
            },
        ),
        Command::Serve {
            common,
            port,
            host,
            cors_origin,
        } => commands::serve(&common, port, &host, cors_origin),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("evplan: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
