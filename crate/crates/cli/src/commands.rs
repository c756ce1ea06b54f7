use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use serde_json::Value;

use evplan_core::charging::{builtin_models, load_ev_models, EvModel};
use evplan_core::congestion::wait_profiles;
use evplan_core::export::{self, RunHeader};
use evplan_core::geo::GeoPoint;
use evplan_core::ingest::{load_chargers, load_geojson_roads, load_road_network, load_traffic, ChargerStation, TrafficPoint};
use evplan_core::road::RoadNetwork;
use evplan_core::robustness::{
    analyze, build_charger_graph_with, DistanceSource, RobustnessConfig, TargetRanking, Weighting,
};
use evplan_core::router::{plan_route, wait_map, CostMetric, PlanOptions, RoutePlan, RouteQuery, RouterError};
use evplan_core::siting::{self, propose_sites, SitingError, DEFAULT_CLUSTERS, DEFAULT_COVERAGE_RADIUS_MI};
use evplan_service::{app, cors_layer, Dataset, ServiceState};

use crate::config::FileConfig;
use crate::{CliError, Common, ObjectiveArg, TargetArg, WeightingArg};

const DEFAULT_PORT: u16 = 8080;
const DEFAULT_SOC: f64 = 0.8;
const DEFAULT_ALPHA: f64 = 1.0;

fn input(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

fn require<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    path.as_deref().ok_or_else(|| CliError::Input(format!("--{flag} is required")))
}

fn stations(common: &Common) -> Result<Vec<ChargerStation>, CliError> {
    let (stations, report) = load_chargers(require(&common.chargers, "chargers")?).map_err(input)?;
    for row in &report.defaulted {
        eprintln!(
            "warning: chargers line {}: `{}` missing {}, default used",
            row.line, row.id, row.column
        );
    }
    Ok(stations)
}

fn traffic(common: &Common) -> Result<Option<Vec<TrafficPoint>>, CliError> {
    common
        .traffic
        .as_deref()
        .map(|p| load_traffic(p).map_err(input))
        .transpose()
}

fn road(common: &Common) -> Result<Option<RoadNetwork>, CliError> {
    match (&common.nodes, &common.edges, &common.roads_geojson) {
        (Some(n), Some(e), _) => load_road_network(n, e).map(Some).map_err(input),
        (_, _, Some(g)) => load_geojson_roads(g).map(Some).map_err(input),
        _ => Ok(None),
    }
}

fn ev_models(common: &Common) -> Result<Vec<EvModel>, CliError> {
    match &common.ev_models {
        Some(p) => load_ev_models(p).map_err(input),
        None => Ok(builtin_models()),
    }
}

fn seed(common: &Common, cfg: &FileConfig) -> u64 {
    common.seed.or(cfg.seed).unwrap_or(0)
}

fn header(common: &Common, command: &str, cfg: &FileConfig) -> RunHeader {
    let path = |p: &Option<PathBuf>| p.as_ref().map_or_else(|| "-".to_string(), |p| p.display().to_string());
    let d = &cfg.demand;
    RunHeader::new()
        .with("tool", concat!("evplan ", env!("CARGO_PKG_VERSION")))
        .with("command", command)
        .with("seed", seed(common, cfg))
        .with("config", path(&common.config))
        .with("chargers", path(&common.chargers))
        .with("traffic", path(&common.traffic))
        .with("nodes", path(&common.nodes))
        .with("edges", path(&common.edges))
        .with("roads_geojson", path(&common.roads_geojson))
        .with("ev_models", path(&common.ev_models))
        .with(
            "demand",
            format!(
                "ev_share={} charge_need_share={} service_min={} wait_cap_min={} assign_radius_mi={} split={:?}",
                d.ev_share, d.charge_need_share, d.service_min, d.wait_cap_min, d.assign_radius_mi, d.split
            ),
        )
}

fn out_dir(common: &Common) -> Result<&Path, CliError> {
    fs::create_dir_all(&common.out)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", common.out.display())))?;
    Ok(&common.out)
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let fail = |e: std::io::Error| CliError::Input(format!("{}: {e}", path.display()));
    let mut w = BufWriter::new(File::create(path).map_err(fail)?);
    f(&mut w).and_then(|_| w.flush()).map_err(fail)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    write_with(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)
    })
}

pub fn coverage(common: &Common, radius: Option<f64>) -> Result<(), CliError> {
    let cfg = FileConfig::load(common.config.as_deref())?;
    let stations = stations(common)?;
    let points = traffic(common)?.ok_or_else(|| CliError::Input("--traffic is required".into()))?;
    let radius = radius.or(cfg.coverage.radius_mi).unwrap_or(DEFAULT_COVERAGE_RADIUS_MI);
    let result = siting::coverage(&stations, &points, radius).map_err(input)?;
    let h = header(common, "coverage", &cfg).with("radius_mi", radius);

    let dir = out_dir(common)?;
    write_with(&dir.join("coverage.csv"), |w| export::write_coverage_csv(w, &h, &points, &result))?;
    write_json(&dir.join("coverage.geojson"), &export::coverage_geojson(&h, &stations, &points, &result))?;
    println!(
        "covered {} of {} traffic points within {radius} mi; {} uncovered",
        result.covered.len(),
        points.len(),
        result.uncovered.len()
    );
    Ok(())
}

pub fn site(common: &Common, radius: Option<f64>, k: Option<usize>) -> Result<(), CliError> {
    let cfg = FileConfig::load(common.config.as_deref())?;
    let stations = stations(common)?;
    let points = traffic(common)?.ok_or_else(|| CliError::Input("--traffic is required".into()))?;
    let radius = radius.or(cfg.coverage.radius_mi).unwrap_or(DEFAULT_COVERAGE_RADIUS_MI);
    let k = k.or(cfg.siting.k).unwrap_or(DEFAULT_CLUSTERS);
    let seed = seed(common, &cfg);
    let covered = siting::coverage(&stations, &points, radius).map_err(input)?;
    let uncovered: Vec<TrafficPoint> = points
        .iter()
        .filter(|p| covered.uncovered.contains(&p.id))
        .cloned()
        .collect();
    let proposal = match propose_sites(&uncovered, k, seed) {
        Ok(p) => p,
        Err(SitingError::EmptyDemand) => {
            return Err(CliError::Empty(format!("every traffic point is within {radius} mi of a charger")))
        }
        Err(e) => return Err(input(e)),
    };
    let h = header(common, "site", &cfg)
        .with("radius_mi", radius)
        .with("k", k)
        .with("uncovered_points", uncovered.len())
        .with("inertia_sq_mi", proposal.inertia_sq_mi);

    let dir = out_dir(common)?;
    write_with(&dir.join("sites.csv"), |w| export::write_sites_csv(w, &h, &proposal))?;
    write_json(&dir.join("sites.geojson"), &export::sites_geojson(&h, &proposal))?;
    println!("{:>7}  {:>10}  {:>11}  {:>11}", "cluster", "lat", "lon", "demand_aadt");
    for s in &proposal.sites {
        println!(
            "{:>7}  {:>10.5}  {:>11.5}  {:>11.0}",
            s.cluster,
            s.location.lat(),
            s.location.lon(),
            s.demand_aadt
        );
    }
    Ok(())
}

pub fn robustness(
    common: &Common,
    lambda: Option<f64>,
    trials: Option<usize>,
    weighting: Option<WeightingArg>,
    target_by: Option<TargetArg>,
) -> Result<(), CliError> {
    let cfg = FileConfig::load(common.config.as_deref())?;
    let stations = stations(common)?;
    let road = road(common)?;
    let run = robustness_config(common, &cfg, lambda, trials, weighting, target_by);
    let source = match &road {
        Some(net) => DistanceSource::Road(net),
        None => DistanceSource::Geodesic,
    };
    let graph = build_charger_graph_with(&stations, run.lambda_max_mi, source).map_err(input)?;
    if graph.node_count() == 0 {
        return Err(CliError::Empty("no charging stations loaded".into()));
    }
    let report = analyze(&graph, &run).map_err(input)?;
    let h = header(common, "robustness", &cfg)
        .with("lambda_max_mi", run.lambda_max_mi)
        .with("trials", run.trials)
        .with("weighting", format!("{:?}", run.weighting))
        .with("target_by", format!("{:?}", run.target_by))
        .with("distance", if road.is_some() { "road" } else { "geodesic" });

    let dir = out_dir(common)?;
    write_with(&dir.join("centrality.csv"), |w| export::write_centrality_csv(w, &h, &report))?;
    write_with(&dir.join("percolation_random.csv"), |w| {
        export::write_curve_csv(w, &h, &report.percolation_random)
    })?;
    write_with(&dir.join("percolation_targeted.csv"), |w| {
        export::write_curve_csv(w, &h, &report.percolation_targeted)
    })?;
    write_json(&dir.join("centrality.geojson"), &export::centrality_geojson(&h, &stations, &report))?;

    println!("{} stations, {} edges at lambda {} mi", report.node_count, report.edge_count, run.lambda_max_mi);
    let mut ranked: Vec<(&String, &f64)> = report.betweenness.iter().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(a.1).then(a.0.cmp(b.0)));
    println!("{:<20}  {:>11}  {:>8}", "station", "betweenness", "degree");
    for (id, b) in ranked.into_iter().take(5) {
        println!("{:<20}  {:>11.4}  {:>8.4}", id, b, report.degree[id]);
    }
    Ok(())
}

fn robustness_config(
    common: &Common,
    cfg: &FileConfig,
    lambda: Option<f64>,
    trials: Option<usize>,
    weighting: Option<WeightingArg>,
    target_by: Option<TargetArg>,
) -> RobustnessConfig {
    let defaults = RobustnessConfig::default();
    let r = &cfg.robustness;
    RobustnessConfig {
        lambda_max_mi: lambda.or(r.lambda_max_mi).unwrap_or(defaults.lambda_max_mi),
        trials: trials.or(r.trials).unwrap_or(defaults.trials),
        seed: seed(common, cfg),
        weighting: weighting
            .map(|w| match w {
                WeightingArg::Weighted => Weighting::Weighted,
                WeightingArg::Unweighted => Weighting::Unweighted,
            })
            .or(r.weighting)
            .unwrap_or_default(),
        target_by: target_by
            .map(|t| match t {
                TargetArg::Betweenness => TargetRanking::Betweenness,
                TargetArg::Degree => TargetRanking::Degree,
            })
            .or(r.target_by)
            .unwrap_or_default(),
        ..defaults
    }
}

pub struct PlanArgs {
    pub from: Option<GeoPoint>,
    pub to: Option<GeoPoint>,
    pub ev: Option<String>,
    pub soc: Option<f64>,
    pub alpha: Option<f64>,
    pub objective: Option<ObjectiveArg>,
    pub overshoot: bool,
    pub speed: Option<f64>,
    pub batch: Option<PathBuf>,
}

fn plan_options(cfg: &FileConfig, args: &PlanArgs) -> PlanOptions {
    let p = &cfg.plan;
    let defaults = PlanOptions::default();
    PlanOptions {
        avg_speed_mph: args.speed.or(p.avg_speed_mph).unwrap_or(defaults.avg_speed_mph),
        metric: args
            .objective
            .map(|o| match o {
                ObjectiveArg::Time => CostMetric::Time,
                ObjectiveArg::Distance => CostMetric::Distance,
            })
            .or(p.objective)
            .unwrap_or_default(),
        allow_cv_overshoot: args.overshoot || p.allow_cv_overshoot.unwrap_or(false),
        ..defaults
    }
}

fn pick_model(models: &[EvModel], name: Option<&str>) -> Result<EvModel, CliError> {
    match name {
        Some(n) => models.iter().find(|m| m.name == n).cloned().ok_or_else(|| {
            let known: Vec<&str> = models.iter().map(|m| m.name.as_str()).collect();
            CliError::Input(format!("unknown EV model `{n}`; known: {}", known.join(", ")))
        }),
        None => models.first().cloned().ok_or_else(|| CliError::Input("EV catalog is empty".into())),
    }
}

fn print_plan(plan: &RoutePlan) {
    println!(
        "{:<20}  {:>8}  {:>8}  {:>8}  {:>10}",
        "stop", "arr_soc", "dep_soc", "wait_min", "charge_min"
    );
    for s in &plan.stop_details {
        println!(
            "{:<20}  {:>8.3}  {:>8.3}  {:>8.2}  {:>10.2}",
            s.station_id, s.arrival_soc, s.departure_soc, s.wait_min, s.charge_min
        );
    }
    if plan.stop_details.is_empty() {
        println!("(no charging stops)");
    }
    let t = &plan.totals;
    println!("travel_min  {:.2}", t.travel_min);
    println!("wait_min    {:.2}", t.wait_min);
    println!("charge_min  {:.2}", t.charge_min);
    println!("total_min   {:.2}", t.total_min);
    println!("objective   {:.4}", plan.objective_value);
}

fn infeasible(e: RouterError) -> CliError {
    match e {
        RouterError::Infeasible(why) => CliError::Infeasible(format!("no feasible route: {why}")),
        other => CliError::Input(other.to_string()),
    }
}

#[derive(Debug, Deserialize)]
struct Trip {
    id: String,
    from_lat: f64,
    from_lon: f64,
    to_lat: f64,
    to_lon: f64,
}

pub fn plan(common: &Common, args: PlanArgs) -> Result<(), CliError> {
    let cfg = FileConfig::load(common.config.as_deref())?;
    let stations = stations(common)?;
    let road = road(common)?;
    let models = ev_models(common)?;
    let ev = pick_model(&models, args.ev.as_deref().or(cfg.plan.ev.as_deref()))?;
    let waits = match traffic(common)? {
        Some(points) => wait_map(&wait_profiles(&stations, &points, &cfg.demand)),
        None => Default::default(),
    };
    let opts = plan_options(&cfg, &args);
    let soc_start = args.soc.or(cfg.plan.soc).unwrap_or(DEFAULT_SOC);
    let alpha = args.alpha.or(cfg.plan.alpha).unwrap_or(DEFAULT_ALPHA);
    let query = |origin, destination| RouteQuery {
        origin,
        destination,
        ev: ev.clone(),
        soc_start,
        alpha,
        wait_profiles: waits.clone(),
    };
    let h = header(common, "plan", &cfg)
        .with("ev", &ev.name)
        .with("soc_start", soc_start)
        .with("alpha", alpha)
        .with("objective", format!("{:?}", opts.metric))
        .with("avg_speed_mph", opts.avg_speed_mph)
        .with("allow_cv_overshoot", opts.allow_cv_overshoot)
        .with("distance", if road.is_some() { "road" } else { "geodesic" });

    if let Some(batch) = &args.batch {
        return plan_batch(common, batch, &h, |from, to| {
            plan_route(&query(from, to), &stations, road.as_ref(), &opts)
        });
    }

    let (from, to) = (args.from.expect("clap requires --from"), args.to.expect("clap requires --to"));
    let plan = plan_route(&query(from, to), &stations, road.as_ref(), &opts).map_err(infeasible)?;
    let h = h.with("from", from).with("to", to);
    print_plan(&plan);
    let dir = out_dir(common)?;
    let mut body = serde_json::to_value(&plan).map_err(input)?;
    body["metadata"] = h.to_json();
    write_json(&dir.join("plan.json"), &body)?;
    write_json(&dir.join("plan.geojson"), &export::plan_geojson(&h, &plan))?;
    Ok(())
}

fn plan_batch(
    common: &Common,
    path: &Path,
    header: &RunHeader,
    solve: impl Fn(GeoPoint, GeoPoint) -> Result<RoutePlan, RouterError>,
) -> Result<(), CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for trip in reader.deserialize::<Trip>() {
        let trip = trip.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let point = |lat, lon| GeoPoint::new(lat, lon).map_err(|e| CliError::Input(format!("trip `{}`: {e}", trip.id)));
        let from = point(trip.from_lat, trip.from_lon)?;
        let to = point(trip.to_lat, trip.to_lon)?;
        rows.push((trip.id, solve(from, to)));
    }
    let failures = rows.iter().filter(|(_, r)| r.is_err()).count();
    let h = header.clone().with("batch", path.display());
    let dir = out_dir(common)?;
    write_with(&dir.join("plans.csv"), |w| {
        h.write_comment_lines(w)?;
        writeln!(w, "id,status,stops,travel_min,wait_min,charge_min,total_min,detail")?;
        for (id, r) in &rows {
            match r {
                Ok(p) => {
                    let t = p.totals;
                    writeln!(
                        w,
                        "{id},ok,{},{},{},{},{},",
                        p.stops.join(";"),
                        t.travel_min,
                        t.wait_min,
                        t.charge_min,
                        t.total_min
                    )?;
                }
                Err(e) => writeln!(w, "{id},failed,,,,,,\"{}\"", e.to_string().replace('"', "'"))?,
            }
        }
        Ok(())
    })?;
    println!("{} trips planned, {failures} failed", rows.len() - failures);
    if failures > 0 {
        return Err(CliError::Infeasible(format!("{failures} of {} trips have no feasible route", rows.len())));
    }
    Ok(())
}

pub fn serve(common: &Common, port: Option<u16>, host: &str, cors_origin: Option<String>) -> Result<(), CliError> {
    let cfg = FileConfig::load(common.config.as_deref())?;
    let plan_args = PlanArgs {
        from: None,
        to: None,
        ev: None,
        soc: None,
        alpha: None,
        objective: None,
        overshoot: false,
        speed: None,
        batch: None,
    };
    let dataset = Dataset {
        stations: stations(common)?,
        traffic: traffic(common)?.unwrap_or_default(),
        road: road(common)?,
        ev_models: ev_models(common)?,
        demand: cfg.demand.clone(),
        coverage_radius_mi: cfg.coverage.radius_mi.unwrap_or(DEFAULT_COVERAGE_RADIUS_MI),
        robustness: robustness_config(common, &cfg, None, None, None, None),
        plan_options: plan_options(&cfg, &plan_args),
        default_alpha: cfg.plan.alpha.unwrap_or(DEFAULT_ALPHA),
    };
    let origin = cors_origin.or_else(|| cfg.serve.cors_origin.clone());
    let cors = cors_layer(origin.as_deref()).map_err(CliError::Input)?;
    let router = app(Arc::new(ServiceState::new(dataset)), cors);
    let port = port.or(cfg.serve.port).unwrap_or(DEFAULT_PORT);

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Input(format!("cannot start runtime: {e}")))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, port))
            .await
            .map_err(|e| CliError::Input(format!("cannot listen on {host}:{port}: {e}")))?;
        let addr = listener.local_addr().map_err(input)?;
        println!("listening on http://{addr}");
        evplan_service::serve(listener, router)
            .await
            .map_err(|e| CliError::Input(format!("server error: {e}")))
    })
}
