//! JSON-over-HTTP facade for the planning library.
//!
//! Handlers validate and encode only; every response body is the serialization
//! of a library call on one immutable dataset snapshot.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Query, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::{Any, CorsLayer};

use evplan_core::charging::EvModel;
use evplan_core::congestion::{wait_profiles, DemandConfig, WaitProfile};
use evplan_core::geo::GeoPoint;
use evplan_core::ingest::{ChargerStation, TrafficPoint};
use evplan_core::road::RoadNetwork;
use evplan_core::robustness::{analyze, build_charger_graph_with, DistanceSource, RobustnessConfig};
use evplan_core::router::{plan_route, wait_map, PlanOptions, RouteQuery, RouterError};
use evplan_core::siting::{coverage, propose_sites, CoverageResult, SitingError};

/// Everything loaded at startup.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub stations: Vec<ChargerStation>,
    pub traffic: Vec<TrafficPoint>,
    pub road: Option<RoadNetwork>,
    pub ev_models: Vec<EvModel>,
    pub demand: DemandConfig,
    pub coverage_radius_mi: f64,
    pub robustness: RobustnessConfig,
    pub plan_options: PlanOptions,
    pub default_alpha: f64,
}

#[derive(Debug)]
pub struct ServiceState {
    pub dataset: Dataset,
    pub wait_profiles: Vec<WaitProfile>,
    waits: BTreeMap<String, f64>,
}

impl ServiceState {
    pub fn new(dataset: Dataset) -> Self {
        let wait_profiles = wait_profiles(&dataset.stations, &dataset.traffic, &dataset.demand);
        let waits = wait_map(&wait_profiles);
        ServiceState {
            dataset,
            wait_profiles,
            waits,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub error: &'static str,
    pub detail: String,
}

impl ApiError {
    fn bad_request(detail: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            error: "bad_request",
            detail: detail.into(),
        }
    }

    fn unprocessable(error: &'static str, detail: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            error,
            detail: detail.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.error, "detail": self.detail }))).into_response()
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        ApiError::bad_request(r.body_text())
    }
}

type Shared = State<Arc<ServiceState>>;

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct StationView {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
    pub ports: u32,
    pub power_kw: f64,
    pub wait_min: f64,
}

async fn stations(State(state): Shared) -> Json<Vec<StationView>> {
    let views = state
        .dataset
        .stations
        .iter()
        .map(|s| StationView {
            id: s.id.clone(),
            lat: s.location.lat(),
            lon: s.location.lon(),
            ports: s.ports,
            power_kw: s.power_kw,
            wait_min: state.waits.get(&s.id).copied().unwrap_or(0.0),
        })
        .collect();
    Json(views)
}

async fn ev_models(State(state): Shared) -> Json<Vec<EvModel>> {
    Json(state.dataset.ev_models.clone())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanRequest {
    pub from: GeoPoint,
    pub to: GeoPoint,
    pub ev: String,
    pub soc_start: f64,
    pub alpha: Option<f64>,
    #[serde(default)]
    pub allow_cv_overshoot: Option<bool>,
}

async fn plan(State(state): Shared, body: Bytes) -> Result<Response, ApiError> {
    let req: PlanRequest = serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let ev = state
        .dataset
        .ev_models
        .iter()
        .find(|m| m.name == req.ev)
        .cloned()
        .ok_or_else(|| ApiError::bad_request(format!("unknown EV model `{}`", req.ev)))?;
    let query = RouteQuery {
        origin: req.from,
        destination: req.to,
        ev,
        soc_start: req.soc_start,
        alpha: req.alpha.unwrap_or(state.dataset.default_alpha),
        wait_profiles: state.waits.clone(),
    };
    let mut opts = state.dataset.plan_options.clone();
    if let Some(flag) = req.allow_cv_overshoot {
        opts.allow_cv_overshoot = flag;
    }
    match plan_route(&query, &state.dataset.stations, state.dataset.road.as_ref(), &opts) {
        Ok(plan) => Ok(Json(plan).into_response()),
        Err(RouterError::Infeasible(why)) => {
            let body = json!({ "error": "infeasible", "detail": why.to_string(), "reason": why });
            Ok((StatusCode::UNPROCESSABLE_ENTITY, Json(body)).into_response())
        }
        Err(e @ (RouterError::InvalidQuery(_) | RouterError::Charging(_))) => Err(ApiError::bad_request(e.to_string())),
        Err(e) => Err(ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            error: "internal",
            detail: e.to_string(),
        }),
    }
}

#[derive(Debug, Deserialize)]
pub struct RobustnessParams {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub lambda: Option<f64>,
}

async fn robustness(State(state): Shared, params: Result<Query<RobustnessParams>, QueryRejection>) -> Result<Response, ApiError> {
    let Query(params) = params?;
    let mut cfg = state.dataset.robustness.clone();
    cfg.seed = params.seed.unwrap_or(cfg.seed);
    cfg.trials = params.trials.unwrap_or(cfg.trials);
    cfg.lambda_max_mi = params.lambda.unwrap_or(cfg.lambda_max_mi);
    let source = match &state.dataset.road {
        Some(net) => DistanceSource::Road(net),
        None => DistanceSource::Geodesic,
    };
    let graph = build_charger_graph_with(&state.dataset.stations, cfg.lambda_max_mi, source)
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    let report = analyze(&graph, &cfg).map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(Json(report).into_response())
}

#[derive(Debug, Deserialize)]
pub struct CoverageParams {
    pub radius: Option<f64>,
}

fn coverage_at(state: &ServiceState, radius: Option<f64>) -> Result<CoverageResult, ApiError> {
    let radius = radius.unwrap_or(state.dataset.coverage_radius_mi);
    coverage(&state.dataset.stations, &state.dataset.traffic, radius).map_err(|e| ApiError::bad_request(e.to_string()))
}

async fn coverage_handler(State(state): Shared, params: Result<Query<CoverageParams>, QueryRejection>) -> Result<Response, ApiError> {
    let Query(params) = params?;
    Ok(Json(coverage_at(&state, params.radius)?).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteRequest {
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
    pub radius: Option<f64>,
}

async fn site_proposals(State(state): Shared, body: Bytes) -> Result<Response, ApiError> {
    let req: SiteRequest = serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let covered = coverage_at(&state, req.radius)?;
    let uncovered: Vec<TrafficPoint> = state
        .dataset
        .traffic
        .iter()
        .filter(|p| covered.uncovered.contains(&p.id))
        .cloned()
        .collect();
    match propose_sites(&uncovered, req.k, req.seed) {
        Ok(p) => Ok(Json(p).into_response()),
        Err(e @ (SitingError::InvalidK { .. } | SitingError::EmptyDemand)) => {
            Err(ApiError::unprocessable("unsatisfiable", e.to_string()))
        }
        Err(e) => Err(ApiError::bad_request(e.to_string())),
    }
}

/// Permissive CORS unless an origin is given.
pub fn cors_layer(origin: Option<&str>) -> Result<CorsLayer, String> {
    let layer = CorsLayer::new().allow_methods(Any).allow_headers(Any);
    match origin {
        None | Some("*") => Ok(layer.allow_origin(Any)),
        Some(o) => {
            let value = HeaderValue::from_str(o).map_err(|e| format!("invalid CORS origin `{o}`: {e}"))?;
            Ok(layer.allow_origin(value))
        }
    }
}

pub fn app(state: Arc<ServiceState>, cors: CorsLayer) -> Router {
    Router::new()
        .route("/stations", get(stations))
        .route("/ev-models", get(ev_models))
        .route("/plan", post(plan))
        .route("/robustness", get(robustness))
        .route("/coverage", get(coverage_handler))
        .route("/site-proposals", post(site_proposals))
        .layer(cors)
        .with_state(state)
}

pub async fn serve(listener: tokio::net::TcpListener, router: Router) -> std::io::Result<()> {
    axum::serve(listener, router).await
}
