//! HTTP API over a finished run directory.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cellshare_core::linkage::{LinkageContext, LinkageError, RatioRecord, RegionSelection, Snapshot};
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

use crate::artifacts::*;
use crate::error::{CliError, ErrorReport};
use crate::stages::{check_region_snapshot, linkage_context, market_share_report, GroupIndex, MarketShareReport, Run, SummaryReport};
use crate::config::LinkageConfig;

/// Read-only snapshot of the persisted outputs.
pub struct Dataset {
    ctx: LinkageContext,
    records: Vec<RatioRecord>,
    by_zone: HashMap<String, usize>,
    zones_geojson: Vec<u8>,
    summary: Vec<u8>,
    groups: BTreeMap<String, Vec<u8>>,
    group_index: Vec<GroupIndex>,
    linkage: LinkageConfig,
    snapshot: Snapshot,
}

#[derive(Clone)]
pub struct AppState {
    data: Arc<Dataset>,
    /// Analyst regions; the lock also serializes writes of their file.
    regions: Arc<Mutex<Vec<RegionSelection>>>,
    regions_path: PathBuf,
}

fn read_bytes(a: &Artifact) -> Result<Vec<u8>, CliError> {
    std::fs::read(&a.full).map_err(CliError::io(&a.full))
}

impl AppState {
    /// Loads a run directory produced by `pipeline` (or the individual
    /// stages through `linkage` and `fboxplot`).
    pub fn load(run: &Run) -> Result<Self, CliError> {
        let need = |rel: &str, producer: &'static str| {
            let full = run.path(rel);
            if full.is_file() {
                Ok(Artifact { full, label: rel.to_string() })
            } else {
                Err(CliError::Dependency { stage: "serve", artifact: rel.to_string(), producer })
            }
        };
        let ratios = need(LINKAGE_RATIOS, "linkage")?;
        let zones = need(LINKAGE_ZONES, "linkage")?;
        let summary = need(LINKAGE_SUMMARY, "linkage")?;
        let index = need(FBOXPLOT_INDEX, "fboxplot")?;
        need(INGEST_DATASET, "ingest")?;

        let records = read_ratios(&ratios.full)?;
        let summary_report: SummaryReport = read_json(&summary.full)?;
        let group_index: Vec<GroupIndex> = read_json(&index.full)?;
        let mut groups = BTreeMap::new();
        for g in &group_index {
            groups.insert(g.group.clone(), read_bytes(&need(&g.file, "fboxplot")?)?);
        }
        let ctx = linkage_context(run, &run.source("serve")?)?;
        let ids: Vec<&str> = ctx.zones().iter().map(|z| z.zone_id.as_str()).collect();
        let rec_ids: Vec<&str> = records.iter().map(|r| r.zone_id.as_str()).collect();
        if ids != rec_ids {
            return Err(CliError::format(&ratios.full, "zones differ from the configured zone file; rerun linkage"));
        }
        let by_zone = records.iter().enumerate().map(|(i, r)| (r.zone_id.clone(), i)).collect();

        let regions_path = run.path(SERVE_REGIONS);
        let regions: Vec<RegionSelection> = if regions_path.is_file() { read_json(&regions_path)? } else { Vec::new() };
        let data = Dataset {
            ctx,
            records,
            by_zone,
            zones_geojson: read_bytes(&zones)?,
            summary: read_bytes(&summary)?,
            groups,
            group_index,
            linkage: run.cfg.linkage.clone(),
            snapshot: summary_report.snapshot,
        };
        Ok(Self { data: Arc::new(data), regions: Arc::new(Mutex::new(regions)), regions_path })
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    report: ErrorReport,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self { status, report: ErrorReport { code: code.into(), message: message.into() } }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }
}

impl From<LinkageError> for ApiError {
    fn from(e: LinkageError) -> Self {
        match e {
            LinkageError::UnknownZone(_) => Self::new(StatusCode::NOT_FOUND, "unknown_zone", e.to_string()),
            LinkageError::Argument(_) => Self::bad_request(e.to_string()),
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "linkage", e.to_string()),
        }
    }
}

impl From<CliError> for ApiError {
    fn from(e: CliError) -> Self {
        match e {
            CliError::Linkage(l) => l.into(),
            other => Self::new(StatusCode::INTERNAL_SERVER_ERROR, other.code(), other.to_string()),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "malformed_body", e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.report)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn raw_json(bytes: &[u8], content_type: &'static str) -> Response {
    ([(header::CONTENT_TYPE, content_type)], bytes.to_vec()).into_response()
}

async fn zones(State(s): State<AppState>) -> Response {
    raw_json(&s.data.zones_geojson, "application/geo+json")
}

async fn zone(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<RatioRecord>> {
    let i = s.data.by_zone.get(&id).ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_zone", format!("unknown zone {id}")))?;
    Ok(Json(s.data.records[*i].clone()))
}

async fn summary(State(s): State<AppState>) -> Response {
    raw_json(&s.data.summary, "application/json")
}

async fn groups(State(s): State<AppState>) -> Json<Vec<GroupIndex>> {
    Json(s.data.group_index.clone())
}

async fn ddp(State(s): State<AppState>, Path(group): Path<String>) -> ApiResult<Response> {
    let bytes = s
        .data
        .groups
        .get(&group)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_group", format!("unknown group {group}")))?;
    Ok(raw_json(bytes, "application/json"))
}

/// Combined record of a region, with the zones it aggregated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRatioResponse {
    pub name: Option<String>,
    pub members: Vec<String>,
    #[serde(flatten)]
    pub record: RatioRecord,
}

fn check_selection(d: &Dataset, sel: &RegionSelection) -> ApiResult<RegionSelection> {
    sel.validate()?;
    check_region_snapshot(sel, &d.snapshot).map_err(ApiError::bad_request)?;
    let sel = d.linkage.with_default_buffer(sel);
    d.ctx.region_members(&sel)?;
    Ok(sel)
}

async fn region_ratio(
    State(s): State<AppState>,
    body: Result<Json<RegionSelection>, JsonRejection>,
) -> ApiResult<Json<RegionRatioResponse>> {
    let Json(sel) = body?;
    let d = &s.data;
    let sel = check_selection(d, &sel)?;
    let r = d.ctx.aggregate_records(&sel, &d.records)?;
    Ok(Json(RegionRatioResponse { name: r.name, members: r.members, record: r.record }))
}

async fn market_share(State(s): State<AppState>) -> ApiResult<Json<MarketShareReport>> {
    let regions = s.regions.lock().await.clone();
    let d = &s.data;
    Ok(Json(market_share_report(&d.ctx, &d.linkage, &regions, &d.records)?))
}

async fn list_regions(State(s): State<AppState>) -> Json<Vec<RegionSelection>> {
    Json(s.regions.lock().await.clone())
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RegionsBody {
    Many(Vec<RegionSelection>),
    One(RegionSelection),
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RegionsResponse {
    pub regions: Vec<RegionSelection>,
    pub market_share: MarketShareReport,
}

async fn add_regions(
    State(s): State<AppState>,
    body: Result<Json<RegionsBody>, JsonRejection>,
) -> ApiResult<Json<RegionsResponse>> {
    let Json(body) = body?;
    let incoming = match body {
        RegionsBody::Many(v) => v,
        RegionsBody::One(r) => vec![r],
    };
    let d = &s.data;
    let checked = incoming.iter().map(|r| check_selection(d, r)).collect::<ApiResult<Vec<_>>>()?;
    let mut list = s.regions.lock().await;
    let mut next = list.clone();
    next.extend(checked);
    write_json_atomic(&s.regions_path, &next)?;
    *list = next;
    let market_share = market_share_report(&d.ctx, &d.linkage, &list, &d.records)?;
    Ok(Json(RegionsResponse { regions: list.clone(), market_share }))
}

async fn clear_regions(State(s): State<AppState>) -> ApiResult<Json<Vec<RegionSelection>>> {
    let mut list = s.regions.lock().await;
    write_json_atomic(&s.regions_path, &Vec::<RegionSelection>::new())?;
    list.clear();
    Ok(Json(Vec::new()))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/zones", get(zones))
        .route("/api/zones/{id}", get(zone))
        .route("/api/summary", get(summary))
        .route("/api/groups", get(groups))
        .route("/api/ddp/{group}", get(ddp))
        .route("/api/region-ratio", post(region_ratio))
        .route("/api/market-share", get(market_share))
        .route("/api/regions", get(list_regions).post(add_regions).delete(clear_regions))
        .fallback(not_found)
        .with_state(state)
}

/// Serves the run directory until interrupted.
pub async fn serve(run: &Run, bind: &str) -> Result<(), CliError> {
    let state = AppState::load(run)?;
    let listener = tokio::net::TcpListener::bind(bind).await.map_err(|e| CliError::Server(format!("bind {bind}: {e}")))?;
    let addr = listener.local_addr().map_err(|e| CliError::Server(e.to_string()))?;
    log::info!("serving {} on http://{addr}", run.out.display());
    println!("{}", serde_json::json!({ "status": "listening", "addr": addr.to_string() }));
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| CliError::Server(e.to_string()))
}
