use std::collections::BTreeMap;
use std::str::FromStr;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{Path, RawQuery, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::Response;
use axum::routing::{get, patch, post};
use axum::Router;
use campaignd_core::campaign::{
    CampaignDraft, ExperimentPluginSpec, PluginId, RegionDraft, RegionId, RegionPatch, SensorPluginSpec, Status,
};
use campaignd_core::geo::GeoPoint;
use campaignd_core::store::{export, ExportFilter, ExportFormat, Reading};
use campaignd_core::time::parse_instant;
use campaignd_core::{CampaignId, Store};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{rejection_status, ApiError};

pub const VOLUNTEER_HEADER: &str = "x-volunteer-id";
pub const PLUGIN_ID_HEADER: &str = "x-plugin-id";
pub const PLUGIN_VERSION_HEADER: &str = "x-plugin-version";
pub const PLUGIN_CHECKSUM_HEADER: &str = "x-plugin-checksum";
pub const PLUGIN_SENSORS_HEADER: &str = "x-plugin-required-sensors";

pub const DEFAULT_CELL_DEG: f64 = 0.01;
pub const DEFAULT_K: usize = 5;

type AppState = Arc<Store>;
type ApiResult = Result<Response, ApiError>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatusBody {
    pub status: Status,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowerBody {
    pub on: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensorsBody {
    pub sensors: Vec<PluginId>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasurementBatch {
    pub readings: Vec<Reading>,
}

/// The `/v1` HTTP surface over a shared store.
pub fn router(store: Arc<Store>) -> Router {
    let v1 = Router::new()
        .route("/campaigns", post(create_campaign))
        .route("/campaigns/{id}", get(get_campaign))
        .route("/campaigns/{id}/status", post(set_status))
        .route("/campaigns/{id}/regions", post(add_region))
        .route("/campaigns/{id}/regions/{rid}", patch(update_region))
        .route("/plugins/sensors", post(register_sensor).get(list_sensors))
        .route("/campaigns/{id}/experiment-plugin", post(attach_plugin))
        .route("/campaigns/{id}/join", post(join))
        .route("/campaigns/{id}/leave", post(leave))
        .route("/volunteers/power", post(power))
        .route("/volunteers/sensors", post(enable_sensors))
        .route("/volunteers/stats", get(volunteer_stats))
        .route("/campaigns/{id}/measurements", post(ingest))
        .route("/campaigns/{id}/completeness", get(completeness))
        .route("/campaigns/{id}/heatmap", get(heatmap))
        .route("/campaigns/{id}/points", get(points))
        .route("/campaigns/{id}/recommendations", get(recommendations))
        .route("/campaigns/{id}/export", get(export_campaign))
        .route("/stats", get(stats))
        .method_not_allowed_fallback(not_found);
    Router::new()
        .nest("/v1", v1)
        .fallback(not_found)
        .method_not_allowed_fallback(not_found)
        .with_state(store)
}

async fn not_found() -> ApiError {
    ApiError::not_found()
}

pub(crate) fn json_response<T: Serialize>(status: StatusCode, value: &T) -> Response {
    let body = serde_json::to_vec(value).expect("response documents serialize");
    Response::builder()
        .status(status)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body))
        .expect("static response parts")
}

fn ok<T: Serialize>(value: &T) -> ApiResult {
    Ok(json_response(StatusCode::OK, value))
}

fn created<T: Serialize>(value: &T) -> ApiResult {
    Ok(json_response(StatusCode::CREATED, value))
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request("INVALID_JSON", e.to_string()))
}

struct Query(BTreeMap<String, String>);

impl Query {
    fn parse(raw: Option<String>) -> Result<Self, ApiError> {
        let pairs: Vec<(String, String)> = serde_urlencoded::from_str(raw.as_deref().unwrap_or(""))
            .map_err(|e| ApiError::bad_request("INVALID_QUERY", e.to_string()))?;
        Ok(Query(pairs.into_iter().collect()))
    }

    fn get(&self, name: &str) -> Option<&str> {
        self.0.get(name).map(String::as_str)
    }

    fn parsed<T: FromStr>(&self, name: &str) -> Result<Option<T>, ApiError> {
        match self.get(name) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| ApiError::bad_request("INVALID_QUERY", format!("cannot parse `{name}` from {v:?}"))),
        }
    }

    fn required<T: FromStr>(&self, name: &str) -> Result<T, ApiError> {
        self.parsed(name)?
            .ok_or_else(|| ApiError::bad_request("INVALID_QUERY", format!("missing query parameter `{name}`")))
    }
}

fn header_value<'a>(headers: &'a HeaderMap, name: &str) -> Result<Option<&'a str>, ApiError> {
    match headers.get(name) {
        None => Ok(None),
        Some(v) => v
            .to_str()
            .map(|s| Some(s.trim()))
            .map_err(|_| ApiError::bad_request("INVALID_HEADER", format!("header {name} is not visible ASCII"))),
    }
}

fn required_header<'a>(headers: &'a HeaderMap, name: &str) -> Result<&'a str, ApiError> {
    match header_value(headers, name)? {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(ApiError::bad_request("MISSING_HEADER", format!("header {name} is required"))),
    }
}

fn volunteer_id(headers: &HeaderMap) -> Result<&str, ApiError> {
    required_header(headers, VOLUNTEER_HEADER)
}

async fn create_campaign(State(store): State<AppState>, body: Bytes) -> ApiResult {
    let draft: CampaignDraft = parse_body(&body)?;
    created(&store.create_campaign(draft)?)
}

async fn get_campaign(State(store): State<AppState>, Path(id): Path<CampaignId>) -> ApiResult {
    ok(&store.campaign(&id)?)
}

async fn set_status(State(store): State<AppState>, Path(id): Path<CampaignId>, body: Bytes) -> ApiResult {
    let StatusBody { status } = parse_body(&body)?;
    ok(&store.set_status(&id, status)?)
}

async fn add_region(State(store): State<AppState>, Path(id): Path<CampaignId>, body: Bytes) -> ApiResult {
    let draft: RegionDraft = parse_body(&body)?;
    created(&store.add_region(&id, &draft)?)
}

async fn update_region(
    State(store): State<AppState>,
    Path((id, rid)): Path<(CampaignId, RegionId)>,
    body: Bytes,
) -> ApiResult {
    let patch: RegionPatch = parse_body(&body)?;
    ok(&store.update_region(&id, &rid, &patch)?)
}

async fn register_sensor(State(store): State<AppState>, body: Bytes) -> ApiResult {
    let spec: SensorPluginSpec = parse_body(&body)?;
    store.register_sensor_plugin(spec.clone())?;
    created(&spec)
}

async fn list_sensors(State(store): State<AppState>, RawQuery(raw): RawQuery) -> ApiResult {
    let q = Query::parse(raw)?;
    ok(&store.sensor_plugins(q.parsed("public")?.unwrap_or(false)))
}

async fn attach_plugin(
    State(store): State<AppState>,
    Path(id): Path<CampaignId>,
    headers: HeaderMap,
    artifact: Bytes,
) -> ApiResult {
    let required_sensors = header_value(&headers, PLUGIN_SENSORS_HEADER)?
        .map(|v| v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(PluginId::from).collect())
        .unwrap_or_default();
    let spec = ExperimentPluginSpec {
        id: required_header(&headers, PLUGIN_ID_HEADER)?.into(),
        version: required_header(&headers, PLUGIN_VERSION_HEADER)?.to_owned(),
        checksum: required_header(&headers, PLUGIN_CHECKSUM_HEADER)?.to_owned(),
        required_sensors,
    };
    ok(&store.attach_experiment_plugin(&id, spec, &artifact)?)
}

async fn join(State(store): State<AppState>, Path(id): Path<CampaignId>, headers: HeaderMap) -> ApiResult {
    ok(&store.join_experiment(volunteer_id(&headers)?, &id)?)
}

async fn leave(State(store): State<AppState>, Path(id): Path<CampaignId>, headers: HeaderMap) -> ApiResult {
    ok(&store.leave_experiment(volunteer_id(&headers)?, &id)?)
}

async fn power(State(store): State<AppState>, headers: HeaderMap, body: Bytes) -> ApiResult {
    let PowerBody { on } = parse_body(&body)?;
    ok(&store.set_power(volunteer_id(&headers)?, on)?)
}

async fn enable_sensors(State(store): State<AppState>, headers: HeaderMap, body: Bytes) -> ApiResult {
    let SensorsBody { sensors } = parse_body(&body)?;
    ok(&store.enable_sensors(volunteer_id(&headers)?, sensors)?)
}

async fn volunteer_stats(State(store): State<AppState>, headers: HeaderMap) -> ApiResult {
    ok(&store.volunteer_stats(volunteer_id(&headers)?)?)
}

/// A batch in which every reading was rejected answers with the status of
/// the first rejection; the full outcome travels in `details`.
async fn ingest(State(store): State<AppState>, Path(id): Path<CampaignId>, headers: HeaderMap, body: Bytes) -> ApiResult {
    let raw_id = volunteer_id(&headers)?;
    let MeasurementBatch { readings } = parse_body(&body)?;
    let outcome = store.ingest(&id, raw_id, &readings)?;
    match outcome.rejected.first() {
        Some(first) if outcome.accepted == 0 => {
            let details = serde_json::to_value(&outcome).expect("outcome serializes");
            Err(ApiError::new(rejection_status(first.reason), first.reason.code(), first.reason.to_string())
                .with_details(details))
        }
        _ => ok(&outcome),
    }
}

async fn completeness(State(store): State<AppState>, Path(id): Path<CampaignId>) -> ApiResult {
    ok(&store.completeness(&id)?)
}

async fn heatmap(State(store): State<AppState>, Path(id): Path<CampaignId>, RawQuery(raw): RawQuery) -> ApiResult {
    let q = Query::parse(raw)?;
    let cell_deg = q.parsed("cell_deg")?.unwrap_or(DEFAULT_CELL_DEG);
    ok(&store.heatmap(&id, cell_deg)?)
}

async fn points(State(store): State<AppState>, Path(id): Path<CampaignId>) -> ApiResult {
    ok(&store.points(&id)?)
}

async fn stats(State(store): State<AppState>, RawQuery(raw): RawQuery) -> ApiResult {
    let q = Query::parse(raw)?;
    let ids: Vec<CampaignId> = match q.get("campaigns") {
        Some(list) => list.split(',').map(str::trim).filter(|s| !s.is_empty()).map(CampaignId::from).collect(),
        None => store.campaign_ids(),
    };
    ok(&store.stats(&ids)?)
}

async fn recommendations(
    State(store): State<AppState>,
    Path(id): Path<CampaignId>,
    RawQuery(raw): RawQuery,
) -> ApiResult {
    let q = Query::parse(raw)?;
    let location = GeoPoint::new(q.required("lon")?, q.required("lat")?);
    let k = q.parsed("k")?.unwrap_or(DEFAULT_K);
    let now = match q.get("at") {
        Some(s) => parse_instant(s).map_err(|e| ApiError::bad_request("INVALID_QUERY", format!("`at`: {e}")))?,
        None => store.now(),
    };
    ok(&store.recommend(&id, &location, &now, k)?)
}

async fn export_campaign(
    State(store): State<AppState>,
    Path(id): Path<CampaignId>,
    RawQuery(raw): RawQuery,
) -> ApiResult {
    let q = Query::parse(raw)?;
    let format: ExportFormat = q.get("format").unwrap_or("json").parse()?;
    let filter = ExportFilter { region: q.get("region").map(RegionId::from), window: q.get("window").map(Into::into) };
    let records = store.export_records(&id, &filter)?;
    let offset = q.parsed::<usize>("offset")?.unwrap_or(0).min(records.len());
    let limit = q.parsed::<usize>("limit")?.unwrap_or(usize::MAX);
    let page = &records[offset..offset + limit.min(records.len() - offset)];
    Ok(Response::builder()
        .status(StatusCode::OK)
        .header(header::CONTENT_TYPE, format.content_type())
        .body(Body::from(export::encode(page, format)))
        .expect("static response parts"))
}
