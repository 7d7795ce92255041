//! Blocking client for the `/v1` API.

use std::sync::atomic::{AtomicU64, Ordering};

use campaignd_core::campaign::{
    ExperimentPluginSpec, PluginId, Region, RegionDraft, RegionId, RegionPatch, SensorPluginSpec, Status,
};
use campaignd_core::coverage::{CampaignStats, CompletenessReport, Heatmap};
use campaignd_core::store::{
    ExportFormat, IngestOutcome, JoinOutcome, PointRecord, Reading, VolunteerStats, VolunteerView,
};
use campaignd_core::time::format_instant;
use campaignd_core::{Campaign, CampaignDraft, CampaignId, Recommendation};
use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::error::ApiError;
use crate::routes::{
    MeasurementBatch, PowerBody, SensorsBody, StatusBody, PLUGIN_CHECKSUM_HEADER, PLUGIN_ID_HEADER,
    PLUGIN_SENSORS_HEADER, PLUGIN_VERSION_HEADER, VOLUNTEER_HEADER,
};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("service unreachable: {0}")]
    Unreachable(String),
    #[error("{0}")]
    Api(ApiError),
    #[error("cannot decode response: {0}")]
    Decode(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawResponse {
    pub status: u16,
    pub content_type: Option<String>,
    pub body: Vec<u8>,
}

impl RawResponse {
    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }

    pub fn json<T: DeserializeOwned>(&self) -> Result<T, ClientError> {
        serde_json::from_slice(&self.body).map_err(|e| ClientError::Decode(e.to_string()))
    }

    fn into_result(self) -> Result<RawResponse, ClientError> {
        if self.is_success() {
            return Ok(self);
        }
        match serde_json::from_slice::<ApiError>(&self.body) {
            Ok(e) => Err(ClientError::Api(e)),
            Err(_) => Err(ClientError::Decode(format!(
                "status {} with body {:?}",
                self.status,
                String::from_utf8_lossy(&self.body)
            ))),
        }
    }
}

pub struct Client {
    base: String,
    agent: ureq::Agent,
    requests: AtomicU64,
}

impl Client {
    pub fn new(base_url: &str) -> Self {
        let config = ureq::Agent::config_builder().http_status_as_error(false).build();
        Client {
            base: format!("{}/v1", base_url.trim_end_matches('/')),
            agent: ureq::Agent::new_with_config(config),
            requests: AtomicU64::new(0),
        }
    }

    /// Requests sent so far, successful or not.
    pub fn request_count(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    /// Sends one request. `path` is relative to `/v1` and may carry a query.
    pub fn raw(
        &self,
        method: &str,
        path: &str,
        headers: &[(&str, &str)],
        body: Option<(&str, &[u8])>,
    ) -> Result<RawResponse, ClientError> {
        self.requests.fetch_add(1, Ordering::Relaxed);
        let url = format!("{}{path}", self.base);
        let result = match method {
            "GET" => {
                let mut req = self.agent.get(&url);
                for (k, v) in headers {
                    req = req.header(*k, *v);
                }
                req.call()
            }
            "POST" | "PATCH" | "PUT" | "DELETE" => {
                let mut req = match method {
                    "POST" => self.agent.post(&url),
                    "PATCH" => self.agent.patch(&url),
                    "PUT" => self.agent.put(&url),
                    _ => self.agent.delete(&url).force_send_body(),
                };
                for (k, v) in headers {
                    req = req.header(*k, *v);
                }
                match body {
                    Some((content_type, bytes)) => req.content_type(content_type).send(bytes),
                    None => req.send_empty(),
                }
            }
            other => return Err(ClientError::Unreachable(format!("unsupported method {other}"))),
        };
        let mut response = result.map_err(|e| ClientError::Unreachable(e.to_string()))?;
        let status = response.status().as_u16();
        let content_type = response
            .headers()
            .get("content-type")
            .and_then(|v| v.to_str().ok())
            .map(str::to_owned);
        let body = response
            .body_mut()
            .with_config()
            .limit(u64::MAX)
            .read_to_vec()
            .map_err(|e| ClientError::Unreachable(e.to_string()))?;
        Ok(RawResponse { status, content_type, body })
    }

    fn get<T: DeserializeOwned>(&self, path: &str, headers: &[(&str, &str)]) -> Result<T, ClientError> {
        self.raw("GET", path, headers, None)?.into_result()?.json()
    }

    fn send<B: Serialize, T: DeserializeOwned>(
        &self,
        method: &str,
        path: &str,
        headers: &[(&str, &str)],
        body: &B,
    ) -> Result<T, ClientError> {
        let bytes = serde_json::to_vec(body).expect("request bodies serialize");
        self.raw(method, path, headers, Some(("application/json", &bytes)))?.into_result()?.json()
    }

    pub fn create_campaign(&self, draft: &CampaignDraft) -> Result<Campaign, ClientError> {
        self.send("POST", "/campaigns", &[], draft)
    }

    pub fn campaign(&self, id: &CampaignId) -> Result<Campaign, ClientError> {
        self.get(&format!("/campaigns/{id}"), &[])
    }

    pub fn add_region(&self, id: &CampaignId, draft: &RegionDraft) -> Result<Region, ClientError> {
        self.send("POST", &format!("/campaigns/{id}/regions"), &[], draft)
    }

    pub fn update_region(&self, id: &CampaignId, region: &RegionId, patch: &RegionPatch) -> Result<Region, ClientError> {
        self.send("PATCH", &format!("/campaigns/{id}/regions/{region}"), &[], patch)
    }

    pub fn set_status(&self, id: &CampaignId, status: Status) -> Result<Campaign, ClientError> {
        self.send("POST", &format!("/campaigns/{id}/status"), &[], &StatusBody { status })
    }

    pub fn register_sensor_plugin(&self, spec: &SensorPluginSpec) -> Result<SensorPluginSpec, ClientError> {
        self.send("POST", "/plugins/sensors", &[], spec)
    }

    pub fn sensor_plugins(&self, public_only: bool) -> Result<Vec<SensorPluginSpec>, ClientError> {
        self.get(&format!("/plugins/sensors?public={public_only}"), &[])
    }

    pub fn attach_experiment_plugin(
        &self,
        id: &CampaignId,
        spec: &ExperimentPluginSpec,
        artifact: &[u8],
    ) -> Result<Campaign, ClientError> {
        let sensors = spec.required_sensors.iter().map(PluginId::as_str).collect::<Vec<_>>().join(",");
        let headers = [
            (PLUGIN_ID_HEADER, spec.id.as_str()),
            (PLUGIN_VERSION_HEADER, spec.version.as_str()),
            (PLUGIN_CHECKSUM_HEADER, spec.checksum.as_str()),
            (PLUGIN_SENSORS_HEADER, sensors.as_str()),
        ];
        self.raw(
            "POST",
            &format!("/campaigns/{id}/experiment-plugin"),
            &headers,
            Some(("application/octet-stream", artifact)),
        )?
        .into_result()?
        .json()
    }

    pub fn enable_sensors(&self, volunteer: &str, sensors: &[PluginId]) -> Result<VolunteerView, ClientError> {
        self.send("POST", "/volunteers/sensors", &[(VOLUNTEER_HEADER, volunteer)], &SensorsBody {
            sensors: sensors.to_vec(),
        })
    }

    pub fn set_power(&self, volunteer: &str, on: bool) -> Result<VolunteerView, ClientError> {
        self.send("POST", "/volunteers/power", &[(VOLUNTEER_HEADER, volunteer)], &PowerBody { on })
    }

    pub fn join(&self, volunteer: &str, id: &CampaignId) -> Result<JoinOutcome, ClientError> {
        self.raw("POST", &format!("/campaigns/{id}/join"), &[(VOLUNTEER_HEADER, volunteer)], None)?
            .into_result()?
            .json()
    }

    pub fn volunteer_stats(&self, volunteer: &str) -> Result<VolunteerStats, ClientError> {
        self.get("/volunteers/stats", &[(VOLUNTEER_HEADER, volunteer)])
    }

    /// Submits a batch. A fully rejected batch is still reported as an
    /// outcome rather than an error.
    pub fn ingest(&self, id: &CampaignId, volunteer: &str, readings: &[Reading]) -> Result<IngestOutcome, ClientError> {
        let body = serde_json::to_vec(&MeasurementBatch { readings: readings.to_vec() }).expect("batch serializes");
        let raw = self.raw(
            "POST",
            &format!("/campaigns/{id}/measurements"),
            &[(VOLUNTEER_HEADER, volunteer)],
            Some(("application/json", &body)),
        )?;
        match raw.into_result() {
            Ok(ok) => ok.json(),
            Err(ClientError::Api(ApiError { details: Some(details), .. })) if details.get("rejected").is_some() => {
                serde_json::from_value(details).map_err(|e| ClientError::Decode(e.to_string()))
            }
            Err(e) => Err(e),
        }
    }

    pub fn completeness(&self, id: &CampaignId) -> Result<CompletenessReport, ClientError> {
        self.get(&format!("/campaigns/{id}/completeness"), &[])
    }

    pub fn heatmap(&self, id: &CampaignId, cell_deg: f64) -> Result<Heatmap, ClientError> {
        self.get(&format!("/campaigns/{id}/heatmap?cell_deg={cell_deg}"), &[])
    }

    pub fn points(&self, id: &CampaignId) -> Result<Vec<PointRecord>, ClientError> {
        self.get(&format!("/campaigns/{id}/points"), &[])
    }

    /// Stats over `ids`, or over every campaign when `ids` is empty.
    pub fn stats(&self, ids: &[CampaignId]) -> Result<CampaignStats, ClientError> {
        if ids.is_empty() {
            return self.get("/stats", &[]);
        }
        let list = ids.iter().map(CampaignId::as_str).collect::<Vec<_>>().join(",");
        self.get(&format!("/stats?campaigns={list}"), &[])
    }

    pub fn recommendations(
        &self,
        id: &CampaignId,
        lon: f64,
        lat: f64,
        k: usize,
        at: Option<DateTime<Utc>>,
    ) -> Result<Vec<Recommendation>, ClientError> {
        let mut path = format!("/campaigns/{id}/recommendations?lon={lon}&lat={lat}&k={k}");
        if let Some(at) = at {
            path.push_str(&format!("&at={}", format_instant(&at)));
        }
        self.get(&path, &[])
    }

    pub fn export(&self, id: &CampaignId, format: ExportFormat) -> Result<Vec<u8>, ClientError> {
        let name = match format {
            ExportFormat::Json => "json",
            ExportFormat::Csv => "csv",
        };
        Ok(self.raw("GET", &format!("/campaigns/{id}/export?format={name}"), &[], None)?.into_result()?.body)
    }
}
