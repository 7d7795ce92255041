//! The service a simulation drives: an in-process store or a remote API.

use campaignd_api::{ApiError, Client, ClientError};
use campaignd_core::campaign::{ExperimentPluginSpec, PluginId, RegionDraft, RegionId, RegionPatch, SensorPluginSpec, Status};
use campaignd_core::coverage::{CampaignStats, CompletenessReport};
use campaignd_core::store::{IngestOutcome, VolunteerStats};
use campaignd_core::{CampaignDraft, CampaignId, Store, StoreError};
use chrono::{DateTime, Utc};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TargetError {
    #[error("service unreachable: {0}")]
    Unreachable(String),
    #[error("service refused request: {code}: {message}")]
    Refused { code: String, message: String },
}

impl TargetError {
    pub fn code(&self) -> &str {
        match self {
            TargetError::Unreachable(_) => "SERVICE_UNREACHABLE",
            TargetError::Refused { code, .. } => code,
        }
    }
}

impl From<StoreError> for TargetError {
    fn from(e: StoreError) -> Self {
        TargetError::Refused { code: e.code().to_owned(), message: e.to_string() }
    }
}

impl From<ClientError> for TargetError {
    fn from(e: ClientError) -> Self {
        match e {
            ClientError::Api(ApiError { code, message, .. }) => TargetError::Refused { code, message },
            other => TargetError::Unreachable(other.to_string()),
        }
    }
}

pub trait Target {
    fn now(&self) -> DateTime<Utc>;
    fn register_sensor_plugin(&self, spec: &SensorPluginSpec) -> Result<(), TargetError>;
    fn create_campaign(&self, draft: &CampaignDraft) -> Result<CampaignId, TargetError>;
    fn add_region(&self, id: &CampaignId, draft: &RegionDraft) -> Result<(), TargetError>;
    fn update_region(&self, id: &CampaignId, region: &RegionId, patch: &RegionPatch) -> Result<(), TargetError>;
    fn attach_experiment_plugin(&self, id: &CampaignId, spec: &ExperimentPluginSpec, artifact: &[u8]) -> Result<(), TargetError>;
    fn set_status(&self, id: &CampaignId, status: Status) -> Result<(), TargetError>;
    fn enable_sensors(&self, volunteer: &str, sensors: &[PluginId]) -> Result<(), TargetError>;
    /// Joins and returns the sensors still missing.
    fn join(&self, volunteer: &str, id: &CampaignId) -> Result<Vec<PluginId>, TargetError>;
    fn set_power(&self, volunteer: &str, on: bool) -> Result<(), TargetError>;
    fn ingest(&self, id: &CampaignId, volunteer: &str, readings: &[campaignd_core::Reading]) -> Result<IngestOutcome, TargetError>;
    fn stats(&self, ids: &[CampaignId]) -> Result<CampaignStats, TargetError>;
    fn completeness(&self, id: &CampaignId) -> Result<CompletenessReport, TargetError>;
    fn volunteer_stats(&self, volunteer: &str) -> Result<VolunteerStats, TargetError>;
    /// Requests sent over a network, if any.
    fn request_count(&self) -> u64 {
        0
    }
}

impl Target for Store {
    fn now(&self) -> DateTime<Utc> {
        Store::now(self)
    }

    fn register_sensor_plugin(&self, spec: &SensorPluginSpec) -> Result<(), TargetError> {
        Store::register_sensor_plugin(self, spec.clone())?;
        Ok(())
    }

    fn create_campaign(&self, draft: &CampaignDraft) -> Result<CampaignId, TargetError> {
        Ok(Store::create_campaign(self, draft.clone())?.id)
    }

    fn add_region(&self, id: &CampaignId, draft: &RegionDraft) -> Result<(), TargetError> {
        Store::add_region(self, id, draft)?;
        Ok(())
    }

    fn update_region(&self, id: &CampaignId, region: &RegionId, patch: &RegionPatch) -> Result<(), TargetError> {
        Store::update_region(self, id, region, patch)?;
        Ok(())
    }

    fn attach_experiment_plugin(&self, id: &CampaignId, spec: &ExperimentPluginSpec, artifact: &[u8]) -> Result<(), TargetError> {
        Store::attach_experiment_plugin(self, id, spec.clone(), artifact)?;
        Ok(())
    }

    fn set_status(&self, id: &CampaignId, status: Status) -> Result<(), TargetError> {
        Store::set_status(self, id, status)?;
        Ok(())
    }

    fn enable_sensors(&self, volunteer: &str, sensors: &[PluginId]) -> Result<(), TargetError> {
        Store::enable_sensors(self, volunteer, sensors.to_vec())?;
        Ok(())
    }

    fn join(&self, volunteer: &str, id: &CampaignId) -> Result<Vec<PluginId>, TargetError> {
        Ok(Store::join_experiment(self, volunteer, id)?.missing_sensors)
    }

    fn set_power(&self, volunteer: &str, on: bool) -> Result<(), TargetError> {
        Store::set_power(self, volunteer, on)?;
        Ok(())
    }

    fn ingest(&self, id: &CampaignId, volunteer: &str, readings: &[campaignd_core::Reading]) -> Result<IngestOutcome, TargetError> {
        Ok(Store::ingest(self, id, volunteer, readings)?)
    }

    fn stats(&self, ids: &[CampaignId]) -> Result<CampaignStats, TargetError> {
        Ok(Store::stats(self, ids)?)
    }

    fn completeness(&self, id: &CampaignId) -> Result<CompletenessReport, TargetError> {
        Ok(Store::completeness(self, id)?)
    }

    fn volunteer_stats(&self, volunteer: &str) -> Result<VolunteerStats, TargetError> {
        Ok(Store::volunteer_stats(self, volunteer)?)
    }
}

impl Target for Client {
    /// Remote services are assumed to run on wall-clock time.
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }

    fn register_sensor_plugin(&self, spec: &SensorPluginSpec) -> Result<(), TargetError> {
        Client::register_sensor_plugin(self, spec)?;
        Ok(())
    }

    fn create_campaign(&self, draft: &CampaignDraft) -> Result<CampaignId, TargetError> {
        Ok(Client::create_campaign(self, draft)?.id)
    }

    fn add_region(&self, id: &CampaignId, draft: &RegionDraft) -> Result<(), TargetError> {
        Client::add_region(self, id, draft)?;
        Ok(())
    }

    fn update_region(&self, id: &CampaignId, region: &RegionId, patch: &RegionPatch) -> Result<(), TargetError> {
        Client::update_region(self, id, region, patch)?;
        Ok(())
    }

    fn attach_experiment_plugin(&self, id: &CampaignId, spec: &ExperimentPluginSpec, artifact: &[u8]) -> Result<(), TargetError> {
        Client::attach_experiment_plugin(self, id, spec, artifact)?;
        Ok(())
    }

    fn set_status(&self, id: &CampaignId, status: Status) -> Result<(), TargetError> {
        Client::set_status(self, id, status)?;
        Ok(())
    }

    fn enable_sensors(&self, volunteer: &str, sensors: &[PluginId]) -> Result<(), TargetError> {
        Client::enable_sensors(self, volunteer, sensors)?;
        Ok(())
    }

    fn join(&self, volunteer: &str, id: &CampaignId) -> Result<Vec<PluginId>, TargetError> {
        Ok(Client::join(self, volunteer, id)?.missing_sensors)
    }

    fn set_power(&self, volunteer: &str, on: bool) -> Result<(), TargetError> {
        Client::set_power(self, volunteer, on)?;
        Ok(())
    }

    fn ingest(&self, id: &CampaignId, volunteer: &str, readings: &[campaignd_core::Reading]) -> Result<IngestOutcome, TargetError> {
        Ok(Client::ingest(self, id, volunteer, readings)?)
    }

    fn stats(&self, ids: &[CampaignId]) -> Result<CampaignStats, TargetError> {
        Ok(Client::stats(self, ids)?)
    }

    fn completeness(&self, id: &CampaignId) -> Result<CompletenessReport, TargetError> {
        Ok(Client::completeness(self, id)?)
    }

    fn volunteer_stats(&self, volunteer: &str) -> Result<VolunteerStats, TargetError> {
        Ok(Client::volunteer_stats(self, volunteer)?)
    }

    fn request_count(&self) -> u64 {
        Client::request_count(self)
    }
}
