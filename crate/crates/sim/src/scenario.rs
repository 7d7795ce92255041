//! Scenario files: the campaigns to create, the volunteer fleet and the
//! schedule of power toggles and region redefinitions.

use std::collections::BTreeSet;
use std::path::Path;

use campaignd_core::campaign::{
    artifact_checksum, CampaignError, ExperimentPluginSpec, PluginId, RegionDraft, RegionId, RegionPatch,
    SensorPluginSpec, WindowSpec,
};
use campaignd_core::geo::{BoundingBox, GeoPoint};
use campaignd_core::time::serde_instant;
use campaignd_core::{Campaign, CampaignDraft, CampaignId};
use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reference scenario: three cities, thirteen regions, fourteen volunteers,
/// five days starting Monday 2016-06-06.
pub const REFERENCE_SCENARIO: &str = include_str!("../scenarios/reference.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    #[serde(with = "serde_instant")]
    pub start: DateTime<Utc>,
    pub duration_days: u32,
    pub tick_minutes: u32,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub sensor_plugins: Vec<SensorPluginSpec>,
    #[serde(default)]
    pub campaigns: Vec<CampaignSpec>,
    #[serde(default)]
    pub volunteers: Vec<VolunteerSpec>,
    #[serde(default)]
    pub redefinitions: Vec<Redefinition>,
}

fn default_batch_size() -> usize {
    25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSpec {
    pub definition: CampaignDraft,
    /// Area volunteers of this campaign roam in.
    pub extent: Extent,
    pub regions: Vec<RegionDraft>,
    pub experiment_plugin: ExperimentSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Extent {
    pub min: GeoPoint,
    pub max: GeoPoint,
}

impl Extent {
    pub fn contains(&self, p: &GeoPoint) -> bool {
        BoundingBox { min: self.min, max: self.max }.contains(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub id: PluginId,
    pub version: String,
    #[serde(default)]
    pub required_sensors: Vec<PluginId>,
    /// Artifact contents uploaded as the plugin body.
    pub artifact: String,
    /// Declared checksum; computed from the artifact when absent.
    #[serde(default)]
    pub checksum: Option<String>,
}

impl ExperimentSpec {
    pub fn plugin_spec(&self) -> ExperimentPluginSpec {
        ExperimentPluginSpec {
            id: self.id.clone(),
            version: self.version.clone(),
            checksum: self.checksum.clone().unwrap_or_else(|| artifact_checksum(self.artifact.as_bytes())),
            required_sensors: self.required_sensors.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolunteerSpec {
    pub id: String,
    /// Index into `campaigns`.
    pub campaign: usize,
    pub home: GeoPoint,
    pub readings_per_hour: f64,
    #[serde(default = "default_speed")]
    pub speed_deg_per_hour: f64,
    /// Campaign-local periods in which the volunteer records.
    pub activity: Vec<WindowSpec>,
    /// Sensor the readings are attributed to; defaults to the first sensor
    /// the experiment requires.
    #[serde(default)]
    pub sensor: Option<PluginId>,
    /// Sensors the volunteer enables; defaults to everything the campaign needs.
    #[serde(default)]
    pub sensors: Option<Vec<PluginId>>,
    #[serde(default)]
    pub power_off: Vec<Interval>,
}

fn default_speed() -> f64 {
    0.02
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interval {
    #[serde(with = "serde_instant")]
    pub start: DateTime<Utc>,
    #[serde(with = "serde_instant")]
    pub end: DateTime<Utc>,
}

impl Interval {
    pub fn contains(&self, at: &DateTime<Utc>) -> bool {
        self.start <= *at && *at < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Redefinition {
    #[serde(with = "serde_instant")]
    pub at: DateTime<Utc>,
    pub campaign: usize,
    pub region: RegionId,
    pub patch: RegionPatch,
}

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(String),
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("invalid scenario at {pointer}: {code}: {message}")]
    Invalid { pointer: String, code: String, message: String },
}

impl ScenarioError {
    fn invalid(pointer: impl Into<String>, code: &str, message: impl Into<String>) -> Self {
        ScenarioError::Invalid { pointer: pointer.into(), code: code.to_owned(), message: message.into() }
    }

    fn campaign(pointer: impl Into<String>, e: &CampaignError) -> Self {
        ScenarioError::invalid(pointer, e.code(), e.to_string())
    }

    pub fn code(&self) -> &str {
        match self {
            ScenarioError::Io(_) => "IO",
            ScenarioError::Parse(_) => "PARSE_ERROR",
            ScenarioError::Invalid { code, .. } => code,
        }
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let scenario: Scenario = serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    scenario.validate()?;
    Ok(scenario)
}

pub fn validate_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| ScenarioError::Io(format!("{}: {e}", path.as_ref().display())))?;
    parse_scenario(&text)
}

pub fn reference_scenario() -> Scenario {
    parse_scenario(REFERENCE_SCENARIO).expect("shipped reference scenario is valid")
}

impl Scenario {
    pub fn end(&self) -> DateTime<Utc> {
        self.start + Duration::days(i64::from(self.duration_days))
    }

    pub fn tick_count(&self) -> u64 {
        u64::from(self.duration_days) * 1440 / u64::from(self.tick_minutes)
    }

    /// Campaign `i` as the campaign module would build it, with regions.
    pub fn build_campaign(&self, i: usize) -> Result<Campaign, ScenarioError> {
        let spec = &self.campaigns[i];
        let base = format!("/campaigns/{i}");
        let mut campaign = Campaign::create(CampaignId(format!("scenario-{i}")), spec.definition.clone())
            .map_err(|e| ScenarioError::campaign(format!("{base}/definition{}", draft_pointer(&e)), &e))?;
        for (j, region) in spec.regions.iter().enumerate() {
            let pointer = format!("{base}/regions/{j}");
            if region.id.is_none() {
                return Err(ScenarioError::invalid(format!("{pointer}/id"), "MISSING_REGION_ID", "regions need explicit ids"));
            }
            campaign.add_region(region).map_err(|e| {
                ScenarioError::campaign(format!("{pointer}{}", e.region_pointer().unwrap_or_default()), &e)
            })?;
        }
        Ok(campaign)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.tick_minutes == 0 || 1440 % self.tick_minutes != 0 {
            return Err(ScenarioError::invalid(
                "/tick_minutes",
                "INVALID_TICK",
                format!("tick_minutes {} does not divide 1440", self.tick_minutes),
            ));
        }
        if self.duration_days == 0 {
            return Err(ScenarioError::invalid("/duration_days", "INVALID_DURATION", "duration_days must be positive"));
        }
        if self.batch_size == 0 {
            return Err(ScenarioError::invalid("/batch_size", "INVALID_BATCH_SIZE", "batch_size must be positive"));
        }
        let mut sensors = BTreeSet::new();
        for (i, s) in self.sensor_plugins.iter().enumerate() {
            if s.id.as_str().is_empty() {
                return Err(ScenarioError::invalid(format!("/sensor_plugins/{i}/id"), "INVALID_PLUGIN_SPEC", "empty id"));
            }
            if !sensors.insert(s.id.clone()) {
                return Err(ScenarioError::invalid(
                    format!("/sensor_plugins/{i}/id"),
                    "DUPLICATE_PLUGIN_ID",
                    format!("sensor plugin {} listed twice", s.id),
                ));
            }
        }
        let mut campaigns = Vec::with_capacity(self.campaigns.len());
        for (i, spec) in self.campaigns.iter().enumerate() {
            let base = format!("/campaigns/{i}");
            let campaign = self.build_campaign(i)?;
            let e = &spec.extent;
            if !(e.min.is_valid() && e.max.is_valid() && e.min.lon < e.max.lon && e.min.lat < e.max.lat) {
                return Err(ScenarioError::invalid(format!("{base}/extent"), "INVALID_EXTENT", "extent must be a valid, non-empty box"));
            }
            for (k, id) in spec.definition.required_sensor_plugins.iter().enumerate() {
                if !sensors.contains(id) {
                    let err = CampaignError::MissingSensorPlugin(id.clone());
                    return Err(ScenarioError::campaign(format!("{base}/definition/required_sensor_plugins/{k}"), &err));
                }
            }
            let plugin = &spec.experiment_plugin;
            let mut check = campaign.clone();
            check
                .attach_experiment_plugin(plugin.plugin_spec(), plugin.artifact.as_bytes(), |p| sensors.contains(p))
                .map_err(|err| {
                    let field = match &err {
                        CampaignError::MissingSensorPlugin(_) => "/required_sensors",
                        CampaignError::ChecksumMismatch => "/checksum",
                        _ => "",
                    };
                    ScenarioError::campaign(format!("{base}/experiment_plugin{field}"), &err)
                })?;
            campaigns.push(check);
        }
        let mut ids = BTreeSet::new();
        for (i, v) in self.volunteers.iter().enumerate() {
            let base = format!("/volunteers/{i}");
            if v.id.len() < 6 {
                return Err(ScenarioError::invalid(format!("{base}/id"), "INVALID_VOLUNTEER", "volunteer ids need at least 6 characters"));
            }
            if !ids.insert(v.id.as_str()) {
                return Err(ScenarioError::invalid(format!("{base}/id"), "DUPLICATE_VOLUNTEER", format!("volunteer {} listed twice", v.id)));
            }
            let Some(campaign) = self.campaigns.get(v.campaign) else {
                return Err(ScenarioError::invalid(format!("{base}/campaign"), "UNKNOWN_CAMPAIGN", "campaign index out of range"));
            };
            if !campaign.extent.contains(&v.home) {
                return Err(ScenarioError::invalid(format!("{base}/home"), "INVALID_HOME", "home lies outside the campaign extent"));
            }
            if !(v.readings_per_hour.is_finite() && v.readings_per_hour >= 0.0) {
                return Err(ScenarioError::invalid(format!("{base}/readings_per_hour"), "INVALID_RATE", "rate must be finite and non-negative"));
            }
            if !(v.speed_deg_per_hour.is_finite() && v.speed_deg_per_hour >= 0.0) {
                return Err(ScenarioError::invalid(format!("{base}/speed_deg_per_hour"), "INVALID_SPEED", "speed must be finite and non-negative"));
            }
            for (k, w) in v.activity.iter().enumerate() {
                w.build(k).map_err(|e| ScenarioError::campaign(format!("{base}/activity/{k}"), &e))?;
            }
            if let Some(enabled) = &v.sensors {
                for (k, s) in enabled.iter().enumerate() {
                    if !sensors.contains(s) {
                        let err = CampaignError::MissingSensorPlugin(s.clone());
                        return Err(ScenarioError::campaign(format!("{base}/sensors/{k}"), &err));
                    }
                }
            }
            if v.reading_sensor(campaign).is_none() {
                return Err(ScenarioError::invalid(format!("{base}/sensor"), "MISSING_SENSOR", "no sensor to attribute readings to"));
            }
            for (k, p) in v.power_off.iter().enumerate() {
                if p.start >= p.end {
                    return Err(ScenarioError::invalid(format!("{base}/power_off/{k}"), "INVALID_INTERVAL", "start must precede end"));
                }
                if k > 0 && p.start < v.power_off[k - 1].end {
                    return Err(ScenarioError::invalid(
                        format!("{base}/power_off/{k}"),
                        "INVALID_INTERVAL",
                        "power-off intervals must be sorted and disjoint",
                    ));
                }
            }
        }
        for (i, r) in self.redefinitions.iter().enumerate() {
            let base = format!("/redefinitions/{i}");
            let Some(campaign) = campaigns.get_mut(r.campaign) else {
                return Err(ScenarioError::invalid(format!("{base}/campaign"), "UNKNOWN_CAMPAIGN", "campaign index out of range"));
            };
            campaign.update_region(&r.region, &r.patch).map_err(|e| {
                let at = match &e {
                    CampaignError::UnknownRegion(_) => "/region".to_owned(),
                    other => format!("/patch{}", other.region_pointer().unwrap_or_default()),
                };
                ScenarioError::campaign(format!("{base}{at}"), &e)
            })?;
        }
        Ok(())
    }
}

impl VolunteerSpec {
    pub fn reading_sensor(&self, campaign: &CampaignSpec) -> Option<PluginId> {
        self.sensor.clone().or_else(|| campaign.experiment_plugin.required_sensors.first().cloned())
    }

    /// Sensors to enable before joining.
    pub fn enabled_sensors(&self, campaign: &CampaignSpec) -> Vec<PluginId> {
        match &self.sensors {
            Some(s) => s.clone(),
            None => {
                let mut all: BTreeSet<PluginId> = campaign.definition.required_sensor_plugins.iter().cloned().collect();
                all.extend(campaign.experiment_plugin.required_sensors.iter().cloned());
                all.extend(self.reading_sensor(campaign));
                all.into_iter().collect()
            }
        }
    }
}

fn draft_pointer(e: &CampaignError) -> String {
    match e {
        CampaignError::EmptyRequiredField(field) => format!("/{field}"),
        CampaignError::InvalidDateRange => "/date_range".into(),
        CampaignError::InvalidTzOffset(_) => "/tz_offset_minutes".into(),
        _ => String::new(),
    }
}
