//! Campaign model: metadata, regions with their windows and quotas, plugin
//! metadata, and the lifecycle state machine.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Datelike, NaiveDateTime, Timelike, Utc, Weekday};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geo::{GeoJsonError, GeoJsonPolygon, GeometryError, Polygon, PolygonParseError};
use crate::time::{serde_instant, to_local};

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                $name(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_owned())
            }
        }
    };
}

id_type!(CampaignId);
id_type!(RegionId);
id_type!(WindowId);
id_type!(
    /// Identifier of a sensor or experiment plugin.
    PluginId
);

/// Largest accepted offset from UTC, in minutes (UTC+14:00).
pub const MAX_TZ_OFFSET_MINUTES: i32 = 14 * 60;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CampaignError {
    #[error("required field `{0}` is empty")]
    EmptyRequiredField(&'static str),
    #[error("date range start must precede its end")]
    InvalidDateRange,
    #[error("timezone offset {0} minutes is out of range")]
    InvalidTzOffset(i32),
    #[error("invalid quota: {0}")]
    InvalidQuota(&'static str),
    #[error("invalid time window {index}: {reason}")]
    InvalidWindow { index: usize, reason: &'static str },
    #[error("region needs at least one time window")]
    NoWindows,
    #[error("priority must be finite and positive")]
    InvalidPriority,
    #[error("region id {0} already exists in this campaign")]
    DuplicateRegionId(RegionId),
    #[error("window id {0} already exists in this region")]
    DuplicateWindowId(WindowId),
    #[error("unknown region {0}")]
    UnknownRegion(RegionId),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    GeoJson(#[from] GeoJsonError),
    #[error("artifact checksum does not match the declared checksum")]
    ChecksumMismatch,
    #[error("sensor plugin {0} is not registered")]
    MissingSensorPlugin(PluginId),
    #[error("campaign has no regions")]
    NoRegions,
    #[error("illegal status transition {from} -> {to}")]
    IllegalTransition { from: Status, to: Status },
    #[error("campaign is completed")]
    CampaignCompleted,
    #[error("invalid plugin spec: {0}")]
    InvalidPluginSpec(&'static str),
    #[error("plugin id {0} is already registered")]
    DuplicatePluginId(PluginId),
}

impl CampaignError {
    pub fn code(&self) -> &'static str {
        match self {
            CampaignError::EmptyRequiredField(_) => "EMPTY_REQUIRED_FIELD",
            CampaignError::InvalidDateRange => "INVALID_DATE_RANGE",
            CampaignError::InvalidTzOffset(_) => "INVALID_TZ_OFFSET",
            CampaignError::InvalidQuota(_) => "INVALID_QUOTA",
            CampaignError::InvalidWindow { .. } => "INVALID_WINDOW",
            CampaignError::NoWindows => "NO_WINDOWS",
            CampaignError::InvalidPriority => "INVALID_PRIORITY",
            CampaignError::DuplicateRegionId(_) => "DUPLICATE_REGION_ID",
            CampaignError::DuplicateWindowId(_) => "DUPLICATE_WINDOW_ID",
            CampaignError::UnknownRegion(_) => "UNKNOWN_REGION",
            CampaignError::Geometry(e) => e.code(),
            CampaignError::GeoJson(_) => "INVALID_GEOJSON",
            CampaignError::ChecksumMismatch => "CHECKSUM_MISMATCH",
            CampaignError::MissingSensorPlugin(_) => "MISSING_SENSOR_PLUGIN",
            CampaignError::NoRegions => "NO_REGIONS",
            CampaignError::IllegalTransition { .. } => "ILLEGAL_TRANSITION",
            CampaignError::CampaignCompleted => "CAMPAIGN_COMPLETED",
            CampaignError::InvalidPluginSpec(_) => "INVALID_PLUGIN_SPEC",
            CampaignError::DuplicatePluginId(_) => "DUPLICATE_PLUGIN_ID",
        }
    }

    /// JSON-pointer suffix (relative to a region document) of the field that
    /// caused a region validation error.
    pub fn region_pointer(&self) -> Option<String> {
        match self {
            CampaignError::Geometry(_) | CampaignError::GeoJson(_) => Some("/polygon".into()),
            CampaignError::InvalidWindow { index, .. } => Some(format!("/windows/{index}")),
            CampaignError::NoWindows | CampaignError::DuplicateWindowId(_) => Some("/windows".into()),
            CampaignError::InvalidQuota(_) => Some("/quota".into()),
            CampaignError::InvalidPriority => Some("/priority".into()),
            CampaignError::DuplicateRegionId(_) => Some("/id".into()),
            _ => None,
        }
    }
}

impl From<PolygonParseError> for CampaignError {
    fn from(e: PolygonParseError) -> Self {
        match e {
            PolygonParseError::GeoJson(e) => CampaignError::GeoJson(e),
            PolygonParseError::Geometry(e) => CampaignError::Geometry(e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Draft,
    Validated,
    Running,
    Paused,
    Completed,
}

impl Status {
    /// Transitions reachable through an explicit status change. Entering
    /// `validated` only happens by attaching an experiment plugin.
    pub fn can_transition_to(self, to: Status) -> bool {
        use Status::*;
        matches!(
            (self, to),
            (Validated, Running) | (Running, Paused) | (Paused, Running) | (Running, Completed) | (Paused, Completed)
        )
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Status::Draft => "draft",
            Status::Validated => "validated",
            Status::Running => "running",
            Status::Paused => "paused",
            Status::Completed => "completed",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Day {
    Mon,
    Tue,
    Wed,
    Thu,
    Fri,
    Sat,
    Sun,
}

impl Day {
    pub const ALL: [Day; 7] = [Day::Mon, Day::Tue, Day::Wed, Day::Thu, Day::Fri, Day::Sat, Day::Sun];

    pub fn from_weekday(w: Weekday) -> Day {
        match w {
            Weekday::Mon => Day::Mon,
            Weekday::Tue => Day::Tue,
            Weekday::Wed => Day::Wed,
            Weekday::Thu => Day::Thu,
            Weekday::Fri => Day::Fri,
            Weekday::Sat => Day::Sat,
            Weekday::Sun => Day::Sun,
        }
    }
}

/// A recurring daily interval `[start, end)` in campaign-local minutes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "WindowSpec", into = "WindowSpec")]
pub struct TimeWindow {
    pub id: WindowId,
    pub start_minute_of_day: u16,
    pub end_minute_of_day: u16,
    pub days_active: BTreeSet<Day>,
}

impl TimeWindow {
    pub fn contains_local(&self, local: &NaiveDateTime) -> bool {
        let minute = (local.hour() * 60 + local.minute()) as u16;
        minute >= self.start_minute_of_day
            && minute < self.end_minute_of_day
            && self.days_active.contains(&Day::from_weekday(local.weekday()))
    }
}

/// Wire form of a window: `{"id": .., "start": "HH:MM", "end": "HH:MM", "days": [..]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<WindowId>,
    pub start: String,
    pub end: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub days: Option<Vec<Day>>,
}

fn parse_hhmm(s: &str) -> Option<u16> {
    let (h, m) = s.split_once(':')?;
    if h.len() != 2 || m.len() != 2 {
        return None;
    }
    let h: u16 = h.parse().ok()?;
    let m: u16 = m.parse().ok()?;
    if m >= 60 || h > 24 || (h == 24 && m != 0) {
        return None;
    }
    Some(h * 60 + m)
}

fn format_hhmm(minute: u16) -> String {
    format!("{:02}:{:02}", minute / 60, minute % 60)
}

impl WindowSpec {
    /// Validates into a window. `index` is the position used in errors and
    /// for the generated id when none is given.
    pub fn build(&self, index: usize) -> Result<TimeWindow, CampaignError> {
        let bad = |reason| CampaignError::InvalidWindow { index, reason };
        let start = parse_hhmm(&self.start).ok_or(bad("start is not HH:MM"))?;
        let end = parse_hhmm(&self.end).ok_or(bad("end is not HH:MM"))?;
        if start >= 1440 {
            return Err(bad("start must be before 24:00"));
        }
        if start >= end {
            return Err(bad("start must precede end"));
        }
        let days: BTreeSet<Day> = match &self.days {
            Some(days) => days.iter().copied().collect(),
            None => Day::ALL.into_iter().collect(),
        };
        if days.is_empty() {
            return Err(bad("no active days"));
        }
        let id = self
            .id
            .clone()
            .unwrap_or_else(|| WindowId(format!("w{}", index + 1)));
        if id.0.is_empty() {
            return Err(bad("empty id"));
        }
        Ok(TimeWindow { id, start_minute_of_day: start, end_minute_of_day: end, days_active: days })
    }
}

impl TryFrom<WindowSpec> for TimeWindow {
    type Error = CampaignError;

    fn try_from(spec: WindowSpec) -> Result<Self, Self::Error> {
        spec.build(0)
    }
}

impl From<TimeWindow> for WindowSpec {
    fn from(w: TimeWindow) -> Self {
        WindowSpec {
            id: Some(w.id),
            start: format_hhmm(w.start_minute_of_day),
            end: format_hhmm(w.end_minute_of_day),
            days: Some(w.days_active.into_iter().collect()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quota {
    pub min_count: u64,
    #[serde(default)]
    pub max_count: Option<u64>,
}

impl Quota {
    pub fn validate(&self) -> Result<(), CampaignError> {
        if self.min_count < 1 {
            return Err(CampaignError::InvalidQuota("min_count must be at least 1"));
        }
        if matches!(self.max_count, Some(max) if max < self.min_count) {
            return Err(CampaignError::InvalidQuota("max_count must not be below min_count"));
        }
        Ok(())
    }

    pub fn is_saturated(&self, count: u64) -> bool {
        matches!(self.max_count, Some(max) if count >= max)
    }
}

fn default_priority() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: RegionId,
    pub label: String,
    pub polygon: Polygon,
    pub windows: Vec<TimeWindow>,
    pub quota: Quota,
    #[serde(default = "default_priority")]
    pub priority: f64,
}

impl Region {
    pub fn window(&self, id: &WindowId) -> Option<&TimeWindow> {
        self.windows.iter().find(|w| &w.id == id)
    }
}

/// Unvalidated region as submitted by an experimenter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionDraft {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<RegionId>,
    #[serde(default)]
    pub label: String,
    pub polygon: GeoJsonPolygon,
    pub windows: Vec<WindowSpec>,
    pub quota: Quota,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priority: Option<f64>,
}

impl RegionDraft {
    /// Validates every field; errors appear in document order.
    pub fn build(&self, id: RegionId) -> Result<Region, CampaignError> {
        let polygon = self.polygon.to_polygon()?;
        let windows = build_windows(&self.windows)?;
        self.quota.validate()?;
        let priority = self.priority.unwrap_or(1.0);
        validate_priority(priority)?;
        Ok(Region { id, label: self.label.clone(), polygon, windows, quota: self.quota, priority })
    }
}

fn build_windows(specs: &[WindowSpec]) -> Result<Vec<TimeWindow>, CampaignError> {
    if specs.is_empty() {
        return Err(CampaignError::NoWindows);
    }
    let windows = specs
        .iter()
        .enumerate()
        .map(|(i, w)| w.build(i))
        .collect::<Result<Vec<_>, _>>()?;
    let mut seen = BTreeSet::new();
    for w in &windows {
        if !seen.insert(&w.id) {
            return Err(CampaignError::DuplicateWindowId(w.id.clone()));
        }
    }
    Ok(windows)
}

fn validate_priority(priority: f64) -> Result<(), CampaignError> {
    if priority.is_finite() && priority > 0.0 {
        Ok(())
    } else {
        Err(CampaignError::InvalidPriority)
    }
}

/// Partial replacement of a region's constraints.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegionPatch {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polygon: Option<GeoJsonPolygon>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub windows: Option<Vec<WindowSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quota: Option<Quota>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priority: Option<f64>,
}

impl RegionPatch {
    pub fn apply_to(&self, region: &Region) -> Result<Region, CampaignError> {
        let mut next = region.clone();
        if let Some(label) = &self.label {
            next.label = label.clone();
        }
        if let Some(polygon) = &self.polygon {
            next.polygon = polygon.to_polygon()?;
        }
        if let Some(windows) = &self.windows {
            next.windows = build_windows(windows)?;
        }
        if let Some(quota) = self.quota {
            quota.validate()?;
            next.quota = quota;
        }
        if let Some(priority) = self.priority {
            validate_priority(priority)?;
            next.priority = priority;
        }
        Ok(next)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    #[serde(with = "serde_instant")]
    pub start: DateTime<Utc>,
    #[serde(with = "serde_instant")]
    pub end: DateTime<Utc>,
}

impl DateRange {
    /// Half-open `[start, end)` membership.
    pub fn contains(&self, at: &DateTime<Utc>) -> bool {
        *at >= self.start && *at < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorPluginSpec {
    pub id: PluginId,
    pub name: String,
    pub modality: String,
    #[serde(default)]
    pub public: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentPluginSpec {
    pub id: PluginId,
    pub version: String,
    pub checksum: String,
    #[serde(default)]
    pub required_sensors: Vec<PluginId>,
}

/// Lowercase hex SHA-256 of an uploaded artifact.
pub fn artifact_checksum(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Sensor plugins known to the service.
#[derive(Debug, Clone, Default)]
pub struct PluginRegistry {
    sensors: BTreeMap<PluginId, SensorPluginSpec>,
}

impl PluginRegistry {
    pub fn register(&mut self, spec: SensorPluginSpec) -> Result<PluginId, CampaignError> {
        if spec.id.0.is_empty() {
            return Err(CampaignError::InvalidPluginSpec("empty id"));
        }
        if self.sensors.contains_key(&spec.id) {
            return Err(CampaignError::DuplicatePluginId(spec.id));
        }
        let id = spec.id.clone();
        self.sensors.insert(id.clone(), spec);
        Ok(id)
    }

    pub fn contains(&self, id: &PluginId) -> bool {
        self.sensors.contains_key(id)
    }

    pub fn get(&self, id: &PluginId) -> Option<&SensorPluginSpec> {
        self.sensors.get(id)
    }

    pub fn list(&self, public_only: bool) -> Vec<SensorPluginSpec> {
        self.sensors
            .values()
            .filter(|s| !public_only || s.public)
            .cloned()
            .collect()
    }
}

/// Basic information supplied when a campaign is registered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignDraft {
    pub title: String,
    pub description: String,
    pub data_use: String,
    pub results_url: String,
    pub date_range: DateRange,
    #[serde(default)]
    pub tz_offset_minutes: i32,
    #[serde(default)]
    pub required_sensor_plugins: Vec<PluginId>,
}

impl CampaignDraft {
    pub fn validate(&self) -> Result<(), CampaignError> {
        for (name, value) in [
            ("title", &self.title),
            ("description", &self.description),
            ("data_use", &self.data_use),
            ("results_url", &self.results_url),
        ] {
            if value.trim().is_empty() {
                return Err(CampaignError::EmptyRequiredField(name));
            }
        }
        if self.date_range.start >= self.date_range.end {
            return Err(CampaignError::InvalidDateRange);
        }
        if self.tz_offset_minutes.abs() > MAX_TZ_OFFSET_MINUTES {
            return Err(CampaignError::InvalidTzOffset(self.tz_offset_minutes));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Campaign {
    pub id: CampaignId,
    pub title: String,
    pub description: String,
    pub data_use: String,
    pub results_url: String,
    pub date_range: DateRange,
    pub tz_offset_minutes: i32,
    pub required_sensor_plugins: Vec<PluginId>,
    pub experiment_plugin: Option<ExperimentPluginSpec>,
    pub status: Status,
    pub regions: Vec<Region>,
}

impl Campaign {
    /// Validates the basic information and returns a draft campaign.
    pub fn create(id: CampaignId, draft: CampaignDraft) -> Result<Campaign, CampaignError> {
        draft.validate()?;
        let mut required = Vec::new();
        for p in draft.required_sensor_plugins {
            if !required.contains(&p) {
                required.push(p);
            }
        }
        Ok(Campaign {
            id,
            title: draft.title,
            description: draft.description,
            data_use: draft.data_use,
            results_url: draft.results_url,
            date_range: draft.date_range,
            tz_offset_minutes: draft.tz_offset_minutes,
            required_sensor_plugins: required,
            experiment_plugin: None,
            status: Status::Draft,
            regions: Vec::new(),
        })
    }

    pub fn region(&self, id: &RegionId) -> Option<&Region> {
        self.regions.iter().find(|r| &r.id == id)
    }

    pub fn local_time(&self, at: &DateTime<Utc>) -> NaiveDateTime {
        to_local(at, self.tz_offset_minutes)
    }

    /// True iff `at` lies in the date range and in the window, evaluated on
    /// the campaign-local clock.
    pub fn window_matches(&self, window: &TimeWindow, at: &DateTime<Utc>) -> bool {
        self.date_range.contains(at) && window.contains_local(&self.local_time(at))
    }

    fn next_region_id(&self) -> RegionId {
        let mut n = self.regions.len() + 1;
        loop {
            let id = RegionId(format!("r{n}"));
            if self.region(&id).is_none() {
                return id;
            }
            n += 1;
        }
    }

    /// Validates the draft into a region without mutating the campaign.
    pub fn prepare_region(&self, draft: &RegionDraft) -> Result<Region, CampaignError> {
        if self.status == Status::Completed {
            return Err(CampaignError::CampaignCompleted);
        }
        let id = match &draft.id {
            Some(id) if id.0.is_empty() => return Err(CampaignError::EmptyRequiredField("id")),
            Some(id) if self.region(id).is_some() => return Err(CampaignError::DuplicateRegionId(id.clone())),
            Some(id) => id.clone(),
            None => self.next_region_id(),
        };
        draft.build(id)
    }

    pub fn add_region(&mut self, draft: &RegionDraft) -> Result<&Region, CampaignError> {
        let region = self.prepare_region(draft)?;
        self.regions.push(region);
        Ok(self.regions.last().expect("just pushed"))
    }

    /// Validates a patch into the replacement region without mutating.
    pub fn prepare_update(&self, region_id: &RegionId, patch: &RegionPatch) -> Result<Region, CampaignError> {
        if self.status == Status::Completed {
            return Err(CampaignError::CampaignCompleted);
        }
        let current = self
            .region(region_id)
            .ok_or_else(|| CampaignError::UnknownRegion(region_id.clone()))?;
        patch.apply_to(current)
    }

    /// Swaps in a region that was produced by [`Campaign::prepare_region`]
    /// or [`Campaign::prepare_update`]; appends it when the id is new.
    pub fn put_region(&mut self, region: Region) {
        match self.regions.iter_mut().find(|r| r.id == region.id) {
            Some(slot) => *slot = region,
            None => self.regions.push(region),
        }
    }

    pub fn update_region(&mut self, region_id: &RegionId, patch: &RegionPatch) -> Result<&Region, CampaignError> {
        let next = self.prepare_update(region_id, patch)?;
        self.put_region(next);
        Ok(self.region(region_id).expect("region exists"))
    }

    /// Checks an experiment plugin upload against the registry and the
    /// declared checksum. `is_registered` answers sensor-plugin lookups.
    pub fn check_experiment_plugin(
        &self,
        spec: &ExperimentPluginSpec,
        artifact: &[u8],
        is_registered: impl Fn(&PluginId) -> bool,
    ) -> Result<(), CampaignError> {
        if self.status != Status::Draft {
            return Err(CampaignError::IllegalTransition { from: self.status, to: Status::Validated });
        }
        if spec.id.0.is_empty() {
            return Err(CampaignError::InvalidPluginSpec("empty id"));
        }
        if spec.checksum.is_empty() {
            return Err(CampaignError::InvalidPluginSpec("empty checksum"));
        }
        if self.regions.is_empty() {
            return Err(CampaignError::NoRegions);
        }
        if let Some(missing) = self
            .required_sensor_plugins
            .iter()
            .chain(&spec.required_sensors)
            .find(|p| !is_registered(p))
        {
            return Err(CampaignError::MissingSensorPlugin(missing.clone()));
        }
        if artifact_checksum(artifact) != spec.checksum {
            return Err(CampaignError::ChecksumMismatch);
        }
        Ok(())
    }

    /// Records an already checked experiment plugin and marks the campaign
    /// validated.
    pub fn install_experiment_plugin(&mut self, spec: ExperimentPluginSpec) {
        for s in &spec.required_sensors {
            if !self.required_sensor_plugins.contains(s) {
                self.required_sensor_plugins.push(s.clone());
            }
        }
        self.experiment_plugin = Some(spec);
        self.status = Status::Validated;
    }

    pub fn attach_experiment_plugin(
        &mut self,
        spec: ExperimentPluginSpec,
        artifact: &[u8],
        is_registered: impl Fn(&PluginId) -> bool,
    ) -> Result<(), CampaignError> {
        self.check_experiment_plugin(&spec, artifact, is_registered)?;
        self.install_experiment_plugin(spec);
        Ok(())
    }

    pub fn check_status(&self, target: Status) -> Result<(), CampaignError> {
        if self.status.can_transition_to(target) {
            Ok(())
        } else {
            Err(CampaignError::IllegalTransition { from: self.status, to: target })
        }
    }

    pub fn set_status(&mut self, target: Status) -> Result<(), CampaignError> {
        self.check_status(target)?;
        self.status = target;
        Ok(())
    }
}
