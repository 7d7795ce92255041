//! Stateful side of the service: campaigns, volunteers, retained
//! measurements, and their derived coverage, backed by append-only logs.
//!
//! Each campaign has its own log (`campaigns/<id>.log`) and its own mutex, so
//! writes are serialized per campaign while different campaigns proceed
//! independently. Plugin registrations and volunteer state live in
//! `registry.log`. Opening a data directory replays every log; coverage is
//! then rebuilt from the retained measurements.

mod anonymize;
pub mod export;
pub mod log;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Duration, Utc};
use parking_lot::{Mutex, RwLock};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

pub use anonymize::{anonymize, CampaignSecret, PSEUDONYM_HEX_LEN};
pub use export::{ExportFormat, ExportRecord};

use crate::campaign::{
    Campaign, CampaignDraft, CampaignError, CampaignId, ExperimentPluginSpec, PluginId, PluginRegistry, Region,
    RegionDraft, RegionId, RegionPatch, SensorPluginSpec, Status, WindowId,
};
use crate::coverage::{self, CampaignStats, CompletenessReport, Coverage, CoverageError, Heatmap, StatsInput};
use crate::geo::GeoPoint;
use crate::guidance::{self, GuidanceError, Recommendation};
use crate::time::{serde_instant, truncate_millis, Clock, SystemClock};
use log::{LogError, LogWriter};

/// Largest accepted value payload, in bytes.
pub const MAX_VALUE_BYTES: usize = 4096;

/// How far past the server clock a reading's timestamp may lie.
pub fn future_tolerance() -> Duration {
    Duration::hours(24)
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown campaign {0}")]
    UnknownCampaign(CampaignId),
    #[error("unknown volunteer")]
    UnknownVolunteer,
    #[error("unknown export format {0:?}")]
    UnknownFormat(String),
    #[error("campaign is {0} and not open for volunteers")]
    CampaignNotOpen(Status),
    #[error(transparent)]
    Campaign(#[from] CampaignError),
    #[error(transparent)]
    Coverage(#[from] CoverageError),
    #[error(transparent)]
    Guidance(#[from] GuidanceError),
    #[error("storage failure: {0}")]
    Io(String),
    #[error(transparent)]
    Log(#[from] LogError),
}

impl StoreError {
    pub fn code(&self) -> &'static str {
        match self {
            StoreError::UnknownCampaign(_) => "UNKNOWN_CAMPAIGN",
            StoreError::UnknownVolunteer => "UNKNOWN_VOLUNTEER",
            StoreError::UnknownFormat(_) => "UNKNOWN_FORMAT",
            StoreError::CampaignNotOpen(_) => "CAMPAIGN_NOT_OPEN",
            StoreError::Campaign(e) => e.code(),
            StoreError::Coverage(e) => e.code(),
            StoreError::Guidance(e) => e.code(),
            StoreError::Io(_) => "STORAGE_FAILURE",
            StoreError::Log(_) => "CORRUPT_LOG",
        }
    }
}

fn io_err(e: std::io::Error) -> StoreError {
    StoreError::Io(e.to_string())
}

/// Why a single reading of a batch was not stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Error)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IngestRejection {
    #[error("campaign is not running")]
    CampaignNotRunning,
    #[error("volunteer has powered off data collection")]
    VolunteerPoweredOff,
    #[error("volunteer has not joined this campaign")]
    VolunteerNotJoined,
    #[error("sensor is not enabled by the volunteer")]
    SensorNotEnabled,
    #[error("timestamp is more than 24h ahead of the server clock")]
    FutureTimestamp,
    #[error("coordinates are out of range")]
    InvalidCoordinates,
    #[error("value payload exceeds 4 KiB")]
    ValueTooLarge,
    #[error("volunteer field is not a pseudonym")]
    InvalidPseudonym,
    #[error("timestamp is not an RFC 3339 instant")]
    InvalidTimestamp,
}

impl IngestRejection {
    pub fn code(&self) -> &'static str {
        match self {
            IngestRejection::CampaignNotRunning => "CAMPAIGN_NOT_RUNNING",
            IngestRejection::VolunteerPoweredOff => "VOLUNTEER_POWERED_OFF",
            IngestRejection::VolunteerNotJoined => "VOLUNTEER_NOT_JOINED",
            IngestRejection::SensorNotEnabled => "SENSOR_NOT_ENABLED",
            IngestRejection::FutureTimestamp => "FUTURE_TIMESTAMP",
            IngestRejection::InvalidCoordinates => "INVALID_COORDINATES",
            IngestRejection::ValueTooLarge => "VALUE_TOO_LARGE",
            IngestRejection::InvalidPseudonym => "INVALID_PSEUDONYM",
            IngestRejection::InvalidTimestamp => "INVALID_TIMESTAMP",
        }
    }
}

/// A retained, pseudonymized reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub campaign_id: CampaignId,
    pub volunteer: String,
    pub sensor_id: PluginId,
    #[serde(with = "serde_instant")]
    pub at: DateTime<Utc>,
    pub point: GeoPoint,
    pub value: String,
    pub seq: u64,
}

/// A reading as submitted by a device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reading {
    pub sensor_id: PluginId,
    #[serde(with = "serde_instant")]
    pub at: DateTime<Utc>,
    pub point: GeoPoint,
    #[serde(deserialize_with = "value_as_text")]
    pub value: String,
}

/// Scalars arrive as JSON numbers, booleans or strings; all are kept as text.
fn value_as_text<'de, D: Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    match serde_json::Value::deserialize(d)? {
        serde_json::Value::String(s) => Ok(s),
        serde_json::Value::Number(n) => Ok(n.to_string()),
        serde_json::Value::Bool(b) => Ok(b.to_string()),
        serde_json::Value::Null => Ok(String::new()),
        _ => Err(serde::de::Error::custom("value must be a scalar")),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejected {
    pub index: usize,
    pub reason: IngestRejection,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestOutcome {
    pub accepted: usize,
    pub rejected: Vec<Rejected>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct VolunteerState {
    powered_on: bool,
    enabled_sensors: BTreeSet<PluginId>,
    joined_campaigns: BTreeSet<CampaignId>,
}

impl Default for VolunteerState {
    fn default() -> Self {
        VolunteerState { powered_on: true, enabled_sensors: BTreeSet::new(), joined_campaigns: BTreeSet::new() }
    }
}

/// Volunteer state as shown back to the device; never carries the raw id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VolunteerView {
    pub powered_on: bool,
    pub enabled_sensors: Vec<PluginId>,
    pub joined_campaigns: Vec<CampaignId>,
}

impl From<&VolunteerState> for VolunteerView {
    fn from(s: &VolunteerState) -> Self {
        VolunteerView {
            powered_on: s.powered_on,
            enabled_sensors: s.enabled_sensors.iter().cloned().collect(),
            joined_campaigns: s.joined_campaigns.iter().cloned().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinOutcome {
    pub missing_sensors: Vec<PluginId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VolunteerStats {
    pub per_campaign: BTreeMap<CampaignId, u64>,
    pub total: u64,
    #[serde(with = "serde_instant::option")]
    pub first_at: Option<DateTime<Utc>>,
    #[serde(with = "serde_instant::option")]
    pub last_at: Option<DateTime<Utc>>,
}

/// A retained point for map views.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub seq: u64,
    #[serde(with = "serde_instant")]
    pub at: DateTime<Utc>,
    pub lon: f64,
    pub lat: f64,
    pub sensor_id: PluginId,
}

/// Optional restriction of an export to one region and/or window id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExportFilter {
    pub region: Option<RegionId>,
    pub window: Option<WindowId>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum CampaignEvent {
    Created { campaign: Campaign, secret: String },
    RegionPut { region: Region },
    PluginAttached { spec: ExperimentPluginSpec },
    StatusChanged { status: Status },
    Measurement {
        volunteer: String,
        sensor_id: PluginId,
        #[serde(with = "serde_instant")]
        at: DateTime<Utc>,
        point: GeoPoint,
        value: String,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RegistryEvent {
    SensorRegistered { spec: SensorPluginSpec },
    VolunteerSeen { volunteer: String },
    Power { volunteer: String, on: bool },
    Sensors { volunteer: String, sensors: Vec<PluginId> },
    Joined { volunteer: String, campaign: CampaignId },
    Left { volunteer: String, campaign: CampaignId },
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    count: u64,
    first_at: Option<DateTime<Utc>>,
    last_at: Option<DateTime<Utc>>,
}

impl Tally {
    fn add(&mut self, at: DateTime<Utc>) {
        self.count += 1;
        self.first_at = Some(self.first_at.map_or(at, |f| f.min(at)));
        self.last_at = Some(self.last_at.map_or(at, |l| l.max(at)));
    }
}

struct CampaignEntry {
    campaign: Campaign,
    secret: CampaignSecret,
    measurements: Vec<Measurement>,
    coverage: Coverage,
    tallies: BTreeMap<String, Tally>,
    contributors: BTreeSet<String>,
    last_seq: u64,
    log: Option<LogWriter>,
}

impl CampaignEntry {
    fn new(campaign: Campaign, secret: CampaignSecret, log: Option<LogWriter>) -> Self {
        CampaignEntry {
            coverage: Coverage::new(&campaign),
            campaign,
            secret,
            measurements: Vec::new(),
            tallies: BTreeMap::new(),
            contributors: BTreeSet::new(),
            last_seq: 0,
            log,
        }
    }

    /// Writes the event (when persistent) and returns its sequence number.
    fn record(&mut self, event: &CampaignEvent) -> Result<u64, StoreError> {
        let seq = self.last_seq + 1;
        if let Some(log) = self.log.as_mut() {
            log.append(seq, event).map_err(io_err)?;
        }
        self.last_seq = seq;
        Ok(seq)
    }

    fn flush(&mut self) -> Result<(), StoreError> {
        match self.log.as_mut() {
            Some(log) => log.flush().map_err(io_err),
            None => Ok(()),
        }
    }

    fn commit(&mut self, event: CampaignEvent) -> Result<(), StoreError> {
        let seq = self.record(&event)?;
        self.flush()?;
        self.apply(seq, event);
        Ok(())
    }

    fn apply(&mut self, seq: u64, event: CampaignEvent) {
        match event {
            CampaignEvent::Created { .. } => {}
            CampaignEvent::RegionPut { region } => {
                self.campaign.put_region(region);
                self.recount();
            }
            CampaignEvent::PluginAttached { spec } => self.campaign.install_experiment_plugin(spec),
            CampaignEvent::StatusChanged { status } => self.campaign.status = status,
            CampaignEvent::Measurement { volunteer, sensor_id, at, point, value } => {
                let m = Measurement { campaign_id: self.campaign.id.clone(), volunteer, sensor_id, at, point, value, seq };
                self.coverage.apply(&self.campaign, &m);
                self.tallies.entry(m.volunteer.clone()).or_default().add(m.at);
                if !self.contributors.contains(&m.volunteer) {
                    self.contributors.insert(m.volunteer.clone());
                }
                self.measurements.push(m);
            }
        }
    }

    fn recount(&mut self) {
        self.coverage = Coverage::recount(&self.campaign, &self.measurements);
    }

    fn stats_input(&self) -> StatsInput<'_> {
        StatsInput {
            campaign: &self.campaign,
            coverage: &self.coverage,
            contributors: &self.contributors,
            measurements: self.measurements.len() as u64,
        }
    }
}

#[derive(Default)]
struct Registry {
    plugins: PluginRegistry,
    volunteers: HashMap<String, VolunteerState>,
    last_seq: u64,
    log: Option<LogWriter>,
}

impl Registry {
    fn commit(&mut self, event: RegistryEvent) -> Result<(), StoreError> {
        let seq = self.last_seq + 1;
        if let Some(log) = self.log.as_mut() {
            log.append(seq, &event).map_err(io_err)?;
            log.flush().map_err(io_err)?;
        }
        self.last_seq = seq;
        self.apply(event);
        Ok(())
    }

    fn apply(&mut self, event: RegistryEvent) {
        match event {
            RegistryEvent::SensorRegistered { spec } => {
                // Registration was checked before it was logged.
                let _ = self.plugins.register(spec);
            }
            RegistryEvent::VolunteerSeen { volunteer } => {
                self.volunteers.entry(volunteer).or_default();
            }
            RegistryEvent::Power { volunteer, on } => self.volunteers.entry(volunteer).or_default().powered_on = on,
            RegistryEvent::Sensors { volunteer, sensors } => {
                self.volunteers.entry(volunteer).or_default().enabled_sensors = sensors.into_iter().collect()
            }
            RegistryEvent::Joined { volunteer, campaign } => {
                self.volunteers.entry(volunteer).or_default().joined_campaigns.insert(campaign);
            }
            RegistryEvent::Left { volunteer, campaign } => {
                self.volunteers.entry(volunteer).or_default().joined_campaigns.remove(&campaign);
            }
        }
    }

    fn ensure_volunteer(&mut self, raw_id: &str) -> Result<&VolunteerState, StoreError> {
        if !self.volunteers.contains_key(raw_id) {
            self.commit(RegistryEvent::VolunteerSeen { volunteer: raw_id.to_owned() })?;
        }
        Ok(&self.volunteers[raw_id])
    }
}

/// Construction options for a [`Store`].
pub struct StoreOptions {
    pub clock: Arc<dyn Clock>,
    /// Seed for campaign secrets. `None` draws them from the OS.
    pub secret_seed: Option<u64>,
}

impl Default for StoreOptions {
    fn default() -> Self {
        StoreOptions { clock: Arc::new(SystemClock), secret_seed: None }
    }
}

pub struct Store {
    data_dir: Option<PathBuf>,
    clock: Arc<dyn Clock>,
    secrets: Mutex<ChaCha20Rng>,
    registry: RwLock<Registry>,
    campaigns: RwLock<BTreeMap<CampaignId, Arc<Mutex<CampaignEntry>>>>,
}

const REGISTRY_LOG: &str = "registry.log";
const CAMPAIGN_DIR: &str = "campaigns";

impl Store {
    pub fn in_memory() -> Self {
        Store::with_options(None, StoreOptions::default())
    }

    fn with_options(data_dir: Option<PathBuf>, options: StoreOptions) -> Self {
        let rng = match options.secret_seed {
            Some(seed) => ChaCha20Rng::seed_from_u64(seed),
            None => ChaCha20Rng::from_rng(rand::rngs::OsRng).expect("OS randomness available"),
        };
        Store {
            data_dir,
            clock: options.clock,
            secrets: Mutex::new(rng),
            registry: RwLock::new(Registry::default()),
            campaigns: RwLock::new(BTreeMap::new()),
        }
    }

    pub fn in_memory_with(options: StoreOptions) -> Self {
        Store::with_options(None, options)
    }

    /// Opens (creating if needed) a data directory and replays its logs.
    pub fn open(dir: impl AsRef<Path>, options: StoreOptions) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_owned();
        std::fs::create_dir_all(dir.join(CAMPAIGN_DIR)).map_err(io_err)?;
        let store = Store::with_options(Some(dir.clone()), options);
        {
            let mut reg = store.registry.write();
            let registry_path = dir.join(REGISTRY_LOG);
            reg.last_seq = log::replay::<RegistryEvent, _>(&registry_path, |_, ev| {
                reg.apply(ev);
                Ok(())
            })?;
            reg.log = Some(LogWriter::open(&registry_path).map_err(io_err)?);
        }
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir.join(CAMPAIGN_DIR))
            .map_err(io_err)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "log"))
            .collect();
        paths.sort();
        let mut campaigns = store.campaigns.write();
        for path in paths {
            let mut entry: Option<CampaignEntry> = None;
            let last = log::replay::<CampaignEvent, _>(&path, |seq, ev| {
                match ev {
                    CampaignEvent::Created { campaign, secret } => {
                        if entry.is_some() {
                            return Err("campaign created twice".into());
                        }
                        let secret = decode_secret(&secret).ok_or("bad campaign secret")?;
                        entry = Some(CampaignEntry::new(campaign, secret, None));
                    }
                    ev => match entry.as_mut() {
                        Some(e) => e.apply(seq, ev),
                        None => return Err("first record must create the campaign".into()),
                    },
                }
                Ok(())
            })?;
            let Some(mut entry) = entry else { continue };
            entry.last_seq = last;
            entry.log = Some(LogWriter::open(&path).map_err(io_err)?);
            campaigns.insert(entry.campaign.id.clone(), Arc::new(Mutex::new(entry)));
        }
        tracing::info!(campaigns = campaigns.len(), dir = %dir.display(), "replayed logs");
        drop(campaigns);
        Ok(store)
    }

    pub fn data_dir(&self) -> Option<&Path> {
        self.data_dir.as_deref()
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    fn entry(&self, id: &CampaignId) -> Result<Arc<Mutex<CampaignEntry>>, StoreError> {
        self.campaigns
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| StoreError::UnknownCampaign(id.clone()))
    }

    pub fn campaign_ids(&self) -> Vec<CampaignId> {
        self.campaigns.read().keys().cloned().collect()
    }

    // ---- campaign workflow -------------------------------------------------

    pub fn create_campaign(&self, draft: CampaignDraft) -> Result<Campaign, StoreError> {
        draft.validate()?;
        let mut campaigns = self.campaigns.write();
        let mut n = campaigns.len() + 1;
        let id = loop {
            let id = CampaignId(format!("c{n}"));
            if !campaigns.contains_key(&id) {
                break id;
            }
            n += 1;
        };
        let campaign = Campaign::create(id.clone(), draft)?;
        let mut secret = [0u8; 32];
        self.secrets.lock().fill_bytes(&mut secret);
        let log = match &self.data_dir {
            Some(dir) => Some(LogWriter::open(dir.join(CAMPAIGN_DIR).join(format!("{id}.log"))).map_err(io_err)?),
            None => None,
        };
        let mut entry = CampaignEntry::new(campaign.clone(), secret, log);
        entry.commit(CampaignEvent::Created { campaign: campaign.clone(), secret: hex::encode(secret) })?;
        campaigns.insert(id, Arc::new(Mutex::new(entry)));
        Ok(campaign)
    }

    pub fn campaign(&self, id: &CampaignId) -> Result<Campaign, StoreError> {
        Ok(self.entry(id)?.lock().campaign.clone())
    }

    /// Adds a region; coverage is recounted before returning.
    pub fn add_region(&self, id: &CampaignId, draft: &RegionDraft) -> Result<Region, StoreError> {
        let entry = self.entry(id)?;
        let mut e = entry.lock();
        let region = e.campaign.prepare_region(draft)?;
        e.commit(CampaignEvent::RegionPut { region: region.clone() })?;
        Ok(region)
    }

    /// Replaces a region's constraints; on any error the campaign is left
    /// unchanged. Coverage is recounted from the retained measurements
    /// before returning.
    pub fn update_region(&self, id: &CampaignId, region: &RegionId, patch: &RegionPatch) -> Result<Region, StoreError> {
        let entry = self.entry(id)?;
        let mut e = entry.lock();
        let next = e.campaign.prepare_update(region, patch)?;
        e.commit(CampaignEvent::RegionPut { region: next.clone() })?;
        Ok(next)
    }

    pub fn register_sensor_plugin(&self, spec: SensorPluginSpec) -> Result<PluginId, StoreError> {
        let mut reg = self.registry.write();
        let mut probe = reg.plugins.clone();
        let id = probe.register(spec.clone())?;
        reg.commit(RegistryEvent::SensorRegistered { spec })?;
        Ok(id)
    }

    pub fn sensor_plugins(&self, public_only: bool) -> Vec<SensorPluginSpec> {
        self.registry.read().plugins.list(public_only)
    }

    pub fn attach_experiment_plugin(
        &self,
        id: &CampaignId,
        spec: ExperimentPluginSpec,
        artifact: &[u8],
    ) -> Result<Campaign, StoreError> {
        let entry = self.entry(id)?;
        let mut e = entry.lock();
        {
            let reg = self.registry.read();
            e.campaign.check_experiment_plugin(&spec, artifact, |p| reg.plugins.contains(p))?;
        }
        e.commit(CampaignEvent::PluginAttached { spec })?;
        Ok(e.campaign.clone())
    }

    pub fn set_status(&self, id: &CampaignId, status: Status) -> Result<Campaign, StoreError> {
        let entry = self.entry(id)?;
        let mut e = entry.lock();
        e.campaign.check_status(status)?;
        e.commit(CampaignEvent::StatusChanged { status })?;
        Ok(e.campaign.clone())
    }

    // ---- volunteers ----------------------------------------------------------

    pub fn set_power(&self, raw_id: &str, on: bool) -> Result<VolunteerView, StoreError> {
        let mut reg = self.registry.write();
        reg.ensure_volunteer(raw_id)?;
        if reg.volunteers[raw_id].powered_on != on {
            reg.commit(RegistryEvent::Power { volunteer: raw_id.to_owned(), on })?;
        }
        Ok(VolunteerView::from(&reg.volunteers[raw_id]))
    }

    /// Replaces the set of sensors the volunteer has enabled on the device.
    pub fn enable_sensors(&self, raw_id: &str, sensors: Vec<PluginId>) -> Result<VolunteerView, StoreError> {
        let mut reg = self.registry.write();
        reg.ensure_volunteer(raw_id)?;
        reg.commit(RegistryEvent::Sensors { volunteer: raw_id.to_owned(), sensors })?;
        Ok(VolunteerView::from(&reg.volunteers[raw_id]))
    }

    pub fn volunteer(&self, raw_id: &str) -> Result<VolunteerView, StoreError> {
        self.registry
            .read()
            .volunteers
            .get(raw_id)
            .map(VolunteerView::from)
            .ok_or(StoreError::UnknownVolunteer)
    }

    /// Joins a validated, running or paused campaign. Returns the required
    /// sensors the volunteer still has to enable.
    pub fn join_experiment(&self, raw_id: &str, id: &CampaignId) -> Result<JoinOutcome, StoreError> {
        let campaign = self.campaign(id)?;
        match campaign.status {
            Status::Completed => return Err(CampaignError::CampaignCompleted.into()),
            Status::Draft => return Err(StoreError::CampaignNotOpen(Status::Draft)),
            Status::Validated | Status::Running | Status::Paused => {}
        }
        let mut reg = self.registry.write();
        reg.ensure_volunteer(raw_id)?;
        if !reg.volunteers[raw_id].joined_campaigns.contains(id) {
            reg.commit(RegistryEvent::Joined { volunteer: raw_id.to_owned(), campaign: id.clone() })?;
        }
        let enabled = &reg.volunteers[raw_id].enabled_sensors;
        let missing_sensors = campaign
            .required_sensor_plugins
            .iter()
            .filter(|s| !enabled.contains(*s))
            .cloned()
            .collect();
        Ok(JoinOutcome { missing_sensors })
    }

    /// Leaves a campaign. Already collected data stays retained.
    pub fn leave_experiment(&self, raw_id: &str, id: &CampaignId) -> Result<VolunteerView, StoreError> {
        self.entry(id)?;
        let mut reg = self.registry.write();
        if !reg.volunteers.contains_key(raw_id) {
            return Err(StoreError::UnknownVolunteer);
        }
        if reg.volunteers[raw_id].joined_campaigns.contains(id) {
            reg.commit(RegistryEvent::Left { volunteer: raw_id.to_owned(), campaign: id.clone() })?;
        }
        Ok(VolunteerView::from(&reg.volunteers[raw_id]))
    }

    // ---- ingestion -----------------------------------------------------------

    /// Stores each acceptable reading independently. Accepted readings are
    /// retained whether or not they match any region, and coverage is
    /// updated before this returns.
    pub fn ingest(&self, id: &CampaignId, raw_id: &str, readings: &[Reading]) -> Result<IngestOutcome, StoreError> {
        let entry = self.entry(id)?;
        let volunteer = {
            let known = self.registry.read().volunteers.get(raw_id).cloned();
            match known {
                Some(v) => v,
                None => self.registry.write().ensure_volunteer(raw_id)?.clone(),
            }
        };
        let horizon = self.clock.now() + future_tolerance();
        let mut e = entry.lock();
        let pseudonym = anonymize(raw_id, id, &e.secret);
        let joined = volunteer.joined_campaigns.contains(id);
        let running = e.campaign.status == Status::Running;
        let mut outcome = IngestOutcome { accepted: 0, rejected: Vec::new() };
        let mut result = Ok(());
        for (index, r) in readings.iter().enumerate() {
            let verdict = if !running {
                Err(IngestRejection::CampaignNotRunning)
            } else if !volunteer.powered_on {
                Err(IngestRejection::VolunteerPoweredOff)
            } else if !joined {
                Err(IngestRejection::VolunteerNotJoined)
            } else if !volunteer.enabled_sensors.contains(&r.sensor_id) {
                Err(IngestRejection::SensorNotEnabled)
            } else if r.at > horizon {
                Err(IngestRejection::FutureTimestamp)
            } else if !r.point.is_valid() {
                Err(IngestRejection::InvalidCoordinates)
            } else if r.value.len() > MAX_VALUE_BYTES {
                Err(IngestRejection::ValueTooLarge)
            } else {
                Ok(())
            };
            if let Err(reason) = verdict {
                outcome.rejected.push(Rejected { index, reason });
                continue;
            }
            let event = CampaignEvent::Measurement {
                volunteer: pseudonym.clone(),
                sensor_id: r.sensor_id.clone(),
                at: truncate_millis(r.at),
                point: r.point,
                value: r.value.clone(),
            };
            match e.record(&event) {
                Ok(seq) => {
                    e.apply(seq, event);
                    outcome.accepted += 1;
                }
                Err(err) => {
                    result = Err(err);
                    break;
                }
            }
        }
        e.flush()?;
        result.map(|_| outcome)
    }

    // ---- read side ---------------------------------------------------------

    /// Retained measurements of a campaign in ingestion order.
    pub fn measurements(&self, id: &CampaignId) -> Result<Vec<Measurement>, StoreError> {
        Ok(self.entry(id)?.lock().measurements.clone())
    }

    pub fn points(&self, id: &CampaignId) -> Result<Vec<PointRecord>, StoreError> {
        let entry = self.entry(id)?;
        let e = entry.lock();
        Ok(e.measurements
            .iter()
            .map(|m| PointRecord { seq: m.seq, at: m.at, lon: m.point.lon, lat: m.point.lat, sensor_id: m.sensor_id.clone() })
            .collect())
    }

    /// Export records ordered by (timestamp, seq), optionally filtered.
    pub fn export_records(&self, id: &CampaignId, filter: &ExportFilter) -> Result<Vec<ExportRecord>, StoreError> {
        let entry = self.entry(id)?;
        let e = entry.lock();
        if let Some(r) = &filter.region {
            if e.campaign.region(r).is_none() {
                return Err(CampaignError::UnknownRegion(r.clone()).into());
            }
        }
        let mut selected: Vec<&Measurement> = e
            .measurements
            .iter()
            .filter(|m| {
                if filter.region.is_none() && filter.window.is_none() {
                    return true;
                }
                coverage::match_cells(&e.campaign, &m.at, &m.point).iter().any(|(r, w)| {
                    filter.region.as_ref().is_none_or(|fr| fr == r) && filter.window.as_ref().is_none_or(|fw| fw == w)
                })
            })
            .collect();
        selected.sort_by(|a, b| a.at.cmp(&b.at).then(a.seq.cmp(&b.seq)));
        Ok(selected.into_iter().map(ExportRecord::from).collect())
    }

    pub fn export(&self, id: &CampaignId, format: ExportFormat, filter: &ExportFilter) -> Result<Vec<u8>, StoreError> {
        Ok(export::encode(&self.export_records(id, filter)?, format))
    }

    pub fn volunteer_stats(&self, raw_id: &str) -> Result<VolunteerStats, StoreError> {
        if !self.registry.read().volunteers.contains_key(raw_id) {
            return Err(StoreError::UnknownVolunteer);
        }
        let entries: Vec<_> = self.campaigns.read().values().cloned().collect();
        let mut stats = VolunteerStats { per_campaign: BTreeMap::new(), total: 0, first_at: None, last_at: None };
        for entry in entries {
            let e = entry.lock();
            let pseudonym = anonymize(raw_id, &e.campaign.id, &e.secret);
            if let Some(t) = e.tallies.get(&pseudonym) {
                stats.per_campaign.insert(e.campaign.id.clone(), t.count);
                stats.total += t.count;
                stats.first_at = [stats.first_at, t.first_at].into_iter().flatten().min();
                stats.last_at = [stats.last_at, t.last_at].into_iter().flatten().max();
            }
        }
        Ok(stats)
    }

    pub fn completeness(&self, id: &CampaignId) -> Result<CompletenessReport, StoreError> {
        let entry = self.entry(id)?;
        let e = entry.lock();
        Ok(e.coverage.completeness_report(&e.campaign))
    }

    pub fn heatmap(&self, id: &CampaignId, cell_deg: f64) -> Result<Heatmap, StoreError> {
        let entry = self.entry(id)?;
        let e = entry.lock();
        Ok(coverage::heatmap(&e.campaign, &e.measurements, cell_deg)?)
    }

    /// Table-style statistics over a group of campaigns.
    pub fn stats(&self, ids: &[CampaignId]) -> Result<CampaignStats, StoreError> {
        let entries = ids.iter().map(|id| self.entry(id)).collect::<Result<Vec<_>, _>>()?;
        let mut unique: Vec<Arc<Mutex<CampaignEntry>>> = Vec::new();
        for e in entries {
            if !unique.iter().any(|u| Arc::ptr_eq(u, &e)) {
                unique.push(e);
            }
        }
        let guards: Vec<_> = unique.iter().map(|e| e.lock()).collect();
        let inputs: Vec<StatsInput<'_>> = guards.iter().map(|g| g.stats_input()).collect();
        Ok(coverage::stats(&inputs, self.clock.now()))
    }

    pub fn recommend(
        &self,
        id: &CampaignId,
        location: &GeoPoint,
        now: &DateTime<Utc>,
        k: usize,
    ) -> Result<Vec<Recommendation>, StoreError> {
        let entry = self.entry(id)?;
        let e = entry.lock();
        Ok(guidance::recommend(&e.campaign, &e.coverage, location, now, k)?)
    }

    /// Current incremental coverage plus the campaign it belongs to.
    pub fn coverage_snapshot(&self, id: &CampaignId) -> Result<(Campaign, Coverage), StoreError> {
        let entry = self.entry(id)?;
        let e = entry.lock();
        Ok((e.campaign.clone(), e.coverage.clone()))
    }

    /// Coverage recomputed from scratch over the retained measurements.
    pub fn recount_snapshot(&self, id: &CampaignId) -> Result<Coverage, StoreError> {
        let entry = self.entry(id)?;
        let e = entry.lock();
        Ok(Coverage::recount(&e.campaign, &e.measurements))
    }

    /// Loads exported records into a running campaign, keeping their
    /// pseudonyms. Re-exporting afterwards reproduces the original export
    /// when the campaign definitions match. Records are stored in the order
    /// given; volunteer-side checks do not apply since no raw ids are involved.
    pub fn reingest(&self, id: &CampaignId, records: &[ExportRecord]) -> Result<IngestOutcome, StoreError> {
        let entry = self.entry(id)?;
        let horizon = self.clock.now() + future_tolerance();
        let registry = self.registry.read();
        let mut e = entry.lock();
        let running = e.campaign.status == Status::Running;
        let mut outcome = IngestOutcome { accepted: 0, rejected: Vec::new() };
        let mut result = Ok(());
        for (index, r) in records.iter().enumerate() {
            let at = crate::time::parse_instant(&r.timestamp_utc);
            let point = GeoPoint::new(r.lon, r.lat);
            let verdict = if !running {
                Err(IngestRejection::CampaignNotRunning)
            } else if !is_pseudonym(&r.volunteer) {
                Err(IngestRejection::InvalidPseudonym)
            } else if !registry.plugins.contains(&r.sensor_id) {
                Err(IngestRejection::SensorNotEnabled)
            } else {
                match at {
                    Err(_) => Err(IngestRejection::InvalidTimestamp),
                    Ok(at) if at > horizon => Err(IngestRejection::FutureTimestamp),
                    Ok(_) if !point.is_valid() => Err(IngestRejection::InvalidCoordinates),
                    Ok(_) if r.value.len() > MAX_VALUE_BYTES => Err(IngestRejection::ValueTooLarge),
                    Ok(at) => Ok(at),
                }
            };
            let at = match verdict {
                Ok(at) => at,
                Err(reason) => {
                    outcome.rejected.push(Rejected { index, reason });
                    continue;
                }
            };
            let event = CampaignEvent::Measurement {
                volunteer: r.volunteer.clone(),
                sensor_id: r.sensor_id.clone(),
                at: truncate_millis(at),
                point,
                value: r.value.clone(),
            };
            match e.record(&event) {
                Ok(seq) => {
                    e.apply(seq, event);
                    outcome.accepted += 1;
                }
                Err(err) => {
                    result = Err(err);
                    break;
                }
            }
        }
        e.flush()?;
        result.map(|_| outcome)
    }

    pub fn pseudonym(&self, raw_id: &str, id: &CampaignId) -> Result<String, StoreError> {
        let entry = self.entry(id)?;
        let e = entry.lock();
        Ok(anonymize(raw_id, id, &e.secret))
    }
}

fn is_pseudonym(s: &str) -> bool {
    s.len() == PSEUDONYM_HEX_LEN && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

fn decode_secret(hex_secret: &str) -> Option<CampaignSecret> {
    hex::decode(hex_secret).ok()?.try_into().ok()
}

#[cfg(test)]
mod tests;
