use std::collections::BTreeMap;
use std::time::Instant;

use campaignd_core::campaign::Status;
use campaignd_core::coverage::CampaignStats;
use campaignd_core::store::IngestRejection;
use campaignd_core::{CampaignId, Reading};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generate::{generate, VolunteerStream};
use crate::ledger::{CellLedger, GroundTruthLedger};
use crate::scenario::{Scenario, ScenarioError};
use crate::target::{Target, TargetError};

/// Largest accepted gap between service and ledger average completion.
pub const AVG_COMPLETION_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    ScenarioInvalid(#[from] ScenarioError),
    #[error("service unreachable: {0}")]
    ServiceUnreachable(String),
    #[error("{step}: service refused: {code}: {message}")]
    Service { step: String, code: String, message: String },
}

fn at_step(step: impl Into<String>) -> impl FnOnce(TargetError) -> SimError {
    let step = step.into();
    move |e| match e {
        TargetError::Unreachable(m) => SimError::ServiceUnreachable(m),
        TargetError::Refused { code, message } => SimError::Service { step, code, message },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedCampaign {
    pub id: CampaignId,
    pub cells: Vec<CellLedger>,
}

/// What the service reports after the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceObservation {
    pub stats: CampaignStats,
    pub campaigns: Vec<ObservedCampaign>,
    /// Accepted measurements per volunteer in their campaign.
    pub volunteers: BTreeMap<String, u64>,
    /// Rejected readings by rejection code.
    pub rejections: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub exact: bool,
    pub mismatches: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub campaign_ids: Vec<CampaignId>,
    pub ledger: GroundTruthLedger,
    pub service: ServiceObservation,
    pub agreement: Agreement,
    pub submitted: u64,
    pub batches: u64,
    pub requests: u64,
    pub wall_clock_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    Redefine(usize),
    Power { volunteer: usize, on: bool },
    Reading { volunteer: usize, index: usize },
}

/// Every scheduled action keyed by instant; at equal instants redefinitions
/// go first, then power toggles, then readings.
fn schedule(scenario: &Scenario, streams: &[VolunteerStream]) -> Vec<(DateTime<Utc>, Event)> {
    let mut events = Vec::new();
    for (i, r) in scenario.redefinitions.iter().enumerate() {
        events.push((r.at, Event::Redefine(i)));
    }
    for (v, spec) in scenario.volunteers.iter().enumerate() {
        for p in &spec.power_off {
            events.push((p.start, Event::Power { volunteer: v, on: false }));
            events.push((p.end, Event::Power { volunteer: v, on: true }));
        }
    }
    for s in streams {
        for (index, r) in s.readings.iter().enumerate() {
            events.push((r.at, Event::Reading { volunteer: s.volunteer, index }));
        }
    }
    events.sort();
    events
}

struct Submitter<'a> {
    target: &'a dyn Target,
    campaign_ids: &'a [CampaignId],
    scenario: &'a Scenario,
    buffers: Vec<Vec<Reading>>,
    rejections: BTreeMap<String, u64>,
    submitted: u64,
    batches: u64,
}

impl Submitter<'_> {
    fn flush(&mut self, v: usize) -> Result<(), SimError> {
        if self.buffers[v].is_empty() {
            return Ok(());
        }
        let batch = std::mem::take(&mut self.buffers[v]);
        let spec = &self.scenario.volunteers[v];
        let id = &self.campaign_ids[spec.campaign];
        let out = self.target.ingest(id, &spec.id, &batch).map_err(at_step(format!("ingest for {}", spec.id)))?;
        self.batches += 1;
        self.submitted += batch.len() as u64;
        for r in out.rejected {
            *self.rejections.entry(r.reason.code().to_owned()).or_default() += 1;
        }
        Ok(())
    }

    fn flush_all(&mut self) -> Result<(), SimError> {
        (0..self.buffers.len()).try_for_each(|v| self.flush(v))
    }
}

/// Registers sensors and creates every campaign of `scenario` with its
/// regions and experiment plugin, leaving each one running.
pub fn provision_campaigns(scenario: &Scenario, target: &dyn Target) -> Result<Vec<CampaignId>, SimError> {
    for s in &scenario.sensor_plugins {
        match target.register_sensor_plugin(s) {
            Err(TargetError::Refused { code, .. }) if code == "DUPLICATE_PLUGIN_ID" => {}
            other => other.map_err(at_step(format!("register sensor plugin {}", s.id)))?,
        }
    }
    let mut ids = Vec::new();
    for (i, c) in scenario.campaigns.iter().enumerate() {
        let id = target.create_campaign(&c.definition).map_err(at_step(format!("create campaign {i}")))?;
        for r in &c.regions {
            target.add_region(&id, r).map_err(at_step(format!("add region to campaign {i}")))?;
        }
        let plugin = &c.experiment_plugin;
        target
            .attach_experiment_plugin(&id, &plugin.plugin_spec(), plugin.artifact.as_bytes())
            .map_err(at_step(format!("attach plugin to campaign {i}")))?;
        target.set_status(&id, Status::Running).map_err(at_step(format!("start campaign {i}")))?;
        ids.push(id);
    }
    Ok(ids)
}

fn enrol_volunteers(scenario: &Scenario, target: &dyn Target, ids: &[CampaignId]) -> Result<(), SimError> {
    for v in &scenario.volunteers {
        let campaign = &scenario.campaigns[v.campaign];
        let step = format!("enrol {}", v.id);
        target.enable_sensors(&v.id, &v.enabled_sensors(campaign)).map_err(at_step(step.clone()))?;
        target.set_power(&v.id, true).map_err(at_step(step.clone()))?;
        let missing = target.join(&v.id, &ids[v.campaign]).map_err(at_step(step.clone()))?;
        if !missing.is_empty() {
            let names: Vec<_> = missing.iter().map(|m| m.as_str()).collect();
            return Err(SimError::Service {
                step,
                code: "MISSING_SENSORS".into(),
                message: format!("volunteer lacks {}", names.join(", ")),
            });
        }
    }
    Ok(())
}

fn observe(scenario: &Scenario, target: &dyn Target, ids: &[CampaignId]) -> Result<ServiceObservation, SimError> {
    let stats = target.stats(ids).map_err(at_step("stats"))?;
    let mut campaigns = Vec::new();
    for id in ids {
        let report = target.completeness(id).map_err(at_step(format!("completeness of {id}")))?;
        let cells = report
            .cells
            .into_iter()
            .map(|c| CellLedger {
                region_id: c.region_id.as_str().to_owned(),
                window_id: c.window_id.as_str().to_owned(),
                count: c.count,
                target: c.target,
            })
            .collect();
        campaigns.push(ObservedCampaign { id: id.clone(), cells });
    }
    let mut volunteers = BTreeMap::new();
    for v in &scenario.volunteers {
        let s = target.volunteer_stats(&v.id).map_err(at_step(format!("stats of {}", v.id)))?;
        volunteers.insert(v.id.clone(), s.per_campaign.get(&ids[v.campaign]).copied().unwrap_or(0));
    }
    Ok(ServiceObservation { stats, campaigns, volunteers, rejections: BTreeMap::new() })
}

pub fn compare(ledger: &GroundTruthLedger, service: &ServiceObservation) -> Agreement {
    let mut mismatches = Vec::new();
    let (l, s) = (&ledger.stats, &service.stats);
    for (name, expected, actual) in [
        ("cities", l.cities, s.cities),
        ("participants", l.participants, s.participants),
        ("regions", l.regions, s.regions),
        ("experimentation_days", l.experimentation_days, s.experimentation_days),
        ("measurements", l.measurements, s.measurements),
    ] {
        if expected != actual {
            mismatches.push(format!("{name}: ledger {expected}, service {actual}"));
        }
    }
    if (l.avg_completion - s.avg_completion).abs() > AVG_COMPLETION_TOLERANCE {
        mismatches.push(format!("avg_completion: ledger {}, service {}", l.avg_completion, s.avg_completion));
    }
    for (i, (lc, sc)) in ledger.campaigns.iter().zip(&service.campaigns).enumerate() {
        if lc.cells != sc.cells {
            mismatches.push(format!("campaign {i} ({}): cell counts differ", sc.id));
        }
    }
    if ledger.campaigns.len() != service.campaigns.len() {
        mismatches.push("campaign count differs".into());
    }
    for (id, v) in &ledger.volunteers {
        let actual = service.volunteers.get(id).copied().unwrap_or(0);
        if actual != v.accepted {
            mismatches.push(format!("volunteer {id}: ledger {}, service {actual}", v.accepted));
        }
    }
    let powered_off: u64 = ledger.volunteers.values().map(|v| v.powered_off).sum();
    let observed_off = service.rejections.get(IngestRejection::VolunteerPoweredOff.code()).copied().unwrap_or(0);
    if powered_off != observed_off {
        mismatches.push(format!("power-off rejections: ledger {powered_off}, service {observed_off}"));
    }
    let other: u64 = ledger.volunteers.values().map(|v| v.other_rejections).sum();
    let observed_other: u64 = service.rejections.values().sum::<u64>() - observed_off;
    if other != observed_other {
        mismatches.push(format!("other rejections: ledger {other}, service {observed_other}"));
    }
    Agreement { exact: mismatches.is_empty(), mismatches }
}

/// Runs `scenario` against `target` and checks the service against the ledger.
pub fn run(scenario: &Scenario, target: &dyn Target) -> Result<RunReport, SimError> {
    let started = Instant::now();
    scenario.validate()?;
    let campaign_ids = provision_campaigns(scenario, target)?;
    enrol_volunteers(scenario, target, &campaign_ids)?;
    let streams = generate(scenario);
    let mut sub = Submitter {
        target,
        campaign_ids: &campaign_ids,
        scenario,
        buffers: vec![Vec::new(); scenario.volunteers.len()],
        rejections: BTreeMap::new(),
        submitted: 0,
        batches: 0,
    };
    for (_, event) in schedule(scenario, &streams) {
        match event {
            Event::Reading { volunteer, index } => {
                sub.buffers[volunteer].push(streams[volunteer].readings[index].clone());
                if sub.buffers[volunteer].len() >= scenario.batch_size {
                    sub.flush(volunteer)?;
                }
            }
            Event::Power { volunteer, on } => {
                sub.flush(volunteer)?;
                let id = &scenario.volunteers[volunteer].id;
                target.set_power(id, on).map_err(at_step(format!("power toggle for {id}")))?;
            }
            Event::Redefine(i) => {
                sub.flush_all()?;
                let r = &scenario.redefinitions[i];
                target
                    .update_region(&campaign_ids[r.campaign], &r.region, &r.patch)
                    .map_err(at_step(format!("redefinition {i}")))?;
            }
        }
    }
    sub.flush_all()?;
    let (rejections, submitted, batches) = (sub.rejections, sub.submitted, sub.batches);

    let mut service = observe(scenario, target, &campaign_ids)?;
    service.rejections = rejections;
    let ledger = GroundTruthLedger::compute(scenario, &streams, target.now());
    let agreement = compare(&ledger, &service);
    Ok(RunReport {
        seed: scenario.seed,
        campaign_ids,
        ledger,
        service,
        agreement,
        submitted,
        batches,
        requests: target.request_count(),
        wall_clock_ms: started.elapsed().as_millis() as u64,
    })
}
