//! Ground-truth accounting, written independently of the coverage engine:
//! its own ring containment, its own window parsing and plain loops.
//! Only plain data (coordinates, `HH:MM` strings, quotas) is taken from the
//! scenario; nothing here calls into geometry, campaign or coverage code.

use std::collections::{BTreeMap, BTreeSet};

use campaignd_core::campaign::{Day, RegionDraft, RegionPatch, WindowSpec};
use campaignd_core::store::Reading;
use chrono::{DateTime, Datelike, Duration, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::generate::VolunteerStream;
use crate::scenario::Scenario;

const BOUNDARY_EPS: f64 = 1e-9;
const FUTURE_HOURS: i64 = 24;
const MAX_VALUE_BYTES: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellLedger {
    pub region_id: String,
    pub window_id: String,
    pub count: u64,
    pub target: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignLedger {
    pub cells: Vec<CellLedger>,
    pub participants: u64,
    pub measurements: u64,
    pub avg_completion: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VolunteerLedger {
    pub campaign: usize,
    pub generated: u64,
    pub accepted: u64,
    /// Readings made while the volunteer had data collection powered off.
    pub powered_off: u64,
    pub other_rejections: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerStats {
    pub cities: u64,
    pub participants: u64,
    pub regions: u64,
    pub experimentation_days: u64,
    pub measurements: u64,
    pub avg_completion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthLedger {
    pub generated: u64,
    pub accepted: u64,
    pub volunteers: BTreeMap<String, VolunteerLedger>,
    pub campaigns: Vec<CampaignLedger>,
    pub stats: LedgerStats,
}

struct Window {
    id: String,
    start: u32,
    end: u32,
    days: [bool; 7],
}

struct RegionDef {
    id: String,
    ring: Vec<(f64, f64)>,
    windows: Vec<Window>,
    min_count: u64,
}

fn minutes(s: &str) -> u32 {
    let (h, m) = s.split_once(':').expect("validated HH:MM");
    h.parse::<u32>().expect("hours") * 60 + m.parse::<u32>().expect("minutes")
}

fn day_index(d: Day) -> usize {
    match d {
        Day::Mon => 0,
        Day::Tue => 1,
        Day::Wed => 2,
        Day::Thu => 3,
        Day::Fri => 4,
        Day::Sat => 5,
        Day::Sun => 6,
    }
}

fn windows(specs: &[WindowSpec]) -> Vec<Window> {
    specs
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let mut days = [w.days.is_none(); 7];
            for d in w.days.iter().flatten() {
                days[day_index(*d)] = true;
            }
            Window {
                id: w.id.as_ref().map_or_else(|| format!("w{}", i + 1), |id| id.as_str().to_owned()),
                start: minutes(&w.start),
                end: minutes(&w.end),
                days,
            }
        })
        .collect()
}

fn ring(coords: &[Vec<[f64; 2]>]) -> Vec<(f64, f64)> {
    let mut ring: Vec<(f64, f64)> = coords[0].iter().map(|c| (c[0], c[1])).collect();
    if ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    ring
}

fn region(draft: &RegionDraft) -> RegionDef {
    RegionDef {
        id: draft.id.as_ref().expect("validated explicit id").as_str().to_owned(),
        ring: ring(&draft.polygon.coordinates),
        windows: windows(&draft.windows),
        min_count: draft.quota.min_count,
    }
}

fn patch(r: &mut RegionDef, p: &RegionPatch) {
    if let Some(poly) = &p.polygon {
        r.ring = ring(&poly.coordinates);
    }
    if let Some(w) = &p.windows {
        r.windows = windows(w);
    }
    if let Some(q) = &p.quota {
        r.min_count = q.min_count;
    }
}

fn on_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> bool {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0);
    let (cx, cy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    (cx * cx + cy * cy).sqrt() <= BOUNDARY_EPS
}

/// Crossing-number test with boundary points counted as inside.
pub fn ring_contains(ring: &[(f64, f64)], p: (f64, f64)) -> bool {
    let n = ring.len();
    let mut crossings = 0;
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        if on_segment(p, a, b) {
            return true;
        }
        if (a.1 <= p.1) != (b.1 <= p.1) {
            let x = a.0 + (p.1 - a.1) / (b.1 - a.1) * (b.0 - a.0);
            if x > p.0 {
                crossings += 1;
            }
        }
    }
    crossings % 2 == 1
}

fn window_contains(w: &Window, local: &chrono::NaiveDateTime) -> bool {
    let minute = local.hour() * 60 + local.minute();
    let day = local.weekday().num_days_from_monday() as usize;
    w.days[day] && w.start <= minute && minute < w.end
}

fn rejected(enabled: &BTreeSet<String>, r: &Reading, now: DateTime<Utc>) -> bool {
    !enabled.contains(r.sensor_id.as_str())
        || r.at > now + Duration::hours(FUTURE_HOURS)
        || !(r.point.lon.is_finite() && r.point.lat.is_finite())
        || r.point.lon.abs() > 180.0
        || r.point.lat.abs() > 90.0
        || r.value.len() > MAX_VALUE_BYTES
}

impl GroundTruthLedger {
    /// Accounts for every generated reading as the service should: a
    /// reading made inside a power-off interval is refused, all others are
    /// retained, and cells count retained readings under the final region
    /// definitions.
    pub fn compute(scenario: &Scenario, streams: &[VolunteerStream], now: DateTime<Utc>) -> Self {
        let mut regions: Vec<Vec<RegionDef>> =
            scenario.campaigns.iter().map(|c| c.regions.iter().map(region).collect()).collect();
        let mut redefinitions: Vec<_> = scenario.redefinitions.iter().collect();
        redefinitions.sort_by_key(|r| r.at);
        for r in redefinitions {
            for def in regions[r.campaign].iter_mut().filter(|d| d.id == r.region.as_str()) {
                patch(def, &r.patch);
            }
        }

        let mut counts: Vec<Vec<Vec<u64>>> =
            regions.iter().map(|rs| rs.iter().map(|r| vec![0; r.windows.len()]).collect()).collect();
        let mut measurements = vec![0u64; scenario.campaigns.len()];
        let mut participants = vec![0u64; scenario.campaigns.len()];
        let mut volunteers = BTreeMap::new();
        let (mut generated, mut accepted) = (0, 0);

        for stream in streams {
            let v = &scenario.volunteers[stream.volunteer];
            let c = v.campaign;
            let tz = Duration::minutes(i64::from(scenario.campaigns[c].definition.tz_offset_minutes));
            let enabled: BTreeSet<String> =
                v.enabled_sensors(&scenario.campaigns[c]).iter().map(|s| s.as_str().to_owned()).collect();
            let mut entry = VolunteerLedger { campaign: c, generated: 0, accepted: 0, powered_off: 0, other_rejections: 0 };
            for r in &stream.readings {
                entry.generated += 1;
                if v.power_off.iter().any(|i| i.start <= r.at && r.at < i.end) {
                    entry.powered_off += 1;
                    continue;
                }
                if rejected(&enabled, r, now) {
                    entry.other_rejections += 1;
                    continue;
                }
                entry.accepted += 1;
                let local = (r.at + tz).naive_utc();
                for (ri, def) in regions[c].iter().enumerate() {
                    if !ring_contains(&def.ring, (r.point.lon, r.point.lat)) {
                        continue;
                    }
                    for (wi, w) in def.windows.iter().enumerate() {
                        if window_contains(w, &local) {
                            counts[c][ri][wi] += 1;
                        }
                    }
                }
            }
            generated += entry.generated;
            accepted += entry.accepted;
            measurements[c] += entry.accepted;
            if entry.accepted > 0 {
                participants[c] += 1;
            }
            volunteers.insert(v.id.clone(), entry);
        }

        let mut campaigns = Vec::new();
        let mut all_completeness = Vec::new();
        for (c, defs) in regions.iter().enumerate() {
            let mut cells = Vec::new();
            let mut completeness = Vec::new();
            for (ri, def) in defs.iter().enumerate() {
                for (wi, w) in def.windows.iter().enumerate() {
                    let count = counts[c][ri][wi];
                    cells.push(CellLedger { region_id: def.id.clone(), window_id: w.id.clone(), count, target: def.min_count });
                    completeness.push((count as f64 / def.min_count as f64).min(1.0));
                }
            }
            all_completeness.extend(completeness.iter().copied());
            campaigns.push(CampaignLedger {
                cells,
                participants: participants[c],
                measurements: measurements[c],
                avg_completion: mean(&completeness),
            });
        }

        let start = scenario.campaigns.iter().map(|c| c.definition.date_range.start).min();
        let end = scenario.campaigns.iter().map(|c| c.definition.date_range.end).max();
        let experimentation_days = match (start, end) {
            (Some(s), Some(e)) => ((e.min(now) - s).num_seconds().max(0) / 86_400) as u64,
            _ => 0,
        };
        let stats = LedgerStats {
            cities: scenario.campaigns.len() as u64,
            participants: participants.iter().sum(),
            regions: regions.iter().map(|r| r.len() as u64).sum(),
            experimentation_days,
            measurements: accepted,
            avg_completion: mean(&all_completeness),
        };
        GroundTruthLedger { generated, accepted, volunteers, campaigns, stats }
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}
