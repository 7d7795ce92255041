//! Spatiotemporal matching and completeness accounting.
//!
//! A coverage cell is one (region, time window) pair. Every retained
//! measurement whose point lies in the region polygon and whose timestamp
//! falls in the window adds one to that cell. Overlapping regions each
//! receive the measurement.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Duration, Timelike, Utc};
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::campaign::{Campaign, CampaignId, Region, RegionId, WindowId};
use crate::geo::{grid_cell, BoundingBox, GeoPoint};
use crate::store::Measurement;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoverageError {
    #[error("campaign has neither regions nor measurements")]
    EmptyCampaignExtent,
    #[error("cell size must be a positive number of degrees")]
    InvalidCellSize,
}

impl CoverageError {
    pub fn code(&self) -> &'static str {
        match self {
            CoverageError::EmptyCampaignExtent => "EMPTY_CAMPAIGN_EXTENT",
            CoverageError::InvalidCellSize => "INVALID_CELL_SIZE",
        }
    }
}

pub type CellKey = (RegionId, WindowId);

pub fn completeness(count: u64, target: u64) -> f64 {
    if target == 0 {
        return 1.0;
    }
    (count as f64 / target as f64).min(1.0)
}

fn round4<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64((x * 1e4).round() / 1e4)
}

/// Cells of `campaign` matched by a reading at `at` located at `point`.
pub fn match_cells(campaign: &Campaign, at: &DateTime<Utc>, point: &GeoPoint) -> Vec<CellKey> {
    if !campaign.date_range.contains(at) {
        return Vec::new();
    }
    let local = campaign.local_time(at);
    let mut out = Vec::new();
    for region in &campaign.regions {
        if !region.polygon.contains(point) {
            continue;
        }
        for window in &region.windows {
            if window.contains_local(&local) {
                out.push((region.id.clone(), window.id.clone()));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Coverage {
    counts: BTreeMap<CellKey, u64>,
    hourly: BTreeMap<RegionId, [u64; 24]>,
}

impl Coverage {
    /// Zeroed counters for every cell of the campaign.
    pub fn new(campaign: &Campaign) -> Self {
        let mut cov = Coverage::default();
        for region in &campaign.regions {
            cov.hourly.insert(region.id.clone(), [0; 24]);
            for w in &region.windows {
                cov.counts.insert((region.id.clone(), w.id.clone()), 0);
            }
        }
        cov
    }

    /// Counts one accepted measurement; returns the cells it landed in.
    pub fn apply(&mut self, campaign: &Campaign, m: &Measurement) -> Vec<CellKey> {
        let matched = match_cells(campaign, &m.at, &m.point);
        if matched.is_empty() {
            return matched;
        }
        let hour = campaign.local_time(&m.at).hour() as usize;
        let mut last_region: Option<&RegionId> = None;
        for key in &matched {
            *self.counts.entry(key.clone()).or_insert(0) += 1;
            if last_region != Some(&key.0) {
                self.hourly.entry(key.0.clone()).or_insert([0; 24])[hour] += 1;
                last_region = Some(&key.0);
            }
        }
        matched
    }

    /// Coverage obtained by folding [`Coverage::apply`] over `measurements`.
    pub fn recount<'a>(campaign: &Campaign, measurements: impl IntoIterator<Item = &'a Measurement>) -> Self {
        let mut cov = Coverage::new(campaign);
        for m in measurements {
            cov.apply(campaign, m);
        }
        cov
    }

    pub fn count(&self, region: &RegionId, window: &WindowId) -> u64 {
        self.counts.get(&(region.clone(), window.clone())).copied().unwrap_or(0)
    }

    pub fn hourly(&self, region: &RegionId) -> [u64; 24] {
        self.hourly.get(region).copied().unwrap_or([0; 24])
    }

    /// Cells in campaign order (regions, then their windows).
    pub fn cells(&self, campaign: &Campaign) -> Vec<CoverageCell> {
        campaign
            .regions
            .iter()
            .flat_map(|r| r.windows.iter().map(move |w| (r, w)))
            .map(|(r, w)| CoverageCell::new(r, &w.id, self.count(&r.id, &w.id)))
            .collect()
    }

    pub fn region_cells(&self, region: &Region) -> Vec<CoverageCell> {
        region
            .windows
            .iter()
            .map(|w| CoverageCell::new(region, &w.id, self.count(&region.id, &w.id)))
            .collect()
    }

    /// Unweighted mean completeness over all cells; 0 when there are none.
    pub fn avg_completion(&self, campaign: &Campaign) -> f64 {
        let cells = self.cells(campaign);
        mean(cells.iter().map(|c| c.completeness))
    }

    pub fn completeness_report(&self, campaign: &Campaign) -> CompletenessReport {
        let cells = self.cells(campaign);
        let regions = campaign
            .regions
            .iter()
            .map(|r| {
                let rc = self.region_cells(r);
                RegionSummary {
                    region_id: r.id.clone(),
                    label: r.label.clone(),
                    completeness: mean(rc.iter().map(|c| c.completeness)),
                    hourly: self.hourly(&r.id),
                }
            })
            .collect();
        CompletenessReport {
            campaign_id: campaign.id.clone(),
            avg_completion: mean(cells.iter().map(|c| c.completeness)),
            cells,
            regions,
        }
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCell {
    pub region_id: RegionId,
    pub window_id: WindowId,
    pub count: u64,
    pub target: u64,
    pub max_count: Option<u64>,
    pub saturated: bool,
    #[serde(serialize_with = "round4")]
    pub completeness: f64,
}

impl CoverageCell {
    fn new(region: &Region, window: &WindowId, count: u64) -> Self {
        CoverageCell {
            region_id: region.id.clone(),
            window_id: window.clone(),
            count,
            target: region.quota.min_count,
            max_count: region.quota.max_count,
            saturated: region.quota.is_saturated(count),
            completeness: completeness(count, region.quota.min_count),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub region_id: RegionId,
    pub label: String,
    #[serde(serialize_with = "round4")]
    pub completeness: f64,
    /// Matched measurements per campaign-local hour of day.
    pub hourly: [u64; 24],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletenessReport {
    pub campaign_id: CampaignId,
    #[serde(serialize_with = "round4")]
    pub avg_completion: f64,
    pub cells: Vec<CoverageCell>,
    pub regions: Vec<RegionSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapCell {
    pub col: i64,
    pub row: i64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub origin: GeoPoint,
    pub cell_deg: f64,
    pub cols: i64,
    pub rows: i64,
    pub total: u64,
    /// Non-empty cells ordered by (row, col).
    pub cells: Vec<HeatmapCell>,
}

/// Bins every retained measurement, in or out of area, on a grid anchored at
/// the minimum corner of the campaign extent (regions plus points).
pub fn heatmap<'a>(
    campaign: &Campaign,
    measurements: impl IntoIterator<Item = &'a Measurement> + Clone,
    cell_deg: f64,
) -> Result<Heatmap, CoverageError> {
    if !(cell_deg.is_finite() && cell_deg > 0.0) {
        return Err(CoverageError::InvalidCellSize);
    }
    let region_box = campaign
        .regions
        .iter()
        .map(|r| r.polygon.bounding_box())
        .reduce(BoundingBox::union);
    let extent = measurements.clone().into_iter().fold(region_box, |bb, m| match bb {
        Some(bb) => Some(bb.extend(m.point)),
        None => Some(BoundingBox::from_point(m.point)),
    });
    let extent = extent.ok_or(CoverageError::EmptyCampaignExtent)?;
    let mut bins: BTreeMap<(i64, i64), u64> = BTreeMap::new();
    let mut total = 0;
    for m in measurements {
        let c = grid_cell(&m.point, &extent.min, cell_deg);
        *bins.entry((c.row, c.col)).or_insert(0) += 1;
        total += 1;
    }
    let far = grid_cell(&extent.max, &extent.min, cell_deg);
    Ok(Heatmap {
        origin: extent.min,
        cell_deg,
        cols: far.col + 1,
        rows: far.row + 1,
        total,
        cells: bins
            .into_iter()
            .map(|((row, col), count)| HeatmapCell { col, row, count })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignStats {
    pub cities: u64,
    pub participants: u64,
    pub regions: u64,
    pub experimentation_days: u64,
    pub measurements: u64,
    pub avg_completion: f64,
}

/// What [`stats`] needs from one campaign.
pub struct StatsInput<'a> {
    pub campaign: &'a Campaign,
    pub coverage: &'a Coverage,
    pub contributors: &'a BTreeSet<String>,
    pub measurements: u64,
}

/// Group statistics. Experimentation days are the whole days between the
/// earliest start and the latest end in the group, capped at `now`.
pub fn stats(group: &[StatsInput<'_>], now: DateTime<Utc>) -> CampaignStats {
    let mut participants = BTreeSet::new();
    let mut completeness = Vec::new();
    let mut regions = 0;
    let mut measurements = 0;
    for input in group {
        participants.extend(input.contributors.iter().map(String::as_str));
        completeness.extend(input.coverage.cells(input.campaign).into_iter().map(|c| c.completeness));
        regions += input.campaign.regions.len() as u64;
        measurements += input.measurements;
    }
    let experimentation_days = match (
        group.iter().map(|i| i.campaign.date_range.start).min(),
        group.iter().map(|i| i.campaign.date_range.end).max(),
    ) {
        (Some(start), Some(end)) => {
            let elapsed: Duration = end.min(now) - start;
            elapsed.num_days().max(0) as u64
        }
        _ => 0,
    };
    CampaignStats {
        cities: group.len() as u64,
        participants: participants.len() as u64,
        regions,
        experimentation_days,
        measurements,
        avg_completion: mean(completeness.into_iter()),
    }
}
