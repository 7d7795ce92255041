//! Region ranking for volunteers.
//!
//! score = priority × deficit / (1 + distance), where deficit is the mean
//! shortfall `1 - completeness` over the region's currently active cells and
//! distance is measured in degrees to the region's bounding-box centre.

use std::cmp::Ordering;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::campaign::{Campaign, Region, RegionId, Status, TimeWindow, WindowId};
use crate::coverage::{Coverage, CoverageCell};
use crate::geo::GeoPoint;

/// How far ahead a closed window may open and still make its region eligible.
pub const LOOKAHEAD_MINUTES: i64 = 120;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GuidanceError {
    #[error("campaign is not running")]
    CampaignNotRunning,
    #[error("k must be at least 1")]
    InvalidK,
}

impl GuidanceError {
    pub fn code(&self) -> &'static str {
        match self {
            GuidanceError::CampaignNotRunning => "CAMPAIGN_NOT_RUNNING",
            GuidanceError::InvalidK => "INVALID_K",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub region_id: RegionId,
    pub score: f64,
    pub deficit: f64,
    pub distance_deg: f64,
    pub active_window: WindowId,
}

fn active_windows<'a>(campaign: &Campaign, region: &'a Region, now: &DateTime<Utc>) -> Vec<&'a TimeWindow> {
    region
        .windows
        .iter()
        .filter(|w| campaign.window_matches(w, now))
        .collect()
}

/// First window of the region to open within the lookahead horizon.
fn upcoming_window<'a>(campaign: &Campaign, region: &'a Region, now: &DateTime<Utc>) -> Option<&'a TimeWindow> {
    (1..=LOOKAHEAD_MINUTES).find_map(|m| {
        let t = *now + Duration::minutes(m);
        region.windows.iter().find(|w| campaign.window_matches(w, &t))
    })
}

/// Cells the deficit is computed over: those of windows active at `now`, or
/// every cell of the region when none is active.
fn deficit_cells(campaign: &Campaign, coverage: &Coverage, region: &Region, now: &DateTime<Utc>) -> Vec<CoverageCell> {
    let active = active_windows(campaign, region, now);
    let cells = coverage.region_cells(region);
    if active.is_empty() {
        cells
    } else {
        cells
            .into_iter()
            .filter(|c| active.iter().any(|w| w.id == c.window_id))
            .collect()
    }
}

fn mean_shortfall(cells: &[CoverageCell]) -> f64 {
    if cells.is_empty() {
        return 0.0;
    }
    cells.iter().map(|c| 1.0 - c.completeness).sum::<f64>() / cells.len() as f64
}

pub fn deficit(campaign: &Campaign, coverage: &Coverage, region: &Region, now: &DateTime<Utc>) -> f64 {
    mean_shortfall(&deficit_cells(campaign, coverage, region, now))
}

pub fn score(priority: f64, deficit: f64, distance_deg: f64) -> f64 {
    priority * deficit / (1.0 + distance_deg)
}

/// Ranks eligible regions, best first, ties broken by region id.
pub fn recommend(
    campaign: &Campaign,
    coverage: &Coverage,
    location: &GeoPoint,
    now: &DateTime<Utc>,
    k: usize,
) -> Result<Vec<Recommendation>, GuidanceError> {
    if campaign.status != Status::Running {
        return Err(GuidanceError::CampaignNotRunning);
    }
    if k == 0 {
        return Err(GuidanceError::InvalidK);
    }
    let mut out = Vec::new();
    for region in &campaign.regions {
        let window = match active_windows(campaign, region, now).first() {
            Some(w) => *w,
            None => match upcoming_window(campaign, region, now) {
                Some(w) => w,
                None => continue,
            },
        };
        let cells = deficit_cells(campaign, coverage, region, now);
        if cells.iter().all(|c| c.saturated) {
            continue;
        }
        let deficit = mean_shortfall(&cells);
        let distance_deg = location.distance_deg(&region.polygon.bounding_box().center());
        let score = score(region.priority, deficit, distance_deg);
        if score <= 0.0 {
            continue;
        }
        out.push(Recommendation {
            region_id: region.id.clone(),
            score,
            deficit,
            distance_deg,
            active_window: window.id.clone(),
        });
    }
    out.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.region_id.cmp(&b.region_id))
    });
    out.truncate(k);
    Ok(out)
}
