//! Crowdsensing campaign orchestration: campaign definitions with spatial,
//! temporal and volume constraints, measurement ingestion with per-campaign
//! pseudonyms, coverage accounting, and volunteer guidance.

pub mod campaign;
pub mod coverage;
pub mod geo;
pub mod guidance;
pub mod store;
pub mod time;

pub use campaign::{Campaign, CampaignDraft, CampaignError, CampaignId, RegionId, Status, WindowId};
pub use coverage::{CampaignStats, CompletenessReport, Coverage, Heatmap};
pub use geo::{GeoPoint, Polygon};
pub use guidance::Recommendation;
pub use store::{Measurement, Reading, Store, StoreError, StoreOptions};
