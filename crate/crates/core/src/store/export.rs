//! JSON and CSV export of retained measurements.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Measurement, StoreError};
use crate::campaign::{CampaignId, PluginId};
use crate::time::format_instant;

pub const CSV_HEADER: [&str; 7] = ["campaign_id", "volunteer", "sensor_id", "timestamp_utc", "lon", "lat", "value"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Json,
    Csv,
}

impl ExportFormat {
    pub fn content_type(&self) -> &'static str {
        match self {
            ExportFormat::Json => "application/json",
            ExportFormat::Csv => "text/csv",
        }
    }
}

impl FromStr for ExportFormat {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ExportFormat::Json),
            "csv" => Ok(ExportFormat::Csv),
            other => Err(StoreError::UnknownFormat(other.to_owned())),
        }
    }
}

/// One exported measurement. Field names match the CSV header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportRecord {
    pub campaign_id: CampaignId,
    pub volunteer: String,
    pub sensor_id: PluginId,
    pub timestamp_utc: String,
    pub lon: f64,
    pub lat: f64,
    pub value: String,
}

impl From<&Measurement> for ExportRecord {
    fn from(m: &Measurement) -> Self {
        ExportRecord {
            campaign_id: m.campaign_id.clone(),
            volunteer: m.volunteer.clone(),
            sensor_id: m.sensor_id.clone(),
            timestamp_utc: format_instant(&m.at),
            lon: m.point.lon,
            lat: m.point.lat,
            value: m.value.clone(),
        }
    }
}

/// Encodes records, already in export order.
pub fn encode(records: &[ExportRecord], format: ExportFormat) -> Vec<u8> {
    match format {
        ExportFormat::Json => {
            let mut out = serde_json::to_vec(records).expect("records serialize");
            out.push(b'\n');
            out
        }
        ExportFormat::Csv => {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .quote_style(csv::QuoteStyle::Necessary)
                .from_writer(Vec::new());
            w.write_record(CSV_HEADER).expect("in-memory write");
            for r in records {
                w.write_record([
                    r.campaign_id.as_str(),
                    r.volunteer.as_str(),
                    r.sensor_id.as_str(),
                    r.timestamp_utc.as_str(),
                    &r.lon.to_string(),
                    &r.lat.to_string(),
                    r.value.as_str(),
                ])
                .expect("in-memory write");
            }
            w.into_inner().expect("in-memory flush")
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DecodeError {
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("unexpected csv header")]
    Header,
}

/// Parses an export produced by [`encode`].
pub fn decode(bytes: &[u8], format: ExportFormat) -> Result<Vec<ExportRecord>, DecodeError> {
    match format {
        ExportFormat::Json => Ok(serde_json::from_slice(bytes)?),
        ExportFormat::Csv => {
            let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
            if r.headers()?.iter().ne(CSV_HEADER) {
                return Err(DecodeError::Header);
            }
            Ok(r.deserialize().collect::<Result<Vec<ExportRecord>, _>>()?)
        }
    }
}
