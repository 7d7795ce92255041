#![allow(dead_code)]

use std::sync::Arc;

use campaignd_api::{Client, RunningServer};
use campaignd_core::campaign::{
    artifact_checksum, DateRange, ExperimentPluginSpec, Quota, RegionDraft, SensorPluginSpec, Status, WindowSpec,
};
use campaignd_core::geo::{GeoJsonPolygon, GeoPoint};
use campaignd_core::store::Reading;
use campaignd_core::time::{parse_instant, FixedClock};
use campaignd_core::{CampaignDraft, CampaignId, Store, StoreOptions};
use chrono::{DateTime, Utc};

pub const NOW: &str = "2016-06-08T12:00:00Z";
pub const ARTIFACT: &[u8] = b"wifi-scanner-apk";

pub fn at(s: &str) -> DateTime<Utc> {
    parse_instant(s).unwrap()
}

pub fn options() -> StoreOptions {
    StoreOptions { clock: Arc::new(FixedClock(at(NOW))), secret_seed: Some(5) }
}

pub fn start(store: Store) -> (Arc<Store>, RunningServer, Client) {
    let store = Arc::new(store);
    let server = RunningServer::spawn(Arc::clone(&store), "127.0.0.1:0").unwrap();
    let client = Client::new(&server.base_url());
    (store, server, client)
}

pub fn square(x0: f64, y0: f64, side: f64) -> GeoJsonPolygon {
    GeoJsonPolygon::from_vertices(&[
        GeoPoint::new(x0, y0),
        GeoPoint::new(x0 + side, y0),
        GeoPoint::new(x0 + side, y0 + side),
        GeoPoint::new(x0, y0 + side),
    ])
}

pub fn draft() -> CampaignDraft {
    CampaignDraft {
        title: "WiFi scanner".into(),
        description: "Access point survey".into(),
        data_use: "Coverage maps".into(),
        results_url: "https://example.org/results".into(),
        date_range: DateRange { start: at("2016-06-06T00:00:00Z"), end: at("2016-06-11T00:00:00Z") },
        tz_offset_minutes: 60,
        required_sensor_plugins: vec!["location".into()],
    }
}

pub fn region(id: &str, x0: f64, min_count: u64) -> RegionDraft {
    RegionDraft {
        id: Some(id.into()),
        label: id.to_uppercase(),
        polygon: square(x0, 0.0, 1.0),
        windows: vec![
            WindowSpec { id: Some("morning".into()), start: "07:00".into(), end: "10:00".into(), days: None },
            WindowSpec { id: Some("evening".into()), start: "17:00".into(), end: "24:00".into(), days: None },
        ],
        quota: Quota { min_count, max_count: Some(min_count * 2) },
        priority: None,
    }
}

pub fn plugin_spec() -> ExperimentPluginSpec {
    ExperimentPluginSpec {
        id: "wifi-scanner".into(),
        version: "1.0.0".into(),
        checksum: artifact_checksum(ARTIFACT),
        required_sensors: vec!["wifi".into()],
    }
}

pub fn register_sensors(client: &Client) {
    for (id, public) in [("location", true), ("wifi", true), ("noise", false)] {
        client
            .register_sensor_plugin(&SensorPluginSpec { id: id.into(), name: id.into(), modality: id.into(), public })
            .unwrap();
    }
}

/// A running campaign with regions `north` (x 0..1) and `south` (x 2..3).
pub fn running_campaign(client: &Client) -> CampaignId {
    let c = client.create_campaign(&draft()).unwrap();
    client.add_region(&c.id, &region("north", 0.0, 3)).unwrap();
    client.add_region(&c.id, &region("south", 2.0, 5)).unwrap();
    client.attach_experiment_plugin(&c.id, &plugin_spec(), ARTIFACT).unwrap();
    client.set_status(&c.id, Status::Running).unwrap();
    c.id
}

pub fn join(client: &Client, volunteer: &str, id: &CampaignId) {
    client.enable_sensors(volunteer, &["location".into(), "wifi".into()]).unwrap();
    assert!(client.join(volunteer, id).unwrap().missing_sensors.is_empty());
}

/// Local 08:00 is 07:00 UTC with the fixture's +60 offset.
pub fn reading(ts: &str, lon: f64, lat: f64) -> Reading {
    Reading { sensor_id: "wifi".into(), at: at(ts), point: GeoPoint::new(lon, lat), value: "-71".into() }
}
