use super::*;
use crate::campaign::{artifact_checksum, DateRange, Quota, WindowSpec};
use crate::geo::GeoJsonPolygon;
use crate::time::{parse_instant, FixedClock};

fn at(s: &str) -> DateTime<Utc> {
    parse_instant(s).unwrap()
}

fn square(x0: f64, y0: f64, side: f64) -> GeoJsonPolygon {
    GeoJsonPolygon::from_vertices(&[
        GeoPoint::new(x0, y0),
        GeoPoint::new(x0 + side, y0),
        GeoPoint::new(x0 + side, y0 + side),
        GeoPoint::new(x0, y0 + side),
    ])
}

fn options() -> StoreOptions {
    StoreOptions { clock: Arc::new(FixedClock(at("2016-06-20T00:00:00Z"))), secret_seed: Some(9) }
}

fn draft() -> CampaignDraft {
    CampaignDraft {
        title: "WiFi scanner".into(),
        description: "Record WiFi access points".into(),
        data_use: "Geolocation".into(),
        results_url: "https://example.org/wifi".into(),
        date_range: DateRange { start: at("2016-06-06T00:00:00Z"), end: at("2016-06-11T00:00:00Z") },
        tz_offset_minutes: 0,
        required_sensor_plugins: vec!["location".into()],
    }
}

/// Running campaign with one 0..1 square region active 06:00-24:00.
fn running(store: &Store) -> CampaignId {
    for (id, public) in [("location", true), ("wifi", false)] {
        if !store.sensor_plugins(false).iter().any(|p| p.id.as_str() == id) {
            store
                .register_sensor_plugin(SensorPluginSpec { id: id.into(), name: id.into(), modality: id.into(), public })
                .unwrap();
        }
    }
    let c = store.create_campaign(draft()).unwrap();
    store
        .add_region(
            &c.id,
            &RegionDraft {
                id: Some("centre".into()),
                label: "Centre".into(),
                polygon: square(0.0, 0.0, 1.0),
                windows: vec![WindowSpec { id: Some("day".into()), start: "06:00".into(), end: "24:00".into(), days: None }],
                quota: Quota { min_count: 4, max_count: Some(6) },
                priority: None,
            },
        )
        .unwrap();
    let artifact = b"experiment";
    store
        .attach_experiment_plugin(
            &c.id,
            ExperimentPluginSpec {
                id: "wifi-exp".into(),
                version: "1".into(),
                checksum: artifact_checksum(artifact),
                required_sensors: vec!["wifi".into()],
            },
            artifact,
        )
        .unwrap();
    store.set_status(&c.id, Status::Running).unwrap();
    c.id
}

fn volunteer(store: &Store, raw: &str, c: &CampaignId) {
    store.enable_sensors(raw, vec!["location".into(), "wifi".into()]).unwrap();
    assert!(store.join_experiment(raw, c).unwrap().missing_sensors.is_empty());
}

fn reading(ts: &str, lon: f64, lat: f64) -> Reading {
    Reading { sensor_id: "wifi".into(), at: at(ts), point: GeoPoint::new(lon, lat), value: "3".into() }
}

#[test]
fn accepted_reading_counts() {
    let store = Store::in_memory_with(options());
    let c = running(&store);
    volunteer(&store, "device-0001", &c);
    let out = store.ingest(&c, "device-0001", &[reading("2016-06-06T09:00:00Z", 0.5, 0.5)]).unwrap();
    assert_eq!(out, IngestOutcome { accepted: 1, rejected: vec![] });
    let (campaign, cov) = store.coverage_snapshot(&c).unwrap();
    assert_eq!(cov.cells(&campaign)[0].count, 1);
}

#[test]
fn out_of_area_retained_but_uncounted() {
    let store = Store::in_memory_with(options());
    let c = running(&store);
    volunteer(&store, "device-0001", &c);
    let out = store.ingest(&c, "device-0001", &[reading("2016-06-06T09:00:00Z", 5.0, 5.0)]).unwrap();
    assert_eq!(out.accepted, 1);
    let (campaign, cov) = store.coverage_snapshot(&c).unwrap();
    assert_eq!(cov.cells(&campaign)[0].count, 0);
    assert_eq!(store.export_records(&c, &ExportFilter::default()).unwrap().len(), 1);
}

#[test]
fn power_off_rejects_and_is_idempotent() {
    let store = Store::in_memory_with(options());
    let c = running(&store);
    volunteer(&store, "device-0001", &c);
    store.set_power("device-0001", false).unwrap();
    assert!(!store.set_power("device-0001", false).unwrap().powered_on);
    let out = store.ingest(&c, "device-0001", &[reading("2016-06-06T09:00:00Z", 0.5, 0.5)]).unwrap();
    assert_eq!(out.accepted, 0);
    assert_eq!(out.rejected, vec![Rejected { index: 0, reason: IngestRejection::VolunteerPoweredOff }]);
    assert_eq!(out.rejected[0].reason.code(), "VOLUNTEER_POWERED_OFF");
    store.set_power("device-0001", true).unwrap();
    assert_eq!(store.ingest(&c, "device-0001", &[reading("2016-06-06T09:00:00Z", 0.5, 0.5)]).unwrap().accepted, 1);
}

#[test]
fn rejection_reasons() {
    let store = Store::in_memory_with(options());
    let c = running(&store);
    // Unknown volunteer is auto-registered but has not joined.
    let out = store.ingest(&c, "stranger-01", &[reading("2016-06-06T09:00:00Z", 0.5, 0.5)]).unwrap();
    assert_eq!(out.rejected[0].reason, IngestRejection::VolunteerNotJoined);
    assert_eq!(store.volunteer_stats("stranger-01").unwrap().total, 0);

    volunteer(&store, "device-0001", &c);
    let mut noise = reading("2016-06-06T09:00:00Z", 0.5, 0.5);
    noise.sensor_id = "noise".into();
    let mut big = reading("2016-06-06T09:00:00Z", 0.5, 0.5);
    big.value = "x".repeat(MAX_VALUE_BYTES + 1);
    let batch = [
        noise,
        reading("2016-06-21T00:00:01Z", 0.5, 0.5),
        reading("2016-06-06T09:00:00Z", 200.0, 0.5),
        big,
        reading("2016-06-20T23:59:59Z", 0.5, 0.5),
    ];
    let out = store.ingest(&c, "device-0001", &batch).unwrap();
    let reasons: Vec<_> = out.rejected.iter().map(|r| (r.index, r.reason)).collect();
    assert_eq!(
        reasons,
        vec![
            (0, IngestRejection::SensorNotEnabled),
            (1, IngestRejection::FutureTimestamp),
            (2, IngestRejection::InvalidCoordinates),
            (3, IngestRejection::ValueTooLarge),
        ]
    );
    assert_eq!(out.accepted, 1);

    store.set_status(&c, Status::Paused).unwrap();
    let out = store.ingest(&c, "device-0001", &[reading("2016-06-06T09:00:00Z", 0.5, 0.5)]).unwrap();
    assert_eq!(out.rejected[0].reason, IngestRejection::CampaignNotRunning);
    assert!(matches!(
        store.ingest(&"nope".into(), "device-0001", &[]),
        Err(StoreError::UnknownCampaign(_))
    ));
}

#[test]
fn join_reports_missing_sensors() {
    let store = Store::in_memory_with(options());
    let c = running(&store);
    store.enable_sensors("device-0002", vec!["location".into()]).unwrap();
    assert_eq!(store.join_experiment("device-0002", &c).unwrap().missing_sensors, vec![PluginId::from("wifi")]);
    store.set_status(&c, Status::Completed).unwrap();
    assert!(matches!(
        store.join_experiment("device-0002", &c),
        Err(StoreError::Campaign(CampaignError::CampaignCompleted))
    ));
    let draft_campaign = store.create_campaign(draft()).unwrap();
    assert!(matches!(
        store.join_experiment("device-0002", &draft_campaign.id),
        Err(StoreError::CampaignNotOpen(Status::Draft))
    ));
}

#[test]
fn volunteer_stats_count_accepted_only() {
    let store = Store::in_memory_with(options());
    let c = running(&store);
    assert!(matches!(store.volunteer_stats("device-0003"), Err(StoreError::UnknownVolunteer)));
    volunteer(&store, "device-0003", &c);
    assert_eq!(store.volunteer_stats("device-0003").unwrap().total, 0);
    let good = reading("2016-06-06T09:00:00Z", 0.5, 0.5);
    let late = reading("2016-06-06T10:00:00Z", 3.0, 0.5);
    let bad = reading("2030-01-01T00:00:00Z", 0.5, 0.5);
    store.ingest(&c, "device-0003", &[good.clone(), bad.clone(), late, bad, good]).unwrap();
    let stats = store.volunteer_stats("device-0003").unwrap();
    assert_eq!(stats.total, 3);
    assert_eq!(stats.per_campaign[&c], 3);
    assert_eq!(stats.first_at, Some(at("2016-06-06T09:00:00Z")));
    assert_eq!(stats.last_at, Some(at("2016-06-06T10:00:00Z")));
}

#[test]
fn failed_update_is_atomic() {
    let store = Store::in_memory_with(options());
    let c = running(&store);
    let before = serde_json::to_vec(&store.campaign(&c).unwrap()).unwrap();
    let bowtie = GeoJsonPolygon {
        kind: "Polygon".into(),
        coordinates: vec![vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]],
    };
    let patch = RegionPatch { polygon: Some(bowtie), priority: Some(4.0), ..Default::default() };
    let err = store.update_region(&c, &"centre".into(), &patch).unwrap_err();
    assert_eq!(err.code(), "SELF_INTERSECTING");
    assert_eq!(serde_json::to_vec(&store.campaign(&c).unwrap()).unwrap(), before);
}

#[test]
fn expanding_polygon_recounts_retained_points() {
    let store = Store::in_memory_with(options());
    let c = running(&store);
    volunteer(&store, "device-0004", &c);
    let outside: Vec<_> = (0..7).map(|i| reading("2016-06-07T12:00:00Z", 1.5 + 0.1 * i as f64, 0.5)).collect();
    store.ingest(&c, "device-0004", &outside).unwrap();
    store.ingest(&c, "device-0004", &[reading("2016-06-07T12:00:00Z", 0.5, 0.5)]).unwrap();
    let count = |store: &Store| store.coverage_snapshot(&c).map(|(cmp, cov)| cov.cells(&cmp)[0].count).unwrap();
    assert_eq!(count(&store), 1);
    store
        .update_region(&c, &"centre".into(), &RegionPatch { polygon: Some(square(0.0, 0.0, 3.0)), ..Default::default() })
        .unwrap();
    assert_eq!(count(&store), 8);
    store
        .update_region(&c, &"centre".into(), &RegionPatch { polygon: Some(square(0.0, 0.0, 1.55)), ..Default::default() })
        .unwrap();
    assert_eq!(count(&store), 2);
    assert_eq!(store.recount_snapshot(&c).unwrap(), store.coverage_snapshot(&c).unwrap().1);
}

#[test]
fn export_is_deterministic_and_anonymous() {
    let store = Store::in_memory_with(options());
    let c = running(&store);
    assert_eq!(
        store.export(&c, ExportFormat::Csv, &ExportFilter::default()).unwrap(),
        b"campaign_id,volunteer,sensor_id,timestamp_utc,lon,lat,value\n"
    );
    volunteer(&store, "device-secret-77", &c);
    store
        .ingest(
            &c,
            "device-secret-77",
            &[reading("2016-06-07T12:00:00Z", 0.5, 0.5), reading("2016-06-06T12:00:00Z", 4.0, 0.5)],
        )
        .unwrap();
    for format in [ExportFormat::Csv, ExportFormat::Json] {
        let a = store.export(&c, format, &ExportFilter::default()).unwrap();
        let b = store.export(&c, format, &ExportFilter::default()).unwrap();
        assert_eq!(a, b);
        assert!(!String::from_utf8(a).unwrap().contains("device-secret-77"));
    }
    let records = store.export_records(&c, &ExportFilter::default()).unwrap();
    assert_eq!(records[0].timestamp_utc, "2016-06-06T12:00:00.000Z");
    let filtered = store
        .export_records(&c, &ExportFilter { region: Some("centre".into()), window: None })
        .unwrap();
    assert_eq!(filtered.len(), 1);
    assert!(matches!(
        store.export_records(&c, &ExportFilter { region: Some("ghost".into()), window: None }),
        Err(StoreError::Campaign(CampaignError::UnknownRegion(_)))
    ));
}

#[test]
fn reingest_reproduces_stats_and_export() {
    let store = Store::in_memory_with(options());
    let c = running(&store);
    for v in ["device-a-001", "device-b-002"] {
        volunteer(&store, v, &c);
        store
            .ingest(&c, v, &[reading("2016-06-07T12:00:00Z", 0.5, 0.5), reading("2016-06-07T12:00:00Z", 9.0, 9.0)])
            .unwrap();
    }
    let records = store.export_records(&c, &ExportFilter::default()).unwrap();
    let fresh = Store::in_memory_with(StoreOptions { secret_seed: Some(77), ..options() });
    let c2 = running(&fresh);
    assert_eq!(c2, c);
    let out = fresh.reingest(&c2, &records).unwrap();
    assert_eq!(out.accepted, records.len());
    assert_eq!(fresh.stats(&[c2.clone()]).unwrap(), store.stats(&[c.clone()]).unwrap());
    for format in [ExportFormat::Csv, ExportFormat::Json] {
        let filter = ExportFilter::default();
        assert_eq!(fresh.export(&c2, format, &filter).unwrap(), store.export(&c, format, &filter).unwrap());
    }
}

#[test]
fn reingest_refuses_non_pseudonyms() {
    let store = Store::in_memory_with(options());
    let c = running(&store);
    let good = ExportRecord {
        campaign_id: c.clone(),
        volunteer: "0123456789abcdef".into(),
        sensor_id: "wifi".into(),
        timestamp_utc: "2016-06-07T12:00:00.000Z".into(),
        lon: 0.5,
        lat: 0.5,
        value: "-70".into(),
    };
    let cases = [
        (ExportRecord { volunteer: "device-raw-id".into(), ..good.clone() }, IngestRejection::InvalidPseudonym),
        (ExportRecord { volunteer: "0123456789ABCDEF".into(), ..good.clone() }, IngestRejection::InvalidPseudonym),
        (ExportRecord { sensor_id: "sonar".into(), ..good.clone() }, IngestRejection::SensorNotEnabled),
        (ExportRecord { timestamp_utc: "yesterday".into(), ..good.clone() }, IngestRejection::InvalidTimestamp),
        (ExportRecord { lat: 95.0, ..good.clone() }, IngestRejection::InvalidCoordinates),
    ];
    let records: Vec<ExportRecord> = std::iter::once(good).chain(cases.iter().map(|(r, _)| r.clone())).collect();
    let out = store.reingest(&c, &records).unwrap();
    assert_eq!(out.accepted, 1);
    let reasons: Vec<_> = out.rejected.iter().map(|r| (r.index, r.reason)).collect();
    let expected: Vec<_> = cases.iter().enumerate().map(|(i, (_, why))| (i + 1, *why)).collect();
    assert_eq!(reasons, expected);
}

#[test]
fn state_survives_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let (c, stats, export) = {
        let store = Store::open(dir.path(), options()).unwrap();
        let c = running(&store);
        volunteer(&store, "device-0005", &c);
        store.ingest(&c, "device-0005", &[reading("2016-06-07T12:00:00Z", 0.5, 0.5)]).unwrap();
        store
            .update_region(&c, &"centre".into(), &RegionPatch { quota: Some(Quota { min_count: 2, max_count: None }), ..Default::default() })
            .unwrap();
        store.set_power("device-0005", false).unwrap();
        (c.clone(), store.stats(&[c.clone()]).unwrap(), store.export(&c, ExportFormat::Csv, &ExportFilter::default()).unwrap())
    };
    let store = Store::open(dir.path(), options()).unwrap();
    assert_eq!(store.stats(&[c.clone()]).unwrap(), stats);
    assert_eq!(store.export(&c, ExportFormat::Csv, &ExportFilter::default()).unwrap(), export);
    assert!(!store.volunteer("device-0005").unwrap().powered_on);
    assert_eq!(store.campaign(&c).unwrap().status, Status::Running);
    assert_eq!(store.sensor_plugins(false).len(), 2);
    // Appending after reopen continues the sequence.
    store.set_power("device-0005", true).unwrap();
    store.ingest(&c, "device-0005", &[reading("2016-06-07T13:00:00Z", 0.5, 0.5)]).unwrap();
    let m = store.measurements(&c).unwrap();
    assert!(m[1].seq > m[0].seq);
    drop(store);
    let store = Store::open(dir.path(), options()).unwrap();
    assert_eq!(store.measurements(&c).unwrap().len(), 2);
}

#[test]
fn truncated_campaign_log_refuses_to_open() {
    let dir = tempfile::tempdir().unwrap();
    let c = {
        let store = Store::open(dir.path(), options()).unwrap();
        let c = running(&store);
        volunteer(&store, "device-0006", &c);
        store.ingest(&c, "device-0006", &[reading("2016-06-07T12:00:00Z", 0.5, 0.5)]).unwrap();
        c
    };
    let path = dir.path().join("campaigns").join(format!("{c}.log"));
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
    match Store::open(dir.path(), options()) {
        Err(StoreError::Log(LogError::Corrupt { last_valid_seq, .. })) => assert_eq!(last_valid_seq, 4),
        Err(other) => panic!("unexpected error {other}"),
        Ok(_) => panic!("corrupt log accepted"),
    }
}

#[test]
fn concurrent_ingest_is_consistent() {
    let store = Arc::new(Store::in_memory_with(options()));
    let c = running(&store);
    let volunteers: Vec<String> = (0..8).map(|i| format!("device-thread-{i}")).collect();
    for v in &volunteers {
        volunteer(&store, v, &c);
    }
    std::thread::scope(|s| {
        for v in &volunteers {
            let store = Arc::clone(&store);
            let c = c.clone();
            s.spawn(move || {
                for i in 0..50 {
                    let r = reading("2016-06-07T12:00:00Z", (i % 10) as f64 * 0.2, 0.5);
                    store.ingest(&c, v, &[r]).unwrap();
                }
            });
        }
    });
    let stats = store.stats(&[c.clone()]).unwrap();
    assert_eq!(stats.measurements, 400);
    assert_eq!(stats.participants, 8);
    assert_eq!(store.recount_snapshot(&c).unwrap(), store.coverage_snapshot(&c).unwrap().1);
    let seqs: Vec<u64> = store.measurements(&c).unwrap().iter().map(|m| m.seq).collect();
    assert!(seqs.windows(2).all(|w| w[0] < w[1]));
}
