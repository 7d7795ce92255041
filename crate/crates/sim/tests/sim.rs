use std::collections::BTreeMap;

use campaignd_api::{Client, RunningServer};
use campaignd_core::store::IngestRejection;
use campaignd_core::Store;
use campaignd_sim::generate::generate_volunteer;
use campaignd_sim::{generate, parse_scenario, reference_scenario, run, GroundTruthLedger, Scenario, ScenarioError, REFERENCE_SCENARIO};
use chrono::DateTime;
use serde_json::{json, Value};
use std::sync::Arc;

fn reference_json() -> Value {
    serde_json::from_str(REFERENCE_SCENARIO).unwrap()
}

fn edited(f: impl FnOnce(&mut Value)) -> Result<Scenario, ScenarioError> {
    let mut v = reference_json();
    f(&mut v);
    parse_scenario(&v.to_string())
}

#[test]
fn reference_scenario_is_valid_and_has_table_shape() {
    let s = reference_scenario();
    assert_eq!(s.seed, 42);
    assert_eq!(s.duration_days, 5);
    assert_eq!(s.campaigns.len(), 3);
    assert_eq!(s.campaigns.iter().map(|c| c.regions.len()).sum::<usize>(), 13);
    assert_eq!(s.volunteers.len(), 14);
}

#[test]
fn reference_run_in_process_matches_ledger() {
    let s = reference_scenario();
    let store = Store::in_memory();
    let report = run(&s, &store).unwrap();
    assert!(report.agreement.exact, "{:?}", report.agreement.mismatches);
    let st = &report.service.stats;
    println!(
        "cities {} participants {} regions {} days {} measurements {} avg_completion {:.4} generated {}",
        st.cities, st.participants, st.regions, st.experimentation_days, st.measurements, st.avg_completion,
        report.ledger.generated
    );
    assert_eq!((st.cities, st.participants, st.regions, st.experimentation_days), (3, 14, 13, 5));
    assert!(st.measurements > 7000);
}

#[test]
fn reference_run_over_http_matches_ledger_and_in_process_run() {
    let s = reference_scenario();
    let server = RunningServer::spawn(Arc::new(Store::in_memory()), "127.0.0.1:0").unwrap();
    let client = Client::new(&server.base_url());
    let remote = run(&s, &client).unwrap();
    assert!(remote.agreement.exact, "{:?}", remote.agreement.mismatches);
    assert!(remote.requests > 0);

    let local = run(&s, &Store::in_memory()).unwrap();
    assert_eq!(remote.ledger, local.ledger);
    assert_eq!(remote.service.stats, local.service.stats);
    assert_eq!(remote.service.rejections, local.service.rejections);
}

#[test]
fn same_seed_reproduces_streams_and_ledger() {
    let s = reference_scenario();
    let a = generate(&s);
    let b = generate(&s);
    assert_eq!(a, b);
    let now = DateTime::parse_from_rfc3339("2020-01-01T00:00:00Z").unwrap().to_utc();
    assert_eq!(GroundTruthLedger::compute(&s, &a, now), GroundTruthLedger::compute(&s, &b, now));

    let mut other = s.clone();
    other.seed = 43;
    assert_ne!(generate(&other), a);
}

#[test]
fn volunteer_streams_are_independent_of_fleet_size() {
    let s = reference_scenario();
    let mut fewer = s.clone();
    fewer.volunteers.truncate(5);
    for i in 0..5 {
        assert_eq!(generate_volunteer(&s, i), generate_volunteer(&fewer, i));
    }
}

#[test]
fn streams_are_time_ordered_inside_activity() {
    for stream in generate(&reference_scenario()) {
        assert!(stream.readings.windows(2).all(|w| w[0].at <= w[1].at));
        assert!(!stream.readings.is_empty());
    }
}

#[test]
fn zero_volunteer_scenario_has_empty_ledger() {
    let mut s = reference_scenario();
    s.volunteers.clear();
    let report = run(&s, &Store::in_memory()).unwrap();
    assert!(report.agreement.exact, "{:?}", report.agreement.mismatches);
    assert_eq!(report.ledger.generated, 0);
    assert_eq!(report.service.stats.measurements, 0);
    assert_eq!(report.service.stats.participants, 0);
    assert_eq!(report.service.stats.avg_completion, 0.0);
    assert!(report.service.campaigns.iter().flat_map(|c| &c.cells).all(|c| c.count == 0));
    assert_eq!(report.batches, 0);
}

#[test]
fn tick_that_does_not_divide_a_day_is_invalid() {
    let err = edited(|v| v["tick_minutes"] = json!(7)).unwrap_err();
    assert_eq!(err.code(), "INVALID_TICK");
}

#[test]
fn two_vertex_polygon_is_rejected_with_pointer() {
    let err = edited(|v| {
        v["campaigns"][0]["regions"][0]["polygon"]["coordinates"] = json!([[[0.0, 0.0], [1.0, 1.0]]]);
    })
    .unwrap_err();
    match err {
        ScenarioError::Invalid { pointer, code, .. } => {
            assert_eq!(code, "FEWER_THAN_THREE_VERTICES");
            assert!(pointer.starts_with("/campaigns/0/regions/0/polygon"), "{pointer}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn scenario_errors_point_at_the_field() {
    let cases: Vec<(Box<dyn Fn(&mut Value)>, &str, &str)> = vec![
        (Box::new(|v| v["volunteers"][3]["id"] = json!("abc")), "/volunteers/3/id", "INVALID_VOLUNTEER"),
        (Box::new(|v| v["volunteers"][2]["id"] = v["volunteers"][1]["id"].clone()), "/volunteers/2/id", "DUPLICATE_VOLUNTEER"),
        (Box::new(|v| v["volunteers"][0]["campaign"] = json!(9)), "/volunteers/0/campaign", "UNKNOWN_CAMPAIGN"),
        (Box::new(|v| v["volunteers"][0]["home"] = json!({"lon": 100.0, "lat": 0.0})), "/volunteers/0/home", "INVALID_HOME"),
        (Box::new(|v| v["volunteers"][0]["readings_per_hour"] = json!(-1.0)), "/volunteers/0/readings_per_hour", "INVALID_RATE"),
        (
            Box::new(|v| {
                v["volunteers"][0]["power_off"] = json!([
                    {"start": "2016-06-07T06:00:00Z", "end": "2016-06-07T08:00:00Z"},
                    {"start": "2016-06-07T07:00:00Z", "end": "2016-06-07T09:00:00Z"}
                ])
            }),
            "/volunteers/0/power_off/1",
            "INVALID_INTERVAL",
        ),
        (Box::new(|v| v["redefinitions"][0]["region"] = json!("nowhere")), "/redefinitions/0/region", "UNKNOWN_REGION"),
        (
            Box::new(|v| v["campaigns"][2]["experiment_plugin"]["checksum"] = json!("00")),
            "/campaigns/2/experiment_plugin/checksum",
            "CHECKSUM_MISMATCH",
        ),
        (Box::new(|v| v["sensor_plugins"] = json!([])), "/campaigns/0/definition/required_sensor_plugins/0", "MISSING_SENSOR_PLUGIN"),
    ];
    for (edit, pointer, code) in cases {
        match edited(edit).unwrap_err() {
            ScenarioError::Invalid { pointer: p, code: c, .. } => assert_eq!((p.as_str(), c.as_str()), (pointer, code)),
            other => panic!("{pointer}: {other:?}"),
        }
    }
}

#[test]
fn unknown_fields_and_bad_json_are_parse_errors() {
    assert_eq!(edited(|v| v["surprise"] = json!(1)).unwrap_err().code(), "PARSE_ERROR");
    assert_eq!(parse_scenario("{").unwrap_err().code(), "PARSE_ERROR");
}

#[test]
fn power_off_reduces_accepted_by_ledger_amount() {
    let with = reference_scenario();
    let mut without = with.clone();
    for v in &mut without.volunteers {
        v.power_off.clear();
    }
    assert!(with.volunteers.iter().any(|v| !v.power_off.is_empty()));

    let a = run(&with, &Store::in_memory()).unwrap();
    let b = run(&without, &Store::in_memory()).unwrap();
    assert!(a.agreement.exact && b.agreement.exact);
    assert_eq!(a.ledger.generated, b.ledger.generated);
    let off: u64 = a.ledger.volunteers.values().map(|v| v.powered_off).sum();
    assert!(off > 0);
    assert_eq!(b.service.stats.measurements - a.service.stats.measurements, off);
    let code = IngestRejection::VolunteerPoweredOff.code();
    assert_eq!(a.service.rejections.get(code).copied(), Some(off));
    assert_eq!(b.service.rejections.get(code), None);
}

#[test]
fn redefinition_final_counts_follow_final_polygon() {
    let with = reference_scenario();
    let mut never = with.clone();
    never.redefinitions.clear();
    let mut from_start = never.clone();
    let r = &with.redefinitions[0];
    let region = from_start.campaigns[r.campaign].regions.iter_mut().find(|g| g.id.as_ref() == Some(&r.region)).unwrap();
    region.polygon = r.patch.polygon.clone().unwrap();

    let cells = |s: &Scenario| -> BTreeMap<String, u64> {
        let rep = run(s, &Store::in_memory()).unwrap();
        assert!(rep.agreement.exact, "{:?}", rep.agreement.mismatches);
        rep.service.campaigns[r.campaign].cells.iter().map(|c| (format!("{}/{}", c.region_id, c.window_id), c.count)).collect()
    };
    let (a, b, c) = (cells(&with), cells(&never), cells(&from_start));
    assert_eq!(a, c);
    assert!(a["centro/morning"] + a["centro/evening"] > b["centro/morning"] + b["centro/evening"]);
}
