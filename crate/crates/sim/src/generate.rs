//! Volunteer mobility and reading generation.
//!
//! Every volunteer owns a xoshiro256** stream. The stream for volunteer `i`
//! (in scenario order) is `Xoshiro256StarStar::seed_from_u64(seed)` advanced
//! by `i + 1` calls to `jump()`, so streams never overlap and adding a
//! volunteer at the end leaves the others untouched. Per tick a volunteer
//! draws, in order: a new waypoint when the previous one was reached (two
//! uniform draws, lon then lat); then, if an activity window is open at
//! the tick start, one uniform for the fractional reading count and two
//! draws per reading (millisecond offset within the tick, then value).

use campaignd_core::geo::GeoPoint;
use campaignd_core::store::Reading;
use campaignd_core::time::to_local;
use chrono::Duration;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};

use crate::scenario::{Extent, Scenario};

/// Readings of one volunteer in time order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolunteerStream {
    pub volunteer: usize,
    pub readings: Vec<Reading>,
}

pub fn volunteer_rng(seed: u64, index: usize) -> Xoshiro256StarStar {
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    for _ in 0..=index {
        rng.jump();
    }
    rng
}

fn uniform_point(rng: &mut Xoshiro256StarStar, extent: &Extent) -> GeoPoint {
    let lon = extent.min.lon + rng.gen::<f64>() * (extent.max.lon - extent.min.lon);
    let lat = extent.min.lat + rng.gen::<f64>() * (extent.max.lat - extent.min.lat);
    GeoPoint::new(lon, lat)
}

fn lerp(a: GeoPoint, b: GeoPoint, t: f64) -> GeoPoint {
    GeoPoint::new(a.lon + (b.lon - a.lon) * t, a.lat + (b.lat - a.lat) * t)
}

pub fn generate(scenario: &Scenario) -> Vec<VolunteerStream> {
    (0..scenario.volunteers.len()).map(|i| generate_volunteer(scenario, i)).collect()
}

pub fn generate_volunteer(scenario: &Scenario, index: usize) -> VolunteerStream {
    let v = &scenario.volunteers[index];
    let campaign = &scenario.campaigns[v.campaign];
    let sensor = v.reading_sensor(campaign).expect("validated scenario has a reading sensor");
    let windows: Vec<_> = v.activity.iter().enumerate().map(|(k, w)| w.build(k).expect("validated")).collect();
    let tz = campaign.definition.tz_offset_minutes;
    let tick = Duration::minutes(i64::from(scenario.tick_minutes));
    let tick_ms = tick.num_milliseconds();
    let tick_hours = f64::from(scenario.tick_minutes) / 60.0;
    let expected = v.readings_per_hour * tick_hours;
    let step = v.speed_deg_per_hour * tick_hours;

    let mut rng = volunteer_rng(scenario.seed, index);
    let mut pos = v.home;
    let mut waypoint: Option<GeoPoint> = None;
    let mut readings = Vec::new();
    for t in 0..scenario.tick_count() {
        let t0 = scenario.start + tick * t as i32;
        let target = *waypoint.get_or_insert_with(|| uniform_point(&mut rng, &campaign.extent));
        let remaining = pos.distance_deg(&target);
        let next = if remaining <= step {
            waypoint = None;
            target
        } else {
            lerp(pos, target, step / remaining)
        };
        let local = to_local(&t0, tz);
        if windows.iter().any(|w| w.contains_local(&local)) {
            let mut n = expected.floor() as usize;
            if rng.gen::<f64>() < expected.fract() {
                n += 1;
            }
            let mut draws: Vec<(i64, i32)> = (0..n)
                .map(|_| {
                    let offset = rng.gen_range(0..tick_ms);
                    let value = rng.gen_range(-95..=-30);
                    (offset, value)
                })
                .collect();
            draws.sort_unstable();
            for (offset, value) in draws {
                readings.push(Reading {
                    sensor_id: sensor.clone(),
                    at: t0 + Duration::milliseconds(offset),
                    point: lerp(pos, next, offset as f64 / tick_ms as f64),
                    value: value.to_string(),
                });
            }
        }
        pos = next;
    }
    VolunteerStream { volunteer: index, readings }
}
