//! Instance families shared by the integration suites.
#![allow(dead_code)]

use peakshaver::gen::{generate_instance, GenConfig};
use peakshaver::model::{ChargingRequest, Instance};

/// Small instances the exact oracle can solve: T = 6, two stations with
/// C_j = 6 above every rate (k ≤ 4), C_total = 9 so the global cap binds,
/// s = 1.5 and 4..=10 EVs depending on the seed.
pub fn small_config(seed: u64) -> GenConfig {
    GenConfig {
        horizon: 6,
        stations: 2,
        evs: 4 + (seed % 7) as usize,
        local_cap: 6.0,
        global_cap: 9.0,
        slackness: 1.5,
        rate_min: 1,
        rate_max: 4,
        deadline_windows: vec![(2, 3), (4, 6)],
        seed,
        ..GenConfig::default()
    }
}

pub fn small(seed: u64) -> Instance {
    generate_instance(&small_config(seed)).expect("valid config")
}

/// Like [`small`] with 3..=8 EVs, cheap enough for exhaustive checks.
pub fn tiny(seed: u64) -> Instance {
    generate_instance(&GenConfig {
        evs: 3 + (seed % 6) as usize,
        ..small_config(seed)
    })
    .expect("valid config")
}

pub fn default_scale(seed: u64) -> Instance {
    generate_instance(&GenConfig {
        seed,
        ..GenConfig::default()
    })
    .expect("valid config")
}

pub fn scaled(seed: u64) -> GenConfig {
    GenConfig {
        seed,
        ..GenConfig::scaled_default()
    }
}

pub fn ev(
    id: usize,
    station: usize,
    demand: f64,
    deadline: usize,
    max_rate: f64,
    value: f64,
) -> ChargingRequest {
    ChargingRequest {
        id,
        station,
        demand,
        deadline,
        max_rate,
        value,
    }
}

/// The two-EV instance where plain greedy keeps the cheap EV and the
/// exchange phase recovers the valuable one.
pub fn pathology() -> Instance {
    Instance::new(
        1,
        vec![10.0],
        10.0,
        1.0,
        vec![ev(1, 1, 1.0, 1, 1.0, 2.0), ev(2, 1, 10.0, 1, 10.0, 10.0)],
    )
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}
