//! Seeded random instances in the shape of the evaluation setup: 24 hourly
//! slots, EVs that pick their station uniformly and prefer to leave in
//! morning, noon or evening windows.

use rand::distributions::{Distribution, Uniform, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::GenError;
use crate::model::{ChargingRequest, Instance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub horizon: usize,
    pub stations: usize,
    pub evs: usize,
    /// One cap for every station.
    pub local_cap: f64,
    pub global_cap: f64,
    pub slackness: f64,
    pub rate_min: u32,
    pub rate_max: u32,
    /// Inclusive slot windows in which deadlines fall.
    pub deadline_windows: Vec<(usize, usize)>,
    /// Relative weight of each window; empty means uniform.
    pub window_weights: Vec<f64>,
    /// Revenue per kWh is drawn uniformly from this range.
    pub price_min: f64,
    pub price_max: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            horizon: 24,
            stations: 4,
            evs: 200,
            local_cap: 125.0,
            global_cap: 500.0,
            slackness: 1.5,
            rate_min: 1,
            rate_max: 20,
            deadline_windows: vec![(7, 9), (12, 14), (16, 19)],
            window_weights: Vec::new(),
            price_min: 0.5,
            price_max: 1.5,
            seed: 0,
        }
    }
}

impl GenConfig {
    /// Desk-scale variant of the default: 60 EVs, caps 40 per station and
    /// 160 in total.
    pub fn scaled_default() -> Self {
        Self {
            evs: 60,
            local_cap: 40.0,
            global_cap: 160.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |msg: String| Err(GenError::InvalidConfig(msg));
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if self.stations == 0 {
            return bad("need at least one station".into());
        }
        if !(self.local_cap > 0.0) || !(self.global_cap > 0.0) {
            return bad("caps must be positive".into());
        }
        if !(self.slackness >= 1.0) {
            return bad(format!("slackness {} must be >= 1", self.slackness));
        }
        if self.rate_min == 0 || self.rate_min > self.rate_max {
            return bad(format!(
                "rate range [{}, {}] must be positive and ordered",
                self.rate_min, self.rate_max
            ));
        }
        if !(self.price_min > 0.0) || self.price_min > self.price_max {
            return bad(format!(
                "price range [{}, {}] must be positive and ordered",
                self.price_min, self.price_max
            ));
        }
        if self.deadline_windows.is_empty() {
            return bad("need at least one deadline window".into());
        }
        for &(a, b) in &self.deadline_windows {
            if a == 0 || a > b || b > self.horizon {
                return bad(format!("window [{a}, {b}] outside [1, {}]", self.horizon));
            }
        }
        if !self.window_weights.is_empty() {
            if self.window_weights.len() != self.deadline_windows.len() {
                return bad("one weight per deadline window".into());
            }
            if self.window_weights.iter().any(|w| !(*w >= 0.0))
                || self.window_weights.iter().sum::<f64>() <= 0.0
            {
                return bad("window weights must be non-negative with a positive sum".into());
            }
        }
        Ok(())
    }
}

/// Samples an instance. The same config (seed included) always yields the
/// same instance.
pub fn generate_instance(config: &GenConfig) -> Result<Instance, GenError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let weights = if config.window_weights.is_empty() {
        vec![1.0; config.deadline_windows.len()]
    } else {
        config.window_weights.clone()
    };
    let window =
        WeightedIndex::new(&weights).map_err(|e| GenError::InvalidConfig(e.to_string()))?;
    let station = Uniform::new_inclusive(1, config.stations);
    let rate = Uniform::new_inclusive(config.rate_min, config.rate_max);

    let mut requests = Vec::with_capacity(config.evs);
    for id in 1..=config.evs {
        let station = station.sample(&mut rng);
        let (lo, hi) = config.deadline_windows[window.sample(&mut rng)];
        let deadline = rng.gen_range(lo..=hi);
        let max_rate = f64::from(rate.sample(&mut rng));
        let upper = max_rate * deadline as f64 / config.slackness;
        let lower = max_rate.min(upper);
        let demand = if upper > lower {
            rng.gen_range(lower..=upper)
        } else {
            upper
        };
        let price = if config.price_max > config.price_min {
            rng.gen_range(config.price_min..=config.price_max)
        } else {
            config.price_min
        };
        requests.push(ChargingRequest {
            id,
            station,
            demand,
            deadline,
            max_rate,
            value: price * demand,
        });
    }

    let mut inst = Instance::new(
        config.horizon,
        vec![config.local_cap; config.stations],
        config.global_cap,
        config.slackness,
        requests,
    );
    inst.seed = Some(config.seed);
    Ok(inst)
}
