use serde::{Deserialize, Serialize};

use crate::env::Observation;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscretizationSpec {
    /// Equal-width bins over `[0, capacity]`.
    pub battery_bins: usize,
    /// Equal-width bins over `[0, max load]` per traffic type.
    pub load_bins: usize,
    /// Equal-width buckets over the hours of a day.
    pub time_values: usize,
}

impl Default for DiscretizationSpec {
    fn default() -> Self {
        Self {
            battery_bins: 4,
            load_bins: 3,
            time_values: 24,
        }
    }
}

impl DiscretizationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.battery_bins == 0 {
            return Err(Error::config(
                "policy.discretization.battery_bins",
                "must be >= 1",
            ));
        }
        if self.load_bins == 0 {
            return Err(Error::config(
                "policy.discretization.load_bins",
                "must be >= 1",
            ));
        }
        if self.time_values == 0 {
            return Err(Error::config(
                "policy.discretization.time_values",
                "must be >= 1",
            ));
        }
        Ok(())
    }
}

/// Equal-width bin of `x` over `[0, max]`; right-open except the last bin,
/// which also absorbs anything above `max`.
pub fn bin(x: f64, max: f64, bins: usize) -> usize {
    if bins <= 1 || max <= 0.0 || x <= 0.0 {
        return 0;
    }
    (((x / max) * bins as f64).floor() as usize).min(bins - 1)
}

/// Maps one agent's continuous observation to a state index.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretizer {
    spec: DiscretizationSpec,
    capacity: f64,
    max_loads: Vec<f64>,
    day_length: usize,
}

impl Discretizer {
    pub fn new(
        spec: DiscretizationSpec,
        capacity: f64,
        max_loads: Vec<f64>,
        day_length: usize,
    ) -> Self {
        Self {
            spec,
            capacity,
            max_loads,
            day_length,
        }
    }

    /// `battery_bins * load_bins^types * time_values`.
    pub fn state_count(&self) -> usize {
        self.spec.battery_bins
            * self.spec.load_bins.pow(self.max_loads.len() as u32)
            * self.spec.time_values
    }

    fn time_bucket(&self, time_of_day: usize) -> usize {
        let hour = time_of_day % self.day_length;
        (hour * self.spec.time_values / self.day_length).min(self.spec.time_values - 1)
    }

    pub fn state(&self, obs: &Observation) -> usize {
        let mut s = bin(obs.battery, self.capacity, self.spec.battery_bins);
        for (load, max) in obs.loads.iter().zip(&self.max_loads) {
            s = s * self.spec.load_bins + bin(*load, *max, self.spec.load_bins);
        }
        s * self.spec.time_values + self.time_bucket(obs.time_of_day)
    }
}
