//! Junction and vehicle agents: dynamic maps, vehicle election and gated
//! actuation of the traffic lights.

mod election;
mod ia;
mod map;
mod va;

use serde::{Deserialize, Serialize};

pub use election::{elect, lead_vehicles, priority_group, Candidate};
pub use ia::{Actuation, IaAgent, IaStats, Notice, Suppressed};
pub use map::{infer_motion, polar, JunctionMap, MapEntry, Motion};
pub use va::{Link, Sighting, VaAction, VaAgent};

use crate::error::ConfigError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    pub position_send_interval_ms: u64,
    pub beacon_interval_ms: u64,
    pub election_interval_ms: u64,
    pub cycle_duration_ms: u64,
    /// Defaults to half the cycle.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_state_duration_ms: Option<u64>,
    pub min_state_duration_ms: u64,
    pub map_module_timeout_ms: u64,
    pub map_module_length_ms: u64,
    pub d_min_m: f64,
    pub alpha: f64,
    pub disconnect_distance_m: f64,
    /// Distance to an IA at which a vehicle opens its connection. Defaults
    /// to the radio range.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub connect_distance_m: Option<f64>,
    pub payload_bytes: u32,
}

impl Default for ControlConfig {
    fn default() -> Self {
        ControlConfig {
            position_send_interval_ms: 500,
            beacon_interval_ms: 500,
            election_interval_ms: 500,
            cycle_duration_ms: 90_000,
            max_state_duration_ms: None,
            min_state_duration_ms: 8_000,
            map_module_timeout_ms: 2_000,
            map_module_length_ms: 5_000,
            d_min_m: 100.0,
            alpha: 2.0,
            disconnect_distance_m: 50.0,
            connect_distance_m: None,
            payload_bytes: 30,
        }
    }
}

impl ControlConfig {
    pub fn max_state_duration(&self) -> u64 {
        self.max_state_duration_ms
            .unwrap_or(self.cycle_duration_ms / 2)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let intervals = [
            ("control.position_send_interval_ms", self.position_send_interval_ms),
            ("control.beacon_interval_ms", self.beacon_interval_ms),
            ("control.election_interval_ms", self.election_interval_ms),
            ("control.cycle_duration_ms", self.cycle_duration_ms),
            ("control.map_module_timeout_ms", self.map_module_timeout_ms),
            ("control.map_module_length_ms", self.map_module_length_ms),
        ];
        for (key, v) in intervals {
            if v == 0 {
                return Err(ConfigError::domain(key, v, ">= 1"));
            }
        }
        if self.cycle_duration_ms < 2 {
            return Err(ConfigError::domain("control.cycle_duration_ms", self.cycle_duration_ms, ">= 2"));
        }
        if self.max_state_duration() == 0 {
            return Err(ConfigError::domain("control.max_state_duration_ms", 0, ">= 1"));
        }
        if self.min_state_duration_ms > self.max_state_duration() {
            return Err(ConfigError::domain(
                "control.min_state_duration_ms",
                self.min_state_duration_ms,
                "<= max_state_duration_ms",
            ));
        }
        if !(self.d_min_m > 0.0) || !self.d_min_m.is_finite() {
            return Err(ConfigError::domain("control.d_min_m", self.d_min_m, "> 0"));
        }
        if !(self.alpha > 1.0) || !self.alpha.is_finite() {
            return Err(ConfigError::domain("control.alpha", self.alpha, "> 1"));
        }
        if !(self.disconnect_distance_m >= 0.0) {
            return Err(ConfigError::domain(
                "control.disconnect_distance_m",
                self.disconnect_distance_m,
                ">= 0",
            ));
        }
        if let Some(d) = self.connect_distance_m {
            if !(d > 0.0) {
                return Err(ConfigError::domain("control.connect_distance_m", d, "> 0"));
            }
        }
        if self.payload_bytes == 0 {
            return Err(ConfigError::domain("control.payload_bytes", 0, ">= 1"));
        }
        Ok(())
    }
}
