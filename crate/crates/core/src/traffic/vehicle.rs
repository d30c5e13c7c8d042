use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::road::{EdgeId, Route};
use crate::sim::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VehicleId(pub u32);

impl std::fmt::Display for VehicleId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VehicleStatus {
    /// Created by the demand, waiting for room on its origin edge.
    Queued,
    Running,
    Ended,
}

#[derive(Clone, Debug)]
pub struct Vehicle {
    pub id: VehicleId,
    pub origin: EdgeId,
    pub destination: EdgeId,
    /// Fixed at insertion.
    pub route: Option<Route>,
    pub edge_index: usize,
    /// Front bumper, metres from the start of the current edge.
    pub position: f64,
    pub speed: f64,
    pub length: f64,
    pub equipped: bool,
    pub demand_time: SimTime,
    pub insert_time: Option<SimTime>,
    pub end_time: Option<SimTime>,
    pub status: VehicleStatus,
    /// Decided to clear the junction ahead during yellow.
    pub committed: bool,
}

impl Vehicle {
    pub fn edge(&self) -> Option<EdgeId> {
        self.route.as_ref().map(|r| r.edges()[self.edge_index])
    }

    pub fn next_edge(&self) -> Option<EdgeId> {
        self.route
            .as_ref()
            .and_then(|r| r.edges().get(self.edge_index + 1).copied())
    }

    pub fn on_final_edge(&self) -> bool {
        self.route
            .as_ref()
            .is_some_and(|r| self.edge_index + 1 == r.len())
    }

    pub fn travel_time(&self) -> Option<u64> {
        Some(self.end_time? - self.insert_time?)
    }
}

/// Krauss car-following parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarFollowingParams {
    pub max_accel: f64,
    pub max_decel: f64,
    pub min_gap: f64,
    pub vehicle_length: f64,
    /// Driver imperfection in [0, 1].
    pub sigma: f64,
    /// Reaction time used by the safe-speed rule, seconds.
    pub reaction_time: f64,
}

impl Default for CarFollowingParams {
    fn default() -> Self {
        CarFollowingParams {
            max_accel: 2.6,
            max_decel: 4.5,
            min_gap: 2.5,
            vehicle_length: 5.0,
            sigma: 0.5,
            reaction_time: 1.0,
        }
    }
}

impl CarFollowingParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("traffic.max_accel", self.max_accel),
            ("traffic.max_decel", self.max_decel),
            ("traffic.min_gap", self.min_gap),
            ("traffic.vehicle_length", self.vehicle_length),
            ("traffic.reaction_time", self.reaction_time),
        ];
        for (key, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ConfigError::domain(key, v, "> 0"));
            }
        }
        if !(0.0..=1.0).contains(&self.sigma) {
            return Err(ConfigError::domain("traffic.sigma", self.sigma, "[0, 1]"));
        }
        Ok(())
    }

    /// Highest speed that still lets the follower stop behind a leader
    /// driving at `leader_speed` with `gap` metres of free space.
    pub fn safe_speed(&self, speed: f64, gap: f64, leader_speed: f64) -> f64 {
        let tau = self.reaction_time;
        let mean = 0.5 * (speed + leader_speed);
        leader_speed + (gap - leader_speed * tau) / (mean / self.max_decel + tau)
    }

    /// Whether stopping within `distance` would need more than the normal
    /// deceleration over one step of `dt` seconds.
    pub fn cannot_stop(&self, speed: f64, distance: f64, dt: f64) -> bool {
        self.safe_speed(speed, distance, 0.0) < speed - self.max_decel * dt
    }

    /// Speed for the next step before dawdling: the minimum of the limit,
    /// what acceleration allows and every safe-speed constraint.
    pub fn desired_speed(&self, speed: f64, limit: f64, dt: f64, safe: f64) -> f64 {
        limit.min(speed + self.max_accel * dt).min(safe).max(0.0)
    }

    /// Random slowdown by up to `sigma * max_accel * dt`; `u` in [0, 1).
    pub fn dawdle(&self, speed: f64, dt: f64, u: f64) -> f64 {
        (speed - self.sigma * self.max_accel * dt * u).max(0.0)
    }
}
