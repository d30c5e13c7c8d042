use crate::road::Group;
use crate::sim::SimTime;
use crate::traffic::VehicleId;

use super::map::{JunctionMap, Motion};

/// A lead vehicle and its distance to the junction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub vehicle: VehicleId,
    pub distance: f64,
}

/// Picks the vehicle allowed to request a phase. The non-prioritised lead
/// wins only when it is close and the prioritised lead is absent or far;
/// otherwise the prioritised lead (possibly none) is returned.
pub fn elect(
    p: Option<Candidate>,
    v: Option<Candidate>,
    d_min: f64,
    alpha: f64,
) -> Option<VehicleId> {
    match (p, v) {
        (Some(p), Some(v)) if p.distance > alpha * d_min && v.distance < d_min => Some(v.vehicle),
        (None, Some(v)) if v.distance < d_min => Some(v.vehicle),
        _ => p.map(|p| p.vehicle),
    }
}

/// Group A has priority in even half-cycles, B in odd ones.
pub fn priority_group(now: SimTime, cycle_ms: u64) -> Group {
    let half = (cycle_ms / 2).max(1);
    if (now.0 / half) % 2 == 0 {
        Group::A
    } else {
        Group::B
    }
}

/// Nearest approaching vehicle of each group, indexed by [`Group::index`].
/// `group_of` maps a unit direction from the junction to the vehicle onto
/// the approach group it lies on.
pub fn lead_vehicles(
    map: &JunctionMap,
    group_of: impl Fn(f64, f64) -> Group,
) -> [Option<Candidate>; 2] {
    let mut lead: [Option<Candidate>; 2] = [None, None];
    // Entries iterate in id order, so the strict comparison keeps the lower
    // id on equal radii.
    for e in map.entries() {
        if e.motion != Motion::Approaching {
            continue;
        }
        let slot = &mut lead[group_of(e.cos_theta, e.sin_theta).index()];
        if slot.map_or(true, |c| e.r < c.distance) {
            *slot = Some(Candidate {
                vehicle: e.vehicle,
                distance: e.r,
            });
        }
    }
    lead
}
