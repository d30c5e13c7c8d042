use std::collections::{BTreeMap, VecDeque};

use crate::comms::ConnId;
use crate::road::Point;
use crate::sim::SimTime;
use crate::traffic::VehicleId;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Motion {
    Approaching,
    Leaving,
}

/// What an IA knows about one connected vehicle.
#[derive(Clone, Debug, PartialEq)]
pub struct MapEntry {
    pub vehicle: VehicleId,
    pub conn: ConnId,
    /// (report timestamp, reported coordinates), strictly time-increasing.
    pub trajectory: VecDeque<(SimTime, Point)>,
    pub last_seen: SimTime,
    pub first_seen: SimTime,
    /// Distance to the junction centre.
    pub r: f64,
    pub cos_theta: f64,
    pub sin_theta: f64,
    pub motion: Motion,
}

/// Polar coordinates of `p` around `center`. A point on the centre gets
/// angle zero.
pub fn polar(center: Point, p: Point) -> (f64, f64, f64) {
    let (dx, dy) = (p.x - center.x, p.y - center.y);
    let r = dx.hypot(dy);
    if r == 0.0 {
        (0.0, 1.0, 0.0)
    } else {
        (r, dx / r, dy / r)
    }
}

/// Motion implied by two consecutive radii. A constant radius (a vehicle
/// standing still) keeps the previous state.
pub fn infer_motion(previous_r: f64, r: f64, previous: Motion) -> Motion {
    if r < previous_r {
        Motion::Approaching
    } else if r > previous_r {
        Motion::Leaving
    } else {
        previous
    }
}

/// Vehicle map of one junction, keyed by vehicle id.
#[derive(Clone, Debug)]
pub struct JunctionMap {
    center: Point,
    entries: BTreeMap<VehicleId, MapEntry>,
}

impl JunctionMap {
    pub fn new(center: Point) -> Self {
        JunctionMap {
            center,
            entries: BTreeMap::new(),
        }
    }

    pub fn center(&self) -> Point {
        self.center
    }

    pub fn entries(&self) -> impl Iterator<Item = &MapEntry> {
        self.entries.values()
    }

    pub fn get(&self, vehicle: VehicleId) -> Option<&MapEntry> {
        self.entries.get(&vehicle)
    }

    /// Drops the entry of `vehicle` if it was reported over `conn`.
    pub fn forget(&mut self, vehicle: VehicleId, conn: ConnId) -> bool {
        if self.entries.get(&vehicle).is_some_and(|e| e.conn == conn) {
            self.entries.remove(&vehicle);
            true
        } else {
            false
        }
    }

    pub fn contains(&self, vehicle: VehicleId) -> bool {
        self.entries.contains_key(&vehicle)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Inserts a position report stamped `sent`. Reports not newer than
    /// the entry's last sample are ignored.
    pub fn update(&mut self, vehicle: VehicleId, conn: ConnId, position: Point, sent: SimTime) {
        let (r, cos_theta, sin_theta) = polar(self.center, position);
        match self.entries.get_mut(&vehicle) {
            Some(e) => {
                if sent <= e.last_seen {
                    return;
                }
                e.motion = infer_motion(e.r, r, e.motion);
                e.trajectory.push_back((sent, position));
                e.conn = conn;
                e.last_seen = sent;
                e.r = r;
                e.cos_theta = cos_theta;
                e.sin_theta = sin_theta;
            }
            None => {
                self.entries.insert(
                    vehicle,
                    MapEntry {
                        vehicle,
                        conn,
                        trajectory: VecDeque::from([(sent, position)]),
                        last_seen: sent,
                        first_seen: sent,
                        r,
                        cos_theta,
                        sin_theta,
                        motion: Motion::Approaching,
                    },
                );
            }
        }
    }

    /// Drops entries last seen more than `length_ms` ago and trajectory
    /// samples older than that window.
    pub fn purge(&mut self, now: SimTime, length_ms: u64) {
        self.entries.retain(|_, e| now.since(e.last_seen) <= length_ms);
        for e in self.entries.values_mut() {
            while e
                .trajectory
                .front()
                .is_some_and(|(t, _)| now.since(*t) > length_ms)
            {
                e.trajectory.pop_front();
            }
        }
    }

    /// True when every mapped vehicle reported within `timeout_ms`.
    pub fn is_synchronized(&self, now: SimTime, timeout_ms: u64) -> bool {
        self.entries
            .values()
            .all(|e| now.since(e.last_seen) <= timeout_ms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map() -> JunctionMap {
        JunctionMap::new(Point::new(0.0, 0.0))
    }

    #[test]
    fn polar_coordinates() {
        let (r, c, s) = polar(Point::new(0.0, 0.0), Point::new(-100.0, 0.0));
        assert_eq!((r, c, s), (100.0, -1.0, 0.0));
        let (r, c, s) = polar(Point::new(0.0, 0.0), Point::new(0.0, 0.0));
        assert_eq!((r, c, s), (0.0, 1.0, 0.0));
    }

    #[test]
    fn radius_trend_gives_motion() {
        let mut m = map();
        m.update(VehicleId(1), ConnId(0), Point::new(-120.0, 0.0), SimTime(0));
        assert_eq!(m.get(VehicleId(1)).unwrap().motion, Motion::Approaching);
        m.update(VehicleId(1), ConnId(0), Point::new(-80.0, 0.0), SimTime(500));
        assert_eq!(m.get(VehicleId(1)).unwrap().motion, Motion::Approaching);

        m.update(VehicleId(2), ConnId(1), Point::new(10.0, 0.0), SimTime(0));
        m.update(VehicleId(2), ConnId(1), Point::new(40.0, 0.0), SimTime(500));
        let e = m.get(VehicleId(2)).unwrap();
        assert_eq!(e.motion, Motion::Leaving);
        assert_eq!(e.first_seen, SimTime(0));
        assert_eq!(e.last_seen, SimTime(500));
        assert_eq!(e.trajectory.len(), 2);
    }

    #[test]
    fn standing_vehicle_keeps_its_state() {
        let mut m = map();
        m.update(VehicleId(1), ConnId(0), Point::new(-30.0, 0.0), SimTime(0));
        m.update(VehicleId(1), ConnId(0), Point::new(-30.0, 0.0), SimTime(500));
        assert_eq!(m.get(VehicleId(1)).unwrap().motion, Motion::Approaching);
    }

    #[test]
    fn stale_reports_are_ignored() {
        let mut m = map();
        m.update(VehicleId(1), ConnId(0), Point::new(-30.0, 0.0), SimTime(500));
        m.update(VehicleId(1), ConnId(0), Point::new(-50.0, 0.0), SimTime(500));
        assert_eq!(m.get(VehicleId(1)).unwrap().r, 30.0);
    }

    #[test]
    fn purge_window() {
        let mut m = map();
        m.update(VehicleId(1), ConnId(0), Point::new(-30.0, 0.0), SimTime(10_000));
        m.update(VehicleId(2), ConnId(1), Point::new(-30.0, 0.0), SimTime(14_000));
        m.purge(SimTime(16_000), 5000);
        assert!(!m.contains(VehicleId(1)));
        assert!(m.contains(VehicleId(2)));
        let mut empty = map();
        empty.purge(SimTime(16_000), 5000);
        assert!(empty.is_empty());
    }

    #[test]
    fn purge_trims_old_samples() {
        let mut m = map();
        for k in 0..20u64 {
            m.update(VehicleId(1), ConnId(0), Point::new(-100.0 + k as f64, 0.0), SimTime(k * 500));
        }
        m.purge(SimTime(9_500), 5000);
        let e = m.get(VehicleId(1)).unwrap();
        assert_eq!(e.trajectory.front().unwrap().0, SimTime(4_500));
        assert_eq!(e.trajectory.back().unwrap().0, e.last_seen);
    }

    #[test]
    fn forget_only_matches_the_reporting_connection() {
        let mut m = map();
        m.update(VehicleId(1), ConnId(4), Point::new(-30.0, 0.0), SimTime(1_000));
        assert!(!m.forget(VehicleId(1), ConnId(3)));
        assert!(m.contains(VehicleId(1)));
        assert!(m.forget(VehicleId(1), ConnId(4)));
        assert!(m.is_empty());
    }

    #[test]
    fn synchronization() {
        let mut m = map();
        assert!(m.is_synchronized(SimTime(100_000), 2000));
        m.update(VehicleId(1), ConnId(0), Point::new(-30.0, 0.0), SimTime(9_000));
        m.update(VehicleId(2), ConnId(1), Point::new(0.0, -30.0), SimTime(9_500));
        assert!(m.is_synchronized(SimTime(10_000), 2000));
        m.update(VehicleId(3), ConnId(2), Point::new(0.0, -60.0), SimTime(7_000));
        assert!(!m.is_synchronized(SimTime(10_000), 2000));
    }

    proptest! {
        #[test]
        fn entry_invariants_hold(
            reports in proptest::collection::vec((0u32..4, -200.0f64..200.0, -200.0f64..200.0, 1u64..900), 1..80),
            purge_at in 0u64..60_000,
        ) {
            let mut m = map();
            let mut t = 0;
            for (v, x, y, dt) in reports {
                t += dt;
                m.update(VehicleId(v), ConnId(v), Point::new(x, y), SimTime(t));
            }
            let now = SimTime(t + purge_at);
            m.purge(now, 5000);
            for e in m.entries() {
                prop_assert!((e.cos_theta.powi(2) + e.sin_theta.powi(2) - 1.0).abs() < 1e-9);
                prop_assert!(e.r >= 0.0);
                prop_assert!(e.first_seen <= e.last_seen);
                prop_assert!(now.since(e.last_seen) <= 5000);
                prop_assert!(e.trajectory.iter().zip(e.trajectory.iter().skip(1)).all(|(a, b)| a.0 < b.0));
                prop_assert_eq!(e.trajectory.back().unwrap().0, e.last_seen);
            }
        }

        #[test]
        fn fresher_report_never_breaks_synchronization(
            ages in proptest::collection::vec(0u64..3000, 0..6),
            extra in 0u32..10,
        ) {
            let now = SimTime(10_000);
            let mut m = map();
            for (i, a) in ages.iter().enumerate() {
                m.update(VehicleId(i as u32), ConnId(i as u32), Point::new(-50.0, 0.0), SimTime(now.0 - a));
            }
            let before = m.is_synchronized(now, 2000);
            m.update(VehicleId(100 + extra), ConnId(99), Point::new(-10.0, 0.0), now);
            if before {
                prop_assert!(m.is_synchronized(now, 2000));
            }
        }

        #[test]
        fn motion_follows_strict_radius_trend(r0 in 0.0f64..300.0, r1 in 0.0f64..300.0) {
            let m = infer_motion(r0, r1, Motion::Approaching);
            if r1 < r0 { prop_assert_eq!(m, Motion::Approaching); }
            if r1 > r0 { prop_assert_eq!(m, Motion::Leaving); }
            prop_assert_eq!(infer_motion(r0, r0, Motion::Leaving), Motion::Leaving);
        }
    }
}
