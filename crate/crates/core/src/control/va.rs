use std::collections::BTreeMap;

use crate::comms::ConnId;
use crate::road::{NodeId, Point};
use crate::sim::SimTime;
use crate::traffic::VehicleId;

use super::ControlConfig;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sighting {
    pub position: Point,
    pub last_beacon: SimTime,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Link {
    Idle,
    Opening { ia: NodeId, conn: ConnId },
    Connected { ia: NodeId, conn: ConnId },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VaAction {
    None,
    Open(NodeId),
    Report(ConnId),
    Close(ConnId),
}

/// Vehicle agent: remembers beaconing IAs, picks the closest one ahead and
/// runs the connect, report, disconnect cycle.
#[derive(Clone, Debug)]
pub struct VaAgent {
    vehicle: VehicleId,
    ias: BTreeMap<NodeId, Sighting>,
    link: Link,
}

impl VaAgent {
    pub fn new(vehicle: VehicleId) -> Self {
        VaAgent {
            vehicle,
            ias: BTreeMap::new(),
            link: Link::Idle,
        }
    }

    pub fn vehicle(&self) -> VehicleId {
        self.vehicle
    }

    pub fn link(&self) -> Link {
        self.link
    }

    pub fn known_ias(&self) -> impl Iterator<Item = (&NodeId, &Sighting)> {
        self.ias.iter()
    }

    /// Position of a known IA relative to the vehicle.
    pub fn relative(&self, ia: NodeId, own: Point) -> Option<Point> {
        self.ias
            .get(&ia)
            .map(|s| Point::new(s.position.x - own.x, s.position.y - own.y))
    }

    pub fn on_beacon(&mut self, ia: NodeId, position: Point, now: SimTime) {
        self.ias.insert(
            ia,
            Sighting {
                position,
                last_beacon: now,
            },
        );
    }

    pub fn on_opening(&mut self, ia: NodeId, conn: ConnId) {
        self.link = Link::Opening { ia, conn };
    }

    /// Handshake result for `conn`.
    pub fn on_open_result(&mut self, conn: ConnId, established: bool) {
        if let Link::Opening { ia, conn: c } = self.link {
            if c == conn {
                self.link = if established {
                    Link::Connected { ia, conn }
                } else {
                    Link::Idle
                };
            }
        }
    }

    pub fn on_closed(&mut self) {
        self.link = Link::Idle;
    }

    /// Periodic step. `ahead` lists the route's upcoming nodes with their
    /// driving distance, nearest first; `past` gives the driving distance
    /// since a node was passed.
    pub fn tick(
        &mut self,
        now: SimTime,
        own: Point,
        ahead: &[(NodeId, f64)],
        past: impl Fn(NodeId) -> Option<f64>,
        connect_distance: f64,
        cfg: &ControlConfig,
    ) -> VaAction {
        self.ias
            .retain(|_, s| now.since(s.last_beacon) <= cfg.map_module_length_ms);
        match self.link {
            Link::Connected { ia, conn } | Link::Opening { ia, conn } => {
                if past(ia).is_some_and(|d| d >= cfg.disconnect_distance_m) {
                    self.link = Link::Idle;
                    return VaAction::Close(conn);
                }
                if matches!(self.link, Link::Connected { .. }) {
                    VaAction::Report(conn)
                } else {
                    VaAction::None
                }
            }
            Link::Idle => {
                let target = ahead
                    .iter()
                    .filter(|(n, _)| self.ias.contains_key(n))
                    .min_by(|a, b| a.1.total_cmp(&b.1));
                match target {
                    Some(&(ia, _)) if self.ias[&ia].position.distance(own) <= connect_distance => {
                        VaAction::Open(ia)
                    }
                    _ => VaAction::None,
                }
            }
        }
    }
}
