use crate::comms::ConnId;
use crate::road::{EdgeId, Group, NodeId, RoadNetwork};
use crate::sim::SimTime;
use crate::traffic::{TrafficLight, VehicleId};

use super::election::{elect, lead_vehicles, priority_group};
use super::map::JunctionMap;
use super::ControlConfig;

/// Why an actuation request did not switch the light.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suppressed {
    AlreadyGreen,
    MinDuration,
    InTransition,
}

impl Suppressed {
    pub fn reason(self) -> &'static str {
        match self {
            Suppressed::AlreadyGreen => "already-green",
            Suppressed::MinDuration => "min-duration",
            Suppressed::InTransition => "in-transition",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Actuation {
    Switch(Group),
    Suppressed(Suppressed),
    /// Not from a mapped vehicle holding the current election notice.
    Dropped,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Notice {
    pub vehicle: VehicleId,
    pub conn: ConnId,
    pub seq: u64,
    pub sent: SimTime,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IaStats {
    pub election_ticks: u64,
    pub unsynchronized_ticks: u64,
    pub notices: u64,
    pub switches: u64,
    pub already_green: u64,
    pub min_duration: u64,
    pub in_transition: u64,
    pub dropped_requests: u64,
    pub unknown_reports: u64,
}

/// Junction agent: keeps the vehicle map, elects a vehicle and gates its
/// requests.
#[derive(Clone, Debug)]
pub struct IaAgent {
    junction: NodeId,
    map: JunctionMap,
    /// Approach unit vectors (junction towards upstream) and their groups.
    approaches: Vec<((f64, f64), Group)>,
    outstanding: Option<Notice>,
    next_seq: u64,
    stats: IaStats,
}

impl IaAgent {
    pub fn new(net: &RoadNetwork, junction: NodeId) -> Self {
        let approaches = net
            .incoming(junction)
            .iter()
            .map(|&e| (net.approach_direction(e), net.group_of(e)))
            .collect();
        IaAgent {
            junction,
            map: JunctionMap::new(net.node(junction).pos),
            approaches,
            outstanding: None,
            next_seq: 0,
            stats: IaStats::default(),
        }
    }

    pub fn junction(&self) -> NodeId {
        self.junction
    }

    pub fn map(&self) -> &JunctionMap {
        &self.map
    }

    pub fn map_mut(&mut self) -> &mut JunctionMap {
        &mut self.map
    }

    pub fn stats(&self) -> IaStats {
        self.stats
    }

    pub fn outstanding(&self) -> Option<Notice> {
        self.outstanding
    }

    pub(crate) fn note_unknown_report(&mut self) {
        self.stats.unknown_reports += 1;
    }

    /// Approach group whose direction best matches a bearing from the junction.
    pub fn classify(&self, cos_theta: f64, sin_theta: f64) -> Group {
        self.approaches
            .iter()
            .map(|&((dx, dy), g)| (dx * cos_theta + dy * sin_theta, g))
            .fold(None, |best: Option<(f64, Group)>, (dot, g)| match best {
                Some((b, _)) if b >= dot => best,
                _ => Some((dot, g)),
            })
            .map_or(Group::A, |(_, g)| g)
    }

    /// One election round. Returns the notice to send, if any.
    pub fn election_tick(&mut self, now: SimTime, cfg: &ControlConfig) -> Option<Notice> {
        self.stats.election_ticks += 1;
        if let Some(n) = self.outstanding {
            if now.since(n.sent) > cfg.map_module_timeout_ms {
                self.outstanding = None;
            }
        }
        self.map.purge(now, cfg.map_module_length_ms);
        if !self.map.is_synchronized(now, cfg.map_module_timeout_ms) {
            self.stats.unsynchronized_ticks += 1;
            return None;
        }
        let leads = lead_vehicles(&self.map, |c, s| self.classify(c, s));
        let prio = priority_group(now, cfg.cycle_duration_ms);
        let elected = elect(
            leads[prio.index()],
            leads[prio.other().index()],
            cfg.d_min_m,
            cfg.alpha,
        )?;
        if self.outstanding.is_some_and(|n| n.vehicle == elected) {
            return None;
        }
        let conn = self.map.get(elected)?.conn;
        let notice = Notice {
            vehicle: elected,
            conn,
            seq: self.next_seq,
            sent: now,
        };
        self.next_seq += 1;
        self.outstanding = Some(notice);
        self.stats.notices += 1;
        Some(notice)
    }

    /// Decides on a delivered actuation request. The caller performs the
    /// switch on [`Actuation::Switch`].
    pub fn handle_actuation(
        &mut self,
        vehicle: VehicleId,
        edge: EdgeId,
        seq: u64,
        light: &TrafficLight,
        now: SimTime,
        cfg: &ControlConfig,
    ) -> Actuation {
        let holds_notice = self
            .outstanding
            .is_some_and(|n| n.vehicle == vehicle && n.seq == seq);
        let Some(group) = light.group_of(edge) else {
            self.stats.dropped_requests += 1;
            return Actuation::Dropped;
        };
        if !self.map.contains(vehicle) || !holds_notice {
            self.stats.dropped_requests += 1;
            return Actuation::Dropped;
        }
        self.outstanding = None;
        let outcome = if light.in_yellow() {
            Suppressed::InTransition
        } else if light.phase() == group {
            Suppressed::AlreadyGreen
        } else if now.since(light.last_switch_time()) < cfg.min_state_duration_ms {
            Suppressed::MinDuration
        } else {
            self.stats.switches += 1;
            return Actuation::Switch(group);
        };
        match outcome {
            Suppressed::AlreadyGreen => self.stats.already_green += 1,
            Suppressed::MinDuration => self.stats.min_duration += 1,
            Suppressed::InTransition => self.stats.in_transition += 1,
        }
        Actuation::Suppressed(outcome)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::road::Point;

    fn setup() -> (RoadNetwork, IaAgent, TrafficLight, ControlConfig) {
        let net = RoadNetwork::build_one_junction(300.0).unwrap();
        let ia = IaAgent::new(&net, NodeId(0));
        let light = TrafficLight::new(&net, NodeId(0), 3000);
        (net, ia, light, ControlConfig::default())
    }

    /// Maps vehicle 1 on the south approach (group B) and elects it.
    fn elect_south(ia: &mut IaAgent, cfg: &ControlConfig, now: SimTime) -> Notice {
        ia.map_mut()
            .update(VehicleId(1), ConnId(3), Point::new(0.0, -60.0), now);
        ia.election_tick(now, cfg).expect("elected")
    }

    #[test]
    fn classify_by_approach_axis() {
        let (_, ia, _, _) = setup();
        assert_eq!(ia.classify(-1.0, 0.0), Group::A);
        assert_eq!(ia.classify(0.0, -1.0), Group::B);
        assert_eq!(ia.classify(-0.9, -0.1), Group::A);
    }

    #[test]
    fn switch_after_min_duration() {
        let (_, mut ia, light, cfg) = setup();
        let now = SimTime::from_secs(10);
        let n = elect_south(&mut ia, &cfg, now);
        assert_eq!(n.vehicle, VehicleId(1));
        assert_eq!(n.conn, ConnId(3));
        let a = ia.handle_actuation(VehicleId(1), EdgeId(2), n.seq, &light, now + 20, &cfg);
        assert_eq!(a, Actuation::Switch(Group::B));
    }

    #[test]
    fn min_duration_gate_discards() {
        let (_, mut ia, mut light, cfg) = setup();
        light.request(Group::B, SimTime::from_secs(10)).unwrap();
        light.end_yellow(SimTime::from_secs(13));
        // Ask for A back 5 s after the last switch.
        let now = SimTime::from_secs(15);
        ia.map_mut()
            .update(VehicleId(2), ConnId(0), Point::new(-30.0, 0.0), now);
        let n = ia.election_tick(now, &cfg).unwrap();
        let a = ia.handle_actuation(VehicleId(2), EdgeId(0), n.seq, &light, now, &cfg);
        assert_eq!(a, Actuation::Suppressed(Suppressed::MinDuration));
        assert!(ia.outstanding().is_none());
    }

    #[test]
    fn green_and_yellow_are_suppressed() {
        let (_, mut ia, mut light, cfg) = setup();
        let now = SimTime::from_secs(20);
        ia.map_mut()
            .update(VehicleId(2), ConnId(0), Point::new(-30.0, 0.0), now);
        let n = ia.election_tick(now, &cfg).unwrap();
        let a = ia.handle_actuation(VehicleId(2), EdgeId(0), n.seq, &light, now, &cfg);
        assert_eq!(a, Actuation::Suppressed(Suppressed::AlreadyGreen));

        light.request(Group::B, now).unwrap();
        let later = now + 500;
        ia.map_mut()
            .update(VehicleId(2), ConnId(0), Point::new(-25.0, 0.0), later);
        let n = ia.election_tick(later, &cfg).unwrap();
        let a = ia.handle_actuation(VehicleId(2), EdgeId(0), n.seq, &light, later, &cfg);
        assert_eq!(a, Actuation::Suppressed(Suppressed::InTransition));
    }

    #[test]
    fn requests_without_current_notice_are_dropped() {
        let (_, mut ia, light, cfg) = setup();
        let now = SimTime::from_secs(20);
        assert_eq!(
            ia.handle_actuation(VehicleId(9), EdgeId(2), 0, &light, now, &cfg),
            Actuation::Dropped
        );
        let n = elect_south(&mut ia, &cfg, now);
        assert_eq!(
            ia.handle_actuation(VehicleId(1), EdgeId(2), n.seq + 1, &light, now, &cfg),
            Actuation::Dropped
        );
        assert_eq!(ia.stats().dropped_requests, 2);
    }

    #[test]
    fn unsynchronized_map_elects_nobody() {
        let (_, mut ia, _, cfg) = setup();
        ia.map_mut()
            .update(VehicleId(1), ConnId(0), Point::new(-30.0, 0.0), SimTime(1000));
        assert!(ia.election_tick(SimTime(4000), &cfg).is_none());
        assert_eq!(ia.stats().unsynchronized_ticks, 1);
    }

    #[test]
    fn outstanding_notice_is_not_repeated() {
        let (_, mut ia, _, cfg) = setup();
        let now = SimTime::from_secs(10);
        elect_south(&mut ia, &cfg, now);
        ia.map_mut()
            .update(VehicleId(1), ConnId(3), Point::new(0.0, -50.0), now + 500);
        assert!(ia.election_tick(now + 500, &cfg).is_none());
        // After the timeout the same vehicle may be notified again.
        ia.map_mut()
            .update(VehicleId(1), ConnId(3), Point::new(0.0, -45.0), now + 2600);
        assert!(ia.election_tick(now + 2600, &cfg).is_some());
    }
}
