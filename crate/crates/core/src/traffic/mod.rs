//! Microscopic vehicle dynamics on one-lane edges: insertion, Krauss-style
//! car-following, traffic light compliance and arrival accounting.

pub mod demand;
mod light;
mod vehicle;

use std::collections::VecDeque;
use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::road::{fastest_path, EdgeId, NodeId, Point, RoadNetwork};
use crate::sim::SimTime;

pub use demand::{zone_table_flows, Amount, DemandSpec, Endpoint, Flow, PlannedDeparture, ZoneReading, ZoneTable};
pub use light::{Rejection, Signal, SwitchStarted, TrafficLight};
pub use vehicle::{CarFollowingParams, Vehicle, VehicleId, VehicleStatus};

/// Harmonic means treat slower vehicles as moving at this speed so that a
/// standing queue yields a large but finite travel time estimate.
const MIN_ESTIMATE_SPEED: f64 = 0.1;

/// A vehicle moving from one edge to the next across a junction.
#[derive(Clone, Debug, PartialEq)]
pub struct Crossing {
    pub vehicle: VehicleId,
    pub node: NodeId,
    pub from: EdgeId,
    pub to: EdgeId,
    /// Aspect shown to the vehicle's approach at the crossing instant, if
    /// the node is signalised.
    pub signal: Option<Signal>,
    pub committed: bool,
}

#[derive(Clone, Debug, Default)]
pub struct StepOutcome {
    pub crossings: Vec<Crossing>,
    pub ended: Vec<VehicleId>,
    pub inserted: Vec<VehicleId>,
}

/// Vehicle counts. `inserted = running + ended`; vehicles still waiting at
/// their origin are `queued` and not yet inserted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Census {
    pub demanded: usize,
    pub queued: usize,
    pub running: usize,
    pub ended: usize,
    /// Vehicles whose destination could not be reached from their origin.
    pub dropped: usize,
}

impl Census {
    pub fn inserted(&self) -> usize {
        self.running + self.ended
    }

    pub fn is_conserved(&self) -> bool {
        self.demanded == self.queued + self.running + self.ended + self.dropped
    }
}

/// Invariant counters collected while stepping.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TrafficAudit {
    /// Followers closer than the minimum gap to a same-edge leader after a step.
    pub gap_violations: u64,
    /// Junction crossings on a non-green aspect by a vehicle not committed
    /// during yellow.
    pub red_crossings: u64,
}

pub struct Traffic {
    net: Arc<RoadNetwork>,
    params: CarFollowingParams,
    dt_ms: u64,
    vehicles: Vec<Vehicle>,
    /// Vehicles per edge, front (most downstream) first.
    on_edge: Vec<VecDeque<VehicleId>>,
    entry_queue: Vec<VecDeque<VehicleId>>,
    /// Last vehicle that left each edge; its rear may still overhang the end.
    recent_exit: Vec<Option<VehicleId>>,
    rng: ChaCha8Rng,
    census: Census,
    distance: f64,
    vehicle_seconds: f64,
    audit: TrafficAudit,
}

impl Traffic {
    pub fn new(net: Arc<RoadNetwork>, params: CarFollowingParams, dt_ms: u64, rng: ChaCha8Rng) -> Self {
        let m = net.edges().len();
        Traffic {
            net,
            params,
            dt_ms,
            vehicles: Vec::new(),
            on_edge: vec![VecDeque::new(); m],
            entry_queue: vec![VecDeque::new(); m],
            recent_exit: vec![None; m],
            rng,
            census: Census::default(),
            distance: 0.0,
            vehicle_seconds: 0.0,
            audit: TrafficAudit::default(),
        }
    }

    pub fn network(&self) -> &RoadNetwork {
        &self.net
    }

    pub fn params(&self) -> &CarFollowingParams {
        &self.params
    }

    pub fn dt_ms(&self) -> u64 {
        self.dt_ms
    }

    pub fn vehicles(&self) -> &[Vehicle] {
        &self.vehicles
    }

    pub fn vehicle(&self, id: VehicleId) -> &Vehicle {
        &self.vehicles[id.0 as usize]
    }

    pub fn census(&self) -> Census {
        self.census
    }

    pub fn audit(&self) -> TrafficAudit {
        self.audit
    }

    /// Total distance driven and time spent in the network by all vehicles.
    pub fn exposure(&self) -> (f64, f64) {
        (self.distance, self.vehicle_seconds)
    }

    pub fn vehicles_on(&self, edge: EdgeId) -> impl Iterator<Item = &Vehicle> {
        self.on_edge[edge.0].iter().map(|id| self.vehicle(*id))
    }

    pub fn running(&self) -> impl Iterator<Item = &Vehicle> {
        self.on_edge
            .iter()
            .flat_map(|q| q.iter())
            .map(|id| self.vehicle(*id))
    }

    /// Registers a departure and inserts it at once if the origin has room.
    pub fn add_vehicle(&mut self, planned: &PlannedDeparture, now: SimTime) -> VehicleId {
        let id = VehicleId(self.vehicles.len() as u32);
        self.vehicles.push(Vehicle {
            id,
            origin: planned.origin,
            destination: planned.destination,
            route: None,
            edge_index: 0,
            position: 0.0,
            speed: 0.0,
            length: self.params.vehicle_length,
            equipped: planned.equipped,
            demand_time: now,
            insert_time: None,
            end_time: None,
            status: VehicleStatus::Queued,
            committed: false,
        });
        self.census.demanded += 1;
        self.census.queued += 1;
        self.entry_queue[planned.origin.0].push_back(id);
        id
    }

    /// Tries to place the head of every non-empty entry queue.
    pub fn try_insert_all(&mut self, now: SimTime) -> Vec<VehicleId> {
        let mut placed = Vec::new();
        for e in 0..self.entry_queue.len() {
            if let Some(id) = self.try_insert(EdgeId(e), now) {
                placed.push(id);
            }
        }
        placed
    }

    /// Places the head of `edge`'s entry queue if the entry is free. Routing
    /// happens here, on the conditions at the moment of departure.
    pub fn try_insert(&mut self, edge: EdgeId, now: SimTime) -> Option<VehicleId> {
        loop {
            let &id = self.entry_queue[edge.0].front()?;
            if let Some(&tail) = self.on_edge[edge.0].back() {
                let t = self.vehicle(tail);
                if t.position - t.length - self.params.min_gap < 0.0 {
                    return None;
                }
            }
            self.entry_queue[edge.0].pop_front();
            self.census.queued -= 1;
            let estimates = self.travel_time_estimates();
            let v = &self.vehicles[id.0 as usize];
            match fastest_path(&self.net, v.origin, v.destination, &estimates) {
                Ok(route) => {
                    let v = &mut self.vehicles[id.0 as usize];
                    v.route = Some(route);
                    v.status = VehicleStatus::Running;
                    v.insert_time = Some(now);
                    self.on_edge[edge.0].push_back(id);
                    self.census.running += 1;
                    return Some(id);
                }
                Err(_) => {
                    self.census.dropped += 1;
                    self.vehicles[id.0 as usize].status = VehicleStatus::Ended;
                }
            }
        }
    }

    /// Arithmetic mean speed on `edge`, or its speed limit when empty.
    pub fn mean_speed(&self, edge: EdgeId) -> f64 {
        let q = &self.on_edge[edge.0];
        if q.is_empty() {
            return self.net.edge(edge).speed_limit;
        }
        q.iter().map(|id| self.vehicle(*id).speed).sum::<f64>() / q.len() as f64
    }

    /// Harmonic mean speed on `edge`, or its speed limit when empty.
    pub fn harmonic_mean_speed(&self, edge: EdgeId) -> f64 {
        let q = &self.on_edge[edge.0];
        if q.is_empty() {
            return self.net.edge(edge).speed_limit;
        }
        let inv: f64 = q
            .iter()
            .map(|id| 1.0 / self.vehicle(*id).speed.max(MIN_ESTIMATE_SPEED))
            .sum();
        q.len() as f64 / inv
    }

    /// Current travel time estimate of every edge: length over harmonic mean speed.
    pub fn travel_time_estimates(&self) -> Vec<f64> {
        self.net
            .edges()
            .iter()
            .map(|e| e.length / self.harmonic_mean_speed(e.id))
            .collect()
    }

    pub fn coordinates(&self, id: VehicleId) -> Option<Point> {
        let v = self.vehicle(id);
        if v.status != VehicleStatus::Running {
            return None;
        }
        Some(self.net.position_on(v.edge()?, v.position))
    }

    /// Nodes still ahead on the vehicle's route with the driving distance to
    /// each, nearest first.
    pub fn nodes_ahead(&self, id: VehicleId) -> Vec<(NodeId, f64)> {
        let v = self.vehicle(id);
        let Some(route) = &v.route else {
            return Vec::new();
        };
        let mut out = Vec::new();
        let mut dist = -v.position;
        for &e in &route.edges()[v.edge_index..] {
            let edge = self.net.edge(e);
            dist += edge.length;
            out.push((edge.to, dist));
        }
        out
    }

    /// Driving distance since the vehicle passed `node`, if it has.
    pub fn distance_past(&self, id: VehicleId, node: NodeId) -> Option<f64> {
        let v = self.vehicle(id);
        let route = v.route.as_ref()?;
        let mut dist = v.position;
        for k in (0..=v.edge_index).rev() {
            let e = self.net.edge(route.edges()[k]);
            if e.from == node {
                return Some(dist);
            }
            if k > 0 {
                dist += self.net.edge(route.edges()[k - 1]).length;
            }
        }
        None
    }

    fn signal_ahead(&self, lights: &[Option<TrafficLight>], edge: EdgeId) -> Option<Signal> {
        let node = self.net.edge(edge).to;
        lights
            .get(node.0)
            .and_then(|l| l.as_ref())
            .map(|l| l.signal_for_edge(edge))
    }

    /// Rear of the vehicle that last left `edge`, in `edge` coordinates, if
    /// it still overhangs the end.
    fn overhang(&self, edge: EdgeId) -> Option<(f64, f64)> {
        let id = self.recent_exit[edge.0]?;
        let v = self.vehicle(id);
        if v.status != VehicleStatus::Running || v.edge_index == 0 {
            return None;
        }
        let route = v.route.as_ref()?;
        if route.edges()[v.edge_index - 1] != edge {
            return None;
        }
        let len = self.net.edge(edge).length;
        let back = len + v.position - v.length;
        (back < len).then_some((back, v.speed))
    }

    fn tail_back(&self, edge: EdgeId) -> Option<(f64, f64)> {
        let id = *self.on_edge[edge.0].back()?;
        let v = self.vehicle(id);
        Some((v.position - v.length, v.speed))
    }

    /// Advances every running vehicle by one step ending at `now`.
    pub fn step(&mut self, now: SimTime, lights: &[Option<TrafficLight>]) -> StepOutcome {
        let dt = self.dt_ms as f64 / 1000.0;
        let p = self.params.clone();
        let mut out = StepOutcome::default();

        // Speeds from the state at the start of the step.
        let mut next_speed = vec![0.0; self.vehicles.len()];
        for e in 0..self.on_edge.len() {
            let edge = EdgeId(e);
            let len = self.net.edge(edge).length;
            let limit = self.net.edge(edge).speed_limit;
            for idx in 0..self.on_edge[e].len() {
                let id = self.on_edge[e][idx];
                let v = self.vehicle(id);
                let (x, speed) = (v.position, v.speed);
                let mut safe = f64::INFINITY;
                if idx > 0 {
                    let l = self.vehicle(self.on_edge[e][idx - 1]);
                    let gap = l.position - l.length - x - p.min_gap;
                    safe = safe.min(p.safe_speed(speed, gap, l.speed));
                } else {
                    if let Some((back, ls)) = self.overhang(edge) {
                        safe = safe.min(p.safe_speed(speed, back - x - p.min_gap, ls));
                    }
                    if let Some(next) = v.next_edge() {
                        if let Some((back, ls)) = self.tail_back(next) {
                            let gap = len + back - x - p.min_gap;
                            safe = safe.min(p.safe_speed(speed, gap, ls));
                        }
                        let mut committed = v.committed;
                        match self.signal_ahead(lights, edge) {
                            Some(Signal::Yellow) if !committed => {
                                if p.cannot_stop(speed, len - x, dt) {
                                    committed = true;
                                }
                            }
                            _ => {}
                        }
                        let must_stop = matches!(
                            self.signal_ahead(lights, edge),
                            Some(Signal::Yellow) | Some(Signal::Red)
                        ) && !committed;
                        if must_stop {
                            safe = safe.min(p.safe_speed(speed, len - x, 0.0));
                        }
                        self.vehicles[id.0 as usize].committed = committed;
                    }
                }
                let desired = p.desired_speed(speed, limit, dt, safe);
                let u: f64 = self.rng.gen();
                next_speed[id.0 as usize] = p.dawdle(desired, dt, u);
            }
        }

        // Movement, front to back along each edge, with hard bounds that
        // keep the minimum gap regardless of what the speed rule produced.
        for e in 0..self.on_edge.len() {
            let edge = EdgeId(e);
            let len = self.net.edge(edge).length;
            let snapshot: Vec<VehicleId> = self.on_edge[e].iter().copied().collect();
            let mut leader_left: Option<VehicleId> = None;
            for id in snapshot {
                let v = self.vehicle(id);
                let x = v.position;
                let final_edge = v.on_final_edge();
                let next = v.next_edge();
                let mut bound = f64::INFINITY;
                if let Some(l) = leader_left {
                    let l = self.vehicle(l);
                    bound = l.position - l.length - p.min_gap;
                } else if !final_edge {
                    if let Some((back, _)) = self.overhang(edge) {
                        bound = bound.min(back - p.min_gap);
                    }
                    if let Some(n) = next {
                        if let Some((back, _)) = self.tail_back(n) {
                            bound = bound.min(len + back - p.min_gap);
                        }
                    }
                    let permitted = match self.signal_ahead(lights, edge) {
                        None | Some(Signal::Green) => true,
                        Some(_) => v.committed,
                    };
                    if !permitted {
                        bound = bound.min(len);
                    }
                }
                let x_new = (x + next_speed[id.0 as usize] * dt).min(bound).max(x);
                let moved = x_new - x;
                self.distance += moved;
                self.vehicle_seconds += dt;
                let signal = self.signal_ahead(lights, edge);
                let veh = &mut self.vehicles[id.0 as usize];
                veh.speed = moved / dt;
                if final_edge && x_new >= len {
                    veh.position = len;
                    veh.status = VehicleStatus::Ended;
                    veh.end_time = Some(now);
                    self.on_edge[e].pop_front();
                    self.census.running -= 1;
                    self.census.ended += 1;
                    out.ended.push(id);
                } else if !final_edge && x_new > len {
                    let n = next.expect("non-final edge has a successor");
                    let n_len = self.net.edge(n).length;
                    let committed = veh.committed;
                    veh.position = (x_new - len).min(n_len);
                    veh.edge_index += 1;
                    veh.committed = false;
                    self.on_edge[e].pop_front();
                    self.on_edge[n.0].push_back(id);
                    self.recent_exit[e] = Some(id);
                    if matches!(signal, Some(Signal::Yellow) | Some(Signal::Red)) && !committed {
                        self.audit.red_crossings += 1;
                    }
                    out.crossings.push(Crossing {
                        vehicle: id,
                        node: self.net.edge(edge).to,
                        from: edge,
                        to: n,
                        signal,
                        committed,
                    });
                } else {
                    veh.position = x_new;
                    leader_left = Some(id);
                }
            }
        }

        out.inserted = self.try_insert_all(now);

        for q in &self.on_edge {
            for w in q.iter().collect::<Vec<_>>().windows(2) {
                let (l, f) = (self.vehicle(*w[0]), self.vehicle(*w[1]));
                if l.position - l.length - f.position < p.min_gap - 1e-9 {
                    self.audit.gap_violations += 1;
                }
            }
        }
        out
    }

    /// Writes one `time,vehicle,edge,position,speed` line per running vehicle.
    pub fn write_trace<W: Write>(&self, now: SimTime, w: &mut W) -> std::io::Result<()> {
        for v in self.running() {
            if let Some(e) = v.edge() {
                writeln!(w, "{},{},{},{:.3},{:.3}", now, v.id.0, e.0, v.position, v.speed)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::road::Group;
    use crate::sim::{streams, RngStream};

    fn traffic(net: RoadNetwork, sigma: f64) -> Traffic {
        let params = CarFollowingParams {
            sigma,
            ..Default::default()
        };
        Traffic::new(Arc::new(net), params, 100, RngStream::new(1, streams::TRAFFIC).rng())
    }

    fn depart(origin: usize, destination: usize) -> PlannedDeparture {
        PlannedDeparture {
            depart: SimTime(0),
            origin: EdgeId(origin),
            destination: EdgeId(destination),
            equipped: false,
        }
    }

    fn run(t: &mut Traffic, lights: &[Option<TrafficLight>], from_ms: u64, to_ms: u64) {
        let mut now = from_ms;
        while now < to_ms {
            now += t.dt_ms();
            t.step(SimTime(now), lights);
        }
    }

    /// Closed-form time to cover `dist` from rest, accelerating at `a` up to `v`.
    fn kinematic_travel_time(dist: f64, v: f64, a: f64) -> f64 {
        let ramp = v * v / (2.0 * a);
        if dist <= ramp {
            (2.0 * dist / a).sqrt()
        } else {
            v / a + (dist - ramp) / v
        }
    }

    #[test]
    fn single_vehicle_free_flow_matches_kinematics() {
        let net = RoadNetwork::build_one_junction(300.0).unwrap();
        let mut t = traffic(net, 0.0);
        let id = t.add_vehicle(&depart(0, 1), SimTime(0));
        assert!(t.try_insert(EdgeId(0), SimTime(0)).is_some());
        let lights = vec![None; 5];
        run(&mut t, &lights, 0, 100_000);
        let tt = t.vehicle(id).travel_time().unwrap() as f64 / 1000.0;
        let oracle = kinematic_travel_time(600.0, 13.9, 2.6);
        assert!((oracle - 45.84).abs() < 0.01, "oracle {oracle}");
        assert!((tt - oracle).abs() / oracle < 0.02, "{tt} vs {oracle}");
        assert_eq!(t.census().running, 0);
        assert_eq!(t.census().ended, 1);
    }

    #[test]
    fn stops_at_red_without_crossing() {
        let net = RoadNetwork::build_one_junction(300.0).unwrap();
        let light = TrafficLight::new(&net, NodeId(0), 3000);
        let mut t = traffic(net, 0.5);
        // Edge 2 (south approach) is group B, red from the start.
        let id = t.add_vehicle(&depart(2, 3), SimTime(0));
        t.try_insert(EdgeId(2), SimTime(0));
        let lights = vec![Some(light), None, None, None, None];
        run(&mut t, &lights, 0, 60_000);
        let v = t.vehicle(id);
        assert_eq!(v.edge(), Some(EdgeId(2)));
        assert!(v.speed.abs() < 1e-9);
        assert!(v.position <= 300.0 && v.position > 290.0, "{}", v.position);
        assert_eq!(t.audit().red_crossings, 0);
    }

    #[test]
    fn follower_keeps_min_gap_behind_stopped_leader() {
        let net = RoadNetwork::build_one_junction(300.0).unwrap();
        let light = TrafficLight::new(&net, NodeId(0), 3000);
        let mut t = traffic(net, 0.5);
        let lights = vec![Some(light), None, None, None, None];
        let lead = t.add_vehicle(&depart(2, 3), SimTime(0));
        t.try_insert(EdgeId(2), SimTime(0));
        run(&mut t, &lights, 0, 5_000);
        let follow = t.add_vehicle(&depart(2, 3), SimTime(5_000));
        t.try_insert(EdgeId(2), SimTime(5_000));
        run(&mut t, &lights, 5_000, 90_000);
        let (l, f) = (t.vehicle(lead), t.vehicle(follow));
        let gap = l.position - l.length - f.position;
        assert!(gap >= 2.5 - 1e-9, "gap {gap}");
        assert!(f.speed < 1e-9);
        assert_eq!(t.audit().gap_violations, 0);
    }

    #[test]
    fn crosses_after_light_turns_green() {
        let net = RoadNetwork::build_one_junction(300.0).unwrap();
        let mut light = TrafficLight::new(&net, NodeId(0), 3000);
        let mut t = traffic(net, 0.5);
        let id = t.add_vehicle(&depart(2, 3), SimTime(0));
        t.try_insert(EdgeId(2), SimTime(0));
        let mut lights = vec![Some(light.clone()), None, None, None, None];
        run(&mut t, &lights, 0, 40_000);
        light.request(Group::B, SimTime(40_000)).unwrap();
        lights[0] = Some(light.clone());
        run(&mut t, &lights, 40_000, 43_000);
        assert_eq!(t.vehicle(id).edge(), Some(EdgeId(2)));
        light.end_yellow(SimTime(43_000));
        lights[0] = Some(light);
        run(&mut t, &lights, 43_000, 80_000);
        assert_eq!(t.vehicle(id).status, VehicleStatus::Ended);
        assert_eq!(t.audit().red_crossings, 0);
    }

    #[test]
    fn blocked_entry_is_queued_not_inserted() {
        let net = RoadNetwork::build_one_junction(300.0).unwrap();
        let mut t = traffic(net, 0.5);
        t.add_vehicle(&depart(0, 1), SimTime(0));
        t.try_insert(EdgeId(0), SimTime(0));
        t.add_vehicle(&depart(0, 1), SimTime(0));
        assert!(t.try_insert(EdgeId(0), SimTime(0)).is_none());
        let c = t.census();
        assert_eq!((c.queued, c.running, c.inserted()), (1, 1, 1));
        assert!(c.is_conserved());
        let lights = vec![None; 5];
        run(&mut t, &lights, 0, 5_000);
        assert_eq!(t.census().queued, 0);
        assert_eq!(t.census().running, 2);
    }

    #[test]
    fn mean_speed_helpers() {
        let net = RoadNetwork::build_one_junction(300.0).unwrap();
        let mut t = traffic(net, 0.5);
        assert_eq!(t.mean_speed(EdgeId(0)), 13.9);
        t.add_vehicle(&depart(0, 1), SimTime(0));
        t.try_insert(EdgeId(0), SimTime(0));
        t.vehicles[0].position = 100.0;
        t.vehicles[0].speed = 10.0;
        t.add_vehicle(&depart(0, 1), SimTime(0));
        t.try_insert(EdgeId(0), SimTime(0));
        t.vehicles[1].speed = 12.0;
        assert!((t.mean_speed(EdgeId(0)) - 11.0).abs() < 1e-12);
        let h = 2.0 / (1.0 / 10.0 + 1.0 / 12.0);
        assert!((t.harmonic_mean_speed(EdgeId(0)) - h).abs() < 1e-12);
    }

    #[test]
    fn all_vehicles_end_without_lights() {
        let net = RoadNetwork::build_one_junction(300.0).unwrap();
        let mut t = traffic(net, 0.5);
        let lights = vec![None; 5];
        let mut now = 0;
        for k in 0..20u64 {
            let at = k * 4000;
            run(&mut t, &lights, now, at);
            now = at;
            t.add_vehicle(&depart(0, 1), SimTime(at));
            t.try_insert(EdgeId(0), SimTime(at));
        }
        run(&mut t, &lights, now, now + 120_000);
        let c = t.census();
        assert_eq!(c.running, 0);
        assert_eq!(c.inserted(), c.ended);
        assert_eq!(c.ended, 20);
        assert_eq!(t.audit().gap_violations, 0);
    }

    #[test]
    fn route_position_helpers() {
        let net = RoadNetwork::build_one_junction(300.0).unwrap();
        let mut t = traffic(net, 0.0);
        let id = t.add_vehicle(&depart(0, 1), SimTime(0));
        t.try_insert(EdgeId(0), SimTime(0));
        t.vehicles[0].position = 100.0;
        assert_eq!(t.nodes_ahead(id), vec![(NodeId(0), 200.0), (NodeId(2), 500.0)]);
        assert_eq!(t.distance_past(id, NodeId(0)), None);
        assert_eq!(t.distance_past(id, NodeId(1)), Some(100.0));
        t.vehicles[0].edge_index = 1;
        t.vehicles[0].position = 60.0;
        assert_eq!(t.distance_past(id, NodeId(0)), Some(60.0));
        assert_eq!(t.distance_past(id, NodeId(1)), Some(360.0));
        let p = t.coordinates(id).unwrap();
        assert_eq!((p.x, p.y), (60.0, 0.0));
    }
}
