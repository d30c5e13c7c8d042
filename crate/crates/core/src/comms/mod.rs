//! Vehicle-to-infrastructure communication: radio range, beacons and
//! reliable ordered connections over a parametric delay/loss channel.

mod channel;
mod radio;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

pub use channel::{Channel, ChannelConfig, Transfer};
pub use radio::{derive_range, RadioConfig};

use crate::error::CommsError;
use crate::road::{EdgeId, Group, NodeId, Point};
use crate::sim::SimTime;
use crate::traffic::VehicleId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConnId(pub u32);

impl fmt::Display for ConnId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Party {
    Vehicle(VehicleId),
    Ia(NodeId),
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Party::Vehicle(v) => write!(f, "{v}"),
            Party::Ia(n) => write!(f, "ia{}", n.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Vehicle to IA.
    Uplink,
    /// IA to vehicle.
    Downlink,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MessageKind {
    PositionReport,
    ElectionNotice,
    ActuationRequest,
}

impl MessageKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MessageKind::PositionReport => "position-report",
            MessageKind::ElectionNotice => "election-notice",
            MessageKind::ActuationRequest => "actuation-request",
        }
    }
}

/// Application message contents, carried by the delivery event.
#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    PositionReport { position: Point, sent: SimTime },
    ElectionNotice { notice: u64 },
    ActuationRequest { edge: EdgeId, group: Group, notice: u64 },
}

impl Payload {
    pub fn kind(&self) -> MessageKind {
        match self {
            Payload::PositionReport { .. } => MessageKind::PositionReport,
            Payload::ElectionNotice { .. } => MessageKind::ElectionNotice,
            Payload::ActuationRequest { .. } => MessageKind::ActuationRequest,
        }
    }
}

/// One reliable message, recorded at send time with its delivery instant.
#[derive(Clone, Debug, PartialEq)]
pub struct MessageRecord {
    pub id: u64,
    pub conn: ConnId,
    pub kind: MessageKind,
    pub sender: Party,
    pub receiver: Party,
    pub size_bytes: u32,
    pub send_time: SimTime,
    pub delivery_time: SimTime,
    pub attempts: u32,
}

impl MessageRecord {
    pub fn delay_ms(&self) -> u64 {
        self.delivery_time - self.send_time
    }

    pub fn is_uplink(&self) -> bool {
        matches!(self.receiver, Party::Ia(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConnState {
    Opening,
    Established,
    Closed,
}

#[derive(Clone, Debug)]
pub struct Connection {
    pub id: ConnId,
    pub vehicle: VehicleId,
    pub ia: NodeId,
    pub state: ConnState,
    pub open_time: SimTime,
    pub established_time: Option<SimTime>,
    pub close_time: Option<SimTime>,
    /// Latest scheduled delivery per direction, for in-order delivery.
    last_delivery: [SimTime; 2],
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CommsStats {
    pub handshake_aborts: u64,
    pub retransmissions: u64,
    pub beacons_sent: u64,
    pub beacons_delivered: u64,
    pub beacons_lost: u64,
}

pub struct Comms {
    channel: Channel,
    range: f64,
    payload_bytes: u32,
    connections: Vec<Connection>,
    /// Opening or established connection per (vehicle, IA).
    live: BTreeMap<(VehicleId, NodeId), ConnId>,
    established: BTreeMap<NodeId, usize>,
    log: Vec<MessageRecord>,
    stats: CommsStats,
}

impl Comms {
    pub fn new(channel: Channel, range: f64, payload_bytes: u32) -> Self {
        Comms {
            channel,
            range,
            payload_bytes,
            connections: Vec::new(),
            live: BTreeMap::new(),
            established: BTreeMap::new(),
            log: Vec::new(),
            stats: CommsStats::default(),
        }
    }

    pub fn range(&self) -> f64 {
        self.range
    }

    pub fn in_range(&self, distance: f64) -> bool {
        distance <= self.range
    }

    pub fn connections(&self) -> &[Connection] {
        &self.connections
    }

    pub fn connection(&self, id: ConnId) -> Option<&Connection> {
        self.connections.get(id.0 as usize)
    }

    pub fn live_connection(&self, vehicle: VehicleId, ia: NodeId) -> Option<ConnId> {
        self.live.get(&(vehicle, ia)).copied()
    }

    /// Established connections at `ia`: the load term of the channel.
    pub fn active_at(&self, ia: NodeId) -> usize {
        self.established.get(&ia).copied().unwrap_or(0)
    }

    pub fn log(&self) -> &[MessageRecord] {
        &self.log
    }

    pub fn stats(&self) -> CommsStats {
        self.stats
    }

    /// Starts a handshake. Returns the connection and when the handshake
    /// completes; the caller must then call [`Comms::complete_open`].
    pub fn open(
        &mut self,
        vehicle: VehicleId,
        ia: NodeId,
        distance: f64,
        now: SimTime,
    ) -> Result<(ConnId, SimTime), CommsError> {
        if self.live.contains_key(&(vehicle, ia)) {
            return Err(CommsError::AlreadyConnected);
        }
        if !self.in_range(distance) {
            return Err(CommsError::OutOfRange);
        }
        let id = ConnId(self.connections.len() as u32);
        let delay = self.channel.handshake(self.active_at(ia));
        self.connections.push(Connection {
            id,
            vehicle,
            ia,
            state: ConnState::Opening,
            open_time: now,
            established_time: None,
            close_time: None,
            last_delivery: [now; 2],
        });
        self.live.insert((vehicle, ia), id);
        Ok((id, now + delay))
    }

    /// Finishes a handshake; aborts it if the vehicle is now out of range.
    pub fn complete_open(&mut self, id: ConnId, distance: f64, now: SimTime) -> Result<bool, CommsError> {
        let in_range = self.in_range(distance);
        let conn = self
            .connections
            .get_mut(id.0 as usize)
            .ok_or(CommsError::UnknownConnection)?;
        if conn.state != ConnState::Opening {
            return Ok(false);
        }
        if in_range {
            conn.state = ConnState::Established;
            conn.established_time = Some(now);
            conn.last_delivery = [now; 2];
            *self.established.entry(conn.ia).or_default() += 1;
            Ok(true)
        } else {
            conn.state = ConnState::Closed;
            conn.close_time = Some(now);
            self.live.remove(&(conn.vehicle, conn.ia));
            self.stats.handshake_aborts += 1;
            Ok(false)
        }
    }

    /// Closes a connection. Closing twice is a no-op; messages already in
    /// flight are still delivered.
    pub fn close(&mut self, id: ConnId, now: SimTime) {
        let Some(conn) = self.connections.get_mut(id.0 as usize) else {
            return;
        };
        match conn.state {
            ConnState::Closed => {}
            state => {
                if state == ConnState::Established {
                    if let Some(n) = self.established.get_mut(&conn.ia) {
                        *n -= 1;
                    }
                }
                conn.state = ConnState::Closed;
                conn.close_time = Some(now);
                self.live.remove(&(conn.vehicle, conn.ia));
            }
        }
    }

    /// Sends one application message and records it. The returned record
    /// carries the delivery time the caller must schedule.
    pub fn send(
        &mut self,
        id: ConnId,
        direction: Direction,
        kind: MessageKind,
        now: SimTime,
    ) -> Result<MessageRecord, CommsError> {
        let conn = self
            .connections
            .get(id.0 as usize)
            .ok_or(CommsError::UnknownConnection)?;
        if conn.state != ConnState::Established {
            return Err(CommsError::NotConnected);
        }
        let ia = conn.ia;
        let transfer = self.channel.reliable(self.active_at(ia));
        self.stats.retransmissions += u64::from(transfer.attempts - 1);
        let conn = &mut self.connections[id.0 as usize];
        let slot = match direction {
            Direction::Uplink => 0,
            Direction::Downlink => 1,
        };
        let delivery = (now + transfer.delay_ms).max(conn.last_delivery[slot]);
        conn.last_delivery[slot] = delivery;
        let (sender, receiver) = match direction {
            Direction::Uplink => (Party::Vehicle(conn.vehicle), Party::Ia(conn.ia)),
            Direction::Downlink => (Party::Ia(conn.ia), Party::Vehicle(conn.vehicle)),
        };
        let record = MessageRecord {
            id: self.log.len() as u64,
            conn: id,
            kind,
            sender,
            receiver,
            size_bytes: self.payload_bytes,
            send_time: now,
            delivery_time: delivery,
            attempts: transfer.attempts,
        };
        self.log.push(record.clone());
        Ok(record)
    }

    /// Delay of a beacon from `ia` to a receiver at `distance`, or `None`
    /// when out of range or lost.
    pub fn beacon(&mut self, ia: NodeId, distance: f64) -> Option<u64> {
        if !self.in_range(distance) {
            return None;
        }
        self.stats.beacons_sent += 1;
        let d = self.channel.datagram(self.active_at(ia));
        match d {
            Some(_) => self.stats.beacons_delivered += 1,
            None => self.stats.beacons_lost += 1,
        }
        d
    }

    /// Distinct vehicles that ever had an established connection.
    pub fn communicating_vehicles(&self) -> usize {
        let mut v: Vec<VehicleId> = self
            .connections
            .iter()
            .filter(|c| c.established_time.is_some())
            .map(|c| c.vehicle)
            .collect();
        v.sort();
        v.dedup();
        v.len()
    }

    pub fn write_log<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "kind,sender,receiver,size,send_time,delivery_time,conn,attempts")?;
        for m in &self.log {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                m.kind.as_str(),
                m.sender,
                m.receiver,
                m.size_bytes,
                m.send_time,
                m.delivery_time,
                m.conn,
                m.attempts
            )?;
        }
        Ok(())
    }
}
