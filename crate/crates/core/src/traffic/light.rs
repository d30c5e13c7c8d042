use serde::{Deserialize, Serialize};

use crate::road::{EdgeId, Group, NodeId, RoadNetwork};
use crate::sim::SimTime;

/// Aspect shown to one signal group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Signal {
    Green,
    Yellow,
    Red,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum LightState {
    Stable { green: Group },
    /// `losing` shows yellow until `until`, then the other group turns green.
    Transition { losing: Group, until: SimTime },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rejection {
    AlreadySet,
    InTransition,
}

impl Rejection {
    pub fn reason(self) -> &'static str {
        match self {
            Rejection::AlreadySet => "already-set",
            Rejection::InTransition => "in-transition",
        }
    }
}

/// Result of an accepted phase request.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SwitchStarted {
    pub target: Group,
    pub yellow_end: SimTime,
}

/// Two-group signal at a junction. Only one group is ever green; every
/// change passes through a yellow interval on the group losing green.
#[derive(Clone, Debug)]
pub struct TrafficLight {
    junction: NodeId,
    state: LightState,
    last_switch_time: SimTime,
    yellow_ms: u64,
    approaches: Vec<(EdgeId, Group)>,
}

impl TrafficLight {
    /// A light for `junction`, starting with group A green at time zero.
    pub fn new(net: &RoadNetwork, junction: NodeId, yellow_ms: u64) -> Self {
        let approaches = net
            .incoming(junction)
            .iter()
            .map(|&e| (e, net.group_of(e)))
            .collect();
        TrafficLight {
            junction,
            state: LightState::Stable { green: Group::A },
            last_switch_time: SimTime::ZERO,
            yellow_ms,
            approaches,
        }
    }

    pub fn junction(&self) -> NodeId {
        self.junction
    }

    pub fn approaches(&self) -> &[(EdgeId, Group)] {
        &self.approaches
    }

    pub fn group_of(&self, edge: EdgeId) -> Option<Group> {
        self.approaches
            .iter()
            .find(|(e, _)| *e == edge)
            .map(|&(_, g)| g)
    }

    pub fn signal(&self, group: Group) -> Signal {
        match self.state {
            LightState::Stable { green } if green == group => Signal::Green,
            LightState::Stable { .. } => Signal::Red,
            LightState::Transition { losing, .. } if losing == group => Signal::Yellow,
            LightState::Transition { .. } => Signal::Red,
        }
    }

    pub fn signal_for_edge(&self, edge: EdgeId) -> Signal {
        match self.group_of(edge) {
            Some(g) => self.signal(g),
            None => Signal::Red,
        }
    }

    /// The group that is green, or that will be green once yellow ends.
    pub fn phase(&self) -> Group {
        match self.state {
            LightState::Stable { green } => green,
            LightState::Transition { losing, .. } => losing.other(),
        }
    }

    pub fn in_yellow(&self) -> bool {
        matches!(self.state, LightState::Transition { .. })
    }

    pub fn yellow_end(&self) -> Option<SimTime> {
        match self.state {
            LightState::Transition { until, .. } => Some(until),
            LightState::Stable { .. } => None,
        }
    }

    pub fn last_switch_time(&self) -> SimTime {
        self.last_switch_time
    }

    pub fn yellow_ms(&self) -> u64 {
        self.yellow_ms
    }

    /// Starts a switch to `target`. The caller is responsible for any
    /// minimum-duration gate and for calling [`TrafficLight::end_yellow`] at
    /// the returned time.
    pub fn request(&mut self, target: Group, now: SimTime) -> Result<SwitchStarted, Rejection> {
        match self.state {
            LightState::Transition { .. } => Err(Rejection::InTransition),
            LightState::Stable { green } if green == target => Err(Rejection::AlreadySet),
            LightState::Stable { green } => {
                let until = now + self.yellow_ms;
                self.state = LightState::Transition {
                    losing: green,
                    until,
                };
                self.last_switch_time = now;
                Ok(SwitchStarted {
                    target,
                    yellow_end: until,
                })
            }
        }
    }

    /// Completes a pending transition if its yellow interval is over.
    pub fn end_yellow(&mut self, now: SimTime) -> bool {
        if let LightState::Transition { losing, until } = self.state {
            if now >= until {
                self.state = LightState::Stable {
                    green: losing.other(),
                };
                return true;
            }
        }
        false
    }

    /// True when both groups show green, which must never happen.
    pub fn conflicting_greens(&self) -> bool {
        self.signal(Group::A) == Signal::Green && self.signal(Group::B) == Signal::Green
    }
}
