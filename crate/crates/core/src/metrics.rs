//! Road traffic and communication indicators computed from run logs.

use serde::{Deserialize, Serialize};

use crate::comms::MessageRecord;
use crate::road::NodeId;
use crate::sim::SimTime;
use crate::traffic::{Vehicle, VehicleStatus};
use crate::world::{RunOutput, SwitchRecord};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JunctionReport {
    pub junction: usize,
    pub equipped: bool,
    pub rsu_throughput_bps: f64,
    pub switches: usize,
    pub mean_action_interval_s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub duration_s: f64,
    pub inserted: usize,
    pub ended: usize,
    pub running: usize,
    /// Demanded but still waiting for room at their origin.
    pub queued: usize,
    pub ended_ratio: Option<f64>,
    pub mean_travel_time_all_s: Option<f64>,
    pub mean_travel_time_equipped_s: Option<f64>,
    pub mean_tcp_end_to_end_delay_s: Option<f64>,
    /// Sum over all IAs.
    pub rsu_throughput_bps: f64,
    pub app_data_rate_bps: f64,
    /// Mean over junctions with at least two switches.
    pub mean_action_interval_s: Option<f64>,
    /// Distance driven over time spent, all vehicles pooled.
    pub mean_speed_mps: Option<f64>,
    pub communicating_vehicles: usize,
    pub messages_sent: usize,
    pub messages_delivered: usize,
    pub switches: usize,
    pub conflicting_greens: u64,
    pub red_crossings: u64,
    pub junctions: Vec<JunctionReport>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Mean delay in seconds of messages delivered by `t_end`.
pub fn mean_end_to_end_delay(log: &[MessageRecord], t_end: SimTime) -> Option<f64> {
    mean(
        log.iter()
            .filter(|m| m.delivery_time <= t_end)
            .map(|m| m.delay_ms() as f64 / 1000.0),
    )
}

/// Bits per second of vehicle-to-IA payload delivered at `ia` (all IAs
/// when `None`) by `t_end`.
pub fn rsu_throughput(log: &[MessageRecord], ia: Option<NodeId>, t_end: SimTime, duration_s: f64) -> f64 {
    let bytes: u64 = log
        .iter()
        .filter(|m| m.delivery_time <= t_end)
        .filter(|m| match (m.receiver, ia) {
            (crate::comms::Party::Ia(r), Some(j)) => r == j,
            (crate::comms::Party::Ia(_), None) => true,
            _ => false,
        })
        .map(|m| u64::from(m.size_bytes))
        .sum();
    8.0 * bytes as f64 / duration_s
}

/// Bits per second of payload sent on reliable streams, delivered or not.
pub fn app_data_rate(log: &[MessageRecord], duration_s: f64) -> f64 {
    let bytes: u64 = log.iter().map(|m| u64::from(m.size_bytes)).sum();
    8.0 * bytes as f64 / duration_s
}

/// Mean gap in seconds between consecutive switches, given in time order.
pub fn mean_action_interval(times: &[SimTime]) -> Option<f64> {
    if times.len() < 2 {
        return None;
    }
    mean(times.windows(2).map(|w| (w[1] - w[0]) as f64 / 1000.0))
}

/// Mean travel time in seconds of ended vehicles matching `filter`.
pub fn mean_travel_time(vehicles: &[Vehicle], t_end: SimTime, filter: impl Fn(&Vehicle) -> bool) -> Option<f64> {
    mean(
        vehicles
            .iter()
            .filter(|v| v.end_time.is_some_and(|t| t <= t_end))
            .filter(|v| filter(v))
            .filter_map(|v| v.travel_time())
            .map(|t| t as f64 / 1000.0),
    )
}

fn switch_times(switches: &[SwitchRecord], j: NodeId) -> Vec<SimTime> {
    switches
        .iter()
        .filter(|s| s.junction == j)
        .map(|s| s.time)
        .collect()
}

impl MetricsReport {
    pub fn compute(out: &RunOutput) -> Self {
        let t_end = SimTime(out.duration_ms);
        let duration_s = out.duration_ms as f64 / 1000.0;
        let inserted = out
            .vehicles
            .iter()
            .filter(|v| v.insert_time.is_some_and(|t| t <= t_end))
            .count();
        let ended = out
            .vehicles
            .iter()
            .filter(|v| v.status == VehicleStatus::Ended && v.end_time.is_some_and(|t| t <= t_end))
            .count();
        let queued = out
            .vehicles
            .iter()
            .filter(|v| v.status == VehicleStatus::Queued)
            .count();
        let junctions: Vec<JunctionReport> = out
            .junctions
            .iter()
            .map(|&j| {
                let times = switch_times(&out.switches, j);
                let equipped = out.equipped_junctions.contains(&j);
                JunctionReport {
                    junction: j.0,
                    equipped,
                    rsu_throughput_bps: if equipped {
                        rsu_throughput(&out.messages, Some(j), t_end, duration_s)
                    } else {
                        0.0
                    },
                    switches: times.len(),
                    mean_action_interval_s: mean_action_interval(&times),
                }
            })
            .collect();
        MetricsReport {
            duration_s,
            inserted,
            ended,
            running: inserted - ended,
            queued,
            ended_ratio: (inserted > 0).then(|| ended as f64 / inserted as f64),
            mean_travel_time_all_s: mean_travel_time(&out.vehicles, t_end, |_| true),
            mean_travel_time_equipped_s: mean_travel_time(&out.vehicles, t_end, |v| v.equipped),
            mean_tcp_end_to_end_delay_s: mean_end_to_end_delay(&out.messages, t_end),
            rsu_throughput_bps: rsu_throughput(&out.messages, None, t_end, duration_s),
            app_data_rate_bps: app_data_rate(&out.messages, duration_s),
            mean_action_interval_s: mean(junctions.iter().filter_map(|j| j.mean_action_interval_s)),
            mean_speed_mps: (out.vehicle_seconds > 0.0).then(|| out.distance_m / out.vehicle_seconds),
            communicating_vehicles: {
                let mut v: Vec<_> = out
                    .connections
                    .iter()
                    .filter(|c| c.established_time.is_some())
                    .map(|c| c.vehicle)
                    .collect();
                v.sort();
                v.dedup();
                v.len()
            },
            messages_sent: out.messages.len(),
            messages_delivered: out
                .messages
                .iter()
                .filter(|m| m.delivery_time <= t_end)
                .count(),
            switches: out.switches.len(),
            conflicting_greens: out.conflicting_greens,
            red_crossings: out.traffic_audit.red_crossings,
            junctions,
        }
    }
}

/// Identifies the run a report belongs to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunEcho {
    pub scenario: String,
    pub seed: u64,
    pub penetration_rate: f64,
    pub equipped_junction_ratio: f64,
    pub demand: String,
}

/// One line of the per-run CSV. Field order is the column order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub scenario: String,
    pub seed: u64,
    pub penetration_rate: f64,
    pub equipped_junction_ratio: f64,
    pub demand: String,
    pub inserted: usize,
    pub ended: usize,
    pub running: usize,
    pub queued: usize,
    pub ended_ratio: Option<f64>,
    pub mean_travel_time_all_s: Option<f64>,
    pub mean_travel_time_equipped_s: Option<f64>,
    pub mean_tcp_end_to_end_delay_s: Option<f64>,
    pub rsu_throughput_bps: f64,
    pub app_data_rate_bps: f64,
    pub mean_action_interval_s: Option<f64>,
    pub mean_speed_mps: Option<f64>,
    pub communicating_vehicles: usize,
    pub messages_sent: usize,
    pub messages_delivered: usize,
    pub switches: usize,
    pub conflicting_greens: u64,
    pub red_crossings: u64,
}

impl RunRow {
    pub fn new(echo: RunEcho, m: &MetricsReport) -> Self {
        RunRow {
            scenario: echo.scenario,
            seed: echo.seed,
            penetration_rate: echo.penetration_rate,
            equipped_junction_ratio: echo.equipped_junction_ratio,
            demand: echo.demand,
            inserted: m.inserted,
            ended: m.ended,
            running: m.running,
            queued: m.queued,
            ended_ratio: m.ended_ratio,
            mean_travel_time_all_s: m.mean_travel_time_all_s,
            mean_travel_time_equipped_s: m.mean_travel_time_equipped_s,
            mean_tcp_end_to_end_delay_s: m.mean_tcp_end_to_end_delay_s,
            rsu_throughput_bps: m.rsu_throughput_bps,
            app_data_rate_bps: m.app_data_rate_bps,
            mean_action_interval_s: m.mean_action_interval_s,
            mean_speed_mps: m.mean_speed_mps,
            communicating_vehicles: m.communicating_vehicles,
            messages_sent: m.messages_sent,
            messages_delivered: m.messages_delivered,
            switches: m.switches,
            conflicting_greens: m.conflicting_greens,
            red_crossings: m.red_crossings,
        }
    }
}

/// Serialises rows as CSV with a header line.
pub fn rows_to_csv<T: Serialize>(rows: &[T]) -> crate::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comms::{ConnId, MessageKind, Party};
    use crate::traffic::VehicleId;

    fn msg(id: u64, to_ia: bool, send: u64, deliver: u64) -> MessageRecord {
        let (v, ia) = (Party::Vehicle(VehicleId(0)), Party::Ia(NodeId(0)));
        MessageRecord {
            id,
            conn: ConnId(0),
            kind: MessageKind::PositionReport,
            sender: if to_ia { v } else { ia },
            receiver: if to_ia { ia } else { v },
            size_bytes: 30,
            send_time: SimTime(send),
            delivery_time: SimTime(deliver),
            attempts: 1,
        }
    }

    #[test]
    fn delay_examples() {
        let log = vec![msg(0, true, 0, 7), msg(1, true, 10, 19), msg(2, true, 20, 34)];
        let d = mean_end_to_end_delay(&log, SimTime(1000)).unwrap();
        assert!((d - 0.010).abs() < 1e-15);
        assert_eq!(mean_end_to_end_delay(&log[..1], SimTime(1000)), Some(0.007));
        assert_eq!(mean_end_to_end_delay(&[], SimTime(1000)), None);
        // Undelivered by the end of the run: excluded.
        assert_eq!(mean_end_to_end_delay(&log, SimTime(20)), Some(0.008));
    }

    #[test]
    fn throughput_examples() {
        let log: Vec<_> = (0..1000).map(|k| msg(k, true, k, k + 5)).collect();
        assert!((rsu_throughput(&log, None, SimTime(600_000), 600.0) - 400.0).abs() < 1e-9);
        assert_eq!(rsu_throughput(&[], None, SimTime(600_000), 600.0), 0.0);
        let doubled: Vec<_> = (0..2000).map(|k| msg(k, true, k, k + 5)).collect();
        assert!((rsu_throughput(&doubled, None, SimTime(600_000), 600.0) - 800.0).abs() < 1e-9);
        let down: Vec<_> = (0..10).map(|k| msg(k, false, k, k + 5)).collect();
        assert_eq!(rsu_throughput(&down, None, SimTime(600_000), 600.0), 0.0);
    }

    #[test]
    fn data_rate_examples() {
        let log: Vec<_> = (0..100).map(|k| msg(k, true, k, 700_000)).collect();
        assert!((app_data_rate(&log, 600.0) - 40.0).abs() < 1e-12);
        assert_eq!(app_data_rate(&[], 600.0), 0.0);
        assert!(app_data_rate(&log, 600.0) >= rsu_throughput(&log, None, SimTime(600_000), 600.0));
    }

    #[test]
    fn action_interval_examples() {
        let t = |v: &[u64]| v.iter().map(|s| SimTime::from_secs(*s)).collect::<Vec<_>>();
        assert_eq!(mean_action_interval(&t(&[45, 90, 135])), Some(45.0));
        assert_eq!(mean_action_interval(&t(&[10, 18, 63])), Some(26.5));
        assert_eq!(mean_action_interval(&t(&[10])), None);
    }

    #[test]
    fn csv_leaves_absent_values_empty() {
        let row = RunRow {
            scenario: "s".into(),
            seed: 1,
            penetration_rate: 0.5,
            equipped_junction_ratio: 1.0,
            demand: "300".into(),
            inserted: 0,
            ended: 0,
            running: 0,
            queued: 0,
            ended_ratio: None,
            mean_travel_time_all_s: None,
            mean_travel_time_equipped_s: None,
            mean_tcp_end_to_end_delay_s: None,
            rsu_throughput_bps: 0.0,
            app_data_rate_bps: 0.0,
            mean_action_interval_s: Some(45.0),
            mean_speed_mps: None,
            communicating_vehicles: 0,
            messages_sent: 0,
            messages_delivered: 0,
            switches: 0,
            conflicting_greens: 0,
            red_crossings: 0,
        };
        let text = rows_to_csv(&[row]).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("scenario,seed,penetration_rate"));
        assert_eq!(lines.next().unwrap(), "s,1,0.5,1.0,300,0,0,0,0,,,,,0.0,0.0,45.0,,0,0,0,0,0,0");
    }
}
