//! Demand definitions and their expansion into a deterministic list of
//! planned departures.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Error, Result};
use crate::road::{EdgeId, RoadNetwork, CENTER_ZONE};
use crate::sim::SimTime;

/// Where a flow starts or ends.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Endpoint {
    Edge(EdgeId),
    /// Uniformly drawn from the zone's entry (origin) or exit (destination) edges.
    Zone(u8),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Amount {
    /// Vehicles per hour, inserted at exactly uniform spacing.
    Rate(f64),
    /// A fixed number spread uniformly over the active interval.
    Count(u32),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Flow {
    pub origin: Endpoint,
    pub destination: Endpoint,
    pub amount: Amount,
    pub begin: SimTime,
    pub end: SimTime,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemandSpec {
    pub flows: Vec<Flow>,
    pub equipped_ratio: f64,
}

/// A vehicle the demand wants to insert.
#[derive(Clone, Debug, PartialEq)]
pub struct PlannedDeparture {
    pub depart: SimTime,
    pub origin: EdgeId,
    pub destination: EdgeId,
    pub equipped: bool,
}

impl DemandSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.equipped_ratio) {
            return Err(ConfigError::domain(
                "penetration_rate",
                self.equipped_ratio,
                "[0, 1]",
            ));
        }
        for f in &self.flows {
            if let Amount::Rate(r) = f.amount {
                if !(r >= 0.0) || !r.is_finite() {
                    return Err(ConfigError::domain("demand.rate", r, ">= 0"));
                }
            }
            if f.end < f.begin {
                return Err(ConfigError::Invalid {
                    key: "demand.flows",
                    message: "flow ends before it begins".into(),
                });
            }
        }
        Ok(())
    }

    /// Expands every flow into departures. Each vehicle draws, in order, its
    /// origin edge (zone endpoints only), its destination edge (zone
    /// endpoints only) and a uniform number deciding equipment; the last
    /// draw is made even when the ratio is 0 or 1 so that runs differing
    /// only in penetration see identical demand.
    pub fn expand<R: Rng>(&self, net: &RoadNetwork, rng: &mut R) -> Result<Vec<PlannedDeparture>> {
        self.validate()?;
        let mut out = Vec::new();
        for flow in &self.flows {
            for depart in departure_times(flow) {
                let origin = pick(net, flow.origin, true, rng)?;
                let destination = pick(net, flow.destination, false, rng)?;
                let u: f64 = rng.gen();
                out.push(PlannedDeparture {
                    depart,
                    origin,
                    destination,
                    equipped: u < self.equipped_ratio,
                });
            }
        }
        // Stable: equal times keep flow order.
        out.sort_by_key(|d| d.depart);
        Ok(out)
    }
}

fn pick<R: Rng>(net: &RoadNetwork, ep: Endpoint, origin: bool, rng: &mut R) -> Result<EdgeId> {
    match ep {
        Endpoint::Edge(e) => {
            if e.0 >= net.edges().len() {
                return Err(Error::Network(format!("demand references missing {e}")));
            }
            Ok(e)
        }
        Endpoint::Zone(z) => {
            let zone = net
                .zones()
                .iter()
                .find(|zone| zone.id == z)
                .ok_or_else(|| Error::Network(format!("demand references missing zone {z}")))?;
            let set = if origin { &zone.entries } else { &zone.exits };
            if set.is_empty() {
                return Err(Error::Network(format!("zone {z} has no usable edges")));
            }
            Ok(set[rng.gen_range(0..set.len())])
        }
    }
}

/// Uniformly spaced departure instants of one flow.
pub fn departure_times(flow: &Flow) -> Vec<SimTime> {
    let begin = flow.begin.millis();
    let span = flow.end.millis().saturating_sub(begin);
    match flow.amount {
        Amount::Count(n) => (0..n as u64)
            .map(|k| SimTime(begin + k * span / n as u64))
            .collect(),
        Amount::Rate(r) if r > 0.0 => {
            let interval = 3_600_000.0 / r;
            (0u64..)
                .map(|k| (k as f64 * interval).floor() as u64)
                .take_while(|&t| t < span)
                .map(|t| SimTime(begin + t))
                .collect()
        }
        Amount::Rate(_) => Vec::new(),
    }
}

/// How a zone-table cell is read.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ZoneReading {
    /// The cell is the count for every ordered (origin zone, destination zone) pair.
    #[default]
    PerPair,
    /// The cell is the total leaving each origin zone for the column's
    /// destinations, split evenly between them.
    PerOriginTotal,
}

/// Origin/destination counts for one period, by zone role.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoneTable {
    pub duration_ms: u64,
    #[serde(default)]
    pub center_to_center: u32,
    pub center_to_other: u32,
    pub other_to_center: u32,
    pub other_to_other: u32,
}

impl ZoneTable {
    /// Demand for the first 900 s of the grid experiment.
    pub fn first_half() -> Self {
        ZoneTable {
            duration_ms: 900_000,
            center_to_center: 0,
            center_to_other: 10,
            other_to_center: 15,
            other_to_other: 15,
        }
    }

    /// Demand for the last 900 s of the grid experiment.
    pub fn second_half() -> Self {
        ZoneTable {
            duration_ms: 900_000,
            center_to_center: 0,
            center_to_other: 10,
            other_to_center: 20,
            other_to_other: 20,
        }
    }
}

/// Turns consecutive zone tables into count flows over ordered zone pairs.
/// Zones without usable edges are skipped.
pub fn zone_table_flows(net: &RoadNetwork, tables: &[ZoneTable], reading: ZoneReading) -> Vec<Flow> {
    let zones: Vec<u8> = net
        .zones()
        .iter()
        .filter(|z| !z.entries.is_empty() && !z.exits.is_empty())
        .map(|z| z.id)
        .collect();
    let mut flows = Vec::new();
    let mut begin = 0u64;
    for table in tables {
        let end = begin + table.duration_ms;
        for &o in &zones {
            // Destinations grouped by column so per-origin totals can be split.
            let mut columns: [Vec<u8>; 2] = [Vec::new(), Vec::new()];
            for &d in &zones {
                // Centre-to-centre has its own cell; other zones never feed themselves.
                if d == o && o != CENTER_ZONE {
                    continue;
                }
                columns[usize::from(d != CENTER_ZONE)].push(d);
            }
            for (col, dests) in columns.iter().enumerate() {
                let to_center = col == 0;
                let cell = match (o == CENTER_ZONE, to_center) {
                    (true, true) => table.center_to_center,
                    (true, false) => table.center_to_other,
                    (false, true) => table.other_to_center,
                    (false, false) => table.other_to_other,
                };
                for (k, &d) in dests.iter().enumerate() {
                    let count = match reading {
                        ZoneReading::PerPair => cell,
                        ZoneReading::PerOriginTotal => {
                            let n = dests.len() as u32;
                            cell / n + u32::from((k as u32) < cell % n)
                        }
                    };
                    if count == 0 {
                        continue;
                    }
                    flows.push(Flow {
                        origin: Endpoint::Zone(o),
                        destination: Endpoint::Zone(d),
                        amount: Amount::Count(count),
                        begin: SimTime(begin),
                        end: SimTime(end),
                    });
                }
            }
        }
        begin = end;
    }
    flows
}
