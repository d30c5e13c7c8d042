use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::comms::{ChannelConfig, RadioConfig};
use crate::control::ControlConfig;
use crate::error::{ConfigError, Error, Result};
use crate::road::{EdgeId, NodeId, NodeKind, RoadNetwork};
use crate::sim::{streams, RngStream, SimTime};
use crate::traffic::{
    zone_table_flows, Amount, CarFollowingParams, DemandSpec, Endpoint, Flow, ZoneReading,
    ZoneTable,
};
use crate::world::RunInput;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NetworkConfig {
    OneJunction {
        #[serde(default = "default_edge_length")]
        edge_length_m: f64,
    },
    Grid {
        #[serde(default = "default_grid_size")]
        size: usize,
        #[serde(default = "default_grid_spacing")]
        edge_length_m: f64,
    },
    /// A network listing file, as written by `RoadNetwork::export_listing`.
    File { path: PathBuf },
}

fn default_edge_length() -> f64 {
    300.0
}
fn default_grid_size() -> usize {
    4
}
fn default_grid_spacing() -> f64 {
    500.0
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig::OneJunction {
            edge_length_m: default_edge_length(),
        }
    }
}

impl NetworkConfig {
    pub fn build(&self) -> Result<RoadNetwork> {
        match self {
            NetworkConfig::OneJunction { edge_length_m } => RoadNetwork::build_one_junction(*edge_length_m),
            NetworkConfig::Grid {
                size,
                edge_length_m,
            } => RoadNetwork::build_grid(*size, *edge_length_m),
            NetworkConfig::File { path } => RoadNetwork::parse_listing(&std::fs::read_to_string(path)?),
        }
    }
}

/// Which junctions get an IA.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JunctionsConfig {
    /// Fraction of junctions equipped, sampled per seed. Ignored when
    /// `equipped` lists junctions explicitly.
    pub equipped_ratio: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub equipped: Option<Vec<usize>>,
}

impl Default for JunctionsConfig {
    fn default() -> Self {
        JunctionsConfig {
            equipped_ratio: 1.0,
            equipped: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub origin_edge: usize,
    pub destination_edge: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub veh_per_hour: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<u32>,
    #[serde(default)]
    pub begin_ms: u64,
    /// Defaults to the end of the run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub end_ms: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DemandConfig {
    /// The same hourly rate on every external entry edge, each vehicle
    /// driving straight across the network.
    Rate { veh_per_hour: f64 },
    /// Zone origin/destination tables applied one after another.
    ZoneTables {
        #[serde(default)]
        reading: ZoneReading,
        #[serde(default = "default_tables")]
        tables: Vec<ZoneTable>,
    },
    Flows { flows: Vec<FlowConfig> },
}

fn default_tables() -> Vec<ZoneTable> {
    vec![ZoneTable::first_half(), ZoneTable::second_half()]
}

impl Default for DemandConfig {
    fn default() -> Self {
        DemandConfig::Rate { veh_per_hour: 300.0 }
    }
}

impl DemandConfig {
    /// Short label used in result tables.
    pub fn label(&self) -> String {
        match self {
            DemandConfig::Rate { veh_per_hour } => format!("{veh_per_hour}"),
            DemandConfig::ZoneTables { reading, .. } => match reading {
                ZoneReading::PerPair => "zone-tables".into(),
                ZoneReading::PerOriginTotal => "zone-tables-per-origin".into(),
            },
            DemandConfig::Flows { flows } => format!("flows-{}", flows.len()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalConfig {
    pub yellow_duration_ms: u64,
}

impl Default for SignalConfig {
    fn default() -> Self {
        SignalConfig {
            yellow_duration_ms: 3000,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub trace_vehicles: bool,
    pub trace_messages: bool,
    pub trace_switches: bool,
}

/// A complete scenario. Every key is optional in the file; absent keys take
/// the defaults below.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub sim_duration_ms: u64,
    pub traffic_step_ms: u64,
    pub penetration_rate: f64,
    pub network: NetworkConfig,
    pub junctions: JunctionsConfig,
    pub demand: DemandConfig,
    pub control: ControlConfig,
    pub radio: RadioConfig,
    pub channel: ChannelConfig,
    pub traffic: CarFollowingParams,
    pub signals: SignalConfig,
    pub output: OutputConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            name: "scenario".into(),
            seed: 1,
            sim_duration_ms: 600_000,
            traffic_step_ms: 100,
            penetration_rate: 0.5,
            network: NetworkConfig::default(),
            junctions: JunctionsConfig::default(),
            demand: DemandConfig::default(),
            control: ControlConfig::default(),
            radio: RadioConfig::default(),
            channel: ChannelConfig::default(),
            traffic: CarFollowingParams::default(),
            signals: SignalConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        toml::to_string(self).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::from_toml(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.sim_duration_ms == 0 {
            return Err(ConfigError::domain("sim_duration_ms", 0, ">= 1"));
        }
        if self.traffic_step_ms == 0 {
            return Err(ConfigError::domain("traffic_step_ms", 0, ">= 1"));
        }
        if self.seed > i64::MAX as u64 {
            return Err(ConfigError::domain("seed", self.seed, "<= 2^63 - 1"));
        }
        if !(0.0..=1.0).contains(&self.penetration_rate) {
            return Err(ConfigError::domain("penetration_rate", self.penetration_rate, "[0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.junctions.equipped_ratio) {
            return Err(ConfigError::domain(
                "junctions.equipped_ratio",
                self.junctions.equipped_ratio,
                "[0, 1]",
            ));
        }
        match &self.network {
            NetworkConfig::OneJunction { edge_length_m } | NetworkConfig::Grid { edge_length_m, .. }
                if !(*edge_length_m > 0.0) =>
            {
                return Err(ConfigError::domain("network.edge_length_m", edge_length_m, "> 0"));
            }
            NetworkConfig::Grid { size, .. } if *size < 2 => {
                return Err(ConfigError::domain("network.size", size, ">= 2"));
            }
            _ => {}
        }
        match &self.demand {
            DemandConfig::Rate { veh_per_hour } if !(*veh_per_hour >= 0.0) || !veh_per_hour.is_finite() => {
                return Err(ConfigError::domain("demand.veh_per_hour", veh_per_hour, ">= 0"));
            }
            DemandConfig::Flows { flows } => {
                for f in flows {
                    if f.veh_per_hour.is_some() == f.count.is_some() {
                        return Err(ConfigError::Invalid {
                            key: "demand.flows",
                            message: "each flow needs exactly one of veh_per_hour or count".into(),
                        });
                    }
                }
            }
            _ => {}
        }
        self.control.validate()?;
        self.radio.validate()?;
        self.channel.validate()?;
        self.traffic.validate()?;
        Ok(())
    }

    /// Builds the network, picks the equipped junctions and expands the demand.
    pub fn prepare(&self) -> Result<RunInput> {
        self.validate()?;
        let net = self.network.build()?;
        let equipped_junctions = self.equipped_junctions(&net)?;
        let flows = self.flows(&net)?;
        let spec = DemandSpec {
            flows,
            equipped_ratio: self.penetration_rate,
        };
        let mut rng = RngStream::new(self.seed, streams::DEMAND).rng();
        let departures = spec.expand(&net, &mut rng)?;
        Ok(RunInput {
            network: Arc::new(net),
            seed: self.seed,
            duration_ms: self.sim_duration_ms,
            step_ms: self.traffic_step_ms,
            car_following: self.traffic.clone(),
            yellow_ms: self.signals.yellow_duration_ms,
            departures,
            equipped_junctions,
            control: self.control.clone(),
            radio_range_m: self.radio.range(),
            channel: self.channel.clone(),
            trace_vehicles: self.output.trace_vehicles,
        })
    }

    /// Explicit list if given, else `round(ratio * n)` junctions drawn
    /// without replacement from the junction-select stream.
    pub fn equipped_junctions(&self, net: &RoadNetwork) -> Result<Vec<NodeId>> {
        let junctions: Vec<NodeId> = net.junctions().map(|n| n.id).collect();
        if let Some(list) = &self.junctions.equipped {
            let mut out = Vec::new();
            for &j in list {
                if net.nodes().get(j).map(|n| n.kind) != Some(NodeKind::Junction) {
                    return Err(ConfigError::Invalid {
                        key: "junctions.equipped",
                        message: format!("node {j} is not a junction"),
                    }
                    .into());
                }
                out.push(NodeId(j));
            }
            out.sort();
            out.dedup();
            return Ok(out);
        }
        let n = junctions.len();
        let k = (self.junctions.equipped_ratio * n as f64).round() as usize;
        if k >= n {
            return Ok(junctions);
        }
        let mut rng = RngStream::new(self.seed, streams::JUNCTION_SELECT).rng();
        let mut picked: Vec<NodeId> = sample(&mut rng, n, k).into_iter().map(|i| junctions[i]).collect();
        picked.sort();
        Ok(picked)
    }

    fn flows(&self, net: &RoadNetwork) -> Result<Vec<Flow>> {
        let end = SimTime(self.sim_duration_ms);
        match &self.demand {
            DemandConfig::Rate { veh_per_hour } => {
                let mut flows = Vec::new();
                for e in net.edges() {
                    if net.node(e.from).kind != NodeKind::Boundary {
                        continue;
                    }
                    let exit = straight_exit(net, e.id).ok_or_else(|| {
                        Error::Network(format!("no straight-through exit from {}", e.id))
                    })?;
                    flows.push(Flow {
                        origin: Endpoint::Edge(e.id),
                        destination: Endpoint::Edge(exit),
                        amount: Amount::Rate(*veh_per_hour),
                        begin: SimTime::ZERO,
                        end,
                    });
                }
                Ok(flows)
            }
            DemandConfig::ZoneTables { reading, tables } => Ok(zone_table_flows(net, tables, *reading)),
            DemandConfig::Flows { flows } => Ok(flows
                .iter()
                .map(|f| Flow {
                    origin: Endpoint::Edge(EdgeId(f.origin_edge)),
                    destination: Endpoint::Edge(EdgeId(f.destination_edge)),
                    amount: match (f.veh_per_hour, f.count) {
                        (Some(r), _) => Amount::Rate(r),
                        (None, Some(c)) => Amount::Count(c),
                        (None, None) => Amount::Count(0),
                    },
                    begin: SimTime(f.begin_ms),
                    end: f.end_ms.map_or(end, SimTime),
                })
                .collect()),
        }
    }
}

/// Follows the straightest continuation from `entry` until an edge ends at
/// a boundary node.
pub fn straight_exit(net: &RoadNetwork, entry: EdgeId) -> Option<EdgeId> {
    let dir = |e: EdgeId| {
        let e = net.edge(e);
        let (a, b) = (net.node(e.from).pos, net.node(e.to).pos);
        let d = a.distance(b);
        ((b.x - a.x) / d, (b.y - a.y) / d)
    };
    let mut cur = entry;
    for _ in 0..net.edges().len() {
        let (dx, dy) = dir(cur);
        let next = net
            .successors(cur)
            .map(|s| {
                let (sx, sy) = dir(s);
                (dx * sx + dy * sy, s)
            })
            .filter(|(dot, _)| *dot > 0.99)
            .max_by(|a, b| a.0.total_cmp(&b.0))?
            .1;
        if net.node(net.edge(next).to).kind == NodeKind::Boundary {
            return Some(next);
        }
        cur = next;
    }
    None
}
