//! Scenario files, the two experiment generators and batch execution.

mod batch;
mod config;

pub use batch::{
    aggregate, echo, mean_sd, run_batch, run_batch_with, run_scenario, AggregateRow, BatchOutcome, Failure,
};
pub use config::{
    straight_exit, DemandConfig, FlowConfig, JunctionsConfig, NetworkConfig, OutputConfig, ScenarioConfig,
    SignalConfig,
};

use crate::traffic::{ZoneReading, ZoneTable};

/// Demands (veh/h per entry edge) of the single-junction sweep.
pub const JUNCTION_DEMANDS: [f64; 6] = [100.0, 300.0, 500.0, 700.0, 900.0, 1100.0];
/// Penetration rates of the single-junction sweep.
pub const JUNCTION_PENETRATIONS: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
/// Equipped-junction ratios of the grid sweep.
pub const GRID_JUNCTION_RATIOS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
/// Penetration rates of the grid sweep.
pub const GRID_PENETRATIONS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// One equipped junction with 300 m arms, 10 minutes, a uniform rate on
/// each entry. One scenario per (demand, penetration) pair.
pub fn junction_sweep(demands: &[f64], penetrations: &[f64]) -> Vec<ScenarioConfig> {
    let mut out = Vec::new();
    for &d in demands {
        for &p in penetrations {
            out.push(junction_scenario(d, p));
        }
    }
    out
}

pub fn junction_scenario(veh_per_hour: f64, penetration: f64) -> ScenarioConfig {
    ScenarioConfig {
        name: format!("junction-d{veh_per_hour:04}-p{penetration:.2}"),
        sim_duration_ms: 600_000,
        penetration_rate: penetration,
        network: NetworkConfig::OneJunction { edge_length_m: 300.0 },
        junctions: JunctionsConfig {
            equipped_ratio: 1.0,
            equipped: None,
        },
        demand: DemandConfig::Rate { veh_per_hour },
        ..Default::default()
    }
}

/// 4x4 grid with 500 m links, 30 minutes, the two zone tables in turn.
pub fn grid_scenario(junction_ratio: f64, penetration: f64) -> ScenarioConfig {
    ScenarioConfig {
        name: format!("grid-j{junction_ratio:.2}-p{penetration:.2}"),
        sim_duration_ms: 1_800_000,
        penetration_rate: penetration,
        network: NetworkConfig::Grid {
            size: 4,
            edge_length_m: 500.0,
        },
        junctions: JunctionsConfig {
            equipped_ratio: junction_ratio,
            equipped: None,
        },
        demand: DemandConfig::ZoneTables {
            reading: ZoneReading::PerPair,
            tables: vec![ZoneTable::first_half(), ZoneTable::second_half()],
        },
        ..Default::default()
    }
}

pub fn grid_sweep(junction_ratios: &[f64], penetrations: &[f64]) -> Vec<ScenarioConfig> {
    let mut out = Vec::new();
    for &j in junction_ratios {
        for &p in penetrations {
            out.push(grid_scenario(j, p));
        }
    }
    out
}
