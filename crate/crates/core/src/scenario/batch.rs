use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::metrics::{MetricsReport, RunEcho, RunRow};
use crate::world::{self, RunOutput};

use super::ScenarioConfig;

pub fn echo(cfg: &ScenarioConfig) -> RunEcho {
    RunEcho {
        scenario: cfg.name.clone(),
        seed: cfg.seed,
        penetration_rate: cfg.penetration_rate,
        equipped_junction_ratio: match &cfg.junctions.equipped {
            Some(list) => {
                let n = cfg
                    .network
                    .build()
                    .map(|net| net.junction_count())
                    .unwrap_or(0);
                if n == 0 {
                    0.0
                } else {
                    list.len() as f64 / n as f64
                }
            }
            None => cfg.junctions.equipped_ratio,
        },
        demand: cfg.demand.label(),
    }
}

/// Runs one configuration to completion.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<(RunOutput, MetricsReport, RunRow)> {
    let input = cfg.prepare()?;
    let out = world::run(input);
    let report = MetricsReport::compute(&out);
    let row = RunRow::new(echo(cfg), &report);
    Ok((out, report, row))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub scenario: String,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, Default)]
pub struct BatchOutcome {
    /// Sorted by (scenario, seed).
    pub rows: Vec<RunRow>,
    pub reports: Vec<MetricsReport>,
    pub failures: Vec<Failure>,
}

/// Runs every scenario once per seed, in parallel. `inspect` sees each
/// finished run before its logs are dropped, e.g. to write traces.
pub fn run_batch_with<F>(scenarios: &[ScenarioConfig], seeds: &[u64], inspect: F) -> BatchOutcome
where
    F: Fn(&ScenarioConfig, &RunOutput) + Sync,
{
    let jobs: Vec<ScenarioConfig> = scenarios
        .iter()
        .flat_map(|s| {
            seeds.iter().map(move |&seed| ScenarioConfig {
                seed,
                ..s.clone()
            })
        })
        .collect();
    let results: Vec<(ScenarioConfig, Result<(MetricsReport, RunRow)>)> = jobs
        .into_par_iter()
        .map(|cfg| {
            let r = run_scenario(&cfg).map(|(out, report, row)| {
                inspect(&cfg, &out);
                (report, row)
            });
            (cfg, r)
        })
        .collect();
    let mut outcome = BatchOutcome::default();
    let mut done: Vec<(RunRow, MetricsReport)> = Vec::new();
    for (cfg, r) in results {
        match r {
            Ok((report, row)) => done.push((row, report)),
            Err(e) => outcome.failures.push(Failure {
                scenario: cfg.name.clone(),
                seed: cfg.seed,
                error: e.to_string(),
            }),
        }
    }
    done.sort_by(|a, b| (&a.0.scenario, a.0.seed).cmp(&(&b.0.scenario, b.0.seed)));
    outcome
        .failures
        .sort_by(|a, b| (&a.scenario, a.seed).cmp(&(&b.scenario, b.seed)));
    for (row, report) in done {
        outcome.rows.push(row);
        outcome.reports.push(report);
    }
    outcome
}

pub fn run_batch(scenarios: &[ScenarioConfig], seeds: &[u64]) -> BatchOutcome {
    run_batch_with(scenarios, seeds, |_, _| {})
}

/// Mean and sample standard deviation; the deviation is absent below two values.
pub fn mean_sd(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (Some(mean), None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some(var.sqrt()))
}

/// One cell of a result table: all seeds of one scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub scenario: String,
    pub demand: String,
    pub equipped_junction_ratio: f64,
    pub penetration_rate: f64,
    pub runs: usize,
    /// Requested runs that did not complete.
    pub missing: usize,
    pub ended_mean: Option<f64>,
    pub ended_sd: Option<f64>,
    pub running_mean: Option<f64>,
    pub running_sd: Option<f64>,
    pub mtt_mean_s: Option<f64>,
    pub mtt_sd_s: Option<f64>,
    pub mtt_equipped_mean_s: Option<f64>,
    pub ended_ratio_mean: Option<f64>,
    pub delay_mean_s: Option<f64>,
    pub rsu_throughput_mean_bps: Option<f64>,
    pub action_interval_mean_s: Option<f64>,
    pub ended_gain_pct_mean: Option<f64>,
    pub ended_gain_pct_sd: Option<f64>,
    pub running_gain_pct_mean: Option<f64>,
    pub running_gain_pct_sd: Option<f64>,
    pub mtt_gain_pct_mean: Option<f64>,
    pub mtt_gain_pct_sd: Option<f64>,
}

fn collect(rows: &[&RunRow], f: impl Fn(&RunRow) -> Option<f64>) -> Vec<f64> {
    rows.iter().filter_map(|r| f(r)).collect()
}

/// Percentage change of `value` over `baseline`, per seed.
fn gains(
    rows: &[&RunRow],
    baseline: &BTreeMap<u64, &RunRow>,
    f: impl Fn(&RunRow) -> Option<f64>,
) -> Vec<f64> {
    rows.iter()
        .filter_map(|r| {
            let b = f(baseline.get(&r.seed)?)?;
            let v = f(r)?;
            (b != 0.0).then(|| 100.0 * (v - b) / b)
        })
        .collect()
}

/// Aggregates per-run rows into cells. Gains compare each seed with the
/// same seed of the penetration-0 cell sharing demand and junction ratio.
pub fn aggregate(rows: &[RunRow], requested_runs: usize) -> Vec<AggregateRow> {
    let mut cells: BTreeMap<&str, Vec<&RunRow>> = BTreeMap::new();
    for r in rows {
        cells.entry(r.scenario.as_str()).or_default().push(r);
    }
    let mut out = Vec::new();
    for (name, cell) in &cells {
        let first = cell[0];
        let baseline: BTreeMap<u64, &RunRow> = rows
            .iter()
            .filter(|r| {
                r.penetration_rate == 0.0
                    && r.demand == first.demand
                    && r.equipped_junction_ratio == first.equipped_junction_ratio
            })
            .map(|r| (r.seed, r))
            .collect();
        let ended = |r: &RunRow| Some(r.ended as f64);
        let running = |r: &RunRow| Some(r.running as f64);
        let mtt = |r: &RunRow| r.mean_travel_time_all_s;
        let (ended_mean, ended_sd) = mean_sd(&collect(cell, ended));
        let (running_mean, running_sd) = mean_sd(&collect(cell, running));
        let (mtt_mean_s, mtt_sd_s) = mean_sd(&collect(cell, mtt));
        let (ended_gain_pct_mean, ended_gain_pct_sd) = mean_sd(&gains(cell, &baseline, ended));
        let (running_gain_pct_mean, running_gain_pct_sd) = mean_sd(&gains(cell, &baseline, running));
        let (mtt_gain_pct_mean, mtt_gain_pct_sd) = mean_sd(&gains(cell, &baseline, mtt));
        out.push(AggregateRow {
            scenario: name.to_string(),
            demand: first.demand.clone(),
            equipped_junction_ratio: first.equipped_junction_ratio,
            penetration_rate: first.penetration_rate,
            runs: cell.len(),
            missing: requested_runs.saturating_sub(cell.len()),
            ended_mean,
            ended_sd,
            running_mean,
            running_sd,
            mtt_mean_s,
            mtt_sd_s,
            mtt_equipped_mean_s: mean_sd(&collect(cell, |r| r.mean_travel_time_equipped_s)).0,
            ended_ratio_mean: mean_sd(&collect(cell, |r| r.ended_ratio)).0,
            delay_mean_s: mean_sd(&collect(cell, |r| r.mean_tcp_end_to_end_delay_s)).0,
            rsu_throughput_mean_bps: mean_sd(&collect(cell, |r| Some(r.rsu_throughput_bps))).0,
            action_interval_mean_s: mean_sd(&collect(cell, |r| r.mean_action_interval_s)).0,
            ended_gain_pct_mean,
            ended_gain_pct_sd,
            running_gain_pct_mean,
            running_gain_pct_sd,
            mtt_gain_pct_mean,
            mtt_gain_pct_sd,
        });
    }
    out
}
