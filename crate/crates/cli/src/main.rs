use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use v2i_core::metrics::rows_to_csv;
use v2i_core::scenario::{
    self, aggregate, run_batch_with, BatchOutcome, ScenarioConfig, GRID_JUNCTION_RATIOS, GRID_PENETRATIONS,
    JUNCTION_DEMANDS, JUNCTION_PENETRATIONS,
};
use v2i_core::world::RunOutput;

/// Traffic and V2I co-simulator with vehicle-actuated traffic lights.
#[derive(Parser, Debug)]
#[command(name = "v2i-sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Single equipped junction: demand x penetration sweep.
    SweepJunction {
        #[arg(long, value_delimiter = ',', default_values_t = JUNCTION_DEMANDS.to_vec())]
        demands: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = JUNCTION_PENETRATIONS.to_vec())]
        penetrations: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// 4x4 grid: equipped-junction ratio x penetration sweep.
    SweepGrid {
        #[arg(long, value_delimiter = ',', default_values_t = GRID_JUNCTION_RATIOS.to_vec())]
        ratios: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = GRID_PENETRATIONS.to_vec())]
        penetrations: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Write a scenario file with every key set to its default.
    Init {
        path: PathBuf,
        #[arg(long, value_enum, default_value_t = Preset::Junction)]
        preset: Preset,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    Junction,
    Grid,
}

#[derive(Args, Debug)]
struct Common {
    /// First seed; replication i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    replications: u64,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Write vehicle, message and switch traces for every run.
    #[arg(long)]
    trace: bool,
    /// Override the simulated duration of every scenario.
    #[arg(long)]
    duration_s: Option<u64>,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, common } => {
            let cfg = ScenarioConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let seed = common.seed.unwrap_or(cfg.seed);
            execute(vec![cfg], seed, &common)
        }
        Command::SweepJunction {
            demands,
            penetrations,
            common,
        } => execute(scenario::junction_sweep(&demands, &penetrations), common.seed.unwrap_or(1), &common),
        Command::SweepGrid {
            ratios,
            penetrations,
            common,
        } => execute(scenario::grid_sweep(&ratios, &penetrations), common.seed.unwrap_or(1), &common),
        Command::Init { path, preset } => {
            let cfg = match preset {
                Preset::Junction => scenario::junction_scenario(500.0, 0.5),
                Preset::Grid => scenario::grid_scenario(1.0, 0.5),
            };
            cfg.save(&path)?;
            println!("wrote {}", path.display());
            Ok(())
        }
    }
}

fn execute(mut scenarios: Vec<ScenarioConfig>, seed: u64, common: &Common) -> Result<()> {
    if common.replications == 0 {
        bail!("--replications must be at least 1");
    }
    for cfg in &mut scenarios {
        if let Some(d) = common.duration_s {
            cfg.sim_duration_ms = d * 1000;
        }
        if common.trace {
            cfg.output.trace_vehicles = true;
            cfg.output.trace_messages = true;
            cfg.output.trace_switches = true;
        }
        cfg.validate().with_context(|| format!("scenario {}", cfg.name))?;
    }
    let seeds: Vec<u64> = (0..common.replications).map(|i| seed + i).collect();
    let out_dir = &common.out_dir;
    fs::create_dir_all(out_dir)?;
    let trace_dir = out_dir.join("traces");
    if scenarios.iter().any(|c| c.output.trace_vehicles || c.output.trace_messages || c.output.trace_switches) {
        fs::create_dir_all(&trace_dir)?;
    }

    let outcome = run_batch_with(&scenarios, &seeds, |cfg, out| {
        if let Err(e) = write_traces(&trace_dir, cfg, out) {
            eprintln!("trace for {} seed {}: {e:#}", cfg.name, cfg.seed);
        }
    });
    write_results(out_dir, &outcome, seeds.len())?;
    for f in &outcome.failures {
        eprintln!("run failed: {} seed {}: {}", f.scenario, f.seed, f.error);
    }
    println!(
        "{} runs, {} failed, results in {}",
        outcome.rows.len() + outcome.failures.len(),
        outcome.failures.len(),
        out_dir.display()
    );
    if !outcome.failures.is_empty() {
        bail!("{} run(s) failed", outcome.failures.len());
    }
    Ok(())
}

fn write_results(dir: &Path, outcome: &BatchOutcome, requested: usize) -> Result<()> {
    fs::write(dir.join("runs.csv"), rows_to_csv(&outcome.rows)?)?;
    let cells = aggregate(&outcome.rows, requested);
    fs::write(dir.join("cells.csv"), rows_to_csv(&cells)?)?;
    fs::write(dir.join("reports.json"), serde_json::to_string_pretty(&outcome.reports)?)?;
    if !outcome.failures.is_empty() {
        fs::write(dir.join("failures.csv"), rows_to_csv(&outcome.failures)?)?;
    }
    Ok(())
}

fn write_traces(dir: &Path, cfg: &ScenarioConfig, out: &RunOutput) -> Result<()> {
    let stem = format!("{}-s{}", cfg.name, cfg.seed);
    if cfg.output.trace_switches {
        out.write_switch_log(&mut BufWriter::new(File::create(dir.join(format!("{stem}-switches.csv")))?))?;
    }
    if cfg.output.trace_messages {
        out.write_message_log(&mut BufWriter::new(File::create(dir.join(format!("{stem}-messages.csv")))?))?;
    }
    if let Some(trace) = &out.vehicle_trace {
        fs::write(dir.join(format!("{stem}-vehicles.csv")), trace)?;
    }
    Ok(())
}
