//! Command-line front end: closed-loop simulation, state-plane scans, scan
//! comparison and solver benchmarks.
//!
//! Exit status is 0 on success, 2 when a simulation ends in a fall and 1 on any
//! configuration, input or solver error.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use push_recovery::{
    benchmark, compare_costs, detect_critical, run_simulation, scan_grid, trace_states, Approach,
};

#[derive(Parser)]
#[command(name = "push-recovery", version, about = "Step timing and placement for push recovery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Both,
    Holistic,
    Sequential,
}

impl Which {
    fn approaches(self) -> Vec<Approach> {
        match self {
            Which::Both => Approach::ALL.to_vec(),
            Which::Holistic => vec![Approach::Holistic],
            Which::Sequential => vec![Approach::Sequential],
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a closed-loop walking simulation.
    Simulate {
        /// Config file or bundled name (nominal, backward_push, forward_push).
        #[arg(long, default_value = "nominal")]
        config: String,
        /// Output directory for trajectory.csv, steps.csv and summary.json.
        #[arg(long)]
        out: PathBuf,
        /// Override the approach from the config.
        #[arg(long, value_enum)]
        approach: Option<Which>,
    },
    /// Solve the optimizers over a grid of CoM states.
    Scan {
        #[arg(long, default_value = "nominal")]
        config: String,
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        approach: Which,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Compare the two approaches in a scan and locate parameter jumps.
    Compare {
        /// Scan CSV written by `scan`.
        #[arg(long)]
        scan: PathBuf,
        /// Output directory for diff.csv and ridge.csv.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "nominal")]
        config: String,
    },
    /// Time both approaches on the same states.
    Bench {
        #[arg(long, default_value = "backward_push")]
        config: String,
        /// CSV with columns x,xd and optionally t_elap. Defaults to the states
        /// seen by the controller around the pushes of the config's scenario.
        #[arg(long)]
        states: Option<PathBuf>,
        #[arg(long)]
        reps: Option<usize>,
    },
}

fn out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn simulate(config: &str, out: &Path, approach: Option<Which>) -> Result<ExitCode> {
    let cfg = config::load(config)?;
    let mut sc = cfg.scenario()?;
    match approach {
        Some(Which::Holistic) => sc.approach = Approach::Holistic,
        Some(Which::Sequential) => sc.approach = Approach::Sequential,
        Some(Which::Both) => anyhow::bail!("simulate runs one approach; pick holistic or sequential"),
        None => {}
    }
    out_dir(out)?;
    let traj = run_simulation(&sc)?;
    output::write_trajectory(&out.join("trajectory.csv"), &traj)?;
    output::write_steps(&out.join("steps.csv"), &traj)?;
    let summary = output::RunSummary::new(&traj, &sc);
    output::write_json(&out.join("summary.json"), &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(if traj.fell { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn scan(config: &str, out: &Path, which: Which, jobs: usize) -> Result<ExitCode> {
    let cfg = config::load(config)?;
    let grid = cfg.grid()?;
    let planner = cfg.planner()?;
    let result = scan_grid(&grid, &planner, &which.approaches(), cfg.scan_elapsed()?, jobs)?;
    output::write_scan(out, &result)?;
    let failed = result
        .cells
        .iter()
        .flat_map(|c| [&c.holistic, &c.sequential])
        .filter(|r| matches!(r, push_recovery::scanner::CellResult::Failed(_)))
        .count();
    eprintln!("{} cells written to {} ({failed} failed solves)", result.cells.len(), out.display());
    Ok(ExitCode::SUCCESS)
}

fn compare(scan_path: &Path, out: &Path, config: &str) -> Result<ExitCode> {
    let cfg = config::load(config)?;
    let planner = cfg.planner()?;
    let scan = output::read_scan(scan_path, &planner)?;
    let cmp = compare_costs(&scan.cells, cfg.compare.diff_threshold);
    out_dir(out)?;
    output::write_diffs(&out.join("diff.csv"), &cmp)?;
    let ridge = if scan.grid.nx() >= 2 && scan.grid.nv() >= 2 {
        let r = detect_critical(&scan, &planner, cfg.critical.source, &cfg.thresholds())?;
        output::write_ridge(&out.join("ridge.csv"), &r)?;
        Some(r)
    } else {
        eprintln!("grid smaller than 2x2: ridge detection skipped");
        None
    };
    let count = |k| ridge.as_ref().map(|r| r.of_kind(k).count());
    let stats = json!({
        "cells_compared": cmp.diffs.len(),
        "threshold": cmp.threshold,
        "count_above": cmp.count_above,
        "fraction_above": cmp.fraction_above,
        "min_diff": cmp.min_diff,
        "max_diff": cmp.max_diff,
        "mean_diff": cmp.mean_diff,
        "worst": cmp.worst.iter().map(|d| json!({"x": d.state.x, "xd": d.state.xd, "diff": d.diff})).collect::<Vec<_>>(),
        "ridge_energy_cells": count(push_recovery::RidgeKind::Energy),
        "ridge_bound_cells": count(push_recovery::RidgeKind::Bound),
    });
    println!("{}", serde_json::to_string_pretty(&stats)?);
    Ok(ExitCode::SUCCESS)
}

fn bench(config: &str, states: Option<&Path>, reps: Option<usize>) -> Result<ExitCode> {
    let cfg = config::load(config)?;
    let planner = cfg.planner()?;
    let states = match states {
        Some(p) => output::read_states(p)?,
        None => {
            let sc = cfg.scenario()?;
            let traj = run_simulation(&sc)?;
            let (from, to) = match (sc.pushes.iter().map(|p| p.t_start).reduce(f64::min), sc.last_push_end()) {
                (Some(a), Some(b)) => (a, b + cfg.bench.window_after_push),
                _ => (0.0, sc.t_end),
            };
            trace_states(&traj, from, to)
        }
    };
    let report = benchmark(&states, &planner, reps.unwrap_or(cfg.bench.repetitions))?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate { config, out, approach } => simulate(config, out, *approach),
        Command::Scan { config, out, approach, jobs } => scan(config, out, *approach, *jobs),
        Command::Compare { scan: s, out, config } => compare(s, out, config),
        Command::Bench { config, states, reps } => bench(config, states.as_deref(), *reps),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
