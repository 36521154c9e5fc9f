//! CSV and JSON writers, and the scan CSV reader used by `compare`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use push_recovery::scanner::{CellResult, CriticalRidge, CostComparison};
use push_recovery::{
    ComState, GridSpec, RecoveryPlanner, ScanCell, ScanResult, Scenario, Trajectory, WalkingParams,
};

pub const TRAJECTORY_HEADER: [&str; 9] =
    ["t", "x_world", "xd", "foot_world", "T_s0", "T_s1", "p", "cost", "solve_time_s"];

pub const SCAN_HEADER: [&str; 10] = [
    "x", "xd", "T_s0_h", "T_s1_h", "p_h", "cost_h", "T_s0_s", "T_s1_s", "p_s", "cost_s",
];

/// Shortest representation that parses back to the same value.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(TRAJECTORY_HEADER)?;
    for s in &traj.samples {
        w.write_record([
            num(s.t),
            num(s.x_world),
            num(s.xd),
            num(s.foot_world),
            num(s.cmd.remaining),
            num(s.cmd.next_duration),
            num(s.cmd.placement),
            num(s.cost),
            num(s.solve_time),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_steps(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["t", "foot_world", "p", "xd"])?;
    for e in &traj.step_events {
        w.write_record([num(e.t), num(e.foot_world), num(e.placement), num(e.xd)])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub approach: String,
    pub fell: bool,
    pub fall_time: Option<f64>,
    pub step_count: usize,
    pub step_durations: Vec<f64>,
    pub min_placement: Option<f64>,
    pub backward_steps: usize,
    pub last_push_end: Option<f64>,
    /// Absolute time the gait settled, and the delay after the last push.
    pub settling_time: Option<f64>,
    pub settling_delay: Option<f64>,
}

impl RunSummary {
    pub fn new(traj: &Trajectory, sc: &Scenario) -> Self {
        let times: Vec<f64> = traj.step_events.iter().map(|e| e.t).collect();
        let after = sc.last_push_end().unwrap_or(0.0);
        let settling = push_recovery::settling_time(traj, sc, after);
        Self {
            approach: sc.approach.to_string(),
            fell: traj.fell,
            fall_time: traj.fall_time,
            step_count: traj.step_events.len(),
            step_durations: times.windows(2).map(|w| w[1] - w[0]).collect(),
            min_placement: traj.step_events.iter().map(|e| e.placement).reduce(f64::min),
            backward_steps: traj.step_events.iter().filter(|e| e.placement < 0.0).count(),
            last_push_end: sc.last_push_end(),
            settling_time: settling,
            settling_delay: settling.map(|t| t - after),
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = std::fs::File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

fn outcome_fields(r: &CellResult) -> [String; 4] {
    match r.outcome() {
        Some(o) => [
            num(o.params.remaining),
            num(o.params.next_duration),
            num(o.params.placement),
            num(o.cost),
        ],
        None => Default::default(),
    }
}

pub fn write_scan(path: &Path, scan: &ScanResult) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(SCAN_HEADER)?;
    for c in &scan.cells {
        let mut row = vec![num(c.state.x), num(c.state.xd)];
        row.extend(outcome_fields(&c.holistic));
        row.extend(outcome_fields(&c.sequential));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Regular axis through the sorted distinct values.
fn axis(values: &[f64], name: &str) -> Result<(f64, f64, f64)> {
    let lo = values[0];
    let hi = values[values.len() - 1];
    if values.len() == 1 {
        return Ok((lo, hi, 1.0));
    }
    let step = (hi - lo) / (values.len() - 1) as f64;
    for (i, v) in values.iter().enumerate() {
        if (lo + step * i as f64 - v).abs() > 1e-6 * step {
            bail!("column `{name}` is not a regular grid (value {v})");
        }
    }
    Ok((lo, hi, step))
}

fn distinct(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * (1.0 + b.abs()));
    v
}

/// Reads a scan CSV back into a grid of cells. Predicted states are recomputed
/// from the parameters with `planner`; costs are taken from the file.
pub fn read_scan(path: &Path, planner: &RecoveryPlanner) -> Result<ScanResult> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let headers = r.headers()?.clone();
    let mut col = BTreeMap::new();
    for name in SCAN_HEADER {
        let i = headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| anyhow!("scan file {} is missing column `{name}`", path.display()))?;
        col.insert(name, i);
    }

    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |name: &str| -> Result<Option<f64>> {
            let s = rec.get(col[name]).unwrap_or("").trim();
            if s.is_empty() {
                return Ok(None);
            }
            s.parse::<f64>()
                .map(Some)
                .with_context(|| format!("row {}: bad `{name}` value `{s}`", line + 2))
        };
        let x = field("x")?.ok_or_else(|| anyhow!("row {}: empty `x`", line + 2))?;
        let xd = field("xd")?.ok_or_else(|| anyhow!("row {}: empty `xd`", line + 2))?;
        let mut results = Vec::new();
        for names in [["T_s0_h", "T_s1_h", "p_h", "cost_h"], ["T_s0_s", "T_s1_s", "p_s", "cost_s"]] {
            let v: Vec<Option<f64>> = names.iter().map(|n| field(n)).collect::<Result<_>>()?;
            results.push(match (v[0], v[1], v[2], v[3]) {
                (Some(a), Some(b), Some(p), Some(cost)) => {
                    let s0 = ComState::new(x, xd);
                    let mut o = planner.evaluate(s0, WalkingParams::new(a, b, p))?;
                    o.cost = cost;
                    CellResult::Solved(o)
                }
                (None, None, None, None) => CellResult::Skipped,
                _ => bail!("row {}: partially filled result columns", line + 2),
            });
        }
        let seq = results.pop().expect("two results");
        let hol = results.pop().expect("two results");
        rows.push((x, xd, hol, seq));
    }
    if rows.is_empty() {
        bail!("scan file {} has no data rows", path.display());
    }

    let xs = distinct(rows.iter().map(|r| r.0).collect());
    let vs = distinct(rows.iter().map(|r| r.1).collect());
    let (x_lo, x_hi, x_step) = axis(&xs, "x")?;
    let (v_lo, v_hi, v_step) = axis(&vs, "xd")?;
    let grid = GridSpec { x_lo, x_hi, x_step, v_lo, v_hi, v_step };
    grid.validate()?;
    let (nx, nv) = (grid.nx(), grid.nv());
    let mut cells: Vec<ScanCell> = (0..nv)
        .flat_map(|iv| (0..nx).map(move |ix| (ix, iv)))
        .map(|(ix, iv)| ScanCell {
            ix,
            iv,
            state: grid.state(ix, iv),
            holistic: CellResult::Skipped,
            sequential: CellResult::Skipped,
        })
        .collect();
    for (x, xd, hol, seq) in rows {
        let ix = ((x - x_lo) / x_step).round() as usize;
        let iv = ((xd - v_lo) / v_step).round() as usize;
        let c = &mut cells[iv * nx + ix];
        c.state = ComState::new(x, xd);
        c.holistic = hol;
        c.sequential = seq;
    }
    Ok(ScanResult { grid, cells })
}

pub fn write_diffs(path: &Path, cmp: &CostComparison) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["x", "xd", "cost_h", "cost_s", "diff"])?;
    for d in &cmp.diffs {
        w.write_record([num(d.state.x), num(d.state.xd), num(d.holistic), num(d.sequential), num(d.diff)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_ridge(path: &Path, ridge: &CriticalRidge) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["x", "xd", "critical_offset", "kind", "jump_T_s0", "jump_T_s1", "jump_p"])?;
    for c in &ridge.cells {
        let kind = serde_json::to_value(c.kind)?;
        w.write_record([
            num(c.state.x),
            num(c.state.xd),
            num(c.critical_offset),
            kind.as_str().unwrap_or_default().to_string(),
            num(c.jumps[0]),
            num(c.jumps[1]),
            num(c.jumps[2]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads benchmark states from a CSV with columns `x,xd` and optionally `t_elap`.
pub fn read_states(path: &Path) -> Result<Vec<push_recovery::BenchState>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let headers = r.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let ix = find("x").ok_or_else(|| anyhow!("states file is missing column `x`"))?;
    let iv = find("xd").ok_or_else(|| anyhow!("states file is missing column `xd`"))?;
    let it = find("t_elap");
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let get = |i: usize| -> Result<f64> {
            let s = rec.get(i).unwrap_or("").trim();
            s.parse().with_context(|| format!("bad number `{s}` in states file"))
        };
        out.push(push_recovery::BenchState {
            state: ComState::new(get(ix)?, get(iv)?),
            t_elap: match it {
                Some(i) => get(i)?,
                None => 0.0,
            },
        });
    }
    if out.is_empty() {
        bail!("states file {} has no rows", path.display());
    }
    Ok(out)
}
