//! Parameter scans over the discretized CoM state plane, comparison of the two
//! approaches, detection of discontinuities in the optimal parameters, and solve
//! time benchmarks.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_param, Result};
use crate::lip::{critical_offset, ComState};
use crate::optimizers::{Approach, OptimizationOutcome, RecoveryPlanner};
use crate::simulator::Trajectory;

/// Upper bound on the number of cells in one scan.
pub const MAX_CELLS: usize = 10_000_000;

/// Regular grid over position (m) and velocity (m/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_lo: f64,
    pub x_hi: f64,
    pub x_step: f64,
    pub v_lo: f64,
    pub v_hi: f64,
    pub v_step: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            x_lo: -0.4,
            x_hi: 0.4,
            x_step: 0.01,
            v_lo: -2.0,
            v_hi: 2.0,
            v_step: 0.05,
        }
    }
}

fn axis_len(lo: f64, hi: f64, step: f64) -> usize {
    ((hi - lo) / step + 1e-9).floor() as usize + 1
}

impl GridSpec {
    /// A single-cell grid at `s`.
    pub fn point(s: ComState) -> Self {
        Self {
            x_lo: s.x,
            x_hi: s.x,
            x_step: 1.0,
            v_lo: s.xd,
            v_hi: s.xd,
            v_step: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, lo, hi, step) in [
            ("grid.x", self.x_lo, self.x_hi, self.x_step),
            ("grid.v", self.v_lo, self.v_hi, self.v_step),
        ] {
            if !(lo.is_finite() && hi.is_finite() && step.is_finite()) {
                return Err(invalid_param(name, "bounds and step must be finite"));
            }
            if lo > hi {
                return Err(invalid_param(name, format!("lo ({lo}) > hi ({hi})")));
            }
            if !(step > 0.0) {
                return Err(invalid_param(name, format!("step must be > 0, got {step}")));
            }
        }
        let cells = (self.nx() as f64) * (self.nv() as f64);
        if cells > MAX_CELLS as f64 {
            return Err(invalid_param("grid", format!("{cells} cells exceed {MAX_CELLS}")));
        }
        Ok(())
    }

    pub fn nx(&self) -> usize {
        axis_len(self.x_lo, self.x_hi, self.x_step)
    }

    pub fn nv(&self) -> usize {
        axis_len(self.v_lo, self.v_hi, self.v_step)
    }

    pub fn state(&self, ix: usize, iv: usize) -> ComState {
        ComState::new(
            self.x_lo + self.x_step * ix as f64,
            self.v_lo + self.v_step * iv as f64,
        )
    }

    /// Grid states in row-major order, position varying fastest.
    pub fn states(&self) -> Vec<(usize, usize, ComState)> {
        let nx = self.nx();
        (0..self.nv())
            .flat_map(|iv| (0..nx).map(move |ix| (ix, iv)))
            .map(|(ix, iv)| (ix, iv, self.state(ix, iv)))
            .collect()
    }
}

/// Per-approach entry of a scan cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum CellResult {
    Solved(OptimizationOutcome),
    Failed(String),
    Skipped,
}

impl CellResult {
    pub fn outcome(&self) -> Option<&OptimizationOutcome> {
        match self {
            CellResult::Solved(o) => Some(o),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanCell {
    pub ix: usize,
    pub iv: usize,
    pub state: ComState,
    pub holistic: CellResult,
    pub sequential: CellResult,
}

impl ScanCell {
    pub fn result(&self, approach: Approach) -> &CellResult {
        match approach {
            Approach::Holistic => &self.holistic,
            Approach::Sequential => &self.sequential,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanResult {
    pub grid: GridSpec,
    pub cells: Vec<ScanCell>,
}

impl ScanResult {
    pub fn cell(&self, ix: usize, iv: usize) -> Option<&ScanCell> {
        let nx = self.grid.nx();
        if ix >= nx || iv >= self.grid.nv() {
            return None;
        }
        self.cells.get(iv * nx + ix)
    }
}

fn solve_cell(
    planner: &RecoveryPlanner,
    approach: Approach,
    wanted: &[Approach],
    s: ComState,
    t_elap: f64,
) -> CellResult {
    if !wanted.contains(&approach) {
        return CellResult::Skipped;
    }
    match planner.solve(approach, s, t_elap) {
        Ok(o) => CellResult::Solved(o),
        Err(e) => CellResult::Failed(e.to_string()),
    }
}

/// Solves the requested approaches at every grid state, treating each state as
/// `t_elap` seconds into the current step. Passing `t_elap >= T_min` removes the
/// swing-time floor on the remaining duration.
///
/// `jobs > 1` spreads cells over a worker pool; output order and values do not
/// depend on it.
pub fn scan_grid(
    grid: &GridSpec,
    planner: &RecoveryPlanner,
    approaches: &[Approach],
    t_elap: f64,
    jobs: usize,
) -> Result<ScanResult> {
    grid.validate()?;
    if !(t_elap >= 0.0 && t_elap.is_finite()) {
        return Err(invalid_param("t_elap", format!("must be finite and >= 0, got {t_elap}")));
    }
    let states = grid.states();
    let solve = |&(ix, iv, state): &(usize, usize, ComState)| ScanCell {
        ix,
        iv,
        state,
        holistic: solve_cell(planner, Approach::Holistic, approaches, state, t_elap),
        sequential: solve_cell(planner, Approach::Sequential, approaches, state, t_elap),
    };
    let cells = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| crate::Error::InvalidArgument(format!("thread pool: {e}")))?;
        pool.install(|| states.par_iter().map(solve).collect())
    } else {
        states.iter().map(solve).collect()
    };
    Ok(ScanResult { grid: *grid, cells })
}

/// Sequential minus holistic cost at one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostDiff {
    pub ix: usize,
    pub iv: usize,
    pub state: ComState,
    pub holistic: f64,
    pub sequential: f64,
    pub diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostComparison {
    pub diffs: Vec<CostDiff>,
    pub threshold: f64,
    pub count_above: usize,
    pub fraction_above: f64,
    pub min_diff: f64,
    pub max_diff: f64,
    pub mean_diff: f64,
    /// Up to ten cells with the largest difference, largest first.
    pub worst: Vec<CostDiff>,
}

pub const DEFAULT_DIFF_THRESHOLD: f64 = 1e-6;

/// Compares the two approaches on every cell where both were solved.
pub fn compare_costs(cells: &[ScanCell], threshold: f64) -> CostComparison {
    let diffs: Vec<CostDiff> = cells
        .iter()
        .filter_map(|c| {
            let h = c.holistic.outcome()?.cost;
            let s = c.sequential.outcome()?.cost;
            Some(CostDiff {
                ix: c.ix,
                iv: c.iv,
                state: c.state,
                holistic: h,
                sequential: s,
                diff: s - h,
            })
        })
        .collect();
    comparison_from_diffs(diffs, threshold)
}

/// Aggregate statistics over precomputed per-cell differences.
pub fn comparison_from_diffs(diffs: Vec<CostDiff>, threshold: f64) -> CostComparison {
    let n = diffs.len();
    let count_above = diffs.iter().filter(|d| d.diff > threshold).count();
    let (min_diff, max_diff, sum) = diffs.iter().fold(
        (f64::INFINITY, f64::NEG_INFINITY, 0.0),
        |(lo, hi, s), d| (lo.min(d.diff), hi.max(d.diff), s + d.diff),
    );
    let mut worst = diffs.clone();
    worst.sort_by(|a, b| b.diff.total_cmp(&a.diff));
    worst.truncate(10);
    CostComparison {
        threshold,
        count_above,
        fraction_above: if n == 0 { 0.0 } else { count_above as f64 / n as f64 },
        min_diff: if n == 0 { 0.0 } else { min_diff },
        max_diff: if n == 0 { 0.0 } else { max_diff },
        mean_diff: if n == 0 { 0.0 } else { sum / n as f64 },
        worst,
        diffs,
    }
}

/// Jump sizes between 4-neighbours above which a cell is flagged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JumpThresholds {
    pub remaining: f64,
    pub next_duration: f64,
    pub placement: f64,
}

impl Default for JumpThresholds {
    fn default() -> Self {
        Self {
            remaining: 0.5,
            next_duration: 0.5,
            placement: 0.1,
        }
    }
}

/// Why a ridge cell is flagged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RidgeKind {
    /// Jump caused by crossing the critical line of zero orbital energy.
    Energy,
    /// Jump caused by the placement saturating at the step-length limit.
    Bound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RidgeCell {
    pub ix: usize,
    pub iv: usize,
    pub state: ComState,
    pub critical_offset: f64,
    pub kind: RidgeKind,
    /// Largest neighbour jumps in `(T_s0, T_s1, p)`.
    pub jumps: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalRidge {
    pub source: Approach,
    pub cells: Vec<RidgeCell>,
}

impl CriticalRidge {
    pub fn of_kind(&self, kind: RidgeKind) -> impl Iterator<Item = &RidgeCell> {
        self.cells.iter().filter(move |c| c.kind == kind)
    }

    pub fn contains(&self, ix: usize, iv: usize) -> bool {
        self.cells.iter().any(|c| c.ix == ix && c.iv == iv)
    }
}

/// Flags cells whose optimal parameters (from `source`) jump against a
/// 4-neighbour by more than `th`.
///
/// A flagged cell is attributed to the placement bound when the sequential
/// placement saturates at `+-L_max` on the cell or on a neighbour it jumps
/// against; otherwise it is attributed to the critical line.
pub fn detect_critical(
    scan: &ScanResult,
    planner: &RecoveryPlanner,
    source: Approach,
    th: &JumpThresholds,
) -> Result<CriticalRidge> {
    let (nx, nv) = (scan.grid.nx(), scan.grid.nv());
    if nx < 2 || nv < 2 {
        return Err(invalid_param("grid", "ridge detection needs at least 2x2 cells"));
    }
    let l_max = planner.bounds().l_max();
    let saturated = |c: &ScanCell| {
        c.sequential
            .outcome()
            .map_or(false, |o| o.params.placement.abs() >= l_max * (1.0 - 1e-9))
    };
    let mut flagged = Vec::new();
    for cell in &scan.cells {
        let Some(here) = cell.result(source).outcome() else {
            continue;
        };
        let mut jumps = [0.0f64; 3];
        let mut hit = false;
        let mut bound = saturated(cell);
        let neighbours = [
            (cell.ix.wrapping_sub(1), cell.iv),
            (cell.ix + 1, cell.iv),
            (cell.ix, cell.iv.wrapping_sub(1)),
            (cell.ix, cell.iv + 1),
        ];
        for (jx, jv) in neighbours {
            let Some(nb) = scan.cell(jx, jv) else { continue };
            let Some(there) = nb.result(source).outcome() else {
                continue;
            };
            let d = [
                (here.params.remaining - there.params.remaining).abs(),
                (here.params.next_duration - there.params.next_duration).abs(),
                (here.params.placement - there.params.placement).abs(),
            ];
            let jumped =
                d[0] > th.remaining || d[1] > th.next_duration || d[2] > th.placement;
            if jumped {
                hit = true;
                bound |= saturated(nb);
                for k in 0..3 {
                    jumps[k] = jumps[k].max(d[k]);
                }
            }
        }
        if hit {
            flagged.push(RidgeCell {
                ix: cell.ix,
                iv: cell.iv,
                state: cell.state,
                critical_offset: critical_offset(cell.state, planner.lip()),
                kind: if bound { RidgeKind::Bound } else { RidgeKind::Energy },
                jumps,
            });
        }
    }
    Ok(CriticalRidge {
        source,
        cells: flagged,
    })
}

/// Summary statistics of solve times (s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimingStats {
    pub samples: usize,
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
}

impl TimingStats {
    pub fn from_samples(mut xs: Vec<f64>) -> Self {
        if xs.is_empty() {
            return Self { samples: 0, mean: 0.0, median: 0.0, p95: 0.0 };
        }
        xs.sort_by(f64::total_cmp);
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let median = if n % 2 == 1 {
            xs[n / 2]
        } else {
            0.5 * (xs[n / 2 - 1] + xs[n / 2])
        };
        // nearest-rank percentile
        let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
        Self { samples: n, mean, median, p95: xs[rank - 1] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchReport {
    pub holistic: TimingStats,
    pub sequential: TimingStats,
    /// Mean holistic time over mean sequential time.
    pub ratio: f64,
}

/// A state to benchmark together with the elapsed time of its step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchState {
    pub state: ComState,
    pub t_elap: f64,
}

/// The solver inputs seen by the controller between `from` and `to` in a
/// simulated trajectory: the foot-local state and the time since touchdown.
pub fn trace_states(traj: &Trajectory, from: f64, to: f64) -> Vec<BenchState> {
    traj.samples
        .iter()
        .filter(|s| s.t >= from && s.t <= to)
        .map(|s| BenchState {
            state: s.local_state(),
            t_elap: s.t_elap,
        })
        .collect()
}

/// Times both approaches on the same states, one approach after the other.
pub fn benchmark(states: &[BenchState], planner: &RecoveryPlanner, repetitions: usize) -> Result<BenchReport> {
    if repetitions == 0 {
        return Err(invalid_param("reps", "need at least one repetition"));
    }
    if states.is_empty() {
        return Err(invalid_param("states", "need at least one state"));
    }
    let time = |approach: Approach| -> Result<TimingStats> {
        let mut xs = Vec::with_capacity(states.len() * repetitions);
        for _ in 0..repetitions {
            for s in states {
                let t0 = Instant::now();
                let out = planner.solve(approach, s.state, s.t_elap)?;
                xs.push(t0.elapsed().as_secs_f64());
                std::hint::black_box(out);
            }
        }
        Ok(TimingStats::from_samples(xs))
    };
    let holistic = time(Approach::Holistic)?;
    let sequential = time(Approach::Sequential)?;
    let ratio = if sequential.mean > 0.0 {
        holistic.mean / sequential.mean
    } else {
        f64::INFINITY
    };
    Ok(BenchReport { holistic, sequential, ratio })
}
