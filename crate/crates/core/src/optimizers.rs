//! Push-recovery optimizers over the walking parameters
//! `(T_s0, T_s1, p)`: remaining duration of the current step, duration of the
//! next step, and placement of the next foot relative to the CoM.
//!
//! Both approaches minimize the same weighted error of the CoM state at the end
//! of the current and the next step:
//!
//! * [`RecoveryPlanner::holistic`] searches the three-dimensional box directly.
//! * [`RecoveryPlanner::sequential`] first picks `T_s0` alone, then searches
//!   `T_s1` with the placement given in closed form by weighted least squares and
//!   clipped to the step-length limit.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_param, require_positive, Error, Result};
use crate::lip::{
    self, desired_final_state, next_step_end_raw, propagate_raw, sinh_cosh, ComState, GaitTarget,
    LipParams,
};
use crate::solvers::{minimize_box, minimize_scalar, BoxProblem, ScalarProblem, SolverSettings};

/// Limits on step timing and step length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepBounds {
    t_min: f64,
    t_max: f64,
    l_max: f64,
}

impl StepBounds {
    pub fn new(t_min: f64, t_max: f64, l_max: f64) -> Result<Self> {
        require_positive("t_min", t_min)?;
        require_positive("t_max", t_max)?;
        require_positive("l_max", l_max)?;
        if t_min > t_max {
            return Err(invalid_param(
                "t_min",
                format!("t_min ({t_min}) must not exceed t_max ({t_max})"),
            ));
        }
        if t_max > lip::MAX_DURATION {
            return Err(invalid_param(
                "t_max",
                format!("must not exceed {} s", lip::MAX_DURATION),
            ));
        }
        Ok(Self { t_min, t_max, l_max })
    }

    /// Step-length limit from the friction cone half-angle: `L_max = z_c tan(theta_m)`.
    pub fn from_friction_cone(t_min: f64, t_max: f64, theta_m: f64, lip: &LipParams) -> Result<Self> {
        if !(theta_m > 0.0 && theta_m < std::f64::consts::FRAC_PI_2) {
            return Err(invalid_param(
                "friction_cone",
                format!("half-angle must lie in (0, pi/2) rad, got {theta_m}"),
            ));
        }
        Self::new(t_min, t_max, lip.com_height() * theta_m.tan())
    }

    pub fn t_min(&self) -> f64 {
        self.t_min
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn l_max(&self) -> f64 {
        self.l_max
    }

    /// Admissible range of the remaining duration once `t_elap` of the current
    /// step has passed.
    pub fn remaining_range(&self, t_elap: f64) -> (f64, f64) {
        ((self.t_min - t_elap).max(0.0), self.t_max)
    }
}

impl Default for StepBounds {
    fn default() -> Self {
        Self::new(0.6, 2.0, 0.5).expect("default bounds are valid")
    }
}

/// Diagonal 2x2 weight on a (position, velocity) error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagWeight {
    pub pos: f64,
    pub vel: f64,
}

impl DiagWeight {
    pub const IDENTITY: DiagWeight = DiagWeight { pos: 1.0, vel: 1.0 };

    pub const fn new(pos: f64, vel: f64) -> Self {
        Self { pos, vel }
    }

    #[inline]
    pub fn norm_sq(&self, e: ComState) -> f64 {
        self.pos * e.x * e.x + self.vel * e.xd * e.xd
    }
}

/// Weights of the two step-end errors and of the least-squares placement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    /// Error at the end of the current step.
    pub current: DiagWeight,
    /// Error at the end of the next step.
    pub next: DiagWeight,
    /// Weight of the least-squares placement in the sequential approach.
    pub placement: DiagWeight,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self::uniform(DiagWeight::IDENTITY)
    }
}

impl CostWeights {
    /// Same diagonal weight everywhere.
    pub fn uniform(w: DiagWeight) -> Self {
        Self {
            current: w,
            next: w,
            placement: w,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("weights.current", self.current), ("weights.next", self.next)] {
            if !(w.pos >= 0.0 && w.vel >= 0.0 && w.pos.is_finite() && w.vel.is_finite()) {
                return Err(invalid_param(name, "entries must be finite and >= 0"));
            }
            if w.pos + w.vel <= 0.0 {
                return Err(invalid_param(name, "at least one entry must be positive"));
            }
        }
        let q = self.placement;
        if !(q.pos > 0.0 && q.vel > 0.0 && q.pos.is_finite() && q.vel.is_finite()) {
            return Err(invalid_param("weights.placement", "entries must be finite and > 0"));
        }
        Ok(())
    }
}

/// The optimized walking parameters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WalkingParams {
    /// Remaining duration of the current step `T_s0` (s).
    pub remaining: f64,
    /// Duration of the next step `T_s1` (s).
    pub next_duration: f64,
    /// Next foot placement relative to the CoM `p` (m).
    pub placement: f64,
}

impl WalkingParams {
    pub const fn new(remaining: f64, next_duration: f64, placement: f64) -> Self {
        Self {
            remaining,
            next_duration,
            placement,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimizationOutcome {
    pub params: WalkingParams,
    /// Combined two-step weighted cost.
    pub cost: f64,
    /// Predicted state at the end of the current step.
    pub step_end: ComState,
    /// Predicted state at the end of the next step.
    pub next_step_end: ComState,
    /// Wall-clock duration of the solve (s).
    pub solve_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Approach {
    Holistic,
    Sequential,
}

impl Approach {
    pub const ALL: [Approach; 2] = [Approach::Holistic, Approach::Sequential];
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Approach::Holistic => "holistic",
            Approach::Sequential => "sequential",
        })
    }
}

impl FromStr for Approach {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "holistic" => Ok(Approach::Holistic),
            "sequential" => Ok(Approach::Sequential),
            other => Err(Error::InvalidArgument(format!("unknown approach `{other}`"))),
        }
    }
}

/// Result of the second sequential stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stage2 {
    pub next_duration: f64,
    pub placement: f64,
    pub cost: f64,
}

/// Least-squares placement of the next foot.
///
/// With `A = [-C_1, -S_1/T_c]` and `b = x_d - [T_c S_1, C_1] xd1` the next step
/// ends at `x_d - (b - A p)`; this returns the `Q`-weighted minimizer of
/// `|b - A p|`. The denominator is at least `q.pos` because `C_1 >= 1`.
pub fn wls_placement(xd1: f64, t_s1: f64, desired: ComState, q: DiagWeight, lip: &LipParams) -> f64 {
    let tc = lip.time_constant();
    let (s1, c1) = sinh_cosh(t_s1 / tc);
    let (a0, a1) = (-c1, -s1 / tc);
    let b0 = desired.x - tc * s1 * xd1;
    let b1 = desired.xd - c1 * xd1;
    (q.pos * a0 * b0 + q.vel * a1 * b1) / (q.pos * a0 * a0 + q.vel * a1 * a1)
}

/// Clips a placement to `[-L_max, L_max]`.
pub fn clip_placement(p_ls: f64, bounds: &StepBounds) -> f64 {
    p_ls.clamp(-bounds.l_max, bounds.l_max)
}

/// Both optimizers, bound to one robot and gait configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryPlanner {
    lip: LipParams,
    target: GaitTarget,
    bounds: StepBounds,
    weights: CostWeights,
    solver: SolverSettings,
    desired: ComState,
}

impl RecoveryPlanner {
    pub fn new(
        lip: LipParams,
        target: GaitTarget,
        bounds: StepBounds,
        weights: CostWeights,
        solver: SolverSettings,
    ) -> Result<Self> {
        weights.validate()?;
        solver.validate()?;
        Ok(Self {
            lip,
            target,
            bounds,
            weights,
            solver,
            desired: desired_final_state(&target, &lip),
        })
    }

    pub fn lip(&self) -> &LipParams {
        &self.lip
    }

    pub fn target(&self) -> &GaitTarget {
        &self.target
    }

    pub fn bounds(&self) -> &StepBounds {
        &self.bounds
    }

    pub fn weights(&self) -> &CostWeights {
        &self.weights
    }

    pub fn solver(&self) -> &SolverSettings {
        &self.solver
    }

    /// Desired step-end state `x_d`.
    pub fn desired(&self) -> ComState {
        self.desired
    }

    fn check_inputs(&self, s0: ComState, t_elap: f64) -> Result<()> {
        if !s0.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite CoM state {s0:?}")));
        }
        if !(t_elap >= 0.0 && t_elap.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "elapsed step time must be finite and >= 0, got {t_elap}"
            )));
        }
        Ok(())
    }

    /// Predicted CoM state at the end of the current step.
    pub fn predict_step_end(&self, s0: ComState, t_s0: f64) -> Result<ComState> {
        lip::propagate(s0, t_s0, &self.lip)
    }

    #[inline]
    fn current_cost(&self, x1: ComState) -> f64 {
        self.weights.current.norm_sq(x1 - self.desired)
    }

    #[inline]
    fn next_cost(&self, x2: ComState) -> f64 {
        self.weights.next.norm_sq(x2 - self.desired)
    }

    fn predict(&self, s0: ComState, v: WalkingParams) -> (ComState, ComState) {
        let tc = self.lip.time_constant();
        let x1 = propagate_raw(s0, v.remaining, tc);
        let x2 = next_step_end_raw(x1.xd, v.placement, v.next_duration, tc);
        (x1, x2)
    }

    /// Two-step weighted cost of `params` starting from `s0`.
    pub fn cost(&self, s0: ComState, params: WalkingParams) -> Result<f64> {
        let x1 = lip::propagate(s0, params.remaining, &self.lip)?;
        let x2 = lip::next_step_end(x1.xd, params.placement, params.next_duration, &self.lip)?;
        Ok(self.current_cost(x1) + self.next_cost(x2))
    }

    /// Outcome of given parameters without solving; `solve_time` is zero.
    pub fn evaluate(&self, s0: ComState, params: WalkingParams) -> Result<OptimizationOutcome> {
        let cost = self.cost(s0, params)?;
        let (x1, x2) = self.predict(s0, params);
        Ok(OptimizationOutcome {
            params,
            cost,
            step_end: x1,
            next_step_end: x2,
            solve_time: 0.0,
        })
    }

    fn outcome(&self, s0: ComState, params: WalkingParams, started: Instant) -> OptimizationOutcome {
        let (x1, x2) = self.predict(s0, params);
        OptimizationOutcome {
            params,
            cost: self.current_cost(x1) + self.next_cost(x2),
            step_end: x1,
            next_step_end: x2,
            solve_time: started.elapsed().as_secs_f64(),
        }
    }

    /// Initial guess for the box search: the nominal gait, clipped to the box.
    fn nominal_guess(&self, t_elap: f64) -> WalkingParams {
        let (lo, hi) = self.bounds.remaining_range(t_elap);
        let t_sd = self.target.step_duration();
        WalkingParams::new(
            (t_sd - t_elap).clamp(lo, hi),
            t_sd.clamp(self.bounds.t_min, self.bounds.t_max),
            clip_placement(self.desired.x, &self.bounds),
        )
    }

    /// Simultaneous optimization of all three walking parameters.
    pub fn holistic(&self, s0: ComState, t_elap: f64) -> Result<OptimizationOutcome> {
        self.check_inputs(s0, t_elap)?;
        let started = Instant::now();
        let (r_lo, r_hi) = self.bounds.remaining_range(t_elap);
        let b = &self.bounds;
        let init = self.nominal_guess(t_elap);
        let objective = |v: &[f64]| {
            let (x1, x2) = self.predict(s0, WalkingParams::new(v[0], v[1], v[2]));
            self.current_cost(x1) + self.next_cost(x2)
        };
        let prob = BoxProblem::new(
            objective,
            vec![r_lo, b.t_min, -b.l_max],
            vec![r_hi, b.t_max, b.l_max],
            vec![init.remaining, init.next_duration, init.placement],
        )
        .with_tol(self.solver.box_tol)
        .with_max_evals(self.solver.max_evals)
        .with_grid(self.solver.box_grid);
        let m = minimize_box(&prob)?;
        let params = WalkingParams::new(m.argmin[0], m.argmin[1], m.argmin[2]);
        Ok(self.outcome(s0, params, started))
    }

    /// First sequential stage: the remaining duration minimizing the current
    /// step-end error alone. Returns `(T_s0, cost)`.
    pub fn stage1_duration(&self, s0: ComState, t_elap: f64) -> Result<(f64, f64)> {
        self.check_inputs(s0, t_elap)?;
        let (lo, hi) = self.bounds.remaining_range(t_elap);
        let tc = self.lip.time_constant();
        let prob = ScalarProblem::new(|t: f64| self.current_cost(propagate_raw(s0, t, tc)), lo, hi)
            .with_tol(self.solver.scalar_tol)
            .with_presamples(self.solver.presamples);
        let m = minimize_scalar(&prob)?;
        Ok((m.argmin, m.value))
    }

    /// Unconstrained least-squares placement for the configured target and `Q`.
    pub fn wls_placement(&self, xd1: f64, t_s1: f64) -> f64 {
        wls_placement(xd1, t_s1, self.desired, self.weights.placement, &self.lip)
    }

    /// Clipped placement and the resulting next-step cost for a given duration.
    pub fn stage2_cost(&self, xd1: f64, t_s1: f64) -> (f64, f64) {
        let p = clip_placement(self.wls_placement(xd1, t_s1), &self.bounds);
        let x2 = next_step_end_raw(xd1, p, t_s1, self.lip.time_constant());
        (p, self.next_cost(x2))
    }

    /// Second sequential stage: search the next duration with the placement
    /// expressed in closed form.
    pub fn stage2_step(&self, xd1: f64) -> Result<Stage2> {
        if !xd1.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite velocity {xd1}")));
        }
        let prob = ScalarProblem::new(
            |t: f64| self.stage2_cost(xd1, t).1,
            self.bounds.t_min,
            self.bounds.t_max,
        )
        .with_tol(self.solver.scalar_tol)
        .with_presamples(self.solver.presamples);
        let m = minimize_scalar(&prob)?;
        let (placement, cost) = self.stage2_cost(xd1, m.argmin);
        Ok(Stage2 {
            next_duration: m.argmin,
            placement,
            cost,
        })
    }

    /// Two-stage optimization. The reported cost is the combined two-step cost,
    /// directly comparable with [`RecoveryPlanner::holistic`].
    pub fn sequential(&self, s0: ComState, t_elap: f64) -> Result<OptimizationOutcome> {
        let started = Instant::now();
        let (t_s0, _) = self.stage1_duration(s0, t_elap)?;
        let x1 = propagate_raw(s0, t_s0, self.lip.time_constant());
        let st2 = self.stage2_step(x1.xd)?;
        let params = WalkingParams::new(t_s0, st2.next_duration, st2.placement);
        Ok(self.outcome(s0, params, started))
    }

    pub fn solve(&self, approach: Approach, s0: ComState, t_elap: f64) -> Result<OptimizationOutcome> {
        match approach {
            Approach::Holistic => self.holistic(s0, t_elap),
            Approach::Sequential => self.sequential(s0, t_elap),
        }
    }
}

impl Default for RecoveryPlanner {
    fn default() -> Self {
        Self::new(
            LipParams::default(),
            GaitTarget::default(),
            StepBounds::default(),
            CostWeights::default(),
            SolverSettings::default(),
        )
        .expect("default planner is valid")
    }
}
