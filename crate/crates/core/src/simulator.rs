//! Closed-loop sagittal walking on the linear inverted pendulum.
//!
//! Every control period the configured optimizer is solved from the current
//! foot-local state. When the returned remaining duration falls inside the next
//! period, support switches to the new foot at that exact instant. Between
//! decisions the CoM is integrated with classical RK4, including the
//! acceleration of any active push.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_param, require_positive, Error, Result};
use crate::lip::{propagate_raw, ComState, GaitTarget, LipParams};
use crate::optimizers::{Approach, CostWeights, RecoveryPlanner, StepBounds, WalkingParams};
use crate::solvers::SolverSettings;

/// A constant CoM acceleration applied over a time window. Positive values push
/// along the direction of travel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PushEvent {
    pub t_start: f64,
    pub duration: f64,
    pub accel: f64,
}

impl PushEvent {
    pub fn t_end(&self) -> f64 {
        self.t_start + self.duration
    }

    fn active_at(&self, t: f64) -> bool {
        t >= self.t_start && t < self.t_end()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FallLimits {
    pub position: f64,
    pub velocity: f64,
}

impl Default for FallLimits {
    fn default() -> Self {
        Self {
            position: 1.0,
            velocity: 5.0,
        }
    }
}

/// Everything needed to run one simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub lip: LipParams,
    pub target: GaitTarget,
    pub bounds: StepBounds,
    pub weights: CostWeights,
    pub solver: SolverSettings,
    /// Initial foot-local CoM state.
    pub x0: ComState,
    pub approach: Approach,
    pub pushes: Vec<PushEvent>,
    pub dt_control: f64,
    pub dt_int: f64,
    pub t_end: f64,
    pub fall_limits: FallLimits,
}

impl Scenario {
    /// Unperturbed walk starting at the beginning of a nominal step.
    pub fn nominal(approach: Approach) -> Self {
        let lip = LipParams::default();
        let target = GaitTarget::default();
        let xd = crate::lip::desired_final_state(&target, &lip);
        Self {
            lip,
            target,
            bounds: StepBounds::default(),
            weights: CostWeights::default(),
            solver: SolverSettings::default(),
            x0: ComState::new(-xd.x, xd.xd),
            approach,
            pushes: Vec::new(),
            dt_control: 0.01,
            dt_int: 0.001,
            t_end: 10.0,
            fall_limits: FallLimits::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("dt_control", self.dt_control)?;
        require_positive("dt_int", self.dt_int)?;
        require_positive("t_end", self.t_end)?;
        require_positive("fall_limits.position", self.fall_limits.position)?;
        require_positive("fall_limits.velocity", self.fall_limits.velocity)?;
        if self.dt_int > self.dt_control {
            return Err(invalid_param("dt_int", "must not exceed dt_control"));
        }
        let ratio = self.dt_control / self.dt_int;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return Err(invalid_param(
                "dt_int",
                format!("dt_control ({}) is not a multiple of dt_int ({})", self.dt_control, self.dt_int),
            ));
        }
        if !self.x0.is_finite() {
            return Err(invalid_param("x0", "must be finite"));
        }
        let mut pushes = self.pushes.clone();
        for p in &pushes {
            require_positive("push.duration", p.duration)?;
            if !(p.t_start.is_finite() && p.accel.is_finite()) {
                return Err(invalid_param("push", "start and accel must be finite"));
            }
        }
        pushes.sort_by(|a, b| a.t_start.total_cmp(&b.t_start));
        for w in pushes.windows(2) {
            if w[1].t_start < w[0].t_end() {
                return Err(invalid_param("push", "push windows overlap"));
            }
        }
        self.weights.validate()?;
        self.solver.validate()
    }

    pub fn planner(&self) -> Result<RecoveryPlanner> {
        RecoveryPlanner::new(self.lip, self.target, self.bounds, self.weights, self.solver)
    }

    /// End of the last push, if any.
    pub fn last_push_end(&self) -> Option<f64> {
        self.pushes.iter().map(PushEvent::t_end).reduce(f64::max)
    }

    fn accel_at(&self, t: f64) -> f64 {
        self.pushes
            .iter()
            .filter(|p| p.active_at(t))
            .map(|p| p.accel)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub x_world: f64,
    pub xd: f64,
    pub foot_world: f64,
    pub cmd: WalkingParams,
    pub cost: f64,
    pub solve_time: f64,
    /// Time since the last touchdown passed to the optimizer.
    pub t_elap: f64,
}

impl TrajectorySample {
    /// The foot-local state the optimizer saw.
    pub fn local_state(&self) -> ComState {
        ComState::new(self.x_world - self.foot_world, self.xd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepEvent {
    pub t: f64,
    /// World position of the new stance foot.
    pub foot_world: f64,
    /// Placement relative to the CoM used for this step.
    pub placement: f64,
    /// CoM velocity at touchdown.
    pub xd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    pub step_events: Vec<StepEvent>,
    pub fell: bool,
    pub fall_time: Option<f64>,
}

/// `true` when the CoM has left the recoverable envelope.
pub fn detect_fall(s: ComState, limits: &FallLimits) -> bool {
    s.x.abs() > limits.position || s.xd.abs() > limits.velocity
}

/// One classical RK4 step of `xdd = (g / z_c) x + a_ext`.
pub fn integrate_tick(s: ComState, a_ext: f64, dt: f64, p: &LipParams) -> ComState {
    let w2 = p.omega_sq();
    let f = |x: f64, v: f64| (v, w2 * x + a_ext);
    let k1 = f(s.x, s.xd);
    let k2 = f(s.x + 0.5 * dt * k1.0, s.xd + 0.5 * dt * k1.1);
    let k3 = f(s.x + 0.5 * dt * k2.0, s.xd + 0.5 * dt * k2.1);
    let k4 = f(s.x + dt * k3.0, s.xd + dt * k3.1);
    ComState::new(
        s.x + dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        s.xd + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
    )
}

/// Integrates `s` from `t0` for `dur`, cutting substeps at push boundaries so the
/// applied acceleration is constant over every substep.
fn advance(sc: &Scenario, mut s: ComState, t0: f64, dur: f64) -> ComState {
    if dur <= 0.0 {
        return s;
    }
    let t1 = t0 + dur;
    let mut cuts = vec![t0, t1];
    for p in &sc.pushes {
        for edge in [p.t_start, p.t_end()] {
            if edge > t0 && edge < t1 {
                cuts.push(edge);
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    for w in cuts.windows(2) {
        let len = w[1] - w[0];
        if len <= 0.0 {
            continue;
        }
        let a = sc.accel_at(0.5 * (w[0] + w[1]));
        let n = ((len / sc.dt_int) - 1e-9).ceil().max(1.0) as usize;
        let h = len / n as f64;
        for _ in 0..n {
            s = integrate_tick(s, a, h, &sc.lip);
        }
    }
    s
}

/// Runs the closed loop until `t_end` or a fall.
pub fn run_simulation(sc: &Scenario) -> Result<Trajectory> {
    sc.validate()?;
    let planner = sc.planner()?;
    let ticks = (sc.t_end / sc.dt_control - 1e-9).ceil() as usize;

    let mut state = sc.x0;
    let mut foot = 0.0;
    let mut step_start = 0.0;
    let mut traj = Trajectory {
        samples: Vec::with_capacity(ticks),
        step_events: Vec::new(),
        fell: false,
        fall_time: None,
    };
    if detect_fall(state, &sc.fall_limits) {
        traj.fell = true;
        traj.fall_time = Some(0.0);
        return Ok(traj);
    }

    for k in 0..ticks {
        let t = k as f64 * sc.dt_control;
        let t_elap = (t - step_start).max(0.0);
        let out = planner
            .solve(sc.approach, state, t_elap)
            .map_err(|e| Error::Simulation {
                t,
                source: Box::new(e),
            })?;
        traj.samples.push(TrajectorySample {
            t,
            x_world: foot + state.x,
            xd: state.xd,
            foot_world: foot,
            cmd: out.params,
            cost: out.cost,
            solve_time: out.solve_time,
            t_elap,
        });

        let remaining = out.params.remaining;
        if remaining <= sc.dt_control {
            state = advance(sc, state, t, remaining);
            let p = out.params.placement;
            let com_world = foot + state.x;
            foot = com_world + p;
            state = ComState::new(-p, state.xd);
            step_start = t + remaining;
            traj.step_events.push(StepEvent {
                t: step_start,
                foot_world: foot,
                placement: p,
                xd: state.xd,
            });
            state = advance(sc, state, step_start, sc.dt_control - remaining);
        } else {
            state = advance(sc, state, t, sc.dt_control);
        }

        if detect_fall(state, &sc.fall_limits) {
            traj.fell = true;
            traj.fall_time = Some((k + 1) as f64 * sc.dt_control);
            break;
        }
    }
    Ok(traj)
}

/// Nominal CoM velocity `tau` seconds into a symmetric step.
pub fn nominal_velocity(tau: f64, target: &GaitTarget, lip: &LipParams) -> f64 {
    let xd = crate::lip::desired_final_state(target, lip);
    propagate_raw(ComState::new(-xd.x, xd.xd), tau, lip.time_constant()).xd
}

/// Velocity band and hold time used by [`settling_time`].
pub const SETTLE_BAND: f64 = 0.02;
pub const SETTLE_HOLD: f64 = 0.5;

/// First sample time at or after `after` from which the CoM velocity stays
/// within [`SETTLE_BAND`] of the nominal gait velocity for [`SETTLE_HOLD`].
///
/// The reference is phase-matched: each sample is compared with the nominal
/// velocity at the same time since the most recent touchdown.
pub fn settling_time(traj: &Trajectory, sc: &Scenario, after: f64) -> Option<f64> {
    let within: Vec<(f64, bool)> = traj
        .samples
        .iter()
        .map(|s| {
            let reference = nominal_velocity(s.t_elap, &sc.target, &sc.lip);
            (s.t, (s.xd - reference).abs() < SETTLE_BAND)
        })
        .collect();

    let mut run_start: Option<f64> = None;
    for &(t, ok) in &within {
        if t + 1e-12 < after {
            continue;
        }
        match (ok, run_start) {
            (true, None) => run_start = Some(t),
            (false, _) => run_start = None,
            _ => {}
        }
        if let Some(t0) = run_start {
            if t - t0 >= SETTLE_HOLD - 1e-9 {
                return Some(t0);
            }
        }
    }
    None
}
