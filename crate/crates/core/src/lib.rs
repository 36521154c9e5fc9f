//! Push recovery for bipedal walking on the linear inverted pendulum.
//!
//! The crate optimizes the remaining duration of the current step, the duration
//! of the next step and the next foot placement so that the CoM returns to a
//! nominal symmetric gait after a disturbance. Two optimizers are provided: a
//! holistic search over all three parameters and a faster sequential scheme that
//! solves two one-dimensional problems with a closed-form placement in between.
//!
//! Modules:
//! * [`lip`]: closed-form pendulum dynamics, orbital energy and the critical line.
//! * [`solvers`]: derivative-free scalar and box minimizers.
//! * [`optimizers`]: the holistic and sequential step optimizers.
//! * [`simulator`]: closed-loop walking with pushes.
//! * [`scanner`]: state-plane scans, cost comparison, ridge detection, timing.

pub mod error;
pub mod lip;
pub mod optimizers;
pub mod scanner;
pub mod simulator;
pub mod solvers;

pub use error::{Error, Result};
pub use lip::{
    classify_motion, critical_offset, desired_final_state, next_step_end, orbital_energy, propagate,
    ComState, GaitTarget, LipParams, MotionClass,
};
pub use optimizers::{
    clip_placement, wls_placement, Approach, CostWeights, DiagWeight, OptimizationOutcome,
    RecoveryPlanner, StepBounds, WalkingParams,
};
pub use scanner::{
    benchmark, compare_costs, detect_critical, scan_grid, trace_states, BenchState, BenchReport, CostComparison,
    CriticalRidge, GridSpec, JumpThresholds, RidgeKind, ScanCell, ScanResult,
};
pub use simulator::{
    detect_fall, integrate_tick, run_simulation, settling_time, FallLimits, PushEvent, Scenario,
    Trajectory, TrajectorySample,
};
pub use solvers::{minimize_box, minimize_scalar, BoxProblem, ScalarProblem, SolverSettings};
