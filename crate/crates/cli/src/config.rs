//! TOML run configuration. Every field is in SI units and optional; unknown
//! keys are rejected.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use push_recovery::{
    desired_final_state, Approach, ComState, CostWeights, DiagWeight, FallLimits, GaitTarget,
    GridSpec, JumpThresholds, LipParams, PushEvent, RecoveryPlanner, Scenario, SolverSettings,
    StepBounds,
};

const BUNDLED: [(&str, &str); 3] = [
    ("nominal", include_str!("../configs/nominal.toml")),
    ("backward_push", include_str!("../configs/backward_push.toml")),
    ("forward_push", include_str!("../configs/forward_push.toml")),
];

pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub lip: LipSection,
    pub target: TargetSection,
    pub bounds: BoundsSection,
    pub weights: WeightsSection,
    pub solver: SolverSettings,
    pub simulation: SimulationSection,
    pub scan: ScanSection,
    pub critical: CriticalSection,
    pub compare: CompareSection,
    pub bench: BenchSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LipSection {
    /// CoM height (m).
    pub com_height: f64,
    /// Gravitational acceleration (m/s^2).
    pub gravity: f64,
}

impl Default for LipSection {
    fn default() -> Self {
        Self { com_height: 1.0, gravity: 9.81 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetSection {
    /// Nominal step duration (s).
    pub step_duration: f64,
    /// Desired CoM velocity at the end of each step (m/s).
    pub velocity: f64,
}

impl Default for TargetSection {
    fn default() -> Self {
        Self { step_duration: 0.8, velocity: 1.0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsSection {
    pub t_min: f64,
    pub t_max: f64,
    /// Step-length limit (m). Mutually exclusive with `friction_cone`.
    pub l_max: Option<f64>,
    /// Friction cone half-angle (rad); sets `l_max = com_height * tan(angle)`.
    pub friction_cone: Option<f64>,
}

impl Default for BoundsSection {
    fn default() -> Self {
        Self { t_min: 0.6, t_max: 2.0, l_max: None, friction_cone: None }
    }
}

/// Diagonal weights written as `[position, velocity]`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightsSection {
    pub current: [f64; 2],
    pub next: [f64; 2],
    pub placement: [f64; 2],
}

impl Default for WeightsSection {
    fn default() -> Self {
        Self { current: [1.0, 1.0], next: [1.0, 1.0], placement: [1.0, 1.0] }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PushSection {
    pub t_start: f64,
    pub duration: f64,
    pub accel: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub approach: Approach,
    /// Initial foot-local `[x, xd]`; defaults to the start of a nominal step.
    pub x0: Option<[f64; 2]>,
    pub dt_control: f64,
    pub dt_int: f64,
    pub t_end: f64,
    pub fall_position: f64,
    pub fall_velocity: f64,
    pub pushes: Vec<PushSection>,
}

impl Default for SimulationSection {
    fn default() -> Self {
        let sc = Scenario::nominal(Approach::Sequential);
        Self {
            approach: sc.approach,
            x0: None,
            dt_control: sc.dt_control,
            dt_int: sc.dt_int,
            t_end: sc.t_end,
            fall_position: sc.fall_limits.position,
            fall_velocity: sc.fall_limits.velocity,
            pushes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSection {
    pub x_lo: f64,
    pub x_hi: f64,
    pub x_step: f64,
    pub v_lo: f64,
    pub v_hi: f64,
    pub v_step: f64,
    /// Elapsed time of the current step at every cell (s). Defaults to
    /// `t_min`, so the swing-time floor does not restrict the remaining duration.
    pub t_elap: Option<f64>,
}

impl Default for ScanSection {
    fn default() -> Self {
        let g = GridSpec::default();
        Self {
            x_lo: g.x_lo,
            x_hi: g.x_hi,
            x_step: g.x_step,
            v_lo: g.v_lo,
            v_hi: g.v_hi,
            v_step: g.v_step,
            t_elap: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CriticalSection {
    /// Which approach's parameters are checked for jumps.
    pub source: Approach,
    pub remaining: f64,
    pub next_duration: f64,
    pub placement: f64,
}

impl Default for CriticalSection {
    fn default() -> Self {
        let t = JumpThresholds::default();
        Self {
            source: Approach::Holistic,
            remaining: t.remaining,
            next_duration: t.next_duration,
            placement: t.placement,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareSection {
    pub diff_threshold: f64,
}

impl Default for CompareSection {
    fn default() -> Self {
        Self { diff_threshold: push_recovery::scanner::DEFAULT_DIFF_THRESHOLD }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSection {
    pub repetitions: usize,
    /// Seconds of trace kept after the last push when no states file is given.
    pub window_after_push: f64,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self { repetitions: 3, window_after_push: 2.0 }
    }
}

/// Loads a config from a file path, or a bundled config by name.
pub fn load(name: &str) -> Result<RunConfig> {
    let path = Path::new(name);
    let text = if path.exists() {
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?
    } else if let Some((_, text)) = BUNDLED.iter().find(|(n, _)| *n == name) {
        text.to_string()
    } else {
        bail!(
            "config `{name}` is neither a file nor a bundled config ({})",
            bundled_names().collect::<Vec<_>>().join(", ")
        );
    };
    parse(&text).with_context(|| format!("config `{name}`"))
}

pub fn parse(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text)?;
    cfg.planner()?;
    Ok(cfg)
}

fn diag(w: [f64; 2]) -> DiagWeight {
    DiagWeight::new(w[0], w[1])
}

impl RunConfig {
    pub fn lip(&self) -> Result<LipParams> {
        Ok(LipParams::new(self.lip.com_height, self.lip.gravity)?)
    }

    pub fn target(&self) -> Result<GaitTarget> {
        Ok(GaitTarget::new(self.target.step_duration, self.target.velocity)?)
    }

    pub fn bounds(&self) -> Result<StepBounds> {
        let b = &self.bounds;
        Ok(match (b.l_max, b.friction_cone) {
            (Some(_), Some(_)) => bail!("bounds: set either `l_max` or `friction_cone`, not both"),
            (Some(l), None) => StepBounds::new(b.t_min, b.t_max, l)?,
            (None, Some(theta)) => StepBounds::from_friction_cone(b.t_min, b.t_max, theta, &self.lip()?)?,
            (None, None) => StepBounds::new(b.t_min, b.t_max, StepBounds::default().l_max())?,
        })
    }

    pub fn weights(&self) -> CostWeights {
        CostWeights {
            current: diag(self.weights.current),
            next: diag(self.weights.next),
            placement: diag(self.weights.placement),
        }
    }

    pub fn planner(&self) -> Result<RecoveryPlanner> {
        Ok(RecoveryPlanner::new(
            self.lip()?,
            self.target()?,
            self.bounds()?,
            self.weights(),
            self.solver,
        )?)
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let lip = self.lip()?;
        let target = self.target()?;
        let s = &self.simulation;
        let x0 = match s.x0 {
            Some([x, xd]) => ComState::new(x, xd),
            None => {
                let d = desired_final_state(&target, &lip);
                ComState::new(-d.x, d.xd)
            }
        };
        let sc = Scenario {
            lip,
            target,
            bounds: self.bounds()?,
            weights: self.weights(),
            solver: self.solver,
            x0,
            approach: s.approach,
            pushes: s
                .pushes
                .iter()
                .map(|p| PushEvent { t_start: p.t_start, duration: p.duration, accel: p.accel })
                .collect(),
            dt_control: s.dt_control,
            dt_int: s.dt_int,
            t_end: s.t_end,
            fall_limits: FallLimits { position: s.fall_position, velocity: s.fall_velocity },
        };
        sc.validate()?;
        Ok(sc)
    }

    pub fn grid(&self) -> Result<GridSpec> {
        let s = &self.scan;
        let g = GridSpec {
            x_lo: s.x_lo,
            x_hi: s.x_hi,
            x_step: s.x_step,
            v_lo: s.v_lo,
            v_hi: s.v_hi,
            v_step: s.v_step,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn scan_elapsed(&self) -> Result<f64> {
        match self.scan.t_elap {
            Some(t) => Ok(t),
            None => Ok(self.bounds()?.t_min()),
        }
    }

    pub fn thresholds(&self) -> JumpThresholds {
        JumpThresholds {
            remaining: self.critical.remaining,
            next_duration: self.critical.next_duration,
            placement: self.critical.placement,
        }
    }
}
