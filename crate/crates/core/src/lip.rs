//! Closed-form dynamics of the linear inverted pendulum in the sagittal plane.
//!
//! All states are expressed in the frame of the current stance foot: `x` is the
//! horizontal offset of the CoM from the pivot and `xd` its velocity. With the CoM
//! held at constant height `z_c` the motion obeys `xdd = (g / z_c) x`, whose
//! solution is a hyperbolic rotation with time constant `T_c = sqrt(z_c / g)`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_param, require_positive, Error, Result};

/// Longest duration accepted by the public propagation routines.
///
/// `exp(t / T_c)` overflows long before this matters for `T_c` around 0.3 s, but
/// durations beyond a few seconds are never meaningful for a single step.
pub const MAX_DURATION: f64 = 10.0;

/// Absolute tolerance on the critical offset for membership of the critical line.
pub const CRITICAL_LINE_TOL: f64 = 1e-12;

/// Physical constants of the pendulum.
///
/// The time constant is derived from `z_c` and `g` at construction and cannot be
/// set independently.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LipParams {
    z_c: f64,
    g: f64,
    t_c: f64,
}

impl LipParams {
    pub fn new(z_c: f64, g: f64) -> Result<Self> {
        require_positive("z_c", z_c)?;
        require_positive("g", g)?;
        Ok(Self {
            z_c,
            g,
            t_c: (z_c / g).sqrt(),
        })
    }

    pub fn com_height(&self) -> f64 {
        self.z_c
    }

    pub fn gravity(&self) -> f64 {
        self.g
    }

    /// `T_c = sqrt(z_c / g)`.
    pub fn time_constant(&self) -> f64 {
        self.t_c
    }

    /// `g / z_c`, the stiffness of the unstable linear dynamics.
    pub fn omega_sq(&self) -> f64 {
        self.g / self.z_c
    }
}

impl Default for LipParams {
    fn default() -> Self {
        Self::new(1.0, 9.81).expect("default pendulum constants are valid")
    }
}

/// Horizontal CoM position and velocity relative to the stance foot.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ComState {
    pub x: f64,
    pub xd: f64,
}

impl ComState {
    pub const fn new(x: f64, xd: f64) -> Self {
        Self { x, xd }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.xd.is_finite()
    }
}

impl std::ops::Sub for ComState {
    type Output = ComState;

    fn sub(self, rhs: ComState) -> ComState {
        ComState::new(self.x - rhs.x, self.xd - rhs.xd)
    }
}

/// Nominal gait: the step duration and the CoM velocity reached at the end of
/// every step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaitTarget {
    step_duration: f64,
    velocity: f64,
}

impl GaitTarget {
    pub fn new(step_duration: f64, velocity: f64) -> Result<Self> {
        require_positive("step_duration", step_duration)?;
        if !velocity.is_finite() {
            return Err(invalid_param("velocity", "must be finite"));
        }
        Ok(Self {
            step_duration,
            velocity,
        })
    }

    pub fn step_duration(&self) -> f64 {
        self.step_duration
    }

    pub fn velocity(&self) -> f64 {
        self.velocity
    }
}

impl Default for GaitTarget {
    fn default() -> Self {
        Self::new(0.8, 1.0).expect("default gait target is valid")
    }
}

/// Long-term behaviour of an uncontrolled pendulum started from a given state.
///
/// The sign of the critical offset `x + T_c * xd` decides on which side of the
/// pivot the CoM eventually diverges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MotionClass {
    /// The CoM ends up travelling forward over (or away in front of) the pivot.
    PassesOver,
    /// The CoM ends up falling back behind the pivot.
    Reverses,
    /// The CoM comes to rest exactly above the pivot.
    CriticalStop,
}

fn check_duration(t: f64) -> Result<()> {
    if !(0.0..=MAX_DURATION).contains(&t) {
        return Err(Error::InvalidArgument(format!(
            "duration must lie in [0, {MAX_DURATION}] s, got {t}"
        )));
    }
    Ok(())
}

/// Hyperbolic propagation without argument checks; the optimizers call this in
/// their inner loops after validating the search box once.
#[inline]
pub(crate) fn propagate_raw(s0: ComState, t: f64, t_c: f64) -> ComState {
    let (sh, ch) = sinh_cosh(t / t_c);
    ComState::new(s0.x * ch + t_c * s0.xd * sh, s0.x / t_c * sh + s0.xd * ch)
}

#[inline]
pub(crate) fn sinh_cosh(u: f64) -> (f64, f64) {
    (u.sinh(), u.cosh())
}

/// State reached after `t` seconds of free motion from `s0`.
pub fn propagate(s0: ComState, t: f64, p: &LipParams) -> Result<ComState> {
    check_duration(t)?;
    Ok(propagate_raw(s0, t, p.t_c))
}

/// Step-end state of the nominal symmetric gait.
///
/// A nominal step starts at `[-x_d, xd_d]` and ends at `[x_d, xd_d]`; solving for
/// `x_d` gives `T_c * S_d / (1 + C_d) * xd_d`.
pub fn desired_final_state(tgt: &GaitTarget, p: &LipParams) -> ComState {
    let (s_d, c_d) = sinh_cosh(tgt.step_duration / p.t_c);
    ComState::new(p.t_c * s_d / (1.0 + c_d) * tgt.velocity, tgt.velocity)
}

#[inline]
pub(crate) fn next_step_end_raw(xd1: f64, place: f64, t_s1: f64, t_c: f64) -> ComState {
    let (s1, c1) = sinh_cosh(t_s1 / t_c);
    ComState::new(
        -c1 * place + t_c * s1 * xd1,
        -s1 / t_c * place + c1 * xd1,
    )
}

/// End state of the next step when the new foot is placed `place` metres ahead
/// of the CoM and the step lasts `t_s1`.
///
/// Equivalent to propagating `[-place, xd1]` for `t_s1`.
pub fn next_step_end(xd1: f64, place: f64, t_s1: f64, p: &LipParams) -> Result<ComState> {
    check_duration(t_s1)?;
    Ok(next_step_end_raw(xd1, place, t_s1, p.t_c))
}

/// Orbital energy `xd^2 / 2 - (g / 2 z_c) x^2`, conserved during free motion.
pub fn orbital_energy(s: ComState, p: &LipParams) -> f64 {
    0.5 * s.xd * s.xd - 0.5 * p.omega_sq() * s.x * s.x
}

/// Signed distance `x + T_c * xd` from the critical line.
///
/// This is also the capture-point offset from the stance foot. Positive values
/// mean the CoM will keep moving forward, negative values that it falls back.
pub fn critical_offset(s: ComState, p: &LipParams) -> f64 {
    s.x + p.t_c * s.xd
}

pub fn classify_motion(s: ComState, p: &LipParams) -> MotionClass {
    let e = critical_offset(s, p);
    if e.abs() <= CRITICAL_LINE_TOL {
        // on the line x and xd have opposite signs, so the motion always
        // converges onto the pivot
        MotionClass::CriticalStop
    } else if e > 0.0 {
        MotionClass::PassesOver
    } else {
        MotionClass::Reverses
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit() -> LipParams {
        LipParams::new(1.0, 9.81).unwrap()
    }

    /// Classical RK4 on `xdd = (g / z_c) x`, used only as an oracle here.
    fn rk4(s: ComState, t: f64, dt: f64, p: &LipParams) -> ComState {
        let w2 = p.omega_sq();
        let f = |x: f64, v: f64| (v, w2 * x);
        let n = (t / dt).round() as usize;
        let h = t / n as f64;
        let (mut x, mut v) = (s.x, s.xd);
        for _ in 0..n {
            let k1 = f(x, v);
            let k2 = f(x + 0.5 * h * k1.0, v + 0.5 * h * k1.1);
            let k3 = f(x + 0.5 * h * k2.0, v + 0.5 * h * k2.1);
            let k4 = f(x + h * k3.0, v + h * k3.1);
            x += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            v += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        }
        ComState::new(x, v)
    }

    #[test]
    fn make_params_examples() {
        let p = unit();
        assert_abs_diff_eq!(p.time_constant(), 0.319_275_428_9, epsilon = 1e-9);
        assert_abs_diff_eq!(p.time_constant().powi(2), 1.0 / 9.81, epsilon = 1e-15);
        assert_eq!(LipParams::new(9.81, 9.81).unwrap().time_constant(), 1.0);
        assert!(matches!(
            LipParams::new(0.0, 9.81),
            Err(Error::InvalidParameter { name: "z_c", .. })
        ));
        assert!(LipParams::new(1.0, -1.0).is_err());
        assert!(LipParams::new(f64::NAN, 9.81).is_err());
    }

    #[test]
    fn propagate_examples() {
        let p = unit();
        let s = ComState::new(0.1, 0.3);
        assert_eq!(propagate(s, 0.0, &p).unwrap(), s);

        let tc = p.time_constant();
        let out = propagate(ComState::new(0.0, 0.5), tc, &p).unwrap();
        assert_abs_diff_eq!(out.x, tc * 0.5 * 1f64.sinh(), epsilon = 1e-15);
        assert_abs_diff_eq!(out.xd, 0.5 * 1f64.cosh(), epsilon = 1e-15);
        assert_abs_diff_eq!(out.x, 0.1876, epsilon = 1e-4);
        assert_abs_diff_eq!(out.xd, 0.7716, epsilon = 1e-4);
        let oracle = rk4(ComState::new(0.0, 0.5), tc, 1e-5, &p);
        assert_abs_diff_eq!(out.x, oracle.x, epsilon = 1e-6);
        assert_abs_diff_eq!(out.xd, oracle.xd, epsilon = 1e-6);

        assert_eq!(
            propagate(ComState::default(), 1.3, &p).unwrap(),
            ComState::default()
        );
        assert!(matches!(
            propagate(s, -0.1, &p),
            Err(Error::InvalidArgument(_))
        ));
        assert!(propagate(s, MAX_DURATION + 1.0, &p).is_err());
    }

    #[test]
    fn desired_final_state_examples() {
        let p = unit();
        let tiny = desired_final_state(&GaitTarget::new(1e-9, 0.7).unwrap(), &p);
        assert_abs_diff_eq!(tiny.x, 0.0, epsilon = 1e-9);
        assert_eq!(tiny.xd, 0.7);

        let fwd = desired_final_state(&GaitTarget::new(0.8, 1.0).unwrap(), &p);
        assert_abs_diff_eq!(fwd.x, 0.271, epsilon = 5e-4);
        assert_eq!(fwd.xd, 1.0);
        let back = desired_final_state(&GaitTarget::new(0.8, -1.0).unwrap(), &p);
        assert_eq!(back.x, -fwd.x);
        assert!(GaitTarget::new(0.0, 1.0).is_err());
    }

    #[test]
    fn next_step_end_examples() {
        let p = unit();
        let a = next_step_end(0.7, 0.0, 0.5, &p).unwrap();
        assert_eq!(a, propagate(ComState::new(0.0, 0.7), 0.5, &p).unwrap());

        let tgt = GaitTarget::default();
        let xd = desired_final_state(&tgt, &p);
        let end = next_step_end(xd.xd, xd.x, tgt.step_duration(), &p).unwrap();
        assert_abs_diff_eq!(end.x, xd.x, epsilon = 1e-12);
        assert_abs_diff_eq!(end.xd, xd.xd, epsilon = 1e-12);

        assert_eq!(
            next_step_end(0.4, 0.2, 0.0, &p).unwrap(),
            ComState::new(-0.2, 0.4)
        );
        assert!(next_step_end(0.4, 0.2, -1.0, &p).is_err());
    }

    #[test]
    fn energy_and_offset_examples() {
        let p = unit();
        let tc = p.time_constant();
        assert_eq!(orbital_energy(ComState::new(0.0, 0.6), &p), 0.18);
        assert_abs_diff_eq!(
            orbital_energy(ComState::new(0.1, 0.0), &p),
            -0.04905,
            epsilon = 1e-15
        );
        for v in [-1.3, -0.2, 0.5, 2.0] {
            let s = ComState::new(-tc * v, v);
            assert_abs_diff_eq!(orbital_energy(s, &p), 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!(critical_offset(s, &p), 0.0, epsilon = 1e-15);
        }
        let back = critical_offset(ComState::new(0.03, -0.12), &p);
        let fwd = critical_offset(ComState::new(0.04, -0.12), &p);
        assert_abs_diff_eq!(back, 0.03 - 0.12 * tc, epsilon = 1e-15);
        assert_abs_diff_eq!(back, -0.0083, epsilon = 1e-4);
        assert_abs_diff_eq!(fwd, 0.0017, epsilon = 1e-4);
    }

    #[test]
    fn classify_examples() {
        let p = unit();
        let tc = p.time_constant();
        assert_eq!(
            classify_motion(ComState::new(0.0, 0.5), &p),
            MotionClass::PassesOver
        );
        assert_eq!(
            classify_motion(ComState::new(0.03, -0.12), &p),
            MotionClass::Reverses
        );
        assert_eq!(
            classify_motion(ComState::new(0.04, -0.12), &p),
            MotionClass::PassesOver
        );
        assert_eq!(
            classify_motion(ComState::new(-tc * 0.5, 0.5), &p),
            MotionClass::CriticalStop
        );
        assert_eq!(
            classify_motion(ComState::default(), &p),
            MotionClass::CriticalStop
        );
    }

    #[test]
    fn classes_differ_across_critical_line() {
        // mirror images across the line with the same |x|, |xd|
        let p = unit();
        let a = ComState::new(0.05, -0.2);
        let b = ComState::new(-0.05, 0.2);
        assert_ne!(classify_motion(a, &p), classify_motion(b, &p));
        let c = ComState::new(0.08, -0.2);
        let d = ComState::new(0.05, -0.2);
        assert_ne!(classify_motion(c, &p), classify_motion(d, &p));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn semigroup(x in -1.0..1.0f64, v in -2.0..2.0f64, t1 in 0.0..3.0f64, t2 in 0.0..3.0f64) {
                let p = unit();
                let s = ComState::new(x, v);
                let two = propagate(propagate(s, t1, &p).unwrap(), t2, &p).unwrap();
                let one = propagate(s, t1 + t2, &p).unwrap();
                let scale = one.x.abs().max(one.xd.abs()).max(1e-3);
                prop_assert!((two.x - one.x).abs() <= 1e-10 * scale);
                prop_assert!((two.xd - one.xd).abs() <= 1e-10 * scale);
            }

            #[test]
            fn energy_conserved(x in -1.0..1.0f64, v in -2.0..2.0f64, t in 0.0..3.0f64) {
                let p = unit();
                let s = ComState::new(x, v);
                let e0 = orbital_energy(s, &p);
                let e1 = orbital_energy(propagate(s, t, &p).unwrap(), &p);
                // relative to the magnitude of the terms that cancel
                let scale = 0.5 * v * v + 0.5 * p.omega_sq() * x * x;
                let grown = scale * (2.0 * t / p.time_constant()).exp();
                prop_assert!((e1 - e0).abs() <= 1e-9 * e0.abs().max(1e-6 * grown).max(1e-12));
            }

            #[test]
            fn matches_rk4(x in -0.5..0.5f64, v in -1.5..1.5f64, t in 0.0..2.0f64) {
                let p = unit();
                let s = ComState::new(x, v);
                let exact = propagate(s, t, &p).unwrap();
                let num = rk4(s, t, 1e-4, &p);
                prop_assert!((exact.x - num.x).abs() <= 1e-6);
                prop_assert!((exact.xd - num.xd).abs() <= 1e-6);
            }

            #[test]
            fn symmetric_gait_is_fixed_point(tsd in 0.2..2.0f64, vel in -2.0..2.0f64) {
                let p = unit();
                let tgt = GaitTarget::new(tsd, vel).unwrap();
                let xd = desired_final_state(&tgt, &p);
                let end = propagate(ComState::new(-xd.x, xd.xd), tsd, &p).unwrap();
                prop_assert!((end.x - xd.x).abs() <= 1e-12);
                prop_assert!((end.xd - xd.xd).abs() <= 1e-12 * xd.xd.abs().max(1.0));
            }

            #[test]
            fn next_step_end_is_propagation(v in -2.0..2.0f64, place in -0.5..0.5f64, t in 0.0..2.0f64) {
                let p = unit();
                let a = next_step_end(v, place, t, &p).unwrap();
                let b = propagate(ComState::new(-place, v), t, &p).unwrap();
                prop_assert!((a.x - b.x).abs() <= 1e-12 * a.x.abs().max(1.0));
                prop_assert!((a.xd - b.xd).abs() <= 1e-12 * a.xd.abs().max(1.0));
            }

            #[test]
            fn critical_stop_iff_on_line(x in -0.5..0.5f64, v in -2.0..2.0f64) {
                let p = unit();
                let s = ComState::new(x, v);
                let on_line = critical_offset(s, &p).abs() <= CRITICAL_LINE_TOL;
                prop_assert_eq!(classify_motion(s, &p) == MotionClass::CriticalStop, on_line);
                let line = ComState::new(-p.time_constant() * v, v);
                prop_assert_eq!(classify_motion(line, &p), MotionClass::CriticalStop);
                prop_assert!(orbital_energy(line, &p).abs() <= 1e-12);
            }
        }
    }
}
