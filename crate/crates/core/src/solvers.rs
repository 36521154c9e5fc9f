//! Deterministic derivative-free minimizers on boxes.
//!
//! [`minimize_scalar`] presamples the interval on a uniform grid and refines each
//! sampled local minimum with a golden-section search. [`minimize_box`] runs a
//! Nelder-Mead simplex whose trial points are clipped onto the box, restarted from
//! a fixed schedule of start points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of equispaced samples taken before scalar refinement.
pub const DEFAULT_PRESAMPLES: usize = 33;

/// Default argument-space tolerance (seconds for durations, metres for placement).
pub const DEFAULT_TOL: f64 = 1e-5;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// How many sampled local minima are refined at most.
const MAX_BRACKETS: usize = 4;

/// Tuning knobs shared by both solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    /// Argument tolerance for scalar searches.
    pub scalar_tol: f64,
    /// Simplex-size tolerance for the box search.
    pub box_tol: f64,
    /// Presample count for scalar searches.
    pub presamples: usize,
    /// Objective evaluation budget per simplex run.
    pub max_evals: usize,
    /// Points per axis of the box presample grid.
    pub box_grid: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            scalar_tol: DEFAULT_TOL,
            box_tol: DEFAULT_TOL,
            presamples: DEFAULT_PRESAMPLES,
            max_evals: 4000,
            box_grid: 7,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        crate::error::require_positive("scalar_tol", self.scalar_tol)?;
        crate::error::require_positive("box_tol", self.box_tol)?;
        if self.presamples < 3 {
            return Err(crate::error::invalid_param(
                "presamples",
                format!("need at least 3 samples, got {}", self.presamples),
            ));
        }
        if self.box_grid > 50 {
            return Err(crate::error::invalid_param(
                "box_grid",
                format!("at most 50 points per axis, got {}", self.box_grid),
            ));
        }
        if self.max_evals < 10 {
            return Err(crate::error::invalid_param(
                "max_evals",
                format!("budget too small: {}", self.max_evals),
            ));
        }
        Ok(())
    }
}

/// A bounded one-dimensional minimization problem.
#[derive(Debug, Clone, Copy)]
pub struct ScalarProblem<F> {
    pub objective: F,
    pub lo: f64,
    pub hi: f64,
    pub tol: f64,
    pub presamples: usize,
}

impl<F: Fn(f64) -> f64> ScalarProblem<F> {
    pub fn new(objective: F, lo: f64, hi: f64) -> Self {
        Self {
            objective,
            lo,
            hi,
            tol: DEFAULT_TOL,
            presamples: DEFAULT_PRESAMPLES,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_presamples(mut self, n: usize) -> Self {
        self.presamples = n;
        self
    }
}

/// A box-constrained minimization problem in `n` dimensions.
#[derive(Debug, Clone)]
pub struct BoxProblem<F> {
    pub objective: F,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub init: Vec<f64>,
    pub tol: f64,
    pub max_evals: usize,
    /// Points per axis of the coarse presample grid; the best few grid points
    /// become extra starts. `0` or `1` disables it.
    pub grid: usize,
}

/// Number of presample grid points promoted to starts.
const GRID_STARTS: usize = 8;

impl<F: Fn(&[f64]) -> f64> BoxProblem<F> {
    pub fn new(objective: F, lo: Vec<f64>, hi: Vec<f64>, init: Vec<f64>) -> Self {
        Self {
            objective,
            lo,
            hi,
            init,
            tol: DEFAULT_TOL,
            max_evals: SolverSettings::default().max_evals,
            grid: SolverSettings::default().box_grid,
        }
    }

    pub fn with_grid(mut self, points_per_axis: usize) -> Self {
        self.grid = points_per_axis;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_evals(mut self, n: usize) -> Self {
        self.max_evals = n;
        self
    }
}

/// Location and value of a minimum.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum<T> {
    pub argmin: T,
    pub value: f64,
    pub evaluations: usize,
}

fn eval_scalar<F: Fn(f64) -> f64>(f: &F, t: f64, evals: &mut usize) -> Result<f64> {
    *evals += 1;
    let v = f(t);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::ObjectiveEvaluation { arg: vec![t] })
    }
}

/// `a` beats `b` on strictly lower value, or equal value at a smaller argument.
fn better(a: (f64, f64), b: (f64, f64)) -> bool {
    a.1 < b.1 || (a.1 == b.1 && a.0 < b.0)
}

/// Minimizes a scalar function on `[lo, hi]`.
///
/// For a unimodal objective the returned argument is within `tol` of the
/// minimizer. Otherwise every sampled local minimum (up to four, best first) is
/// refined and the best refinement wins, so the result is never worse than the
/// best presample. Ties go to the smaller argument.
pub fn minimize_scalar<F: Fn(f64) -> f64>(prob: &ScalarProblem<F>) -> Result<Minimum<f64>> {
    let ScalarProblem {
        ref objective,
        lo,
        hi,
        tol,
        presamples,
    } = *prob;
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(Error::InvalidArgument(format!(
            "scalar bounds must satisfy lo <= hi, got [{lo}, {hi}]"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be > 0, got {tol}")));
    }
    let mut evals = 0;
    if hi - lo <= tol {
        let flo = eval_scalar(objective, lo, &mut evals)?;
        let fhi = eval_scalar(objective, hi, &mut evals)?;
        let (argmin, value) = if better((hi, fhi), (lo, flo)) { (hi, fhi) } else { (lo, flo) };
        return Ok(Minimum { argmin, value, evaluations: evals });
    }

    let n = presamples.max(3);
    let step = (hi - lo) / (n - 1) as f64;
    let xs: Vec<f64> = (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + step * i as f64 })
        .collect();
    let fs = xs
        .iter()
        .map(|&x| eval_scalar(objective, x, &mut evals))
        .collect::<Result<Vec<_>>>()?;

    let mut best = (xs[0], fs[0]);
    for (&x, &f) in xs.iter().zip(&fs).skip(1) {
        if better((x, f), best) {
            best = (x, f);
        }
    }

    let mut minima: Vec<usize> = (0..n)
        .filter(|&i| (i == 0 || fs[i] <= fs[i - 1]) && (i == n - 1 || fs[i] <= fs[i + 1]))
        .collect();
    minima.sort_by(|&a, &b| fs[a].total_cmp(&fs[b]).then(a.cmp(&b)));
    minima.truncate(MAX_BRACKETS);

    for i in minima {
        let a = xs[i.saturating_sub(1)];
        let b = xs[(i + 1).min(n - 1)];
        let cand = golden_section(objective, a, b, tol, &mut evals)?;
        if better(cand, best) {
            best = cand;
        }
    }

    Ok(Minimum {
        argmin: best.0.clamp(lo, hi),
        value: best.1,
        evaluations: evals,
    })
}

/// Golden-section search on `[a, b]` until the bracket is narrower than `tol`.
/// Returns the best interior point evaluated.
fn golden_section<F: Fn(f64) -> f64>(
    f: &F,
    mut a: f64,
    mut b: f64,
    tol: f64,
    evals: &mut usize,
) -> Result<(f64, f64)> {
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = eval_scalar(f, x1, evals)?;
    let mut f2 = eval_scalar(f, x2, evals)?;
    while b - a > tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = eval_scalar(f, x1, evals)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = eval_scalar(f, x2, evals)?;
        }
    }
    Ok(if better((x2, f2), (x1, f1)) { (x2, f2) } else { (x1, f1) })
}

/// Start points for the box search: `init`, then the midpoint between `init` and
/// each of the `2^n` box corners.
pub fn multistart_points(lo: &[f64], hi: &[f64], init: &[f64]) -> Vec<Vec<f64>> {
    let n = init.len();
    let mut starts = vec![init.to_vec()];
    for mask in 0..(1usize << n) {
        starts.push(
            (0..n)
                .map(|k| {
                    let corner = if mask & (1 << k) == 0 { lo[k] } else { hi[k] };
                    0.5 * (init[k] + corner)
                })
                .collect(),
        );
    }
    starts
}

/// Minimizes over the box `[lo, hi]` from the fixed multistart schedule.
///
/// Every start runs a bound-clipped Nelder-Mead simplex, restarted around its
/// best vertex until a restart no longer improves. The best restart overall is
/// returned; the result is always feasible and never worse than `init`.
pub fn minimize_box<F: Fn(&[f64]) -> f64>(prob: &BoxProblem<F>) -> Result<Minimum<Vec<f64>>> {
    let n = prob.init.len();
    if n == 0 || prob.lo.len() != n || prob.hi.len() != n {
        return Err(Error::InvalidArgument(format!(
            "dimension mismatch: init {}, lo {}, hi {}",
            n,
            prob.lo.len(),
            prob.hi.len()
        )));
    }
    if n > 16 {
        return Err(Error::InvalidArgument(format!(
            "multistart schedule needs 2^n starts; n = {n} is too large"
        )));
    }
    for k in 0..n {
        let (l, h, x) = (prob.lo[k], prob.hi[k], prob.init[k]);
        if !(l.is_finite() && h.is_finite() && l <= x && x <= h) {
            return Err(Error::InvalidArgument(format!(
                "init[{k}] = {x} outside [{l}, {h}]"
            )));
        }
    }
    if !(prob.tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be > 0, got {}",
            prob.tol
        )));
    }

    let mut evals = 0;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut starts = multistart_points(&prob.lo, &prob.hi, &prob.init);
    starts.extend(grid_starts(prob, &mut evals)?);
    for start in starts {
        let (x, fx) = restarted_simplex(prob, start, &mut evals)?;
        if best.as_ref().map_or(true, |(_, fb)| fx < *fb) {
            best = Some((x, fx));
        }
    }
    let (argmin, value) = best.expect("at least one start");
    Ok(Minimum {
        argmin,
        value,
        evaluations: evals,
    })
}

struct Simplex<'a, F> {
    prob: &'a BoxProblem<F>,
    evals: usize,
}

impl<F: Fn(&[f64]) -> f64> Simplex<'_, F> {
    fn clip(&self, x: &mut [f64]) {
        for (k, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.prob.lo[k], self.prob.hi[k]);
        }
    }

    fn eval(&mut self, x: &[f64]) -> Result<f64> {
        self.evals += 1;
        let v = (self.prob.objective)(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::ObjectiveEvaluation { arg: x.to_vec() })
        }
    }

    /// Axis-aligned initial simplex around `x0`, edges pointing into the box.
    fn initial(&mut self, x0: &[f64], scale: f64) -> Result<Vec<(Vec<f64>, f64)>> {
        let f0 = self.eval(x0)?;
        let mut verts = vec![(x0.to_vec(), f0)];
        for k in 0..x0.len() {
            let width = self.prob.hi[k] - self.prob.lo[k];
            let mut v = x0.to_vec();
            let d = scale * width;
            if d == 0.0 {
                continue;
            }
            v[k] = if x0[k] + d <= self.prob.hi[k] { x0[k] + d } else { x0[k] - d };
            self.clip(&mut v);
            let fv = self.eval(&v)?;
            verts.push((v, fv));
        }
        Ok(verts)
    }

    fn run(&mut self, x0: &[f64], scale: f64, budget: usize) -> Result<(Vec<f64>, f64)> {
        let mut verts = self.initial(x0, scale)?;
        let m = verts.len();
        if m == 1 {
            // degenerate box: a single feasible point
            return Ok(verts.swap_remove(0));
        }
        let dim = x0.len();
        let stop = self.evals + budget;
        loop {
            verts.sort_by(|a, b| a.1.total_cmp(&b.1));
            let diam = verts[1..]
                .iter()
                .map(|(v, _)| {
                    v.iter()
                        .zip(&verts[0].0)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            if diam <= self.prob.tol || self.evals >= stop {
                break;
            }

            let worst = m - 1;
            let mut centroid = vec![0.0; dim];
            for (v, _) in &verts[..worst] {
                for (c, x) in centroid.iter_mut().zip(v) {
                    *c += x / worst as f64;
                }
            }
            let toward = |t: f64, from: &[f64]| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(from)
                    .map(|(c, w)| c + t * (c - w))
                    .collect()
            };

            let mut xr = toward(1.0, &verts[worst].0);
            self.clip(&mut xr);
            let fr = self.eval(&xr)?;
            if fr < verts[0].1 {
                let mut xe = toward(2.0, &verts[worst].0);
                self.clip(&mut xe);
                let fe = self.eval(&xe)?;
                verts[worst] = if fe < fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr < verts[worst - 1].1 {
                verts[worst] = (xr, fr);
                continue;
            }
            let (mut xc, outside) = if fr < verts[worst].1 {
                (toward(0.5, &verts[worst].0), true)
            } else {
                (toward(-0.5, &verts[worst].0), false)
            };
            self.clip(&mut xc);
            let fc = self.eval(&xc)?;
            let accept = if outside { fc <= fr } else { fc < verts[worst].1 };
            if accept {
                verts[worst] = (xc, fc);
                continue;
            }
            // shrink toward the best vertex
            let best = verts[0].0.clone();
            for vert in verts.iter_mut().skip(1) {
                for (x, b) in vert.0.iter_mut().zip(&best) {
                    *x = b + 0.5 * (*x - b);
                }
                vert.1 = self.eval(&vert.0)?;
            }
        }
        verts.sort_by(|a, b| a.1.total_cmp(&b.1));
        Ok(verts.swap_remove(0))
    }
}

/// Best points of a coarse regular grid over the box, best first.
fn grid_starts<F: Fn(&[f64]) -> f64>(prob: &BoxProblem<F>, evals: &mut usize) -> Result<Vec<Vec<f64>>> {
    let m = prob.grid;
    let n = prob.lo.len();
    if m < 2 {
        return Ok(Vec::new());
    }
    let total = m.pow(n as u32);
    let mut scored = Vec::with_capacity(total);
    let mut x = vec![0.0; n];
    for idx in 0..total {
        let mut r = idx;
        for k in 0..n {
            let i = r % m;
            r /= m;
            x[k] = prob.lo[k] + (prob.hi[k] - prob.lo[k]) * i as f64 / (m - 1) as f64;
        }
        *evals += 1;
        let v = (prob.objective)(&x);
        if !v.is_finite() {
            return Err(Error::ObjectiveEvaluation { arg: x });
        }
        scored.push((v, x.clone()));
    }
    // stable sort keeps grid order among ties
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(scored.into_iter().take(GRID_STARTS).map(|(_, x)| x).collect())
}

/// Iteration cap of the quasi-Newton polish.
const QN_ITERS: usize = 100;

/// Presamples per axis in a coordinate sweep.
const SWEEP_SAMPLES: usize = 9;

const RESTART_SCALES: [f64; 3] = [0.1, 0.02, 0.004];

fn restarted_simplex<F: Fn(&[f64]) -> f64>(
    prob: &BoxProblem<F>,
    start: Vec<f64>,
    evals: &mut usize,
) -> Result<(Vec<f64>, f64)> {
    let mut nm = Simplex { prob, evals: 0 };
    let mut x = start;
    nm.clip(&mut x);
    let direct = quasi_newton(prob, &x, &mut nm.evals)?;
    let mut best = nm.run(&x, RESTART_SCALES[0], prob.max_evals)?;
    // a collapsed simplex can stall on a bound face; slide along each axis,
    // then reopen it at shrinking scales until nothing improves
    let mut round = 1;
    while round < 8 && nm.evals < 4 * prob.max_evals {
        let swept = coordinate_sweep(prob, &best, &mut nm.evals)?;
        let scale = RESTART_SCALES[round.min(RESTART_SCALES.len() - 1)];
        let next = nm.run(&swept.0, scale, prob.max_evals)?;
        let next = if swept.1 < next.1 { swept } else { next };
        if next.1 < best.1 {
            best = next;
            round += 1;
        } else {
            break;
        }
    }
    let polished = quasi_newton(prob, &best.0, &mut nm.evals)?;
    for cand in [polished, direct] {
        if cand.1 < best.1 {
            best = cand;
        }
    }
    *evals += nm.evals;
    Ok(best)
}

fn eval_box<F: Fn(&[f64]) -> f64>(prob: &BoxProblem<F>, x: &[f64], evals: &mut usize) -> Result<f64> {
    *evals += 1;
    let v = (prob.objective)(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::ObjectiveEvaluation { arg: x.to_vec() })
    }
}

/// Finite-difference gradient that never leaves the box.
fn box_gradient<F: Fn(&[f64]) -> f64>(
    prob: &BoxProblem<F>,
    x: &[f64],
    fx: f64,
    evals: &mut usize,
) -> Result<Vec<f64>> {
    let mut g = vec![0.0; x.len()];
    let mut y = x.to_vec();
    for k in 0..x.len() {
        let h = 1e-6 * (prob.hi[k] - prob.lo[k]).max(1e-3);
        let up = (x[k] + h).min(prob.hi[k]);
        let dn = (x[k] - h).max(prob.lo[k]);
        y[k] = up;
        let fu = if up > x[k] { eval_box(prob, &y, evals)? } else { fx };
        y[k] = dn;
        let fd = if dn < x[k] { eval_box(prob, &y, evals)? } else { fx };
        y[k] = x[k];
        g[k] = if up > dn { (fu - fd) / (up - dn) } else { 0.0 };
    }
    Ok(g)
}

/// Projected BFGS descent from `x0`, used to finish off the simplex on
/// stiff, nearly quadratic directions.
fn quasi_newton<F: Fn(&[f64]) -> f64>(
    prob: &BoxProblem<F>,
    x0: &[f64],
    evals: &mut usize,
) -> Result<(Vec<f64>, f64)> {
    let n = x0.len();
    let clip = |x: &mut [f64]| {
        for k in 0..n {
            x[k] = x[k].clamp(prob.lo[k], prob.hi[k]);
        }
    };
    let identity = |h: &mut Vec<Vec<f64>>| {
        for (i, row) in h.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = if i == j { 1.0 } else { 0.0 };
            }
        }
    };
    let mut x = x0.to_vec();
    clip(&mut x);
    let mut fx = eval_box(prob, &x, evals)?;
    let mut g = box_gradient(prob, &x, fx, evals)?;
    let mut h = vec![vec![0.0; n]; n];
    identity(&mut h);

    for _ in 0..QN_ITERS {
        // variables held at a bound by the gradient stay put
        let free: Vec<bool> = (0..n)
            .map(|k| !((x[k] <= prob.lo[k] && g[k] > 0.0) || (x[k] >= prob.hi[k] && g[k] < 0.0)))
            .collect();
        let mut d: Vec<f64> = (0..n)
            .map(|i| {
                if !free[i] {
                    return 0.0;
                }
                -(0..n).filter(|&j| free[j]).map(|j| h[i][j] * g[j]).sum::<f64>()
            })
            .collect();
        let slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            identity(&mut h);
            d = (0..n).map(|k| if free[k] { -g[k] } else { 0.0 }).collect();
        }
        if d.iter().all(|v| *v == 0.0) {
            break;
        }

        let mut alpha = 1.0;
        let mut next = None;
        while alpha > 1e-14 {
            let mut y: Vec<f64> = (0..n).map(|k| x[k] + alpha * d[k]).collect();
            clip(&mut y);
            let decrease: f64 = (0..n).map(|k| g[k] * (y[k] - x[k])).sum();
            let fy = eval_box(prob, &y, evals)?;
            if fy <= fx + 1e-4 * decrease && fy < fx {
                next = Some((y, fy));
                break;
            }
            alpha *= 0.5;
        }
        let Some((y, fy)) = next else { break };

        let gy = box_gradient(prob, &y, fy, evals)?;
        let s: Vec<f64> = (0..n).map(|k| y[k] - x[k]).collect();
        let dg: Vec<f64> = (0..n).map(|k| gy[k] - g[k]).collect();
        let sy: f64 = s.iter().zip(&dg).map(|(a, b)| a * b).sum();
        if sy > 1e-16 {
            let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i][j] * dg[j]).sum()).collect();
            let yhy: f64 = dg.iter().zip(&hy).map(|(a, b)| a * b).sum();
            let rho = 1.0 / sy;
            for i in 0..n {
                for j in 0..n {
                    h[i][j] += (1.0 + rho * yhy) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
        }
        let step = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let gain = fx - fy;
        x = y;
        fx = fy;
        g = gy;
        if step < 1e-3 * prob.tol && gain < 1e-15 * (1.0 + fx.abs()) {
            break;
        }
    }
    Ok((x, fx))
}

/// One pass of full-range line searches along each axis.
fn coordinate_sweep<F: Fn(&[f64]) -> f64>(
    prob: &BoxProblem<F>,
    from: &(Vec<f64>, f64),
    evals: &mut usize,
) -> Result<(Vec<f64>, f64)> {
    let (mut x, mut fx) = from.clone();
    for k in 0..x.len() {
        let line = |t: f64| {
            let mut y = x.clone();
            y[k] = t;
            (prob.objective)(&y)
        };
        let m = minimize_scalar(
            &ScalarProblem::new(line, prob.lo[k], prob.hi[k])
                .with_tol(prob.tol)
                .with_presamples(SWEEP_SAMPLES),
        )?;
        *evals += m.evaluations;
        if m.value < fx {
            x[k] = m.argmin;
            fx = m.value;
        }
    }
    Ok((x, fx))
}
