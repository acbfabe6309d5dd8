//! Bound-constrained trust-region reflective minimization over the six
//! extrinsic parameters.
//!
//! The solver works in coordinates normalized by the bound half-widths. Each
//! iteration builds a quadratic model from a finite-difference gradient and a
//! damped BFGS Hessian, applies Coleman-Li affine scaling so that the trust
//! region shrinks along coordinates pushing into a bound, solves the trust
//! region subproblem exactly, and picks the best of the interior step, its
//! reflection off the first bound hit, and a scaled steepest-descent step.

use nalgebra::{Matrix6, SymmetricEigen, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{total_cost_with, CostConfig};
use crate::exec::{map_collect, map_range, ExecMode};
use crate::geometry::{Extrinsics, Point3};
use crate::radar_grid::OccupancyGridIndex;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    /// Symmetric rotation bound in degrees.
    pub bounds_rotation: f64,
    /// Symmetric translation bound in meters.
    pub bounds_translation: f64,
    pub relative_steps: [f64; 6],
    /// Floor on `|x_k|` when sizing the rotation difference steps, degrees.
    pub step_floor_rotation: f64,
    /// Floor on `|x_k|` when sizing the translation difference steps, meters.
    pub step_floor_translation: f64,
    /// Use one-sided differences everywhere instead of central ones.
    pub forward_differences: bool,
    pub termination_tol: f64,
    pub max_iterations: usize,
    pub restarts: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            bounds_rotation: 10.0,
            bounds_translation: 2.0,
            relative_steps: [0.2, 0.2, 0.1, 0.1, 0.1, 0.1],
            step_floor_rotation: 1.0,
            step_floor_translation: 0.05,
            forward_differences: false,
            termination_tol: 1e-3,
            max_iterations: 200,
            restarts: 2,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.bounds_rotation) || !positive(self.bounds_translation) {
            return Err(Error::Invalid("optimizer bounds must be positive".into()));
        }
        if !self.relative_steps.iter().all(|&s| positive(s)) {
            return Err(Error::Invalid("relative_steps must all be positive".into()));
        }
        if !positive(self.step_floor_rotation) || !positive(self.step_floor_translation) {
            return Err(Error::Invalid("finite-difference step floors must be positive".into()));
        }
        if !positive(self.termination_tol) {
            return Err(Error::Invalid("termination_tol must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Invalid("max_iterations must be at least 1".into()));
        }
        Ok(())
    }

    /// Half-widths of the bound box, `[rot; 3]` then `[trans; 3]`.
    pub fn half_widths(&self) -> [f64; 6] {
        let (r, t) = (self.bounds_rotation, self.bounds_translation);
        [r, r, r, t, t, t]
    }

    fn step_floors(&self) -> [f64; 6] {
        let (r, t) = (self.step_floor_rotation, self.step_floor_translation);
        [r, r, r, t, t, t]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub x: [f64; 6],
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub extrinsics: Extrinsics,
    /// Negated objective at the solution, i.e. φ when the objective is −φ.
    pub final_cost: f64,
    pub iterations: usize,
    /// Starting point followed by every accepted iterate.
    pub trace: Vec<TracePoint>,
    pub converged: bool,
    pub attempt_index: usize,
    pub evaluations: usize,
}

type Vec6 = Vector6<f64>;
type Mat6 = Matrix6<f64>;

const LOWER: f64 = -1.0;
const UPPER: f64 = 1.0;
/// Gradient tolerance on the scaled gradient in normalized units.
const GTOL: f64 = 1e-12;
const XTOL: f64 = 1e-10;
/// Rejected trial steps allowed per iteration before giving up.
const MAX_TRIALS: usize = 30;

struct Evaluator<'a, F> {
    objective: &'a F,
    scale: [f64; 6],
    evaluations: usize,
}

impl<'a, F: Fn(&[f64; 6]) -> f64 + Sync> Evaluator<'a, F> {
    fn to_x(&self, u: &Vec6) -> [f64; 6] {
        std::array::from_fn(|k| (u[k] * self.scale[k]).clamp(-self.scale[k], self.scale[k]))
    }

    fn eval(&mut self, u: &Vec6) -> Result<f64> {
        let x = self.to_x(u);
        self.evaluations += 1;
        checked((self.objective)(&x), &x)
    }

    /// Finite-difference gradient with respect to the normalized coordinates.
    fn gradient(&mut self, u: &Vec6, f0: f64, cfg: &OptimizerConfig) -> Result<Vec6> {
        let x = self.to_x(u);
        let floors = cfg.step_floors();
        let bound = self.scale;
        // (k, h) for each perturbation; a central difference uses +h and -h.
        let plans: Vec<(usize, f64, bool)> = (0..6)
            .map(|k| {
                let h = cfg.relative_steps[k] * x[k].abs().max(floors[k]);
                let up = x[k] + h <= bound[k];
                let down = x[k] - h >= -bound[k];
                let central = !cfg.forward_differences && up && down;
                let h = if up { h } else { -h };
                (k, h, central)
            })
            .collect();
        let probes: Vec<(usize, f64)> = plans
            .iter()
            .flat_map(|&(k, h, central)| {
                let mut v = vec![(k, h)];
                if central {
                    v.push((k, -h));
                }
                v
            })
            .collect();
        let objective = self.objective;
        let values = map_range(probes.len(), ExecMode::default(), |i| {
            let (k, h) = probes[i];
            let mut xp = x;
            xp[k] += h;
            (objective(&xp), xp)
        });
        self.evaluations += values.len();
        for (v, xp) in &values {
            checked(*v, xp)?;
        }
        let mut g = Vec6::zeros();
        let mut i = 0;
        for &(k, h, central) in &plans {
            let d = if central {
                let d = (values[i].0 - values[i + 1].0) / (2.0 * h);
                i += 2;
                d
            } else {
                let d = (values[i].0 - f0) / h;
                i += 1;
                d
            };
            g[k] = d * self.scale[k];
        }
        Ok(g)
    }
}

fn checked(v: f64, x: &[f64; 6]) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::OptimizationAborted(format!("objective returned {v} at {x:?}")))
    }
}

/// Coleman-Li scaling vector and its derivative for the box `[-1, 1]^6`.
fn cl_scaling(u: &Vec6, g: &Vec6) -> (Vec6, Vec6) {
    let mut v = Vec6::repeat(1.0);
    let mut dv = Vec6::zeros();
    for k in 0..6 {
        if g[k] < 0.0 {
            v[k] = UPPER - u[k];
            dv[k] = -1.0;
        } else if g[k] > 0.0 {
            v[k] = u[k] - LOWER;
            dv[k] = 1.0;
        }
    }
    (v, dv)
}

fn in_bounds(u: &Vec6) -> bool {
    u.iter().all(|&v| (LOWER..=UPPER).contains(&v))
}

/// Largest `t` with `u + t s` in the box, and which coordinates hit first.
fn step_to_bound(u: &Vec6, s: &Vec6) -> (f64, [bool; 6]) {
    let mut steps = [f64::INFINITY; 6];
    for k in 0..6 {
        if s[k] != 0.0 {
            steps[k] = ((LOWER - u[k]) / s[k]).max((UPPER - u[k]) / s[k]);
        }
    }
    let min = steps.iter().copied().fold(f64::INFINITY, f64::min);
    (min, std::array::from_fn(|k| steps[k] == min))
}

/// Roots of `|x + t s| = delta`.
fn intersect_sphere(x: &Vec6, s: &Vec6, delta: f64) -> (f64, f64) {
    let a = s.dot(s);
    let b = x.dot(s);
    let c = x.dot(x) - delta * delta;
    let d = (b * b - a * c).max(0.0).sqrt();
    let q = -(b + d.copysign(b));
    let (t1, t2) = if q == 0.0 { (0.0, 0.0) } else { (q / a, c / q) };
    (t1.min(t2), t1.max(t2))
}

/// Coefficients of `m(s0 + t s) = a t^2 + b t + c` for the model `g.p + p.B.p / 2`.
fn quad_1d(b_mat: &Mat6, g: &Vec6, s: &Vec6, s0: &Vec6) -> (f64, f64, f64) {
    let bs = b_mat * s;
    let a = 0.5 * s.dot(&bs);
    let b = g.dot(s) + s0.dot(&bs);
    let c = g.dot(s0) + 0.5 * s0.dot(&(b_mat * s0));
    (a, b, c)
}

fn minimize_1d(a: f64, b: f64, c: f64, lo: f64, hi: f64) -> (f64, f64) {
    let mut best = (lo, a * lo * lo + b * lo + c);
    let mut consider = |t: f64| {
        let v = a * t * t + b * t + c;
        if v < best.1 {
            best = (t, v);
        }
    };
    consider(hi);
    if a != 0.0 {
        let t = -b / (2.0 * a);
        if lo < t && t < hi {
            consider(t);
        }
    }
    best
}

fn model(b_mat: &Mat6, g: &Vec6, p: &Vec6) -> f64 {
    g.dot(p) + 0.5 * p.dot(&(b_mat * p))
}

/// Exact minimizer of `g.p + p.B.p / 2` subject to `|p| <= delta`.
fn solve_subproblem(b_mat: &Mat6, g: &Vec6, delta: f64) -> Vec6 {
    let eig = SymmetricEigen::new(*b_mat);
    let q = eig.eigenvectors;
    let lam = eig.eigenvalues;
    let a = q.transpose() * g;
    let norm_at = |shift: f64| -> f64 {
        (0..6)
            .map(|i| {
                let d = lam[i] + shift;
                if d == 0.0 {
                    if a[i] == 0.0 { 0.0 } else { f64::INFINITY }
                } else {
                    (a[i] / d).powi(2)
                }
            })
            .sum::<f64>()
            .sqrt()
    };
    let step_at = |shift: f64| -> Vec6 {
        let mut coeffs = Vec6::zeros();
        for i in 0..6 {
            let d = lam[i] + shift;
            if d != 0.0 {
                coeffs[i] = -a[i] / d;
            }
        }
        q * coeffs
    };
    let lam_min = lam.min();
    if lam_min > 0.0 && norm_at(0.0) <= delta {
        return step_at(0.0);
    }
    let lo = (-lam_min).max(0.0);
    // Hard case: no shift above -lam_min reaches the boundary.
    let eps = 1e-12 * lam.amax().max(1.0);
    if norm_at(lo + eps) < delta {
        let p = step_at(lo + eps);
        let imin = lam.imin();
        let dir = q.column(imin).into_owned();
        let (_, t) = intersect_sphere(&p, &dir, delta);
        return p + dir * t;
    }
    let mut lo = lo + eps;
    let mut hi = lo.max(1.0);
    while norm_at(hi) > delta {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if norm_at(mid) > delta {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    step_at(hi)
}

/// Chooses between the trust-region step, its reflection, and the scaled
/// anti-gradient. Returns the step in both coordinate systems and the
/// predicted reduction.
#[allow(clippy::too_many_arguments)]
fn select_step(
    u: &Vec6,
    b_h: &Mat6,
    g_h: &Vec6,
    mut p_h: Vec6,
    d: &Vec6,
    delta: f64,
    theta: f64,
) -> (Vec6, Vec6, f64) {
    let mut p = d.component_mul(&p_h);
    if in_bounds(&(u + p)) {
        return (p, p_h, -model(b_h, g_h, &p_h));
    }
    let (p_stride, hits) = step_to_bound(u, &p);
    let mut r_h = p_h;
    for k in 0..6 {
        if hits[k] {
            r_h[k] = -r_h[k];
        }
    }
    let r = d.component_mul(&r_h);
    p *= p_stride;
    p_h *= p_stride;
    let on_bound = u + p;
    let (_, to_tr) = intersect_sphere(&p_h, &r_h, delta);
    let (to_bound, _) = step_to_bound(&on_bound, &r);
    let r_stride = to_bound.min(to_tr);
    let (r_lo, r_hi) = if r_stride > 0.0 {
        let hi = if r_stride == to_bound { theta * to_bound } else { to_tr };
        ((1.0 - theta) * p_stride / r_stride, hi)
    } else {
        (0.0, -1.0)
    };
    let (r_step, r_h_out, r_value) = if r_lo <= r_hi {
        let (a, b, c) = quad_1d(b_h, g_h, &r_h, &p_h);
        let (t, value) = minimize_1d(a, b, c, r_lo, r_hi);
        let rh = p_h + r_h * t;
        (d.component_mul(&rh), rh, value)
    } else {
        (Vec6::zeros(), Vec6::zeros(), f64::INFINITY)
    };

    p *= theta;
    p_h *= theta;
    let p_value = model(b_h, g_h, &p_h);

    let ag_h = -g_h;
    let ag = d.component_mul(&ag_h);
    let to_tr = delta / ag_h.norm();
    let (to_bound, _) = step_to_bound(u, &ag);
    let ag_max = if to_bound < to_tr { theta * to_bound } else { to_tr };
    let (a, b, c) = quad_1d(b_h, g_h, &ag_h, &Vec6::zeros());
    let (t, ag_value) = minimize_1d(a, b, c, 0.0, ag_max);

    if p_value < r_value && p_value < ag_value {
        (p, p_h, -p_value)
    } else if r_value < p_value && r_value < ag_value {
        (r_step, r_h_out, -r_value)
    } else {
        (ag * t, ag_h * t, -ag_value)
    }
}

/// Powell-damped BFGS update keeping `b` positive definite.
fn bfgs_update(b: &mut Mat6, s: &Vec6, y: &Vec6) {
    let bs = *b * s;
    let sbs = s.dot(&bs);
    if sbs <= 0.0 || !sbs.is_finite() {
        return;
    }
    let sy = s.dot(y);
    let phi = if sy >= 0.2 * sbs { 1.0 } else { 0.8 * sbs / (sbs - sy) };
    let r = y * phi + bs * (1.0 - phi);
    let sr = s.dot(&r);
    if sr <= 0.0 || !sr.is_finite() {
        return;
    }
    *b += r * r.transpose() / sr - bs * bs.transpose() / sbs;
    *b = (*b + b.transpose()) * 0.5;
}

/// Minimizes `objective` over the configured bound box starting at `x0`.
pub fn minimize<F>(objective: F, x0: [f64; 6], cfg: &OptimizerConfig) -> Result<OptimizationResult>
where
    F: Fn(&[f64; 6]) -> f64 + Sync,
{
    cfg.validate()?;
    let scale = cfg.half_widths();
    for k in 0..6 {
        if !x0[k].is_finite() || x0[k].abs() > scale[k] {
            return Err(Error::Invalid(format!(
                "initial value {} for parameter {k} lies outside [-{}, {}]",
                x0[k], scale[k], scale[k]
            )));
        }
    }
    let mut ev = Evaluator {
        objective: &objective,
        scale,
        evaluations: 0,
    };
    let mut u = Vec6::from_fn(|k, _| x0[k] / scale[k]);
    let mut f = ev.eval(&u)?;
    let mut g = ev.gradient(&u, f, cfg)?;
    let mut trace = vec![TracePoint { x: ev.to_x(&u), cost: -f }];
    let mut b_mat = Mat6::identity() * g.norm().max(1.0);
    let mut delta = {
        let n = u.norm();
        if n > 0.0 { n } else { 1.0 }
    };
    let mut converged = false;
    let mut small_gain = false;
    let mut fresh = true;
    let mut iterations = 0;

    while iterations < cfg.max_iterations {
        iterations += 1;
        let (v, dv) = cl_scaling(&u, &g);
        let g_norm = g.component_mul(&v).amax();
        if g_norm < GTOL {
            converged = true;
            break;
        }
        let d = v.map(f64::sqrt);
        let g_h = d.component_mul(&g);
        let d_mat = Mat6::from_diagonal(&d);
        let b_h = d_mat * b_mat * d_mat + Mat6::from_diagonal(&g.component_mul(&dv));
        let theta = (1.0 - g_norm).max(0.995);

        let mut accepted = None;
        let mut stop = false;
        for trial in 0..MAX_TRIALS {
            let p_h = solve_subproblem(&b_h, &g_h, delta);
            let (step, step_h, predicted) = select_step(&u, &b_h, &g_h, p_h, &d, delta, theta);
            // The last step gained little and the model expects little more.
            if trial == 0 && small_gain && predicted < cfg.termination_tol * f.abs() {
                stop = true;
                break;
            }
            let u_new = (u + step).map(|c| c.clamp(LOWER, UPPER));
            let step = u_new - u;
            let f_new = ev.eval(&u_new)?;
            let actual = f - f_new;
            let step_h_norm = step_h.norm();
            let ratio = if predicted > 0.0 { actual / predicted } else if actual > 0.0 { 1.0 } else { 0.0 };
            if ratio < 0.25 {
                delta = 0.25 * step_h_norm;
            } else if ratio > 0.75 && step_h_norm > 0.95 * delta {
                delta *= 2.0;
            }
            if actual > 0.0 {
                small_gain = actual < cfg.termination_tol * f.abs() && ratio > 0.25;
                stop = step.norm() < XTOL * (XTOL + u.norm());
                accepted = Some((u_new, f_new, step));
                break;
            }
            if step.norm() < XTOL * (XTOL + u.norm()) || delta < 1e-14 {
                stop = true;
                break;
            }
        }
        let Some((u_new, f_new, step)) = accepted else {
            if stop && !fresh {
                // Curvature learned far away can stall progress; retry once with a fresh model.
                b_mat = Mat6::identity() * g.norm().max(1.0);
                delta = 1.0;
                fresh = true;
                small_gain = false;
                continue;
            }
            converged = stop;
            break;
        };
        let g_new = ev.gradient(&u_new, f_new, cfg)?;
        bfgs_update(&mut b_mat, &step, &(g_new - g));
        u = u_new;
        f = f_new;
        g = g_new;
        trace.push(TracePoint { x: ev.to_x(&u), cost: -f });
        fresh = false;
        if stop {
            converged = true;
            break;
        }
    }

    Ok(OptimizationResult {
        extrinsics: Extrinsics::from_array(ev.to_x(&u)),
        final_cost: -f,
        iterations,
        trace,
        converged,
        attempt_index: 0,
        evaluations: ev.evaluations,
    })
}

fn check_frames(clouds: &[Vec<Point3>], grids: &[OccupancyGridIndex], ccfg: &CostConfig) -> Result<()> {
    ccfg.validate()?;
    if clouds.is_empty() || clouds.len() != grids.len() {
        return Err(Error::Invalid(format!(
            "need matching, non-empty sequences of clouds and grids, got {} and {}",
            clouds.len(),
            grids.len()
        )));
    }
    if clouds.iter().any(|c| c.is_empty()) {
        return Err(Error::EmptyCloud);
    }
    Ok(())
}

/// Summed cost over all frame pairs.
pub fn aggregate_cost(clouds: &[Vec<Point3>], grids: &[OccupancyGridIndex], e: &Extrinsics, ccfg: &CostConfig) -> Result<f64> {
    check_frames(clouds, grids, ccfg)?;
    clouds
        .iter()
        .zip(grids)
        .map(|(c, g)| total_cost_with(c, e, g, ccfg, ExecMode::default()).map(|r| r.total))
        .sum()
}

/// Maximizes the summed cost over all frame pairs starting from `x0`.
pub fn calibrate(
    clouds: &[Vec<Point3>],
    grids: &[OccupancyGridIndex],
    x0: &Extrinsics,
    ocfg: &OptimizerConfig,
    ccfg: &CostConfig,
) -> Result<OptimizationResult> {
    check_frames(clouds, grids, ccfg)?;
    let objective = |x: &[f64; 6]| {
        let e = Extrinsics::from_array(*x);
        let total: f64 = clouds
            .iter()
            .zip(grids)
            .map(|(c, g)| total_cost_with(c, &e, g, ccfg, ExecMode::default()).map_or(f64::NAN, |r| r.total))
            .sum();
        -total
    };
    minimize(objective, x0.to_array(), ocfg)
}

/// Starting points for a multi-start run: zero, then `restarts` uniform draws.
pub fn multistart_initial_points(ocfg: &OptimizerConfig, seed: u64) -> Vec<[f64; 6]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = ocfg.half_widths();
    let mut starts = vec![[0.0; 6]];
    for _ in 0..ocfg.restarts {
        starts.push(std::array::from_fn(|k| rng.gen_range(-b[k]..=b[k])));
    }
    starts
}

/// Runs every multi-start attempt and returns them in start order.
pub fn multistart_attempts(
    clouds: &[Vec<Point3>],
    grids: &[OccupancyGridIndex],
    ocfg: &OptimizerConfig,
    ccfg: &CostConfig,
    seed: u64,
) -> Result<Vec<OptimizationResult>> {
    multistart_attempts_from(clouds, grids, &Extrinsics::IDENTITY, ocfg, ccfg, seed)
}

/// Like [`multistart_attempts`], with the first attempt starting at `first`
/// instead of zero.
pub fn multistart_attempts_from(
    clouds: &[Vec<Point3>],
    grids: &[OccupancyGridIndex],
    first: &Extrinsics,
    ocfg: &OptimizerConfig,
    ccfg: &CostConfig,
    seed: u64,
) -> Result<Vec<OptimizationResult>> {
    ocfg.validate()?;
    check_frames(clouds, grids, ccfg)?;
    let mut starts = multistart_initial_points(ocfg, seed);
    starts[0] = first.to_array();
    map_collect(&starts, ExecMode::default(), |x0| {
        calibrate(clouds, grids, &Extrinsics::from_array(*x0), ocfg, ccfg)
    })
    .into_iter()
    .enumerate()
    .map(|(i, r)| {
        r.map(|mut r| {
            r.attempt_index = i;
            r
        })
    })
    .collect()
}

/// Best attempt by final cost; ties go to the earliest attempt.
pub fn best_attempt(attempts: Vec<OptimizationResult>) -> Option<OptimizationResult> {
    attempts
        .into_iter()
        .reduce(|best, r| if r.final_cost > best.final_cost { r } else { best })
}

pub fn calibrate_multistart(
    clouds: &[Vec<Point3>],
    grids: &[OccupancyGridIndex],
    ocfg: &OptimizerConfig,
    ccfg: &CostConfig,
    seed: u64,
) -> Result<OptimizationResult> {
    let attempts = multistart_attempts(clouds, grids, ocfg, ccfg, seed)?;
    Ok(best_attempt(attempts).expect("at least the zero start"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quadratic(c: [f64; 6]) -> impl Fn(&[f64; 6]) -> f64 + Sync {
        move |x| x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum()
    }

    #[test]
    fn quadratic_inside_bounds() {
        let c = [3.0, -4.0, 7.5, 0.5, -1.2, 1.5];
        let r = minimize(quadratic(c), [0.0; 6], &OptimizerConfig::default()).unwrap();
        for k in 0..6 {
            assert!((r.extrinsics.to_array()[k] - c[k]).abs() < 1e-3, "{:?}", r.extrinsics);
        }
        assert!(r.iterations <= 100);
        assert!(r.converged);
    }

    #[test]
    fn quadratic_outside_bounds_lands_on_projection() {
        let c = [15.0, -4.0, -30.0, 0.5, 3.0, -1.0];
        // The constant part of the clamped objective would dominate a relative stop.
        let cfg = OptimizerConfig {
            termination_tol: 1e-12,
            ..OptimizerConfig::default()
        };
        let r = minimize(quadratic(c), [0.0; 6], &cfg).unwrap();
        let want = [10.0, -4.0, -10.0, 0.5, 2.0, -1.0];
        for k in 0..6 {
            assert!((r.extrinsics.to_array()[k] - want[k]).abs() < 1e-3, "{:?}", r.extrinsics);
        }
    }

    #[test]
    fn constant_objective_stops_immediately() {
        let x0 = [1.0, 2.0, -3.0, 0.1, 0.2, -0.3];
        let r = minimize(|_: &[f64; 6]| 5.0, x0, &OptimizerConfig::default()).unwrap();
        assert_eq!(r.iterations, 1);
        assert_eq!(r.extrinsics.to_array(), x0);
        assert!(r.converged);
        assert_eq!(r.final_cost, -5.0);
    }

    #[test]
    fn start_outside_bounds_is_rejected() {
        let err = minimize(|_: &[f64; 6]| 0.0, [11.0, 0.0, 0.0, 0.0, 0.0, 0.0], &OptimizerConfig::default());
        assert!(matches!(err, Err(Error::Invalid(_))));
    }

    #[test]
    fn non_finite_objective_aborts() {
        let f = |x: &[f64; 6]| if x[0] > 0.5 { f64::NAN } else { (x[0] - 5.0).powi(2) };
        let err = minimize(f, [0.0; 6], &OptimizerConfig::default());
        assert!(matches!(err, Err(Error::OptimizationAborted(_))));
    }

    #[test]
    fn trigonometric_objective() {
        // Separable, smooth, with its minimum at (2, -1, 3, 0.2, -0.3, 0.15).
        let c = [2.0, -1.0, 3.0, 0.2, -0.3, 0.15];
        let f = move |x: &[f64; 6]| -> f64 {
            (0..6)
                .map(|k| {
                    let w = if k < 3 { 0.2 } else { 1.0 };
                    -(w * (x[k] - c[k])).cos()
                })
                .sum()
        };
        let cfg = OptimizerConfig {
            termination_tol: 1e-12,
            ..OptimizerConfig::default()
        };
        let r = minimize(f, [0.0; 6], &cfg).unwrap();
        for k in 0..6 {
            assert!((r.extrinsics.to_array()[k] - c[k]).abs() < 1e-3, "{:?}", r.extrinsics);
        }
    }

    #[test]
    fn finite_difference_gradient_matches_analytic() {
        let cfg = OptimizerConfig::default();
        let f = |x: &[f64; 6]| -> f64 { x[0].sin() * x[1] + x[2].powi(2) + (x[3] * x[4]).exp() + x[5].powi(3) };
        let x = [0.7, -1.3, 2.0, 0.4, -0.9, 1.1];
        let mut ev = Evaluator {
            objective: &f,
            scale: cfg.half_widths(),
            evaluations: 0,
        };
        let u = Vec6::from_fn(|k, _| x[k] / cfg.half_widths()[k]);
        let g = ev.gradient(&u, f(&x), &cfg).unwrap();
        let analytic = [
            x[0].cos() * x[1],
            x[0].sin(),
            2.0 * x[2],
            x[4] * (x[3] * x[4]).exp(),
            x[3] * (x[3] * x[4]).exp(),
            3.0 * x[5].powi(2),
        ];
        let floors = cfg.step_floors();
        for k in 0..6 {
            let h = cfg.relative_steps[k] * x[k].abs().max(floors[k]);
            let fd = g[k] / cfg.half_widths()[k];
            // Central differences are second order in h.
            assert!((fd - analytic[k]).abs() < 2.0 * h * h + 1e-9, "k={k}: {fd} vs {}", analytic[k]);
        }
    }

    #[test]
    fn one_sided_difference_at_bound() {
        let cfg = OptimizerConfig::default();
        let f = |x: &[f64; 6]| -> f64 { x.iter().map(|v| v * v).sum() };
        let x = [10.0, 0.0, 0.0, 2.0, 0.0, 0.0];
        let mut ev = Evaluator {
            objective: &f,
            scale: cfg.half_widths(),
            evaluations: 0,
        };
        let u = Vec6::from_fn(|k, _| x[k] / cfg.half_widths()[k]);
        let g = ev.gradient(&u, f(&x), &cfg).unwrap();
        // backward difference of x^2 at 10 with h = 2: (100 - 64) / 2 = 18
        assert!((g[0] / 10.0 - 18.0).abs() < 1e-9);
        // backward difference at 2 with h = 0.2: (4 - 3.24) / 0.2 = 3.8
        assert!((g[3] / 2.0 - 3.8).abs() < 1e-9);
    }

    #[test]
    fn subproblem_respects_radius() {
        let b = Mat6::from_diagonal(&Vec6::new(1.0, 2.0, 3.0, -1.0, 0.5, 4.0));
        let g = Vec6::new(1.0, -1.0, 0.5, 0.0, 2.0, 0.1);
        let p = solve_subproblem(&b, &g, 0.7);
        assert!((p.norm() - 0.7).abs() < 1e-9);
        assert!(model(&b, &g, &p) < 0.0);
        // Interior Newton step when it fits.
        let b = Mat6::identity() * 10.0;
        let p = solve_subproblem(&b, &g, 5.0);
        assert!((p + g / 10.0).norm() < 1e-12);
    }

    /// A narrow shallow well at the origin and a wide deep one elsewhere.
    fn two_basins(x: &[f64; 6]) -> f64 {
        let deep = [6.0, -5.0, 7.0, 1.2, -1.0, 1.4];
        let well = |c: &[f64; 6], s: &[f64; 6], depth: f64| {
            let d2: f64 = (0..6).map(|k| ((x[k] - c[k]) / s[k]).powi(2)).sum();
            -depth * (-d2).exp()
        };
        well(&[0.0; 6], &[2.0, 2.0, 2.0, 0.4, 0.4, 0.4], 1.0) + well(&deep, &[6.0, 6.0, 6.0, 1.2, 1.2, 1.2], 3.0)
    }

    #[test]
    fn multistart_escapes_local_trap() {
        let cfg = OptimizerConfig {
            restarts: 10,
            termination_tol: 1e-9,
            ..OptimizerConfig::default()
        };
        let starts = multistart_initial_points(&cfg, 3);
        let attempts: Vec<_> = starts
            .iter()
            .enumerate()
            .map(|(i, x0)| {
                let mut r = minimize(two_basins, *x0, &cfg).unwrap();
                r.attempt_index = i;
                r
            })
            .collect();
        assert!(attempts[0].final_cost < 1.5, "zero start should stay in the shallow well");
        let best = best_attempt(attempts.clone()).unwrap();
        assert!((best.final_cost - 3.0).abs() < 1e-3, "{}", best.final_cost);
        assert!(attempts.iter().all(|a| a.final_cost <= best.final_cost));
    }

    #[test]
    fn multistart_points_are_seeded_and_in_bounds() {
        let cfg = OptimizerConfig {
            restarts: 50,
            ..OptimizerConfig::default()
        };
        let a = multistart_initial_points(&cfg, 9);
        assert_eq!(a, multistart_initial_points(&cfg, 9));
        assert_ne!(a, multistart_initial_points(&cfg, 10));
        assert_eq!(a.len(), 51);
        assert_eq!(a[0], [0.0; 6]);
        let b = cfg.half_widths();
        assert!(a.iter().all(|x| (0..6).all(|k| x[k].abs() <= b[k])));
    }

    #[test]
    fn best_attempt_prefers_earliest_on_ties() {
        let r = |i: usize, cost: f64| OptimizationResult {
            extrinsics: Extrinsics::IDENTITY,
            final_cost: cost,
            iterations: 1,
            trace: vec![],
            converged: true,
            attempt_index: i,
            evaluations: 1,
        };
        let best = best_attempt(vec![r(0, 1.0), r(1, 2.0), r(2, 2.0)]).unwrap();
        assert_eq!(best.attempt_index, 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn trace_stays_in_bounds_and_improves(
            c in prop::array::uniform6(-3.0f64..3.0),
            x0 in prop::array::uniform6(-1.0f64..1.0),
        ) {
            let cfg = OptimizerConfig::default();
            let b = cfg.half_widths();
            let c: [f64; 6] = std::array::from_fn(|k| c[k] * b[k] / 2.0);
            let x0: [f64; 6] = std::array::from_fn(|k| x0[k] * b[k]);
            // Rosenbrock-like coupling keeps the problem non-separable.
            let f = move |x: &[f64; 6]| -> f64 {
                let q: f64 = (0..6).map(|k| ((x[k] - c[k]) / b[k]).powi(2)).sum();
                q + 0.5 * ((x[0] - c[0]) / b[0] * (x[3] - c[3]) / b[3])
            };
            let r = minimize(f, x0, &cfg).unwrap();
            for t in &r.trace {
                for k in 0..6 {
                    prop_assert!(t.x[k].abs() <= b[k]);
                }
            }
            for w in r.trace.windows(2) {
                prop_assert!(w[1].cost >= w[0].cost);
            }
            prop_assert_eq!(r.final_cost, r.trace.last().unwrap().cost);
        }
    }
}
