use super::objective::Objective;
use super::{BezierError, BezierTrajectory, CostTerms};
use crate::num::{polyline_length, Real, Vec2};

/// Axis-aligned box per control point; entries for the fixed endpoints are ignored.
#[derive(Clone, Debug, PartialEq)]
pub struct Bounds<T> {
    pub lo: Vec<Vec2<T>>,
    pub hi: Vec<Vec2<T>>,
}

impl<T: Real> Bounds<T> {
    /// Boxes of half-width `half` centered on each point.
    pub fn around(points: &[Vec2<T>], half: T) -> Self {
        let d = Vec2::new(half, half);
        Self { lo: points.iter().map(|p| *p - d).collect(), hi: points.iter().map(|p| *p + d).collect() }
    }

    /// Unconstrained boxes.
    pub fn free(n: usize) -> Self {
        let inf = T::infinity();
        Self { lo: vec![Vec2::new(-inf, -inf); n], hi: vec![Vec2::new(inf, inf); n] }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct OptimizeOptions<T> {
    pub max_sweeps: usize,
    /// Stop when a sweep improves J by less than this fraction.
    pub sweep_tol: T,
    /// Admissible duration range in seconds.
    pub t_min: T,
    pub t_max: T,
    /// Golden-section stopping width in meters for control points.
    pub coord_tol: T,
}

#[derive(Clone, Debug)]
pub struct OptimizeReport<T> {
    pub trajectory: BezierTrajectory<T>,
    pub initial_terms: CostTerms<T>,
    pub terms: CostTerms<T>,
    /// J before the first sweep followed by J after each sweep.
    pub history: Vec<T>,
    pub converged: bool,
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section minimization of `f` on `[a, b]`; returns the best point seen.
fn golden<T: Real>(mut a: T, mut b: T, tol: T, f: &mut impl FnMut(T) -> T) -> (T, T) {
    let r = T::lit(INV_PHI);
    let mut x1 = b - (b - a) * r;
    let mut x2 = a + (b - a) * r;
    let (mut f1, mut f2) = (f(x1), f(x2));
    let mut best = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - (b - a) * r;
            f1 = f(x1);
            if f1 < best.1 {
                best = (x1, f1);
            }
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + (b - a) * r;
            f2 = f(x2);
            if f2 < best.1 {
                best = (x2, f2);
            }
        }
    }
    best
}

fn finite_or_inf<T: Real>(v: T) -> T {
    if v.is_finite() {
        v
    } else {
        T::infinity()
    }
}

/// Block coordinate descent: golden-section per control-point coordinate inside
/// its box, then over the duration; only strict improvements are accepted, so J
/// never increases between sweeps.
pub fn optimize<T: Real>(
    initial: &BezierTrajectory<T>,
    objective: &Objective<'_, T>,
    bounds: &Bounds<T>,
    options: &OptimizeOptions<T>,
) -> Result<OptimizeReport<T>, BezierError> {
    let n = initial.degree();
    if objective.degree() != n {
        return Err(BezierError::Invalid("objective built for another degree".into()));
    }
    if bounds.lo.len() != n + 1 || bounds.hi.len() != n + 1 {
        return Err(BezierError::BadBounds(format!("need {} boxes", n + 1)));
    }
    if bounds.lo.iter().zip(&bounds.hi).any(|(l, h)| l.x > h.x || l.y > h.y) {
        return Err(BezierError::BadBounds("lower corner above upper corner".into()));
    }
    if !(options.t_min > T::zero()) || options.t_min > options.t_max {
        return Err(BezierError::BadBounds("duration range must satisfy 0 < t_min <= t_max".into()));
    }
    let mut traj = initial.clone();
    let initial_terms = objective.terms(traj.control_points(), traj.duration());
    let mut j = initial_terms.total(objective.weights());
    if !j.is_finite() {
        return Err(BezierError::NonFiniteObjective);
    }
    let mut history = vec![j];
    let mut converged = false;
    let mut ctrl = traj.control_points().to_vec();

    for _ in 0..options.max_sweeps {
        let before = j;
        for k in 1..n {
            for axis in 0..2 {
                let (lo, hi) = if axis == 0 { (bounds.lo[k].x, bounds.hi[k].x) } else { (bounds.lo[k].y, bounds.hi[k].y) };
                let (lo, hi) = clamp_range(lo, hi, ctrl[k], axis);
                let saved = ctrl[k];
                let duration = traj.duration();
                let mut f = |x: T| {
                    let mut p = saved;
                    if axis == 0 {
                        p.x = x;
                    } else {
                        p.y = x;
                    }
                    ctrl[k] = p;
                    finite_or_inf(objective.value(&ctrl, duration))
                };
                let (x, fx) = golden(lo, hi, options.coord_tol, &mut f);
                ctrl[k] = saved;
                if fx < j {
                    if axis == 0 {
                        ctrl[k].x = x;
                    } else {
                        ctrl[k].y = x;
                    }
                    j = fx;
                    traj.set_control(k, ctrl[k]);
                }
            }
        }
        let t_tol = (options.t_max - options.t_min) * T::lit(1e-6);
        let (t, ft) = golden(options.t_min, options.t_max, t_tol, &mut |t| finite_or_inf(objective.value(&ctrl, t)));
        if ft < j {
            j = ft;
            traj.set_duration(t);
        }
        history.push(j);
        let rel = (before - j) / before.abs().max(T::min_positive_value());
        if rel < options.sweep_tol {
            converged = true;
            break;
        }
    }
    let terms = objective.terms(traj.control_points(), traj.duration());
    Ok(OptimizeReport { trajectory: traj, initial_terms, terms, history, converged })
}

/// Infinite boxes are searched within ±1 m of the current value.
fn clamp_range<T: Real>(lo: T, hi: T, p: Vec2<T>, axis: usize) -> (T, T) {
    let c = if axis == 0 { p.x } else { p.y };
    let lo = if lo.is_finite() { lo } else { c - T::one() };
    let hi = if hi.is_finite() { hi } else { c + T::one() };
    (lo, hi)
}

/// Initial control polygon from a planar path: endpoints fixed, interior points at
/// arc-length stations `k/n · L`, boxes of `half_width` around them, and
/// `T = L / cruise_speed`.
pub fn initialize_from_path<T: Real>(
    path: &[Vec2<T>],
    degree: usize,
    cruise_speed: T,
    half_width: T,
) -> Result<(BezierTrajectory<T>, Bounds<T>), BezierError> {
    if degree < 3 {
        return Err(BezierError::Invalid(format!("degree must be at least 3, got {degree}")));
    }
    if path.len() < 2 {
        return Err(BezierError::Invalid("path needs at least two points".into()));
    }
    if !(cruise_speed > T::zero()) {
        return Err(BezierError::Invalid("cruise speed must be positive".into()));
    }
    let total = polyline_length(path);
    if !(total > T::zero()) {
        return Err(BezierError::Invalid("path has zero length".into()));
    }
    let nf = T::from_usize_lossy(degree);
    let mut control = Vec::with_capacity(degree + 1);
    control.push(path[0]);
    let mut seg = 0usize;
    let mut walked = T::zero();
    for k in 1..degree {
        let target = total * T::from_usize_lossy(k) / nf;
        loop {
            let len = path[seg].dist(path[seg + 1]);
            if walked + len >= target || seg + 2 == path.len() {
                let t = if len > T::zero() { ((target - walked) / len).min(T::one()) } else { T::zero() };
                control.push(path[seg].lerp(path[seg + 1], t));
                break;
            }
            walked += len;
            seg += 1;
        }
    }
    control.push(path[path.len() - 1]);
    let bounds = Bounds::around(&control, half_width);
    let traj = BezierTrajectory::new(control, total / cruise_speed)?;
    Ok((traj, bounds))
}

#[cfg(test)]
mod tests {
    use super::super::{CostContext, DragModel, ObjectiveWeights};
    use super::*;
    use crate::costmap::CostMap;

    #[test]
    fn golden_finds_parabola_minimum() {
        let (x, fx) = golden(-1.0_f64, 3.0, 1e-9, &mut |x| (x - 1.3) * (x - 1.3) + 2.0);
        assert!((x - 1.3).abs() < 1e-8 && (fx - 2.0).abs() < 1e-15);
    }

    #[test]
    fn initialization_stations() {
        let path: Vec<Vec2<f64>> = vec![Vec2::new(0.0, 0.0), Vec2::new(3.0, 0.0), Vec2::new(3.0, 3.0)];
        let (traj, bounds) = initialize_from_path(&path, 6, 0.5, 0.06).unwrap();
        let pts = traj.control_points();
        assert_eq!(pts.len(), 7);
        assert_eq!(pts[0], path[0]);
        assert_eq!(pts[6], path[2]);
        assert!((pts[2] - Vec2::new(2.0, 0.0)).norm() < 1e-12);
        assert!((pts[4] - Vec2::new(3.0, 1.0)).norm() < 1e-12);
        assert!((traj.duration() - 12.0).abs() < 1e-12);
        assert!((bounds.hi[3] - bounds.lo[3] - Vec2::new(0.12, 0.12)).norm() < 1e-12);
    }

    #[test]
    fn snap_only_descent_is_monotone_and_fixes_endpoints() {
        let cm = CostMap::from_costs(40, 40, 0.1, vec![0.5; 1600], vec![false; 1600]).unwrap();
        let ctrl: Vec<Vec2<f64>> =
            (0..=7).map(|k| Vec2::new(0.5 + 0.4 * k as f64, 2.0 + if k % 2 == 1 { 0.3 } else { -0.3 } * (k > 0 && k < 7) as i32 as f64)).collect();
        let init = BezierTrajectory::new(ctrl, 4.0).unwrap();
        let ctx = CostContext {
            reference: vec![Vec2::new(0.5, 2.0), Vec2::new(3.3, 2.0)],
            field: None,
            clearance: cm.clearance(),
            drag: DragModel { k: 0.0105, mass: 0.035 },
            wall_margin: 0.05,
            wall_sharpness: 50.0,
            hull_weight: 0.0,
            samples: 64,
        };
        let w = ObjectiveWeights { lambda_p: 0.0, lambda_s: 1.0, lambda_t: 0.0, lambda_w: 0.0 };
        let obj = Objective::new(ctx, w, 7).unwrap();
        let opts = OptimizeOptions { max_sweeps: 20, sweep_tol: 1e-9, t_min: 4.0, t_max: 4.0, coord_tol: 1e-7 };
        let rep = optimize(&init, &obj, &Bounds::free(8), &opts).unwrap();
        assert!(rep.history.windows(2).all(|p| p[1] <= p[0]));
        assert!(rep.terms.snap < 0.1 * rep.initial_terms.snap);
        assert_eq!(rep.trajectory.start(), init.start());
        assert_eq!(rep.trajectory.goal(), init.goal());
    }
}
