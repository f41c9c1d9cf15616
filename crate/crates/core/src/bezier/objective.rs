use super::{bernstein, hodograph, BezierError, BezierTrajectory};
use crate::costmap::ClearanceMap;
use crate::lbm::WindField;
use crate::num::{point_polyline_distance, Real, Vec2};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveWeights<T> {
    pub lambda_p: T,
    pub lambda_s: T,
    pub lambda_t: T,
    pub lambda_w: T,
}

impl<T: Real> ObjectiveWeights<T> {
    pub fn validate(&self) -> Result<(), BezierError> {
        let all = [self.lambda_p, self.lambda_s, self.lambda_t, self.lambda_w];
        if all.iter().any(|w| !(*w >= T::zero()) || !w.is_finite()) || all.iter().all(|w| *w == T::zero()) {
            return Err(BezierError::InvalidWeights);
        }
        Ok(())
    }
}

/// Linear drag `f = K (u_wind − v)` on a point mass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DragModel<T> {
    /// Drag gain K in kg/s.
    pub k: T,
    /// Mass in kg.
    pub mass: T,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize)]
pub struct CostTerms<T> {
    pub path: T,
    pub snap: T,
    pub thrust: T,
    pub wall: T,
}

impl<T: Real> CostTerms<T> {
    pub fn total(&self, w: &ObjectiveWeights<T>) -> T {
        w.lambda_p * self.path + w.lambda_s * self.snap + w.lambda_t * self.thrust + w.lambda_w * self.wall
    }
}

/// Inputs shared by every objective evaluation.
#[derive(Clone, Debug)]
pub struct CostContext<'a, T> {
    /// A* polyline in meters, collinear runs merged.
    pub reference: Vec<Vec2<T>>,
    /// Wind used by the thrust term; `None` is still air.
    pub field: Option<&'a WindField<T>>,
    /// Obstacle clearance used by the wall term.
    pub clearance: &'a ClearanceMap<T>,
    pub drag: DragModel<T>,
    /// Clearance below which the wall term activates, meters.
    pub wall_margin: T,
    /// Softplus sharpness β, 1/m.
    pub wall_sharpness: T,
    /// Weight of the control-polygon clearance penalty inside the wall term.
    pub hull_weight: T,
    /// Quadrature samples m (at least 32).
    pub samples: usize,
}

/// Drop interior points that lie on the segment joining their neighbors.
pub fn merge_collinear<T: Real>(points: &[Vec2<T>]) -> Vec<Vec2<T>> {
    let mut out: Vec<Vec2<T>> = Vec::with_capacity(points.len());
    for &p in points {
        if out.last() == Some(&p) {
            continue;
        }
        while out.len() >= 2 {
            let a = out[out.len() - 2];
            let b = out[out.len() - 1];
            let (ab, bp) = (b - a, p - b);
            let cross = ab.x * bp.y - ab.y * bp.x;
            let scale = ab.norm() * bp.norm();
            if cross.abs() <= T::lit(1e-12) * scale && ab.dot(bp) > T::zero() {
                out.pop();
            } else {
                break;
            }
        }
        out.push(p);
    }
    out
}

/// `ln(1 + e^{βx}) / β`, computed without overflow.
#[inline]
pub(crate) fn softplus<T: Real>(x: T, beta: T) -> T {
    let z = beta * x;
    if z > T::lit(30.0) {
        x
    } else {
        z.exp().ln_1p() / beta
    }
}

/// Midpoint-rule quadrature with precomputed Bernstein matrices for one degree.
#[derive(Clone, Debug)]
pub struct Objective<'a, T> {
    ctx: CostContext<'a, T>,
    weights: ObjectiveWeights<T>,
    degree: usize,
    /// Basis rows for orders 0, 1, 2 and 4; each is `m × (n − order + 1)`.
    basis: [Vec<Vec<T>>; 4],
}

const ORDERS: [usize; 4] = [0, 1, 2, 4];

impl<'a, T: Real> Objective<'a, T> {
    pub fn new(ctx: CostContext<'a, T>, weights: ObjectiveWeights<T>, degree: usize) -> Result<Self, BezierError> {
        weights.validate()?;
        if ctx.samples < 32 {
            return Err(BezierError::Invalid(format!("need at least 32 quadrature samples, got {}", ctx.samples)));
        }
        if ctx.reference.is_empty() {
            return Err(BezierError::Invalid("empty reference path".into()));
        }
        if !(ctx.drag.mass > T::zero()) || !(ctx.drag.k >= T::zero()) {
            return Err(BezierError::Invalid("drag model needs mass > 0 and K >= 0".into()));
        }
        let m = ctx.samples;
        let basis = ORDERS.map(|order| {
            (0..m)
                .map(|k| {
                    let s = (T::from_usize_lossy(k) + T::lit(0.5)) / T::from_usize_lossy(m);
                    if order > degree {
                        Vec::new()
                    } else {
                        let d = degree - order;
                        (0..=d).map(|i| bernstein(i, d, s)).collect()
                    }
                })
                .collect()
        });
        Ok(Self { ctx, weights, degree, basis })
    }

    pub fn weights(&self) -> &ObjectiveWeights<T> {
        &self.weights
    }

    pub fn context(&self) -> &CostContext<'a, T> {
        &self.ctx
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn value(&self, control: &[Vec2<T>], duration: T) -> T {
        self.terms(control, duration).total(&self.weights)
    }

    pub fn terms(&self, control: &[Vec2<T>], duration: T) -> CostTerms<T> {
        debug_assert_eq!(control.len(), self.degree + 1);
        let m = self.ctx.samples;
        let mf = T::from_usize_lossy(m);
        let dt = duration / mf;
        let inv = T::one() / duration;
        let hodos = ORDERS.map(|o| hodograph(control, o));
        let eval = |slot: usize, k: usize| -> Vec2<T> {
            let row = &self.basis[slot][k];
            row.iter().zip(&hodos[slot]).map(|(b, p)| *p * *b).sum()
        };
        let c = &self.ctx;
        let (mut path, mut snap, mut thrust, mut wall) = (T::zero(), T::zero(), T::zero(), T::zero());
        for k in 0..m {
            let r = eval(0, k);
            let v = eval(1, k) * inv;
            let a = eval(2, k) * inv * inv;
            let sn = if self.degree >= 4 { eval(3, k) * inv.powi(4) } else { Vec2::zero() };
            let d = point_polyline_distance(r, &c.reference);
            path += d * d;
            snap += sn.norm_sq() * dt;
            let u = c.field.map_or(Vec2::zero(), |f| f.sample(r));
            let f = a * c.drag.mass - (u - v) * c.drag.k;
            thrust += f.norm_sq() * dt;
            let sp = softplus(c.wall_margin - c.clearance.at(r), c.wall_sharpness);
            wall += sp * sp;
        }
        path = path / mf;
        if c.hull_weight > T::zero() {
            let mut hull = T::zero();
            for w in control.windows(2) {
                for q in 0..4 {
                    let t = (T::from_usize_lossy(q) + T::lit(0.5)) / T::lit(4.0);
                    let sp = softplus(c.wall_margin - c.clearance.at(w[0].lerp(w[1], t)), c.wall_sharpness);
                    hull += sp * sp;
                }
            }
            wall += c.hull_weight * hull;
        }
        CostTerms { path, snap, thrust, wall }
    }
}

/// Evaluate every objective term for a trajectory.
pub fn cost_terms<T: Real>(traj: &BezierTrajectory<T>, ctx: &CostContext<'_, T>) -> Result<CostTerms<T>, BezierError> {
    let unit = ObjectiveWeights { lambda_p: T::one(), lambda_s: T::one(), lambda_t: T::one(), lambda_w: T::one() };
    let obj = Objective::new(ctx.clone(), unit, traj.degree())?;
    Ok(obj.terms(traj.control_points(), traj.duration()))
}
