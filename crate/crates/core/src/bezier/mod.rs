//! Single-segment Bézier trajectories: evaluation, hodographs and time scaling,
//! plus the composite objective and its block coordinate descent.

mod objective;
mod optimize;

pub use objective::{cost_terms, merge_collinear, CostContext, CostTerms, DragModel, Objective, ObjectiveWeights};
pub use optimize::{initialize_from_path, optimize, Bounds, OptimizeOptions, OptimizeReport};

use std::path::Path;

use crate::env::EnvError;
use crate::num::{Real, Vec2};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum BezierError {
    #[error("invalid trajectory: {0}")]
    Invalid(String),
    #[error("objective is not finite (bad field samples or zero duration)")]
    NonFiniteObjective,
    #[error("all objective weights are zero or some weight is negative")]
    InvalidWeights,
    #[error("bounds: {0}")]
    BadBounds(String),
}

/// `C(n, i) s^i (1 − s)^(n − i)`.
pub fn bernstein<T: Real>(i: usize, n: usize, s: T) -> T {
    if i > n {
        return T::zero();
    }
    let mut binom = T::one();
    for k in 0..i.min(n - i) {
        binom = binom * T::from_usize_lossy(n - k) / T::from_usize_lossy(k + 1);
    }
    binom * s.powi(i as i32) * (T::one() - s).powi((n - i) as i32)
}

/// Position and time derivatives at one instant.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Kinematics<T> {
    pub pos: Vec2<T>,
    pub vel: Vec2<T>,
    pub acc: Vec2<T>,
    pub jerk: Vec2<T>,
    pub snap: Vec2<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BezierTrajectory<T> {
    control: Vec<Vec2<T>>,
    duration: T,
}

impl<T: Real> BezierTrajectory<T> {
    pub fn new(control: Vec<Vec2<T>>, duration: T) -> Result<Self, BezierError> {
        if control.len() < 2 {
            return Err(BezierError::Invalid("need at least two control points".into()));
        }
        if !(duration > T::zero()) || !duration.is_finite() {
            return Err(BezierError::Invalid(format!("duration must be positive, got {duration}")));
        }
        if control.iter().any(|p| !p.is_finite()) {
            return Err(BezierError::Invalid("non-finite control point".into()));
        }
        Ok(Self { control, duration })
    }

    pub fn degree(&self) -> usize {
        self.control.len() - 1
    }

    pub fn control_points(&self) -> &[Vec2<T>] {
        &self.control
    }

    pub fn duration(&self) -> T {
        self.duration
    }

    pub fn start(&self) -> Vec2<T> {
        self.control[0]
    }

    pub fn goal(&self) -> Vec2<T> {
        self.control[self.degree()]
    }

    pub(crate) fn set_control(&mut self, k: usize, p: Vec2<T>) {
        self.control[k] = p;
    }

    pub(crate) fn set_duration(&mut self, t: T) {
        self.duration = t;
    }

    /// de Casteljau evaluation at `s ∈ [0, 1]` (clamped).
    pub fn evaluate(&self, s: T) -> Vec2<T> {
        de_casteljau(&self.control, s.max(T::zero()).min(T::one()))
    }

    /// Control points of the `order`-th derivative with respect to `s`.
    pub fn hodograph(&self, order: usize) -> Vec<Vec2<T>> {
        hodograph(&self.control, order)
    }

    /// `d^order r / ds^order`; zero when the order exceeds the degree.
    pub fn derivative_s(&self, order: usize, s: T) -> Vec2<T> {
        let h = self.hodograph(order);
        if h.is_empty() {
            Vec2::zero()
        } else {
            de_casteljau(&h, s.max(T::zero()).min(T::one()))
        }
    }

    /// Kinematics at time `t ∈ [0, T]`; derivatives carry the `1/T^k` factors.
    /// Beyond `T` the goal is held at rest.
    pub fn kinematics(&self, t: T) -> Kinematics<T> {
        if t > self.duration {
            return Kinematics { pos: self.goal(), ..Default::default() };
        }
        let s = (t / self.duration).max(T::zero());
        let inv = T::one() / self.duration;
        Kinematics {
            pos: self.evaluate(s),
            vel: self.derivative_s(1, s) * inv,
            acc: self.derivative_s(2, s) * inv.powi(2),
            jerk: self.derivative_s(3, s) * inv.powi(3),
            snap: self.derivative_s(4, s) * inv.powi(4),
        }
    }

    /// Uniform time samples `0, dt, 2dt, …` plus a final sample at `T`.
    pub fn sample_times(&self, dt: T) -> Vec<T> {
        let n = (self.duration / dt).floor().to_usize().unwrap_or(0);
        let mut ts: Vec<T> = (0..=n).map(|k| T::from_usize_lossy(k) * dt).collect();
        if self.duration - *ts.last().expect("nonempty") > dt * T::lit(1e-9) {
            ts.push(self.duration);
        }
        ts
    }

    /// Dense points for polyline comparisons.
    pub fn polyline(&self, dt: T) -> Vec<Vec2<T>> {
        self.sample_times(dt).into_iter().map(|t| self.kinematics(t).pos).collect()
    }

    /// CSV of `t,x,y,vx,vy,ax,ay,jx,jy` at fixed `dt`.
    pub fn write_csv(&self, path: &Path, dt: T) -> Result<(), EnvError> {
        let err = |e: csv::Error| EnvError::Parse { path: path.display().to_string(), msg: e.to_string() };
        let mut wtr = csv::Writer::from_path(path).map_err(err)?;
        wtr.write_record(["t", "x", "y", "vx", "vy", "ax", "ay", "jx", "jy"]).map_err(err)?;
        for t in self.sample_times(dt) {
            let k = self.kinematics(t);
            let row = [t, k.pos.x, k.pos.y, k.vel.x, k.vel.y, k.acc.x, k.acc.y, k.jerk.x, k.jerk.y];
            wtr.write_record(row.iter().map(|v| v.to_string())).map_err(err)?;
        }
        wtr.flush().map_err(|e| EnvError::Io { path: path.display().to_string(), source: e })
    }

    /// CSV of the control polygon `k,x,y` followed by the duration as a `T` row.
    pub fn write_control_csv(&self, path: &Path) -> Result<(), EnvError> {
        let err = |e: csv::Error| EnvError::Parse { path: path.display().to_string(), msg: e.to_string() };
        let mut wtr = csv::Writer::from_path(path).map_err(err)?;
        wtr.write_record(["k", "x", "y"]).map_err(err)?;
        for (k, p) in self.control.iter().enumerate() {
            wtr.write_record([k.to_string(), p.x.to_string(), p.y.to_string()]).map_err(err)?;
        }
        wtr.write_record(["T".to_string(), self.duration.to_string(), String::new()]).map_err(err)?;
        wtr.flush().map_err(|e| EnvError::Io { path: path.display().to_string(), source: e })
    }

    /// Reads the format written by [`BezierTrajectory::write_control_csv`].
    pub fn read_control_csv(path: &Path) -> Result<Self, EnvError> {
        let name = path.display().to_string();
        let err = |msg: String| EnvError::Parse { path: name.clone(), msg };
        let mut rdr = csv::ReaderBuilder::new().flexible(true).from_path(path).map_err(|e| err(e.to_string()))?;
        let mut control = Vec::new();
        let mut duration = None;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| err(e.to_string()))?;
            let num = |k: usize| -> Result<T, EnvError> {
                let s = rec.get(k).ok_or_else(|| err(format!("missing column {k}")))?;
                s.trim().parse::<f64>().map(T::lit).map_err(|e| err(format!("{s:?}: {e}")))
            };
            if rec.get(0) == Some("T") {
                duration = Some(num(1)?);
            } else {
                control.push(Vec2::new(num(1)?, num(2)?));
            }
        }
        let duration = duration.ok_or_else(|| err("missing duration row".into()))?;
        Self::new(control, duration).map_err(|e| err(e.to_string()))
    }
}

pub(crate) fn de_casteljau<T: Real>(pts: &[Vec2<T>], s: T) -> Vec2<T> {
    let mut work = pts.to_vec();
    let n = work.len();
    let u = T::one() - s;
    for r in 1..n {
        for k in 0..n - r {
            // Convex form so s = 0 and s = 1 return the end points bit-exactly.
            work[k] = work[k] * u + work[k + 1] * s;
        }
    }
    work[0]
}

pub(crate) fn hodograph<T: Real>(pts: &[Vec2<T>], order: usize) -> Vec<Vec2<T>> {
    let mut h = pts.to_vec();
    for _ in 0..order {
        if h.len() <= 1 {
            return Vec::new();
        }
        let deg = T::from_usize_lossy(h.len() - 1);
        h = h.windows(2).map(|w| (w[1] - w[0]) * deg).collect();
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64, y: f64) -> Vec2<f64> {
        Vec2::new(x, y)
    }

    #[test]
    fn bernstein_values() {
        assert_eq!(bernstein(0, 3, 0.0_f64), 1.0);
        assert_eq!(bernstein(3, 3, 1.0_f64), 1.0);
        assert_eq!(bernstein(1, 2, 0.5_f64), 0.5);
        let sum: f64 = (0..=5).map(|i| bernstein(i, 5, 0.37)).sum();
        assert!((sum - 1.0).abs() < 1e-15);
    }

    #[test]
    fn evaluation_cases() {
        let line = BezierTrajectory::new(vec![v(0.0, 0.0), v(2.0, 0.0)], 1.0).unwrap();
        assert_eq!(line.evaluate(0.5), v(1.0, 0.0));
        let sym = BezierTrajectory::new(vec![v(0.0, 0.0), v(1.0, 2.0), v(3.0, 2.0), v(4.0, 0.0)], 1.0).unwrap();
        assert_eq!(sym.evaluate(0.5), v(2.0, 1.5));
        assert_eq!(sym.evaluate(0.0), v(0.0, 0.0));
        assert_eq!(sym.evaluate(1.0), v(4.0, 0.0));
    }

    #[test]
    fn de_casteljau_matches_bernstein_sum() {
        let pts = vec![v(0.0, 1.0), v(0.3, -2.0), v(1.7, 0.4), v(2.0, 2.5), v(3.1, -0.2)];
        let c = BezierTrajectory::new(pts.clone(), 1.0).unwrap();
        for k in 0..=10 {
            let s = k as f64 / 10.0;
            let direct: Vec2<f64> = pts.iter().enumerate().map(|(i, p)| *p * bernstein(i, 4, s)).sum();
            assert!(c.evaluate(s).dist(direct) < 1e-14);
        }
    }

    #[test]
    fn straight_line_has_no_acceleration() {
        let pts: Vec<_> = (0..=4).map(|k| v(k as f64 * 0.5, k as f64 * 0.25)).collect();
        let c = BezierTrajectory::new(pts, 3.0).unwrap();
        for k in 0..=20 {
            let kin = c.kinematics(3.0 * k as f64 / 20.0);
            assert!(kin.acc.norm() < 1e-12 && kin.snap.norm() < 1e-12);
        }
    }

    #[test]
    fn time_scaling_powers() {
        let pts = vec![v(0.0, 0.0), v(0.2, 0.9), v(1.1, 1.3), v(1.9, -0.4), v(2.4, 0.3), v(3.0, 1.0)];
        let a = BezierTrajectory::new(pts.clone(), 2.0).unwrap();
        let b = BezierTrajectory::new(pts, 4.0).unwrap();
        let (ka, kb) = (a.kinematics(0.6), b.kinematics(1.2));
        assert!((ka.vel * 0.5 - kb.vel).norm() < 1e-12);
        assert!((ka.acc * 0.25 - kb.acc).norm() < 1e-12);
        assert!((ka.snap * 0.0625 - kb.snap).norm() < 1e-12);
    }

    #[test]
    fn snap_of_cubic_is_zero() {
        let c = BezierTrajectory::new(vec![v(0.0, 0.0), v(1.0, 3.0), v(2.0, -1.0), v(3.0, 0.0)], 1.0).unwrap();
        assert_eq!(c.kinematics(0.3).snap, Vec2::zero());
        assert!(c.kinematics(0.3).jerk.norm() > 0.0);
    }

    #[test]
    fn control_csv_round_trip() {
        let c = BezierTrajectory::new(vec![v(0.1, 0.2), v(1.0 / 3.0, 0.7), v(2.0, -0.25)], 7.125).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ctrl.csv");
        c.write_control_csv(&p).unwrap();
        assert_eq!(BezierTrajectory::<f64>::read_control_csv(&p).unwrap(), c);
    }

    #[test]
    fn sample_times_end_at_duration() {
        let c = BezierTrajectory::new(vec![v(0.0, 0.0), v(1.0, 0.0)], 0.105).unwrap();
        let ts = c.sample_times(0.01);
        assert_eq!(ts.len(), 12);
        assert_eq!(*ts.last().unwrap(), 0.105);
        assert_eq!(c.kinematics(0.2).pos, v(1.0, 0.0));
    }
}
