//! Point-mass replay of a reference trajectory under linear drag, with a PD
//! tracking law and acceleration saturation.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bezier::BezierTrajectory;
use crate::env::{EnvError, OccupancyGrid};
use crate::lbm::WindField;
use crate::num::{polyline_length, Real, Vec2};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FlightError {
    #[error("drone left the bounding box at t = {t} s")]
    DivergedSimulation { t: f64 },
    #[error("invalid drone model: {0}")]
    InvalidModel(String),
    #[error("invalid reference: {0}")]
    InvalidReference(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DroneModel<T> {
    pub mass: T,
    /// Linear drag gain K, kg/s.
    pub drag_gain: T,
    /// Saturation of the commanded acceleration, m/s².
    pub a_max: T,
    pub dt: T,
}

impl<T: Real> DroneModel<T> {
    pub fn validate(&self) -> Result<(), FlightError> {
        let bad = |m: &str| Err(FlightError::InvalidModel(m.into()));
        if !(self.mass > T::zero()) {
            return bad("mass must be positive");
        }
        if !(self.drag_gain >= T::zero()) {
            return bad("drag gain must be non-negative");
        }
        if !(self.a_max > T::zero()) {
            return bad("a_max must be positive");
        }
        if !(self.dt > T::zero() && self.dt <= T::lit(0.02)) {
            return bad("dt must lie in (0, 0.02]");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gains<T> {
    pub kp: T,
    pub kd: T,
}

/// Something the controller can track: position, velocity and feedforward
/// acceleration at time `t`, holding the goal after `duration`.
pub trait Reference<T: Real> {
    fn duration(&self) -> T;
    fn state(&self, t: T) -> (Vec2<T>, Vec2<T>, Vec2<T>);
}

impl<T: Real> Reference<T> for BezierTrajectory<T> {
    fn duration(&self) -> T {
        BezierTrajectory::duration(self)
    }

    fn state(&self, t: T) -> (Vec2<T>, Vec2<T>, Vec2<T>) {
        let k = self.kinematics(t);
        (k.pos, k.vel, k.acc)
    }
}

/// Piecewise-linear reference traversed at constant speed with no feedforward
/// acceleration; used to replay a raw grid path.
#[derive(Clone, Debug)]
pub struct PolylineReference<T> {
    points: Vec<Vec2<T>>,
    cumulative: Vec<T>,
    duration: T,
}

impl<T: Real> PolylineReference<T> {
    pub fn new(points: Vec<Vec2<T>>, duration: T) -> Result<Self, FlightError> {
        if points.len() < 2 || !(duration > T::zero()) {
            return Err(FlightError::InvalidReference("need two points and a positive duration".into()));
        }
        let mut cumulative = vec![T::zero()];
        for w in points.windows(2) {
            let last = *cumulative.last().expect("nonempty");
            cumulative.push(last + w[0].dist(w[1]));
        }
        if !(*cumulative.last().expect("nonempty") > T::zero()) {
            return Err(FlightError::InvalidReference("zero-length polyline".into()));
        }
        Ok(Self { points, cumulative, duration })
    }

    pub fn length(&self) -> T {
        polyline_length(&self.points)
    }
}

impl<T: Real> Reference<T> for PolylineReference<T> {
    fn duration(&self) -> T {
        self.duration
    }

    fn state(&self, t: T) -> (Vec2<T>, Vec2<T>, Vec2<T>) {
        let total = *self.cumulative.last().expect("nonempty");
        if t >= self.duration {
            return (*self.points.last().expect("nonempty"), Vec2::zero(), Vec2::zero());
        }
        let speed = total / self.duration;
        let s = speed * t.max(T::zero());
        let k = match self.cumulative.iter().position(|c| *c > s) {
            Some(k) => k.max(1) - 1,
            None => self.points.len() - 2,
        };
        let len = self.cumulative[k + 1] - self.cumulative[k];
        if len <= T::zero() {
            return (self.points[k], Vec2::zero(), Vec2::zero());
        }
        let dir = (self.points[k + 1] - self.points[k]) * (T::one() / len);
        let pos = self.points[k] + dir * (s - self.cumulative[k]);
        (pos, dir * speed, Vec2::zero())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlightSample<T> {
    pub t: T,
    pub pos: Vec2<T>,
    pub vel: Vec2<T>,
    pub acc_cmd: Vec2<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlightLog<T> {
    pub dt: T,
    pub samples: Vec<FlightSample<T>>,
    /// Number of samples taken outside the wind field, where the wind is zero.
    pub outside_domain: usize,
    pub scenario: String,
    pub wind_on: bool,
}

impl<T: Real> FlightLog<T> {
    pub fn positions(&self) -> Vec<Vec2<T>> {
        self.samples.iter().map(|s| s.pos).collect()
    }

    pub fn duration(&self) -> T {
        self.samples.last().map_or(T::zero(), |s| s.t)
    }

    /// CSV with a `# dt=… scenario=… wind=on|off` comment line before the header.
    pub fn write_csv(&self, path: &Path) -> Result<(), EnvError> {
        let io = |e: std::io::Error| EnvError::Io { path: path.display().to_string(), source: e };
        let mut out = BufWriter::new(std::fs::File::create(path).map_err(io)?);
        let wind = if self.wind_on { "on" } else { "off" };
        writeln!(out, "# dt={} scenario={} wind={}", self.dt, self.scenario, wind).map_err(io)?;
        writeln!(out, "t,x,y,vx,vy,ax_cmd,ay_cmd").map_err(io)?;
        for s in &self.samples {
            writeln!(out, "{},{},{},{},{},{},{}", s.t, s.pos.x, s.pos.y, s.vel.x, s.vel.y, s.acc_cmd.x, s.acc_cmd.y)
                .map_err(io)?;
        }
        out.flush().map_err(io)
    }

    /// Reads the format written by [`FlightLog::write_csv`]. Without a comment
    /// line, `dt` is taken from the first two samples.
    pub fn read_csv(path: &Path) -> Result<Self, EnvError> {
        let name = path.display().to_string();
        let io = |e: std::io::Error| EnvError::Io { path: name.clone(), source: e };
        let file = std::fs::File::open(path).map_err(io)?;
        let mut dt = None;
        let mut scenario = String::new();
        let mut wind_on = false;
        let mut samples = Vec::new();
        let mut header_seen = false;
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io)?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                for kv in rest.split_whitespace() {
                    match kv.split_once('=') {
                        Some(("dt", v)) => dt = v.parse::<f64>().ok(),
                        Some(("scenario", v)) => scenario = v.to_string(),
                        Some(("wind", v)) => wind_on = v == "on",
                        _ => {}
                    }
                }
                continue;
            }
            if !header_seen {
                header_seen = true;
                if line.starts_with('t') {
                    continue;
                }
            }
            let vals: Result<Vec<f64>, _> = line.split(',').map(|v| v.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|e| EnvError::parse(&name, format!("line {}: {e}", lineno + 1)))?;
            if vals.len() < 3 || vals.len() == 4 || vals.len() == 6 || vals.len() > 7 {
                return Err(EnvError::parse(&name, format!("line {}: expected 3, 5 or 7 columns", lineno + 1)));
            }
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(EnvError::parse(&name, format!("line {}: non-finite value", lineno + 1)));
            }
            let g = |k: usize| T::lit(vals.get(k).copied().unwrap_or(0.0));
            samples.push(FlightSample {
                t: g(0),
                pos: Vec2::new(g(1), g(2)),
                vel: Vec2::new(g(3), g(4)),
                acc_cmd: Vec2::new(g(5), g(6)),
            });
        }
        if samples.is_empty() {
            return Err(EnvError::parse(&name, "no samples"));
        }
        if samples.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(EnvError::parse(&name, "time column must be strictly increasing"));
        }
        let dt = match dt {
            Some(d) => T::lit(d),
            None if samples.len() >= 2 => samples[1].t - samples[0].t,
            None => return Err(EnvError::parse(&name, "cannot infer dt from one sample")),
        };
        Ok(Self { dt, samples, outside_domain: 0, scenario, wind_on })
    }
}

/// Zero-mean velocity perturbation with standard deviation `std · √dt` per step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Noise<T> {
    pub std: T,
    pub seed: u64,
}

/// Replays `reference` from its initial state under `field` (still air if `None`).
/// The wind is sampled bilinearly and is zero outside `domain`, the extent
/// `[0, w] × [0, h]` in meters; leaving the doubled box around it aborts the run.
pub fn simulate_flight<T: Real, R: Reference<T>>(
    reference: &R,
    field: Option<&WindField<T>>,
    domain: Vec2<T>,
    drone: &DroneModel<T>,
    gains: Gains<T>,
    noise: Option<Noise<T>>,
) -> Result<FlightLog<T>, FlightError> {
    drone.validate()?;
    if !(gains.kp >= T::zero() && gains.kd >= T::zero()) {
        return Err(FlightError::InvalidModel("gains must be non-negative".into()));
    }
    let dt = drone.dt;
    let duration = reference.duration();
    let steps = (duration / dt - T::lit(1e-9)).ceil().to_usize().unwrap_or(0);
    let half = domain * T::lit(0.5);
    let (box_lo, box_hi) = (-half, domain + half);
    let k_over_m = drone.drag_gain / drone.mass;
    let mut rng = noise.map(|n| (n.std * dt.sqrt(), ChaCha8Rng::seed_from_u64(n.seed)));

    let (mut x, mut v, _) = reference.state(T::zero());
    let mut samples = Vec::with_capacity(steps + 1);
    let mut outside = 0;
    for k in 0..=steps {
        let t = T::from_usize_lossy(k) * dt;
        if !(x.x >= box_lo.x && x.x <= box_hi.x && x.y >= box_lo.y && x.y <= box_hi.y) || !x.is_finite() {
            return Err(FlightError::DivergedSimulation { t: t.as_f64() });
        }
        let inside = x.x >= T::zero() && x.y >= T::zero() && x.x <= domain.x && x.y <= domain.y;
        if !inside {
            outside += 1;
        }
        let wind = match field {
            Some(f) if inside => f.sample(x),
            _ => Vec2::zero(),
        };
        let (xr, vr, ar) = reference.state(t);
        let a_cmd = (ar + (xr - x) * gains.kp + (vr - v) * gains.kd).clamp_norm(drone.a_max);
        samples.push(FlightSample { t, pos: x, vel: v, acc_cmd: a_cmd });
        let a = a_cmd + (wind - v) * k_over_m;
        v += a * dt;
        if let Some((s, r)) = rng.as_mut() {
            let nx: f64 = StandardNormal.sample(r);
            let ny: f64 = StandardNormal.sample(r);
            v += Vec2::new(T::lit(nx), T::lit(ny)) * *s;
        }
        x += v * dt;
    }
    Ok(FlightLog { dt, samples, outside_domain: outside, scenario: String::new(), wind_on: field.is_some() })
}

/// Index of the first sample inside a solid cell of `grid`, if any.
pub fn detect_collision<T: Real>(log: &FlightLog<T>, grid: &OccupancyGrid<T>) -> Option<usize> {
    log.samples.iter().position(|s| grid.cell_of(s.pos).is_some_and(|(i, j)| grid.is_solid(i, j)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Cell;

    fn drone(k: f64, dt: f64) -> DroneModel<f64> {
        DroneModel { mass: 0.035, drag_gain: k, a_max: 50.0, dt }
    }

    fn curve() -> BezierTrajectory<f64> {
        let pts = vec![
            Vec2::new(0.5, 0.5),
            Vec2::new(1.0, 0.6),
            Vec2::new(1.5, 1.5),
            Vec2::new(2.0, 1.4),
            Vec2::new(2.5, 1.0),
            Vec2::new(3.0, 1.0),
        ];
        BezierTrajectory::new(pts, 6.0).unwrap()
    }

    fn max_error(log: &FlightLog<f64>, r: &BezierTrajectory<f64>) -> f64 {
        log.samples.iter().map(|s| s.pos.dist(r.kinematics(s.t).pos)).fold(0.0, f64::max)
    }

    #[test]
    fn still_air_tracking() {
        let r = curve();
        let log = simulate_flight(&r, None, Vec2::new(4.0, 2.0), &drone(0.0, 0.01), Gains { kp: 25.0, kd: 10.0 }, None)
            .unwrap();
        assert!(max_error(&log, &r) < 1e-3);
        assert_eq!(log.samples.len(), 601);
        assert!((log.duration() - 6.0).abs() < 1e-9);
    }

    #[test]
    fn tracking_error_first_order_in_dt() {
        let r = curve();
        let g = Gains { kp: 4.0, kd: 3.0 };
        let e1 = max_error(&simulate_flight(&r, None, Vec2::new(4.0, 2.0), &drone(0.0, 0.01), g, None).unwrap(), &r);
        let e2 = max_error(&simulate_flight(&r, None, Vec2::new(4.0, 2.0), &drone(0.0, 0.005), g, None).unwrap(), &r);
        assert!(e2 <= 0.5 * e1 * 1.05, "e1 {e1} e2 {e2}");
    }

    #[test]
    fn relaxes_to_wind_velocity() {
        // K/m = 1 s⁻¹, controller off: v(t) = u (1 − e^{−t})
        let model = DroneModel { mass: 1.0, drag_gain: 1.0, a_max: 5.0, dt: 0.001 };
        let hold = BezierTrajectory::new(vec![Vec2::new(10.0, 10.0), Vec2::new(10.0, 10.0)], 5.0).unwrap();
        let field = WindField::uniform(40, 40, 1.0, Vec2::new(0.0, 1.0));
        let log = simulate_flight(&hold, Some(&field), Vec2::new(40.0, 40.0), &model, Gains { kp: 0.0, kd: 0.0 }, None)
            .unwrap();
        let v = log.samples.last().unwrap().vel;
        let expect = 1.0 - (-5.0_f64).exp();
        assert!((v.y - expect).abs() < 0.01 * expect);
        assert!((v.y - 1.0).abs() < 0.01);
    }

    #[test]
    fn deterministic_with_noise() {
        let r = curve();
        let n = Some(Noise { std: 0.05, seed: 7 });
        let run = || simulate_flight(&r, None, Vec2::new(4.0, 2.0), &drone(0.0105, 0.01), Gains { kp: 4.0, kd: 3.0 }, n);
        assert_eq!(run().unwrap(), run().unwrap());
        let other = simulate_flight(
            &r,
            None,
            Vec2::new(4.0, 2.0),
            &drone(0.0105, 0.01),
            Gains { kp: 4.0, kd: 3.0 },
            Some(Noise { std: 0.05, seed: 8 }),
        )
        .unwrap();
        assert_ne!(run().unwrap(), other);
    }

    #[test]
    fn divergence_is_reported() {
        let model = DroneModel { mass: 0.035, drag_gain: 0.0105, a_max: 5.0, dt: 0.01 };
        let hold = BezierTrajectory::new(vec![Vec2::new(1.0, 1.0), Vec2::new(1.0, 1.0)], 60.0).unwrap();
        let field = WindField::uniform(20, 20, 0.1, Vec2::new(5.0, 0.0));
        let err = simulate_flight(&hold, Some(&field), Vec2::new(2.0, 2.0), &model, Gains { kp: 0.0, kd: 0.0 }, None)
            .unwrap_err();
        assert!(matches!(err, FlightError::DivergedSimulation { .. }));
    }

    #[test]
    fn polyline_reference_constant_speed() {
        let r = PolylineReference::new(vec![Vec2::new(0.0, 0.0), Vec2::new(3.0, 0.0), Vec2::new(3.0, 1.0)], 4.0).unwrap();
        let (p, v, a) = r.state(3.5);
        assert!((p - Vec2::new(3.0, 0.5)).norm() < 1e-12);
        assert!((v - Vec2::new(0.0, 1.0)).norm() < 1e-12);
        assert_eq!(a, Vec2::zero());
        assert_eq!(r.state(5.0).0, Vec2::new(3.0, 1.0));
        assert_eq!(r.state(0.0).0, Vec2::new(0.0, 0.0));
    }

    #[test]
    fn collision_detection() {
        let mut grid = OccupancyGrid::new(10, 10, 0.1).unwrap();
        let sample = |x: f64| FlightSample { t: x, pos: Vec2::new(x, 0.55), vel: Vec2::zero(), acc_cmd: Vec2::zero() };
        let log = FlightLog { dt: 0.1, samples: (0..9).map(|k| sample(0.05 + 0.1 * k as f64)).collect(), outside_domain: 0, scenario: String::new(), wind_on: false };
        assert_eq!(detect_collision(&log, &grid), None);
        grid.set(6, 5, Cell::Solid);
        grid.set(7, 5, Cell::Solid);
        assert_eq!(detect_collision(&log, &grid), Some(6));
    }

    #[test]
    fn csv_round_trip() {
        let r = curve();
        let mut log = simulate_flight(&r, None, Vec2::new(4.0, 2.0), &drone(0.0105, 0.01), Gains { kp: 4.0, kd: 3.0 }, None)
            .unwrap();
        log.scenario = "abc123".into();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("log.csv");
        log.write_csv(&p).unwrap();
        let back = FlightLog::<f64>::read_csv(&p).unwrap();
        assert_eq!(back.samples, log.samples);
        assert_eq!(back.dt, 0.01);
        assert_eq!(back.scenario, "abc123");
        assert!(!back.wind_on);
    }
}
