//! Tracking deviation, Fréchet distance, jerk, displacement and the relative
//! reduction / wind penalty percentages.

use std::path::Path;

use serde::Serialize;

use crate::env::{EnvError, OccupancyGrid};
use crate::flightsim::{detect_collision, FlightLog, Reference};
use crate::num::{point_polyline_distance, polyline_length, Real, Vec2};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("log or series is empty")]
    EmptyLog,
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("logs do not overlap in time")]
    NoOverlap,
    #[error("baseline value is zero")]
    ZeroBaseline,
}

/// Distance from each logged position to the reference at the same time.
pub fn deviation_series<T: Real, R: Reference<T>>(log: &FlightLog<T>, reference: &R) -> Result<Vec<T>, MetricsError> {
    if log.samples.is_empty() {
        return Err(MetricsError::EmptyLog);
    }
    Ok(log.samples.iter().map(|s| s.pos.dist(reference.state(s.t).0)).collect())
}

/// Distance from each logged position to the nearest point of `path`.
pub fn closest_point_deviation<T: Real>(log: &FlightLog<T>, path: &[Vec2<T>]) -> Result<Vec<T>, MetricsError> {
    if log.samples.is_empty() || path.is_empty() {
        return Err(MetricsError::EmptyLog);
    }
    Ok(log.samples.iter().map(|s| point_polyline_distance(s.pos, path)).collect())
}

/// Percentile `p ∈ [0, 100]` with linear interpolation at rank `p/100 · (n − 1)`.
pub fn percentile<T: Real>(series: &[T], p: T) -> Result<T, MetricsError> {
    if series.is_empty() {
        return Err(MetricsError::EmptyLog);
    }
    let mut v = series.to_vec();
    v.sort_by(|a, b| a.cmp_total(b));
    let rank = p.max(T::zero()).min(T::lit(100.0)) / T::lit(100.0) * T::from_usize_lossy(v.len() - 1);
    let lo = rank.floor().to_usize().unwrap_or(0).min(v.len() - 1);
    let hi = (lo + 1).min(v.len() - 1);
    let frac = rank - T::from_usize_lossy(lo);
    Ok(v[lo] + (v[hi] - v[lo]) * frac)
}

pub fn p95<T: Real>(series: &[T]) -> Result<T, MetricsError> {
    percentile(series, T::lit(95.0))
}

/// Discrete Fréchet distance by dynamic programming over two rows.
pub fn discrete_frechet<T: Real>(a: &[Vec2<T>], b: &[Vec2<T>]) -> Result<T, MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::EmptyLog);
    }
    let mut prev = vec![T::zero(); b.len()];
    let mut cur = vec![T::zero(); b.len()];
    for (i, pa) in a.iter().enumerate() {
        for (j, pb) in b.iter().enumerate() {
            let d = pa.dist(*pb);
            cur[j] = match (i, j) {
                (0, 0) => d,
                (0, _) => d.max(cur[j - 1]),
                (_, 0) => d.max(prev[0]),
                _ => d.max(prev[j].min(cur[j - 1]).min(prev[j - 1])),
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[b.len() - 1])
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JerkStats<T> {
    pub mean: T,
    pub max: T,
    pub series: Vec<T>,
}

/// Centered moving average over `window` samples, valid region only.
pub fn moving_average<T: Real>(x: &[Vec2<T>], window: usize) -> Vec<Vec2<T>> {
    let w = window.max(1);
    if x.len() < w {
        return Vec::new();
    }
    let inv = T::one() / T::from_usize_lossy(w);
    x.windows(w).map(|win| win.iter().copied().sum::<Vec2<T>>() * inv).collect()
}

/// Jerk magnitude from positions at spacing `dt`: moving-average prefilter
/// (`window` ≤ 1 disables it), then `(x₃ − 3x₂ + 3x₁ − x₀)/dt³`, which is centered
/// between the middle two samples.
pub fn jerk_series<T: Real>(positions: &[Vec2<T>], dt: T, window: usize) -> Result<Vec<T>, MetricsError> {
    let need = 3 + window.max(1);
    if positions.len() < need {
        return Err(MetricsError::TooFewSamples { need, got: positions.len() });
    }
    let x = if window > 1 { moving_average(positions, window) } else { positions.to_vec() };
    let inv = T::one() / (dt * dt * dt);
    let three = T::lit(3.0);
    Ok(x.windows(4).map(|w| ((w[3] - w[0]) + (w[1] - w[2]) * three).norm() * inv).collect())
}

pub fn jerk_stats<T: Real>(log: &FlightLog<T>, window: usize) -> Result<JerkStats<T>, MetricsError> {
    let series = jerk_series(&log.positions(), log.dt, window)?;
    let n = T::from_usize_lossy(series.len());
    let mean = series.iter().copied().fold(T::zero(), |a, b| a + b) / n;
    let max = series.iter().copied().fold(T::zero(), T::max);
    Ok(JerkStats { mean, max, series })
}

fn interpolate<T: Real>(log: &FlightLog<T>, t: T) -> Vec2<T> {
    let s = &log.samples;
    let k = s.partition_point(|x| x.t <= t);
    if k == 0 {
        return s[0].pos;
    }
    if k == s.len() {
        return s[k - 1].pos;
    }
    let (a, b) = (&s[k - 1], &s[k]);
    a.pos.lerp(b.pos, (t - a.t) / (b.t - a.t))
}

/// Largest pointwise distance between two logs over their common time interval;
/// each log's samples are compared with the other log interpolated linearly.
pub fn displacement<T: Real>(wind: &FlightLog<T>, no_wind: &FlightLog<T>) -> Result<T, MetricsError> {
    if wind.samples.is_empty() || no_wind.samples.is_empty() {
        return Err(MetricsError::EmptyLog);
    }
    let t0 = wind.samples[0].t.max(no_wind.samples[0].t);
    let t1 = wind.duration().min(no_wind.duration());
    if t1 < t0 {
        return Err(MetricsError::NoOverlap);
    }
    let mut best = T::zero();
    for (a, b) in [(wind, no_wind), (no_wind, wind)] {
        for s in a.samples.iter().filter(|s| s.t >= t0 && s.t <= t1) {
            best = best.max(s.pos.dist(interpolate(b, s.t)));
        }
    }
    Ok(best)
}

/// `(Δ_base − Δ_wespr)/Δ_base × 100`.
pub fn relative_reduction<T: Real>(delta_base: T, delta_wespr: T) -> Result<T, MetricsError> {
    if delta_base == T::zero() {
        return Err(MetricsError::ZeroBaseline);
    }
    Ok((delta_base - delta_wespr) / delta_base * T::lit(100.0))
}

/// `(M_wind − M_no_wind)/M_no_wind × 100`.
pub fn wind_penalty<T: Real>(m_wind: T, m_no_wind: T) -> Result<T, MetricsError> {
    if m_no_wind == T::zero() {
        return Err(MetricsError::ZeroBaseline);
    }
    Ok((m_wind - m_no_wind) / m_no_wind * T::lit(100.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MetricsReport<T> {
    pub max_dev: T,
    pub p95_dev: T,
    pub frechet: T,
    pub mean_jerk: T,
    pub max_jerk: T,
    pub path_length: T,
    pub collided: bool,
    /// First colliding sample, if any.
    pub collision_index: Option<usize>,
}

pub const METRIC_NAMES: [&str; 6] = ["max_dev", "p95_dev", "frechet", "mean_jerk", "max_jerk", "path_length"];

impl<T: Real> MetricsReport<T> {
    /// Scores one flight against its reference. Fréchet compares the flown
    /// positions with the reference sampled at the log times.
    pub fn compute<R: Reference<T>>(
        log: &FlightLog<T>,
        reference: &R,
        grid: &OccupancyGrid<T>,
        jerk_window: usize,
    ) -> Result<Self, MetricsError> {
        let dev = deviation_series(log, reference)?;
        let max_dev = dev.iter().copied().fold(T::zero(), T::max);
        let flown = log.positions();
        let planned: Vec<Vec2<T>> = log.samples.iter().map(|s| reference.state(s.t).0).collect();
        let jerk = jerk_stats(log, jerk_window)?;
        let collision_index = detect_collision(log, grid);
        Ok(Self {
            max_dev,
            p95_dev: p95(&dev)?,
            frechet: discrete_frechet(&flown, &planned)?,
            mean_jerk: jerk.mean,
            max_jerk: jerk.max,
            path_length: polyline_length(&flown),
            collided: collision_index.is_some(),
            collision_index,
        })
    }

    pub fn values(&self) -> [T; 6] {
        [self.max_dev, self.p95_dev, self.frechet, self.mean_jerk, self.max_jerk, self.path_length]
    }

    /// Per-metric mean over trials; collided if any trial collided.
    pub fn mean(reports: &[Self]) -> Option<Self> {
        let first = reports.first()?;
        let n = T::from_usize_lossy(reports.len());
        let avg = |f: fn(&Self) -> T| reports.iter().map(f).fold(T::zero(), |a, b| a + b) / n;
        Some(Self {
            max_dev: avg(|r| r.max_dev),
            p95_dev: avg(|r| r.p95_dev),
            frechet: avg(|r| r.frechet),
            mean_jerk: avg(|r| r.mean_jerk),
            max_jerk: avg(|r| r.max_jerk),
            path_length: avg(|r| r.path_length),
            collided: reports.iter().any(|r| r.collided),
            collision_index: reports.iter().find_map(|r| r.collision_index).or(first.collision_index),
        })
    }
}

/// One metric under both wind conditions and the resulting penalty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PenaltyEntry<T> {
    pub no_wind: T,
    pub wind: T,
    /// `None` when the wind-off value is zero.
    pub penalty_pct: Option<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlannerComparison<T> {
    pub no_wind: MetricsReport<T>,
    pub wind: MetricsReport<T>,
    pub max_dev: PenaltyEntry<T>,
    pub p95_dev: PenaltyEntry<T>,
    pub frechet: PenaltyEntry<T>,
    pub mean_jerk: PenaltyEntry<T>,
    pub max_jerk: PenaltyEntry<T>,
    pub path_length: PenaltyEntry<T>,
    /// Δ: largest wind-on versus wind-off shift.
    pub displacement: T,
}

impl<T: Real> PlannerComparison<T> {
    pub fn new(no_wind: MetricsReport<T>, wind: MetricsReport<T>, displacement: T) -> Self {
        let entry = |a: T, b: T| PenaltyEntry { no_wind: a, wind: b, penalty_pct: wind_penalty(b, a).ok() };
        Self {
            max_dev: entry(no_wind.max_dev, wind.max_dev),
            p95_dev: entry(no_wind.p95_dev, wind.p95_dev),
            frechet: entry(no_wind.frechet, wind.frechet),
            mean_jerk: entry(no_wind.mean_jerk, wind.mean_jerk),
            max_jerk: entry(no_wind.max_jerk, wind.max_jerk),
            path_length: entry(no_wind.path_length, wind.path_length),
            no_wind,
            wind,
            displacement,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonReport<T> {
    pub scenario: String,
    pub trials: usize,
    pub base: PlannerComparison<T>,
    pub wespr: PlannerComparison<T>,
    /// η_r on displacement; `None` when Δ_base is zero.
    pub relative_reduction_pct: Option<T>,
}

impl<T: Real + Serialize> ComparisonReport<T> {
    pub fn new(scenario: String, trials: usize, base: PlannerComparison<T>, wespr: PlannerComparison<T>) -> Self {
        let relative_reduction_pct = relative_reduction(base.displacement, wespr.displacement).ok();
        Self { scenario, trials, base, wespr, relative_reduction_pct }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// One row of the flat per-trial table.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow<T> {
    pub env: String,
    pub planner: String,
    pub wind: bool,
    pub trial: usize,
    pub report: MetricsReport<T>,
}

pub fn write_metrics_csv<T: Real>(path: &Path, rows: &[MetricsRow<T>]) -> Result<(), EnvError> {
    let err = |e: csv::Error| EnvError::parse(path.display().to_string(), e.to_string());
    let mut wtr = csv::Writer::from_path(path).map_err(err)?;
    let mut header = vec!["env", "planner", "wind_mode", "trial"];
    header.extend(METRIC_NAMES);
    header.push("collided");
    wtr.write_record(&header).map_err(err)?;
    for r in rows {
        let mut rec = vec![r.env.clone(), r.planner.clone(), if r.wind { "wind" } else { "no_wind" }.into(), r.trial.to_string()];
        rec.extend(r.report.values().iter().map(|v| v.to_string()));
        rec.push(r.report.collided.to_string());
        wtr.write_record(&rec).map_err(err)?;
    }
    wtr.flush().map_err(|e| EnvError::Io { path: path.display().to_string(), source: e })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bezier::BezierTrajectory;
    use crate::flightsim::FlightSample;

    fn log_from(points: &[Vec2<f64>], dt: f64) -> FlightLog<f64> {
        let samples = points
            .iter()
            .enumerate()
            .map(|(k, p)| FlightSample { t: k as f64 * dt, pos: *p, vel: Vec2::zero(), acc_cmd: Vec2::zero() })
            .collect();
        FlightLog { dt, samples, outside_domain: 0, scenario: String::new(), wind_on: false }
    }

    fn reference() -> BezierTrajectory<f64> {
        BezierTrajectory::new(vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0), Vec2::new(2.0, 0.0)], 2.0).unwrap()
    }

    #[test]
    fn deviation_cases() {
        let r = reference();
        let exact: Vec<_> = (0..=200).map(|k| r.kinematics(k as f64 * 0.01).pos).collect();
        let log = log_from(&exact, 0.01);
        assert!(deviation_series(&log, &r).unwrap().iter().all(|d| *d == 0.0));
        let shifted: Vec<_> = exact.iter().map(|p| *p + Vec2::new(0.1, 0.0)).collect();
        let dev = deviation_series(&log_from(&shifted, 0.01), &r).unwrap();
        assert!(dev.iter().all(|d| (d - 0.1).abs() < 1e-12));
        // gust pulse: offset 0.03 sin²(πt/0.5) for t in [0.5, 1.0]
        let pulse: Vec<_> = exact
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let t = k as f64 * 0.01;
                let off = if (0.5..=1.0).contains(&t) { 0.03 * (std::f64::consts::PI * (t - 0.5) / 0.5).sin().powi(2) } else { 0.0 };
                *p + Vec2::new(0.0, off)
            })
            .collect();
        let dev = deviation_series(&log_from(&pulse, 0.01), &r).unwrap();
        assert!((dev.iter().copied().fold(0.0, f64::max) - 0.03).abs() < 1e-12);
        let empty = log_from(&[], 0.01);
        assert_eq!(deviation_series(&empty, &r).unwrap_err(), MetricsError::EmptyLog);
    }

    #[test]
    fn p95_cases() {
        assert_eq!(p95(&[0.25; 17]).unwrap(), 0.25);
        let s: Vec<f64> = (1..=100).map(|k| k as f64).collect();
        assert!((p95(&s).unwrap() - 95.05).abs() < 1e-12);
        assert_eq!(p95(&[3.5]).unwrap(), 3.5);
        assert!(p95::<f64>(&[]).is_err());
    }

    #[test]
    fn frechet_cases() {
        let a: Vec<_> = (0..6).map(|k| Vec2::new(k as f64, 0.0)).collect();
        assert_eq!(discrete_frechet(&a, &a).unwrap(), 0.0);
        let b: Vec<_> = a.iter().map(|p| *p + Vec2::new(0.0, 0.4)).collect();
        assert!((discrete_frechet(&a, &b).unwrap() - 0.4).abs() < 1e-15);
        // different sampling densities along the same line
        let c: Vec<_> = (0..11).map(|k| Vec2::new(k as f64 * 0.5, 0.0)).collect();
        assert!((discrete_frechet(&a, &c).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn jerk_of_polynomials() {
        let dt = 0.01;
        let lin: Vec<_> = (0..100).map(|k| Vec2::new(0.3 * k as f64 * dt, -0.2 * k as f64 * dt)).collect();
        let st = jerk_stats(&log_from(&lin, dt), 5).unwrap();
        assert!(st.max < 1e-9);
        let cubic: Vec<_> = (0..100).map(|k| Vec2::new((k as f64 * dt).powi(3), 0.0)).collect();
        let s = jerk_series(&cubic, dt, 1).unwrap();
        assert!(s.iter().all(|j| (j - 6.0).abs() < 6e-6));
        assert_eq!(jerk_series(&cubic[..3], dt, 1).unwrap_err(), MetricsError::TooFewSamples { need: 4, got: 3 });
    }

    #[test]
    fn jerk_of_sinusoid() {
        let (w, dt) = (5.0, 0.01);
        let pts: Vec<_> = (0..400).map(|k| Vec2::new((w * k as f64 * dt).sin(), 0.0)).collect();
        let st = jerk_stats(&log_from(&pts, dt), 5).unwrap();
        assert!((st.max - w.powi(3)).abs() < 0.01 * w.powi(3), "{}", st.max);
    }

    #[test]
    fn displacement_cases() {
        let a: Vec<_> = (0..50).map(|k| Vec2::new(k as f64 * 0.02, 0.1)).collect();
        let la = log_from(&a, 0.01);
        assert_eq!(displacement(&la, &la).unwrap(), 0.0);
        let b: Vec<_> = a.iter().map(|p| *p + Vec2::new(0.03, 0.04)).collect();
        assert!((displacement(&la, &log_from(&b, 0.01)).unwrap() - 0.05).abs() < 1e-12);
        let mut late = log_from(&b, 0.01);
        late.samples.iter_mut().for_each(|s| s.t += 10.0);
        assert_eq!(displacement(&la, &late).unwrap_err(), MetricsError::NoOverlap);
    }

    #[test]
    fn percentages() {
        assert!((relative_reduction(0.199_f64, 0.082).unwrap() - 58.79396984924623).abs() < 1e-9);
        assert!((relative_reduction(0.260_f64, 0.228).unwrap() - 12.307692307692307).abs() < 1e-9);
        assert_eq!(relative_reduction(0.3, 0.3).unwrap(), 0.0);
        assert_eq!(relative_reduction(0.0, 0.1).unwrap_err(), MetricsError::ZeroBaseline);
        assert!((wind_penalty(0.6_f64, 0.4).unwrap() - 50.0).abs() < 1e-12);
        assert_eq!(wind_penalty(0.4, 0.4).unwrap(), 0.0);
        assert!((wind_penalty(0.3_f64, 0.4).unwrap() + 25.0).abs() < 1e-12);
        assert_eq!(wind_penalty(0.3, 0.0).unwrap_err(), MetricsError::ZeroBaseline);
    }

    #[test]
    fn report_and_csv() {
        let r = reference();
        let pts: Vec<_> = (0..=200).map(|k| r.kinematics(k as f64 * 0.01).pos + Vec2::new(0.0, 0.02)).collect();
        let log = log_from(&pts, 0.01);
        let grid = OccupancyGrid::new(30, 20, 0.1).unwrap();
        let rep = MetricsReport::compute(&log, &r, &grid, 5).unwrap();
        assert!((rep.max_dev - 0.02).abs() < 1e-12 && (rep.p95_dev - 0.02).abs() < 1e-12);
        assert!(rep.p95_dev <= rep.max_dev);
        assert!(!rep.collided);
        let cmp = PlannerComparison::new(rep, rep, 0.0);
        assert_eq!(cmp.max_dev.penalty_pct, Some(0.0));
        let report = ComparisonReport::new("s".into(), 1, cmp.clone(), cmp);
        assert_eq!(report.relative_reduction_pct, None);
        assert!(report.to_json().contains("\"relative_reduction_pct\": null"));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let row = MetricsRow { env: "e".into(), planner: "base".into(), wind: true, trial: 0, report: rep };
        write_metrics_csv(&p, &[row]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("env,planner,wind_mode,trial,max_dev"));
        assert_eq!(text.lines().count(), 2);
    }
}
