//! End-to-end orchestration: wind estimation, planning in either mode, replay
//! under wind on and off, scoring, and artifact output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::bezier::{
    initialize_from_path, merge_collinear, optimize, BezierError, BezierTrajectory, CostContext, DragModel, Objective,
    ObjectiveWeights, OptimizeOptions, OptimizeReport,
};
use crate::costmap::{build_costmap, ClearanceMap, CostError, CostMap, CostParams};
use crate::env::{check_endpoints, dilate_obstacles, EnvError, OccupancyGrid, PipelineParams, Scenario};
use crate::flightsim::{simulate_flight, DroneModel, FlightError, FlightLog, Gains, Noise, PolylineReference, Reference};
use crate::lbm::{build_lattice, run_steady, FieldIoError, LatticeConfig, LbmError, WindField};
use crate::metrics::{
    displacement, relative_reduction, write_metrics_csv, ComparisonReport, MetricsError, MetricsReport, MetricsRow,
    PlannerComparison,
};
use crate::num::Vec2;
use crate::planner::{astar, select_variant, GridPath, PlanError};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Lbm(#[from] LbmError),
    #[error(transparent)]
    FieldIo(#[from] FieldIoError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Bezier(#[from] BezierError),
    #[error(transparent)]
    Flight(#[from] FlightError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl PipelineError {
    /// 2 parse/IO, 3 validation, 4 no path, 5 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Env(EnvError::Parse { .. } | EnvError::Io { .. }) | Self::FieldIo(_) => 2,
            Self::Env(EnvError::DilationSwallowsEndpoint { .. }) | Self::Plan(_) => 4,
            Self::Lbm(LbmError::NumericalBlowup { .. })
            | Self::Bezier(BezierError::NonFiniteObjective)
            | Self::Flight(FlightError::DivergedSimulation { .. }) => 5,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Wespr,
    Base,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Wespr => "wespr",
            Mode::Base => "base",
        }
    }
}

/// Solver outcome of the wind stage.
#[derive(Clone, Debug)]
pub struct WindRun {
    pub field: WindField<f64>,
    pub steps: usize,
    pub converged: Option<bool>,
    pub residual: Option<f64>,
    pub tau: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct WindSummary {
    pub steps: usize,
    pub converged: Option<bool>,
    pub residual: Option<f64>,
    pub tau: Option<f64>,
    pub max_speed: f64,
}

impl WindRun {
    pub fn summary(&self) -> WindSummary {
        WindSummary {
            steps: self.steps,
            converged: self.converged,
            residual: self.residual,
            tau: self.tau,
            max_speed: self.field.max_speed(),
        }
    }
}

/// Steady wind over the undilated grid. Without moving sources the field is zero
/// and the solver is skipped.
pub fn simulate_wind(scenario: &Scenario) -> Result<WindRun> {
    let grid = &scenario.grid;
    let p = &scenario.params;
    let walls: Vec<bool> = (0..grid.width() * grid.height()).map(|k| grid.is_solid(k % grid.width(), k / grid.width())).collect();
    if scenario.sources.iter().all(|s| s.speed == 0.0) {
        let field = WindField::zero(grid.width(), grid.height(), grid.cell_size(), walls);
        return Ok(WindRun { field, steps: 0, converged: None, residual: None, tau: None });
    }
    let config = LatticeConfig {
        re: p.re,
        u_lat_max: p.u_lat_max,
        ref_length_cells: p.ref_length_cells,
        speed_anchor: p.speed_anchor,
    };
    let mut lattice = build_lattice(grid, &scenario.sources, &config)?;
    let tau = lattice.tau();
    let run = run_steady(&mut lattice, p.n_steps, p.conv_tol, p.conv_interval)?;
    Ok(WindRun { field: run.field, steps: run.steps, converged: run.converged, residual: run.residual, tau: Some(tau) })
}

/// Everything one planning run produces.
#[derive(Clone, Debug)]
pub struct PlanOutput {
    pub mode: Mode,
    pub flow_aware: bool,
    pub against_flow: bool,
    pub mean_alignment: f64,
    pub dilated: OccupancyGrid<f64>,
    pub costmap: CostMap<f64>,
    pub path: GridPath<f64>,
    /// Grid path in meters with exact endpoints and collinear runs merged.
    pub reference: Vec<Vec2<f64>>,
    pub initial: BezierTrajectory<f64>,
    pub optimized: OptimizeReport<f64>,
    pub plan_seconds: f64,
    pub optimize_seconds: f64,
}

impl PlanOutput {
    pub fn trajectory(&self) -> &BezierTrajectory<f64> {
        &self.optimized.trajectory
    }

    /// The raw grid path as a constant-speed reference over the Bézier duration.
    pub fn polyline_reference(&self) -> Result<PolylineReference<f64>> {
        Ok(PolylineReference::new(self.reference.clone(), self.trajectory().duration())?)
    }
}

/// Cost map, A* and Bézier refinement. Base mode plans on the constant base cost
/// and drops the thrust term; WESPR uses the field unless flow awareness is off.
pub fn plan(scenario: &Scenario, mode: Mode, field: Option<&WindField<f64>>) -> Result<PlanOutput> {
    let p = &scenario.params;
    let t0 = Instant::now();
    let flow_aware = mode == Mode::Wespr && p.flow_aware;
    let dilated = dilate_obstacles(&scenario.grid, p.b)?;
    check_endpoints(&dilated, scenario.start, scenario.goal)?;
    let wind = if flow_aware { field } else { None };
    if flow_aware && wind.is_none() {
        return Err(EnvError::validation("field", "flow-aware planning needs a wind field").into());
    }
    let costmap = build_costmap(wind, &dilated, scenario.start, scenario.goal, &CostParams::from_params(p), flow_aware)?;
    let mean_alignment = costmap.mean_alignment();
    let against_flow = flow_aware && select_variant(mean_alignment, p.against_flow_threshold);
    let s = costmap.cell_of(scenario.start).expect("endpoint checked");
    let g = costmap.cell_of(scenario.goal).expect("endpoint checked");
    let path = astar(&costmap, s, g, against_flow)?;
    let mut pts = path.points(costmap.cell_size());
    pts[0] = scenario.start;
    *pts.last_mut().expect("nonempty") = scenario.goal;
    if pts.len() == 1 {
        pts.push(scenario.goal);
    }
    let reference = merge_collinear(&pts);
    let plan_seconds = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let half = p.box_half_width.unwrap_or(3.0 * costmap.cell_size());
    let (initial, bounds) = initialize_from_path(&reference, p.bezier_degree, p.cruise_speed, half)?;
    let clearance = ClearanceMap::from_grid(&scenario.grid);
    let ctx = CostContext {
        reference: reference.clone(),
        field: wind,
        clearance: &clearance,
        drag: DragModel { k: p.drag_gain, mass: p.mass },
        wall_margin: p.wall_margin.unwrap_or(p.b),
        wall_sharpness: p.wall_sharpness,
        hull_weight: p.hull_weight,
        samples: p.quad_samples,
    };
    let weights = ObjectiveWeights {
        lambda_p: p.lambda_p,
        lambda_s: p.lambda_s,
        lambda_t: if mode == Mode::Base { 0.0 } else { p.lambda_t },
        lambda_w: p.lambda_w,
    };
    let objective = Objective::new(ctx, weights, p.bezier_degree)?;
    let t_init = initial.duration();
    let options = OptimizeOptions {
        max_sweeps: p.max_sweeps,
        sweep_tol: p.sweep_tol,
        t_min: t_init * p.t_scale_min,
        t_max: t_init * p.t_scale_max,
        coord_tol: costmap.cell_size() * 1e-3,
    };
    let optimized = optimize(&initial, &objective, &bounds, &options)?;
    let optimize_seconds = t1.elapsed().as_secs_f64();
    Ok(PlanOutput {
        mode,
        flow_aware,
        against_flow,
        mean_alignment,
        dilated,
        costmap,
        path,
        reference,
        initial,
        optimized,
        plan_seconds,
        optimize_seconds,
    })
}

pub fn drone_model(p: &PipelineParams) -> DroneModel<f64> {
    DroneModel { mass: p.mass, drag_gain: p.drag_gain, a_max: p.a_max, dt: p.sim_dt }
}

/// One replay; trial `k` seeds the optional noise with `seed + k`.
pub fn replay<R: Reference<f64>>(
    scenario: &Scenario,
    reference: &R,
    field: Option<&WindField<f64>>,
    trial: usize,
) -> Result<FlightLog<f64>> {
    let p = &scenario.params;
    let noise = (p.noise_std > 0.0).then(|| Noise { std: p.noise_std, seed: p.seed.wrapping_add(trial as u64) });
    let mut log = simulate_flight(
        reference,
        field,
        scenario.grid.extent(),
        &drone_model(p),
        Gains { kp: p.kp, kd: p.kd },
        noise,
    )?;
    log.scenario = scenario.hash();
    Ok(log)
}

/// Logs and scores for one planner under both wind conditions.
#[derive(Clone, Debug)]
pub struct ModeRuns {
    pub plan: PlanOutput,
    pub wind_logs: Vec<FlightLog<f64>>,
    pub calm_logs: Vec<FlightLog<f64>>,
    pub wind_reports: Vec<MetricsReport<f64>>,
    pub calm_reports: Vec<MetricsReport<f64>>,
    pub displacements: Vec<f64>,
    pub comparison: PlannerComparison<f64>,
}

/// Mean jerk of the Bézier replay against the raw grid path replayed as a
/// constant-speed polyline with the same duration, both under wind.
#[derive(Clone, Debug, Serialize)]
pub struct AblationReport {
    pub bezier_mean_jerk: f64,
    pub polyline_mean_jerk: f64,
    pub reduction_pct: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct CompareOutput {
    pub base: ModeRuns,
    pub wespr: ModeRuns,
    pub report: ComparisonReport<f64>,
    pub ablation: AblationReport,
    pub replay_seconds: f64,
    pub metrics_seconds: f64,
}

fn run_mode(scenario: &Scenario, plan: PlanOutput, field: &WindField<f64>, trials: usize) -> Result<(ModeRuns, f64, f64)> {
    let p = &scenario.params;
    let t0 = Instant::now();
    let traj = plan.trajectory();
    let logs: Vec<(FlightLog<f64>, FlightLog<f64>)> = (0..trials)
        .into_par_iter()
        .map(|k| Ok((replay(scenario, traj, Some(field), k)?, replay(scenario, traj, None, k)?)))
        .collect::<Result<_>>()?;
    let replay_s = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let (wind_logs, calm_logs): (Vec<_>, Vec<_>) = logs.into_iter().unzip();
    let score = |l: &FlightLog<f64>| MetricsReport::compute(l, traj, &scenario.grid, p.jerk_window);
    let wind_reports = wind_logs.par_iter().map(score).collect::<std::result::Result<Vec<_>, _>>()?;
    let calm_reports = calm_logs.par_iter().map(score).collect::<std::result::Result<Vec<_>, _>>()?;
    let displacements =
        wind_logs.iter().zip(&calm_logs).map(|(w, c)| displacement(w, c)).collect::<std::result::Result<Vec<_>, _>>()?;
    let mean_disp = displacements.iter().sum::<f64>() / displacements.len() as f64;
    let comparison = PlannerComparison::new(
        MetricsReport::mean(&calm_reports).expect("at least one trial"),
        MetricsReport::mean(&wind_reports).expect("at least one trial"),
        mean_disp,
    );
    let metrics_s = t1.elapsed().as_secs_f64();
    Ok((ModeRuns { plan, wind_logs, calm_logs, wind_reports, calm_reports, displacements, comparison }, replay_s, metrics_s))
}

/// Plans both modes, replays each under the field and in still air, and scores.
pub fn compare(scenario: &Scenario, field: &WindField<f64>, trials: usize) -> Result<CompareOutput> {
    if trials == 0 {
        return Err(EnvError::validation("trials", "must be at least 1").into());
    }
    let base_plan = plan(scenario, Mode::Base, Some(field))?;
    let wespr_plan = plan(scenario, Mode::Wespr, Some(field))?;
    let (base, r1, m1) = run_mode(scenario, base_plan, field, trials)?;
    let (wespr, r2, m2) = run_mode(scenario, wespr_plan, field, trials)?;
    let t = Instant::now();
    let ablation = jerk_ablation(scenario, &wespr.plan, field)?;
    let report = ComparisonReport::new(scenario.hash(), trials, base.comparison.clone(), wespr.comparison.clone());
    let metrics_seconds = m1 + m2 + t.elapsed().as_secs_f64();
    Ok(CompareOutput { base, wespr, report, ablation, replay_seconds: r1 + r2, metrics_seconds })
}

pub fn jerk_ablation(scenario: &Scenario, plan: &PlanOutput, field: &WindField<f64>) -> Result<AblationReport> {
    let w = scenario.params.jerk_window;
    let bez = replay(scenario, plan.trajectory(), Some(field), 0)?;
    let poly = replay(scenario, &plan.polyline_reference()?, Some(field), 0)?;
    let bezier_mean_jerk = crate::metrics::jerk_stats(&bez, w)?.mean;
    let polyline_mean_jerk = crate::metrics::jerk_stats(&poly, w)?.mean;
    Ok(AblationReport {
        bezier_mean_jerk,
        polyline_mean_jerk,
        reduction_pct: relative_reduction(polyline_mean_jerk, bezier_mean_jerk).ok(),
    })
}

/// Per-command provenance record.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub scenario: String,
    pub scenario_hash: String,
    /// Wall-clock seconds per stage.
    pub durations: BTreeMap<String, f64>,
    pub outputs: Vec<String>,
    pub params: PipelineParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wind: Option<WindSummary>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub notes: BTreeMap<String, serde_json::Value>,
}

impl RunManifest {
    pub fn new(command: &str, scenario: &Scenario) -> Self {
        Self {
            command: command.into(),
            scenario: scenario.name.clone(),
            scenario_hash: scenario.hash(),
            durations: BTreeMap::new(),
            outputs: Vec::new(),
            params: scenario.params.clone(),
            wind: None,
            notes: BTreeMap::new(),
        }
    }

    pub fn time(&mut self, stage: &str, seconds: f64) {
        *self.durations.entry(stage.into()).or_insert(0.0) += seconds;
    }

    /// Writes `manifest.json` into `dir` and lists it among the outputs.
    pub fn write(&mut self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        self.outputs.push("manifest.json".into());
        self.outputs.sort();
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))?;
        Ok(path)
    }
}

fn io_err(path: &Path, e: std::io::Error) -> PipelineError {
    EnvError::Io { path: path.display().to_string(), source: e }.into()
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn rel(dir: &Path, path: &Path) -> String {
    path.strip_prefix(dir).unwrap_or(path).display().to_string()
}

/// Field as VTK and CSV.
pub fn write_wind_artifacts(dir: &Path, field: &WindField<f64>) -> Result<Vec<String>> {
    let vtk = dir.join("wind.vtk");
    let csv = dir.join("wind.csv");
    field.write_vtk(&vtk)?;
    field.write_csv(&csv)?;
    Ok(vec![rel(dir, &vtk), rel(dir, &csv)])
}

#[derive(Serialize)]
struct PlanSummary<'a> {
    mode: Mode,
    flow_aware: bool,
    against_flow: bool,
    mean_alignment: f64,
    astar_cost: f64,
    astar_length_m: f64,
    bezier_length_m: f64,
    duration_s: f64,
    initial_terms: &'a crate::bezier::CostTerms<f64>,
    terms: &'a crate::bezier::CostTerms<f64>,
    sweeps: usize,
    converged: bool,
}

/// Cost map, grid path, trajectory, control polygon, descent history and a
/// summary, each prefixed with `prefix`.
pub fn write_plan_artifacts(dir: &Path, out: &PlanOutput, prefix: &str, dt: f64) -> Result<Vec<String>> {
    let f = |name: &str| dir.join(format!("{prefix}{name}"));
    let files = [
        f("costmap.csv"),
        f("costmap.pgm"),
        f("astar_path.csv"),
        f("trajectory.csv"),
        f("control_points.csv"),
        f("bcd_history.csv"),
        f("plan.json"),
    ];
    out.costmap.write_csv(&files[0])?;
    out.costmap.write_pgm(&files[1])?;
    out.path.write_csv(&files[2], out.costmap.cell_size())?;
    out.trajectory().write_csv(&files[3], dt)?;
    out.trajectory().write_control_csv(&files[4])?;
    let mut hist = String::from("sweep,objective\n");
    for (k, j) in out.optimized.history.iter().enumerate() {
        hist.push_str(&format!("{k},{j}\n"));
    }
    write_text(&files[5], &hist)?;
    let traj = out.trajectory();
    let summary = PlanSummary {
        mode: out.mode,
        flow_aware: out.flow_aware,
        against_flow: out.against_flow,
        mean_alignment: out.mean_alignment,
        astar_cost: out.path.total_cost,
        astar_length_m: out.path.length_m,
        bezier_length_m: crate::num::polyline_length(&traj.polyline(dt)),
        duration_s: traj.duration(),
        initial_terms: &out.optimized.initial_terms,
        terms: &out.optimized.terms,
        sweeps: out.optimized.history.len() - 1,
        converged: out.optimized.converged,
    };
    write_text(&files[6], &(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"))?;
    Ok(files.iter().map(|p| rel(dir, p)).collect())
}

/// Plans, per-trial flight logs, metrics JSON/CSV and the jerk ablation.
pub fn write_compare_artifacts(dir: &Path, out: &CompareOutput, scenario: &Scenario) -> Result<Vec<String>> {
    let dt = scenario.params.sim_dt;
    let mut files = Vec::new();
    let mut rows = Vec::new();
    for runs in [&out.base, &out.wespr] {
        let name = runs.plan.mode.name();
        files.extend(write_plan_artifacts(dir, &runs.plan, &format!("{name}_"), dt)?);
        for (k, (w, c)) in runs.wind_logs.iter().zip(&runs.calm_logs).enumerate() {
            for (log, tag) in [(w, "wind"), (c, "no_wind")] {
                let p = dir.join(format!("{name}_flight_{tag}_{k}.csv"));
                log.write_csv(&p)?;
                files.push(rel(dir, &p));
            }
        }
        for (k, (w, c)) in runs.wind_reports.iter().zip(&runs.calm_reports).enumerate() {
            for (rep, wind) in [(c, false), (w, true)] {
                rows.push(MetricsRow { env: scenario.name.clone(), planner: name.into(), wind, trial: k, report: *rep });
            }
        }
    }
    let csv = dir.join("metrics.csv");
    write_metrics_csv(&csv, &rows)?;
    let json = dir.join("comparison.json");
    write_text(&json, &(out.report.to_json() + "\n"))?;
    let abl = dir.join("ablation.json");
    write_text(&abl, &(serde_json::to_string_pretty(&out.ablation).expect("serializes") + "\n"))?;
    files.extend([rel(dir, &csv), rel(dir, &json), rel(dir, &abl)]);
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{parse_scenario, Side, SourceRegion, WindSource};

    fn arena() -> Scenario {
        let text = r#"{"name": "arena", "grid": {"width": 40, "height": 20, "cell_size": 0.1},
            "start": [0.55, 1.05], "goal": [3.45, 1.05],
            "params": {"flow_aware": false, "max_sweeps": 4}}"#;
        parse_scenario(text, None, "arena").unwrap()
    }

    #[test]
    fn base_plan_on_empty_arena_is_straight() {
        let s = arena();
        let out = plan(&s, Mode::Base, None).unwrap();
        assert_eq!(out.reference.len(), 2);
        let traj = out.trajectory();
        assert_eq!(traj.start(), s.start);
        assert_eq!(traj.goal(), s.goal);
        let dev = traj.polyline(0.05).iter().map(|p| (p.y - 1.05).abs()).fold(0.0, f64::max);
        assert!(dev < 1e-3, "{dev}");
        assert!(out.optimized.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn zero_wind_has_zero_penalty() {
        let mut s = arena();
        s.sources.push(WindSource {
            region: SourceRegion::Boundary { side: Side::W, start: 0, length: 20 },
            direction: Vec2::new(1.0, 0.0),
            speed: 0.0,
        });
        s.params.flow_aware = true;
        let wind = simulate_wind(&s).unwrap();
        assert_eq!(wind.field.max_speed(), 0.0);
        let out = compare(&s, &wind.field, 2).unwrap();
        for c in [&out.report.base, &out.report.wespr] {
            assert_eq!(c.max_dev.penalty_pct, Some(0.0));
            assert_eq!(c.mean_jerk.penalty_pct, Some(0.0));
            assert_eq!(c.displacement, 0.0);
        }
    }

    #[test]
    fn exit_codes() {
        let parse: PipelineError = EnvError::parse("x", "bad").into();
        assert_eq!(parse.exit_code(), 2);
        assert_eq!(PipelineError::from(EnvError::validation("x", "bad")).exit_code(), 3);
        assert_eq!(PipelineError::from(PlanError::NoPath).exit_code(), 4);
        assert_eq!(PipelineError::from(EnvError::DilationSwallowsEndpoint { which: "goal" }).exit_code(), 4);
        assert_eq!(PipelineError::from(LbmError::NumericalBlowup { step: 3, i: 0, j: 0 }).exit_code(), 5);
        assert_eq!(PipelineError::from(LbmError::UnstableTau { tau: 0.5 }).exit_code(), 3);
    }
}
