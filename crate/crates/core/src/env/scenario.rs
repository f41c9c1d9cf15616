//! Scenario files: the JSON document describing one planning problem.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    occupancy_from_heightmap, read_heightmap_pgm, read_occupancy_pgm, Cell, EnvError, OccupancyGrid,
    Side, SourceRegion, WindSource,
};
use crate::num::Vec2;

/// Every tunable of the pipeline. Missing keys in a scenario file take these defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineParams {
    /// Depth-filter altitude (m).
    pub h_min: f64,
    /// Reynolds number used to set the lattice viscosity.
    pub re: f64,
    pub n_steps: usize,
    /// Fastest inlet speed in lattice units.
    pub u_lat_max: f64,
    /// Reference length for the Reynolds number in cells; widest obstacle when unset.
    pub ref_length_cells: Option<f64>,
    /// Extra factor on the lattice-to-physical speed map.
    pub speed_anchor: f64,
    /// Early-stop tolerance on the relative field change; 0 disables the check.
    pub conv_tol: f64,
    pub conv_interval: usize,

    pub flow_aware: bool,
    pub w_s: f64,
    pub w_d: f64,
    pub w_a: f64,
    pub c_wall: f64,
    /// Wall buffer (m).
    pub b: f64,
    /// Gaussian smoothing sigma in cells; 0 disables smoothing.
    pub sigma_smooth: f64,
    pub base_cost: f64,
    pub clamp_min: f64,
    pub clamp_max: f64,
    pub against_flow_threshold: f64,
    pub against_flow_penalty: f64,

    pub lambda_p: f64,
    pub lambda_s: f64,
    pub lambda_t: f64,
    pub lambda_w: f64,
    pub bezier_degree: usize,
    /// Half-width of the control-point boxes (m); three cells when unset.
    pub box_half_width: Option<f64>,
    /// Nominal speed used to initialize the segment time (m/s).
    pub cruise_speed: f64,
    pub t_scale_min: f64,
    pub t_scale_max: f64,
    pub quad_samples: usize,
    pub max_sweeps: usize,
    pub sweep_tol: f64,
    /// Clearance below which the wall term becomes active (m); defaults to `b`.
    pub wall_margin: Option<f64>,
    /// Softplus sharpness of the wall term (1/m).
    pub wall_sharpness: f64,
    pub hull_weight: f64,

    /// Linear drag gain K (kg/s).
    pub drag_gain: f64,
    pub mass: f64,
    pub kp: f64,
    pub kd: f64,
    pub a_max: f64,
    pub sim_dt: f64,
    /// Std-dev of the velocity perturbation injected each replay step (m/s); 0 disables.
    pub noise_std: f64,
    pub seed: u64,
    pub jerk_window: usize,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            h_min: 0.3,
            re: 250.0,
            n_steps: 10_000,
            u_lat_max: 0.1,
            ref_length_cells: None,
            speed_anchor: 1.0,
            conv_tol: 0.0,
            conv_interval: 500,
            flow_aware: true,
            w_s: 1.0,
            w_d: 1.0,
            w_a: 1.0,
            c_wall: 1000.0,
            b: 0.1,
            sigma_smooth: 1.5,
            base_cost: 0.5,
            clamp_min: 0.1,
            clamp_max: 20.0,
            against_flow_threshold: -0.3,
            against_flow_penalty: 2.5,
            lambda_p: 1.0,
            lambda_s: 1.0,
            lambda_t: 1.0,
            lambda_w: 10.0,
            bezier_degree: 7,
            box_half_width: None,
            cruise_speed: 0.5,
            t_scale_min: 0.5,
            t_scale_max: 2.0,
            quad_samples: 64,
            max_sweeps: 30,
            sweep_tol: 1e-6,
            wall_margin: None,
            wall_sharpness: 50.0,
            hull_weight: 0.1,
            drag_gain: 0.0105,
            mass: 0.035,
            kp: 4.0,
            kd: 3.0,
            a_max: 5.0,
            sim_dt: 0.01,
            noise_std: 0.0,
            seed: 0,
            jerk_window: 5,
        }
    }
}

impl PipelineParams {
    pub fn validate(&self) -> Result<(), EnvError> {
        let nonneg = [
            ("h_min", self.h_min),
            ("w_s", self.w_s),
            ("w_d", self.w_d),
            ("w_a", self.w_a),
            ("c_wall", self.c_wall),
            ("b", self.b),
            ("sigma_smooth", self.sigma_smooth),
            ("lambda_p", self.lambda_p),
            ("lambda_s", self.lambda_s),
            ("lambda_t", self.lambda_t),
            ("lambda_w", self.lambda_w),
            ("against_flow_penalty", self.against_flow_penalty),
            ("drag_gain", self.drag_gain),
            ("kp", self.kp),
            ("kd", self.kd),
            ("noise_std", self.noise_std),
            ("conv_tol", self.conv_tol),
            ("hull_weight", self.hull_weight),
            ("wall_margin", self.wall_margin.unwrap_or(0.0)),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(EnvError::validation(format!("params.{name}"), "must be finite and >= 0"));
            }
        }
        let positive = [
            ("re", self.re),
            ("u_lat_max", self.u_lat_max),
            ("speed_anchor", self.speed_anchor),
            ("mass", self.mass),
            ("a_max", self.a_max),
            ("cruise_speed", self.cruise_speed),
            ("t_scale_min", self.t_scale_min),
            ("wall_sharpness", self.wall_sharpness),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(EnvError::validation(format!("params.{name}"), "must be finite and > 0"));
            }
        }
        let check = |ok: bool, field: &str, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(EnvError::validation(format!("params.{field}"), msg))
            }
        };
        check(self.n_steps >= 1, "n_steps", "must be >= 1")?;
        check(self.conv_interval >= 1, "conv_interval", "must be >= 1")?;
        check(self.u_lat_max <= 0.3, "u_lat_max", "lattice inlet speed must be <= 0.3")?;
        check(
            self.clamp_min > 0.0 && self.clamp_min <= self.clamp_max,
            "clamp_min",
            "need 0 < clamp_min <= clamp_max",
        )?;
        check(
            (0.1..=20.0).contains(&self.base_cost),
            "base_cost",
            "must lie in [0.1, 20]",
        )?;
        check(self.bezier_degree >= 3, "bezier_degree", "must be >= 3")?;
        check(self.t_scale_max >= self.t_scale_min, "t_scale_max", "must be >= t_scale_min")?;
        check(self.quad_samples >= 32, "quad_samples", "must be >= 32")?;
        check(self.sim_dt > 0.0 && self.sim_dt <= 0.02, "sim_dt", "must lie in (0, 0.02]")?;
        check(self.jerk_window >= 1, "jerk_window", "must be >= 1")?;
        check(
            self.lambda_p + self.lambda_s + self.lambda_t + self.lambda_w > 0.0,
            "lambda_p",
            "at least one objective weight must be positive",
        )?;
        if let Some(l) = self.ref_length_cells {
            check(l >= 1.0, "ref_length_cells", "must be >= 1")?;
        }
        if let Some(bw) = self.box_half_width {
            check(bw >= 0.0, "box_half_width", "must be >= 0")?;
        }
        Ok(())
    }

    /// Apply a `key=value` override; the value is parsed as JSON, falling back to a string.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), EnvError> {
        let mut map = match serde_json::to_value(&*self) {
            Ok(serde_json::Value::Object(m)) => m,
            _ => unreachable!("params serialize to an object"),
        };
        if !map.contains_key(key) {
            return Err(EnvError::validation(format!("params.{key}"), "unknown parameter"));
        }
        let v = serde_json::from_str(value).unwrap_or_else(|_| serde_json::Value::String(value.to_owned()));
        map.insert(key.to_owned(), v);
        *self = serde_json::from_value(serde_json::Value::Object(map))
            .map_err(|e| EnvError::validation(format!("params.{key}"), e.to_string()))?;
        Ok(())
    }
}

/// A validated planning problem.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub grid: OccupancyGrid<f64>,
    pub sources: Vec<WindSource<f64>>,
    pub start: Vec2<f64>,
    pub goal: Vec2<f64>,
    pub params: PipelineParams,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), EnvError> {
        self.params.validate()?;
        for (which, p) in [("start", self.start), ("goal", self.goal)] {
            match self.grid.cell_of(p) {
                None => return Err(EnvError::validation(which, "outside the domain")),
                Some((i, j)) if self.grid.is_solid(i, j) => {
                    return Err(EnvError::validation(which, "lies on a solid cell"))
                }
                _ => {}
            }
        }
        for (k, s) in self.sources.iter().enumerate() {
            s.validate(self.grid.width(), self.grid.height()).map_err(|e| match e {
                EnvError::Validation { field, msg } => EnvError::Validation {
                    field: field.replacen("sources", &format!("sources[{k}]"), 1),
                    msg,
                },
                other => other,
            })?;
        }
        if self.params.flow_aware && self.sources.is_empty() {
            return Err(EnvError::validation(
                "sources",
                "flow-aware planning needs at least one wind source",
            ));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(scenario_to_json(self).as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default)]
    name: String,
    grid: GridFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    heightmap: Option<HeightmapFile>,
    #[serde(default)]
    sources: Vec<SourceFile>,
    start: [f64; 2],
    goal: [f64; 2],
    #[serde(default)]
    params: PipelineParams,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    height: Option<usize>,
    /// Extent in meters, alternative to width/height.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    size_m: Option<[f64; 2]>,
    cell_size: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    solid: Option<SolidFile>,
    /// Solid boxes `[x0, y0, x1, y1]` in meters.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    boxes: Vec<[f64; 4]>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum SolidFile {
    Rle(Vec<String>),
    Pgm(String),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeightmapFile {
    path: String,
    /// Meters per PGM sample unit.
    scale: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SourceFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    side: Option<Side>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    start: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    length: Option<usize>,
    /// `[i0, j0, w, h]` in cells.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rect: Option<[usize; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    direction: Option<[f64; 2]>,
    speed: f64,
}

fn decode_rle(rows: &[String], width: usize, height: usize) -> Result<Vec<Cell>, EnvError> {
    if rows.len() != height {
        return Err(EnvError::validation(
            "grid.solid",
            format!("{} RLE rows for grid height {height}", rows.len()),
        ));
    }
    let mut cells = vec![Cell::Free; width * height];
    for (r, row) in rows.iter().enumerate() {
        let j = height - 1 - r;
        let mut i = 0usize;
        let mut count = String::new();
        for ch in row.chars() {
            if ch.is_ascii_digit() {
                count.push(ch);
                continue;
            }
            let cell = match ch {
                '.' => Cell::Free,
                '#' => Cell::Solid,
                c if c.is_whitespace() => continue,
                c => {
                    return Err(EnvError::validation(
                        "grid.solid",
                        format!("unexpected character {c:?} in RLE row {r}"),
                    ))
                }
            };
            let n = if count.is_empty() { 1 } else { count.parse().unwrap_or(usize::MAX) };
            count.clear();
            if i.saturating_add(n) > width {
                return Err(EnvError::validation("grid.solid", format!("RLE row {r} longer than width {width}")));
            }
            for k in i..i + n {
                cells[j * width + k] = cell;
            }
            i += n;
        }
        if i != width || !count.is_empty() {
            return Err(EnvError::validation("grid.solid", format!("RLE row {r} covers {i} of {width} cells")));
        }
    }
    Ok(cells)
}

fn encode_rle(grid: &OccupancyGrid<f64>) -> Vec<String> {
    (0..grid.height())
        .rev()
        .map(|j| {
            let mut out = String::new();
            let mut i = 0;
            while i < grid.width() {
                let c = grid.get(i, j);
                let mut n = 1;
                while i + n < grid.width() && grid.get(i + n, j) == c {
                    n += 1;
                }
                let sym = if c == Cell::Solid { '#' } else { '.' };
                out.push_str(&format!("{n}{sym}"));
                i += n;
            }
            out
        })
        .collect()
}

fn resolve(base: Option<&Path>, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    match base {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p.to_path_buf(),
    }
}

fn build_grid(g: &GridFile, base: Option<&Path>) -> Result<OccupancyGrid<f64>, EnvError> {
    let cs = g.cell_size;
    if !(cs > 0.0) {
        return Err(EnvError::validation("grid.cell_size", "must be > 0"));
    }
    let mut grid = match &g.solid {
        Some(SolidFile::Pgm(path)) => {
            let grid = read_occupancy_pgm(&resolve(base, path), cs)?;
            if g.width.is_some_and(|w| w != grid.width()) || g.height.is_some_and(|h| h != grid.height()) {
                return Err(EnvError::validation("grid.width", "does not match the PGM dimensions"));
            }
            grid
        }
        other => {
            let (w, h) = match (g.width, g.height, g.size_m) {
                (Some(w), Some(h), _) => (w, h),
                (None, None, Some([sx, sy])) => ((sx / cs).round() as usize, (sy / cs).round() as usize),
                _ => {
                    return Err(EnvError::validation(
                        "grid.width",
                        "give width and height, size_m, or a PGM",
                    ))
                }
            };
            let cells = match other {
                Some(SolidFile::Rle(rows)) => decode_rle(rows, w, h)?,
                _ => vec![Cell::Free; w * h],
            };
            OccupancyGrid::from_cells(w, h, cs, cells)?
        }
    };
    for b in &g.boxes {
        grid.fill_box(Vec2::new(b[0], b[1]), Vec2::new(b[2], b[3]));
    }
    Ok(grid)
}

fn build_source(k: usize, s: &SourceFile) -> Result<WindSource<f64>, EnvError> {
    let field = |f: &str| format!("sources[{k}].{f}");
    let region = match (s.side, s.rect) {
        (Some(side), None) => SourceRegion::Boundary {
            side,
            start: s.start.unwrap_or(0),
            length: s.length.ok_or_else(|| EnvError::validation(field("length"), "missing"))?,
        },
        (None, Some([i0, j0, w, h])) => SourceRegion::Rect { i0, j0, w, h },
        _ => return Err(EnvError::validation(field("side"), "give exactly one of side or rect")),
    };
    let direction = match (s.direction, region) {
        (Some(d), _) => Vec2::from(d),
        (None, SourceRegion::Boundary { side, .. }) => side.inward_normal(),
        (None, SourceRegion::Rect { .. }) => {
            return Err(EnvError::validation(field("direction"), "required for rect sources"))
        }
    };
    Ok(WindSource { region, direction, speed: s.speed })
}

fn from_file(file: ScenarioFile, base: Option<&Path>) -> Result<Scenario, EnvError> {
    let mut grid = build_grid(&file.grid, base)?;
    if let Some(hm) = &file.heightmap {
        let hmap = read_heightmap_pgm(&resolve(base, &hm.path), hm.scale, grid.cell_size())?;
        if hmap.width() != grid.width() || hmap.height() != grid.height() {
            return Err(EnvError::validation("heightmap", "dimensions differ from the grid"));
        }
        grid = grid.union(&occupancy_from_heightmap(&hmap, file.params.h_min)?)?;
    }
    let sources = file
        .sources
        .iter()
        .enumerate()
        .map(|(k, s)| build_source(k, s))
        .collect::<Result<Vec<_>, _>>()?;
    let scenario = Scenario {
        name: file.name,
        grid,
        sources,
        start: Vec2::from(file.start),
        goal: Vec2::from(file.goal),
        params: file.params,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Parse a scenario document; relative file references resolve against `base`.
pub fn parse_scenario(text: &str, base: Option<&Path>, origin: &str) -> Result<Scenario, EnvError> {
    let file: ScenarioFile = serde_json::from_str(text).map_err(|e| EnvError::parse(origin, e.to_string()))?;
    from_file(file, base)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, EnvError> {
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| EnvError::Io { path: shown.clone(), source })?;
    parse_scenario(&text, path.parent(), &shown)
}

/// Canonical JSON: grid as RLE rows, every parameter spelled out.
pub fn scenario_to_json(s: &Scenario) -> String {
    let file = ScenarioFile {
        name: s.name.clone(),
        grid: GridFile {
            width: Some(s.grid.width()),
            height: Some(s.grid.height()),
            size_m: None,
            cell_size: s.grid.cell_size(),
            solid: Some(SolidFile::Rle(encode_rle(&s.grid))),
            boxes: Vec::new(),
        },
        heightmap: None,
        sources: s
            .sources
            .iter()
            .map(|src| {
                let (side, start, length, rect) = match src.region {
                    SourceRegion::Boundary { side, start, length } => (Some(side), Some(start), Some(length), None),
                    SourceRegion::Rect { i0, j0, w, h } => (None, None, None, Some([i0, j0, w, h])),
                };
                SourceFile {
                    side,
                    start,
                    length,
                    rect,
                    direction: Some([src.direction.x, src.direction.y]),
                    speed: src.speed,
                }
            })
            .collect(),
        start: [s.start.x, s.start.y],
        goal: [s.goal.x, s.goal.y],
        params: s.params.clone(),
    };
    serde_json::to_string_pretty(&file).expect("scenario serializes")
}

pub fn save_scenario(s: &Scenario, path: &Path) -> Result<(), EnvError> {
    std::fs::write(path, scenario_to_json(s))
        .map_err(|source| EnvError::Io { path: path.display().to_string(), source })
}
