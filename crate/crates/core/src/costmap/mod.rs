//! Flow-aware planning cost map: per-cell cost from wind speed and goal
//! alignment, clamped, smoothed with an obstacle-masked Gaussian, and stamped
//! with the wall penalty on the dilated obstacle set.

mod edt;

pub use edt::squared_distance_transform;

use std::path::Path;

use crate::env::{cell_center, EnvError, OccupancyGrid, PipelineParams};
use crate::lbm::WindField;
use crate::num::{Real, Vec2};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CostError {
    #[error("start and goal closer than half a cell; goal direction undefined")]
    DegenerateGoal,
    #[error("wind field covers {field_m:?} m but the grid covers {grid_m:?} m")]
    DimensionMismatch { field_m: (f64, f64), grid_m: (f64, f64) },
    #[error("cost array has {got} cells, expected {expected}")]
    BadShape { got: usize, expected: usize },
}

/// Weights of the speed, direction and crosswind terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostWeights<T> {
    pub w_s: T,
    pub w_d: T,
    pub w_a: T,
}

#[derive(Clone, Copy, Debug)]
pub struct CostParams<T> {
    pub weights: CostWeights<T>,
    pub c_wall: T,
    pub clamp_min: T,
    pub clamp_max: T,
    /// Gaussian σ in cells; 0 disables smoothing.
    pub sigma: T,
    pub base_cost: T,
    pub against_flow_penalty: T,
}

impl<T: Real> CostParams<T> {
    pub fn from_params(p: &PipelineParams) -> Self {
        Self {
            weights: CostWeights { w_s: T::lit(p.w_s), w_d: T::lit(p.w_d), w_a: T::lit(p.w_a) },
            c_wall: T::lit(p.c_wall),
            clamp_min: T::lit(p.clamp_min),
            clamp_max: T::lit(p.clamp_max),
            sigma: T::lit(p.sigma_smooth),
            base_cost: T::lit(p.base_cost),
            against_flow_penalty: T::lit(p.against_flow_penalty),
        }
    }
}

impl<T: Real> Default for CostParams<T> {
    fn default() -> Self {
        Self::from_params(&PipelineParams::default())
    }
}

/// Unit vector from start to goal.
pub fn goal_direction<T: Real>(start: Vec2<T>, goal: Vec2<T>, cell_size: T) -> Result<Vec2<T>, CostError> {
    let d = goal - start;
    if d.norm() < cell_size * T::lit(0.5) {
        return Err(CostError::DegenerateGoal);
    }
    d.normalized().ok_or(CostError::DegenerateGoal)
}

/// α = û·g, defined as 0 in still air.
pub fn alignment<T: Real>(u: Vec2<T>, g: Vec2<T>) -> T {
    u.normalized().map_or(T::zero(), |d| d.dot(g))
}

/// Unclamped `w_s·c_s + w_d·c_d + w_a·c_a`.
pub fn cell_cost<T: Real>(u: Vec2<T>, s_max: T, g: Vec2<T>, w: CostWeights<T>) -> T {
    let c_s = if s_max > T::zero() { u.norm() / s_max } else { T::zero() };
    let a = alignment(u, g);
    let c_d = T::one() - (a + T::one()) * T::lit(0.5);
    let c_a = T::one() - a.abs();
    w.w_s * c_s + w.w_d * c_d + w.w_a * c_a
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostMap<T> {
    width: usize,
    height: usize,
    cell_size: T,
    cost: Vec<T>,
    obstacle: Vec<bool>,
    goal_dir: Vec2<T>,
    /// Wind speed over the free-cell maximum (zero without a field).
    speed_norm: Vec<T>,
    /// Goal alignment α per cell (zero without a field).
    alignment: Vec<T>,
    clearance: ClearanceMap<T>,
    against_flow_penalty: T,
}

/// Distance in meters from each cell center to the nearest obstacle surface.
#[derive(Clone, Debug, PartialEq)]
pub struct ClearanceMap<T> {
    width: usize,
    height: usize,
    cell_size: T,
    clearance: Vec<T>,
    obstacle: Vec<bool>,
}

impl<T: Real> ClearanceMap<T> {
    pub fn new(obstacle: Vec<bool>, width: usize, height: usize, cell_size: T) -> Result<Self, CostError> {
        if obstacle.len() != width * height {
            return Err(CostError::BadShape { got: obstacle.len(), expected: width * height });
        }
        let clearance = clearance_field(&obstacle, width, height, cell_size);
        Ok(Self { width, height, cell_size, clearance, obstacle })
    }

    pub fn from_grid(grid: &crate::env::OccupancyGrid<T>) -> Self {
        let obstacle = grid.cells().iter().map(|c| *c == crate::env::Cell::Solid).collect();
        Self::new(obstacle, grid.width(), grid.height(), grid.cell_size()).expect("grid shape is consistent")
    }

    pub fn cells(&self) -> &[T] {
        &self.clearance
    }

    /// Bilinear clearance in meters; zero outside the domain and on obstacles.
    pub fn at(&self, p: Vec2<T>) -> T {
        let h = self.cell_size;
        let ext = Vec2::new(h * T::from_usize_lossy(self.width), h * T::from_usize_lossy(self.height));
        if !p.is_finite() || p.x < T::zero() || p.y < T::zero() || p.x > ext.x || p.y > ext.y {
            return T::zero();
        }
        if let Some((i, j)) = crate::env::cell_of(p, self.width, self.height, h) {
            if self.obstacle[j * self.width + i] {
                return T::zero();
            }
        }
        if self.width < 2 || self.height < 2 {
            return self.clearance[0];
        }
        let half = T::lit(0.5);
        let fx = (p.x / h - half).max(T::zero()).min(T::from_usize_lossy(self.width - 1));
        let fy = (p.y / h - half).max(T::zero()).min(T::from_usize_lossy(self.height - 1));
        let i0 = fx.floor().to_usize().unwrap_or(0).min(self.width - 2);
        let j0 = fy.floor().to_usize().unwrap_or(0).min(self.height - 2);
        let tx = fx - T::from_usize_lossy(i0);
        let ty = fy - T::from_usize_lossy(j0);
        let c = |i: usize, j: usize| self.clearance[j * self.width + i];
        let a = c(i0, j0) + (c(i0 + 1, j0) - c(i0, j0)) * tx;
        let b = c(i0, j0 + 1) + (c(i0 + 1, j0 + 1) - c(i0, j0 + 1)) * tx;
        a + (b - a) * ty
    }
}

impl<T: Real> CostMap<T> {
    /// Cost map from explicit per-cell costs, without wind information.
    pub fn from_costs(
        width: usize,
        height: usize,
        cell_size: T,
        cost: Vec<T>,
        obstacle: Vec<bool>,
    ) -> Result<Self, CostError> {
        let n = width * height;
        if cost.len() != n || obstacle.len() != n {
            return Err(CostError::BadShape { got: cost.len().min(obstacle.len()), expected: n });
        }
        let clearance = ClearanceMap::new(obstacle.clone(), width, height, cell_size)?;
        Ok(Self {
            width,
            height,
            cell_size,
            cost,
            obstacle,
            goal_dir: Vec2::new(T::one(), T::zero()),
            speed_norm: vec![T::zero(); n],
            alignment: vec![T::zero(); n],
            clearance,
            against_flow_penalty: T::lit(2.5),
        })
    }

    /// Attach normalized wind speeds (used by the against-flow variant).
    pub fn with_speed_norm(mut self, speed_norm: Vec<T>) -> Result<Self, CostError> {
        if speed_norm.len() != self.cost.len() {
            return Err(CostError::BadShape { got: speed_norm.len(), expected: self.cost.len() });
        }
        self.speed_norm = speed_norm;
        Ok(self)
    }

    pub fn with_against_flow_penalty(mut self, penalty: T) -> Self {
        self.against_flow_penalty = penalty;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_size(&self) -> T {
        self.cell_size
    }

    pub fn costs(&self) -> &[T] {
        &self.cost
    }

    pub fn obstacles(&self) -> &[bool] {
        &self.obstacle
    }

    pub fn goal_dir(&self) -> Vec2<T> {
        self.goal_dir
    }

    pub fn against_flow_penalty(&self) -> T {
        self.against_flow_penalty
    }

    pub fn cost(&self, i: usize, j: usize) -> T {
        self.cost[j * self.width + i]
    }

    pub fn is_obstacle(&self, i: usize, j: usize) -> bool {
        self.obstacle[j * self.width + i]
    }

    pub fn speed_norm(&self, i: usize, j: usize) -> T {
        self.speed_norm[j * self.width + i]
    }

    pub fn clearance_cells(&self) -> &[T] {
        self.clearance.cells()
    }

    pub fn clearance(&self) -> &ClearanceMap<T> {
        &self.clearance
    }

    pub fn cell_of(&self, p: Vec2<T>) -> Option<(usize, usize)> {
        crate::env::cell_of(p, self.width, self.height, self.cell_size)
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Vec2<T> {
        cell_center(i, j, self.cell_size)
    }

    /// Mean α over free cells.
    pub fn mean_alignment(&self) -> T {
        let (sum, n) = self
            .alignment
            .iter()
            .zip(&self.obstacle)
            .filter(|(_, o)| !**o)
            .fold((T::zero(), 0usize), |(s, n), (a, _)| (s + *a, n + 1));
        if n == 0 {
            T::zero()
        } else {
            sum / T::from_usize_lossy(n)
        }
    }

    /// Bilinear clearance in meters; zero outside the domain.
    pub fn clearance_at(&self, p: Vec2<T>) -> T {
        self.clearance.at(p)
    }

    /// ∫ C ds along a polyline, sampling the containing cell every quarter cell.
    pub fn line_integral(&self, points: &[Vec2<T>]) -> T {
        let step = self.cell_size * T::lit(0.25);
        let mut total = T::zero();
        for w in points.windows(2) {
            let len = w[0].dist(w[1]);
            let n = (len / step).ceil().to_usize().unwrap_or(1).max(1);
            let ds = len / T::from_usize_lossy(n);
            for k in 0..n {
                let t = (T::from_usize_lossy(k) + T::lit(0.5)) / T::from_usize_lossy(n);
                let c = self.cell_of(w[0].lerp(w[1], t)).map_or(T::zero(), |(i, j)| self.cost(i, j));
                total += c * ds;
            }
        }
        total
    }

    /// CSV of `i,j,cost,obstacle`.
    pub fn write_csv(&self, path: &Path) -> Result<(), EnvError> {
        let err = |e: csv::Error| EnvError::Parse { path: path.display().to_string(), msg: e.to_string() };
        let mut wtr = csv::Writer::from_path(path).map_err(err)?;
        wtr.write_record(["i", "j", "cost", "obstacle"]).map_err(err)?;
        for j in 0..self.height {
            for i in 0..self.width {
                let k = j * self.width + i;
                wtr.write_record([i.to_string(), j.to_string(), self.cost[k].to_string(), u8::from(self.obstacle[k]).to_string()])
                    .map_err(err)?;
            }
        }
        wtr.flush().map_err(|e| EnvError::Io { path: path.display().to_string(), source: e })
    }

    /// 8-bit heat rendering: free cells scaled linearly between their min and max cost
    /// into 0..=254, obstacles 255.
    pub fn write_pgm(&self, path: &Path) -> Result<(), EnvError> {
        let free = self.cost.iter().zip(&self.obstacle).filter(|(_, o)| !**o).map(|(c, _)| *c);
        let (lo, hi) = free.fold((T::infinity(), T::neg_infinity()), |(lo, hi), c| (lo.min(c), hi.max(c)));
        let span = if hi > lo { hi - lo } else { T::one() };
        let mut pixels = Vec::with_capacity(self.cost.len());
        for row in (0..self.height).rev() {
            for i in 0..self.width {
                let k = row * self.width + i;
                pixels.push(if self.obstacle[k] {
                    255
                } else {
                    ((self.cost[k] - lo) / span * T::lit(254.0)).round().to_u8().unwrap_or(0)
                });
            }
        }
        crate::env::write_gray_pgm(path, self.width, self.height, &pixels)
    }
}

/// Metric clearance per cell: distance between cell centers minus half a cell, zero on obstacles.
fn clearance_field<T: Real>(obstacle: &[bool], width: usize, height: usize, cell_size: T) -> Vec<T> {
    let sq = squared_distance_transform(obstacle, width, height);
    let half = T::lit(0.5);
    sq.iter()
        .zip(obstacle)
        .map(|(d, o)| {
            if *o {
                T::zero()
            } else if d.is_finite() {
                ((T::lit(*d)).sqrt() - half).max(T::zero()) * cell_size
            } else {
                // no obstacle anywhere
                T::from_usize_lossy(width + height) * cell_size
            }
        })
        .collect()
}

/// Gaussian blur of `values` restricted to cells where `mask` is true, with the
/// kernel renormalized over the unmasked support (normalized convolution).
pub fn masked_gaussian<T: Real>(values: &[T], mask: &[bool], width: usize, height: usize, sigma: T) -> Vec<T> {
    if !(sigma > T::zero()) {
        return values.to_vec();
    }
    let radius = (sigma * T::lit(3.0)).floor().to_usize().unwrap_or(0);
    let kernel: Vec<T> = (0..=2 * radius)
        .map(|k| {
            let x = T::from_usize_lossy(k) - T::from_usize_lossy(radius);
            (-(x * x) / (T::lit(2.0) * sigma * sigma)).exp()
        })
        .collect();
    let weight: Vec<T> = mask.iter().map(|m| if *m { T::one() } else { T::zero() }).collect();
    let num: Vec<T> = values.iter().zip(&weight).map(|(v, w)| *v * *w).collect();
    let blur = |src: &[T]| -> Vec<T> {
        let mut tmp = vec![T::zero(); src.len()];
        for j in 0..height {
            for i in 0..width {
                let mut acc = T::zero();
                for (k, kv) in kernel.iter().enumerate() {
                    let ii = i as isize + k as isize - radius as isize;
                    if ii >= 0 && (ii as usize) < width {
                        acc += *kv * src[j * width + ii as usize];
                    }
                }
                tmp[j * width + i] = acc;
            }
        }
        let mut out = vec![T::zero(); src.len()];
        for j in 0..height {
            for i in 0..width {
                let mut acc = T::zero();
                for (k, kv) in kernel.iter().enumerate() {
                    let jj = j as isize + k as isize - radius as isize;
                    if jj >= 0 && (jj as usize) < height {
                        acc += *kv * tmp[jj as usize * width + i];
                    }
                }
                out[j * width + i] = acc;
            }
        }
        out
    };
    let n = blur(&num);
    let d = blur(&weight);
    values
        .iter()
        .enumerate()
        .map(|(k, v)| if mask[k] && d[k] > T::zero() { n[k] / d[k] } else { *v })
        .collect()
}

/// Build the planning cost map on a dilated grid.
///
/// The wind field is resampled when its resolution differs from the grid's;
/// its physical extent must match to within half a grid cell.
pub fn build_costmap<T: Real>(
    field: Option<&WindField<T>>,
    grid: &OccupancyGrid<T>,
    start: Vec2<T>,
    goal: Vec2<T>,
    params: &CostParams<T>,
    flow_aware: bool,
) -> Result<CostMap<T>, CostError> {
    let (w, h, cs) = (grid.width(), grid.height(), grid.cell_size());
    let g = goal_direction(start, goal, cs)?;
    let obstacle: Vec<bool> = grid.cells().iter().map(|c| *c == crate::env::Cell::Solid).collect();
    let n = w * h;

    let field = match field {
        None => None,
        Some(f) if f.width() == w && f.height() == h && f.cell_size() == cs => Some(f.clone()),
        Some(f) => {
            let fe = (f.cell_size() * T::from_usize_lossy(f.width()), f.cell_size() * T::from_usize_lossy(f.height()));
            let ge = grid.extent();
            if (fe.0 - ge.x).abs() > cs * T::lit(0.5) || (fe.1 - ge.y).abs() > cs * T::lit(0.5) {
                return Err(CostError::DimensionMismatch {
                    field_m: (fe.0.as_f64(), fe.1.as_f64()),
                    grid_m: (ge.x.as_f64(), ge.y.as_f64()),
                });
            }
            Some(f.resample(w, h, cs))
        }
    };

    let (speed_norm, align, s_max) = match &field {
        Some(f) => {
            let s_max = f
                .speed()
                .iter()
                .zip(&obstacle)
                .filter(|(_, o)| !**o)
                .map(|(s, _)| *s)
                .fold(T::zero(), T::max);
            let sn = f.speed().iter().map(|s| if s_max > T::zero() { *s / s_max } else { T::zero() }).collect();
            let al = (0..n).map(|k| alignment(Vec2::new(f.vx()[k], f.vy()[k]), g)).collect();
            (sn, al, s_max)
        }
        None => (vec![T::zero(); n], vec![T::zero(); n], T::zero()),
    };

    let cost = if flow_aware {
        let raw: Vec<T> = (0..n)
            .map(|k| {
                let u = field.as_ref().map_or(Vec2::zero(), |f| Vec2::new(f.vx()[k], f.vy()[k]));
                cell_cost(u, s_max, g, params.weights).max(params.clamp_min).min(params.clamp_max)
            })
            .collect();
        let free: Vec<bool> = obstacle.iter().map(|o| !*o).collect();
        let mut smooth = masked_gaussian(&raw, &free, w, h, params.sigma);
        for (c, o) in smooth.iter_mut().zip(&obstacle) {
            if *o {
                *c = params.c_wall;
            }
        }
        smooth
    } else {
        obstacle.iter().map(|o| if *o { params.c_wall } else { params.base_cost }).collect()
    };

    let clearance = ClearanceMap::new(obstacle.clone(), w, h, cs)?;
    Ok(CostMap {
        width: w,
        height: h,
        cell_size: cs,
        cost,
        obstacle,
        goal_dir: g,
        speed_norm,
        alignment: align,
        clearance,
        against_flow_penalty: params.against_flow_penalty,
    })
}
