//! D2Q9 lattice-Boltzmann solver (single-relaxation-time BGK) producing a
//! steady planar wind field from an occupancy grid and wind sources.
//!
//! Walls use halfway bounce-back, inlets are equilibrium nodes, and open edges
//! not covered by an inlet take velocity and non-equilibrium populations from
//! the inward neighbor while holding the reference density ρ = 1. A plain
//! population copy leaves the outlet pressure undetermined and the interior
//! settles at a velocity below the inlet's.

mod field;
pub mod validation;

pub use field::{FieldIoError, WindField};

use rayon::prelude::*;

use crate::env::{OccupancyGrid, WindSource};
use crate::num::{Real, Vec2};

pub const Q: usize = 9;

/// Lattice velocities: rest, the four axis directions, then the diagonals.
pub const C: [[i32; 2]; Q] = [[0, 0], [1, 0], [0, 1], [-1, 0], [0, -1], [1, 1], [-1, 1], [-1, -1], [1, -1]];

pub const OPPOSITE: [usize; Q] = [0, 3, 4, 1, 2, 7, 8, 5, 6];

const WEIGHTS: [f64; Q] = [
    4.0 / 9.0,
    1.0 / 9.0,
    1.0 / 9.0,
    1.0 / 9.0,
    1.0 / 9.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
];

/// Lattice speed above which the run is declared blown up (lattice sound speed is 1/√3).
pub const BLOWUP_SPEED: f64 = 0.57;

/// Upper bound on the inlet lattice speed for the low-Mach regime.
pub const MAX_INLET_SPEED: f64 = 0.3;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LbmError {
    #[error("no fluid cells in the domain")]
    NoFluidCells,
    #[error("wind source {source_index} overlaps solid cell ({i}, {j})")]
    InletOnSolid { source_index: usize, i: usize, j: usize },
    #[error("relaxation time {tau} outside the stable BGK window (0.5, 2.0]; raise resolution or lower the lattice speed")]
    UnstableTau { tau: f64 },
    #[error("invalid lattice parameter: {0}")]
    InvalidParameter(String),
    #[error("numerical blow-up at step {step} (cell {i}, {j})")]
    NumericalBlowup { step: usize, i: usize, j: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NodeType<T> {
    Fluid,
    Solid,
    /// Equilibrium node held at the given lattice velocity and unit density.
    Inlet(Vec2<T>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeMode {
    /// Zero-gradient outflow on the two edges of this axis.
    Open,
    Periodic,
}

#[inline]
fn weight<T: Real>(q: usize) -> T {
    T::lit(WEIGHTS[q])
}

/// D2Q9 equilibrium populations for density `rho` and lattice velocity `u`.
#[inline]
pub fn equilibrium<T: Real>(rho: T, u: Vec2<T>) -> [T; Q] {
    let three = T::lit(3.0);
    let usq = T::lit(1.5) * u.norm_sq();
    let mut out = [T::zero(); Q];
    for q in 0..Q {
        let cu = T::lit(C[q][0] as f64) * u.x + T::lit(C[q][1] as f64) * u.y;
        out[q] = weight::<T>(q) * rho * (T::one() + three * cu + T::lit(4.5) * cu * cu - usq);
    }
    out
}

/// Density and momentum `(ρ, Σ f c)` of a population vector.
#[inline]
pub fn moments<T: Real>(f: &[T; Q]) -> (T, Vec2<T>) {
    let rho = f[0] + f[1] + f[2] + f[3] + f[4] + f[5] + f[6] + f[7] + f[8];
    let mx = f[1] - f[3] + f[5] - f[6] - f[7] + f[8];
    let my = f[2] - f[4] + f[5] + f[6] - f[7] - f[8];
    (rho, Vec2::new(mx, my))
}

/// Relaxation time for a target Reynolds number: `τ = 3·U·L/Re + ½`.
pub fn reynolds_tau<T: Real>(re: T, u_lat: T, l_lat: T) -> Result<T, LbmError> {
    if !(re > T::zero()) || !(u_lat > T::zero()) || !(l_lat >= T::one()) {
        return Err(LbmError::InvalidParameter(format!(
            "need Re > 0, U > 0, L >= 1 (got Re={re}, U={u_lat}, L={l_lat})"
        )));
    }
    let nu = u_lat * l_lat / re;
    let tau = T::lit(3.0) * nu + T::lit(0.5);
    if tau > T::lit(0.5) && tau <= T::lit(2.0) {
        Ok(tau)
    } else {
        Err(LbmError::UnstableTau { tau: tau.as_f64() })
    }
}

/// Lattice viscosity of a relaxation time.
pub fn viscosity<T: Real>(tau: T) -> T {
    (tau - T::lit(0.5)) / T::lit(3.0)
}

/// Settings that map a physical scenario onto lattice units.
#[derive(Clone, Copy, Debug)]
pub struct LatticeConfig<T> {
    pub re: T,
    /// Lattice speed assigned to the fastest source.
    pub u_lat_max: T,
    /// Reynolds reference length in cells; the widest obstacle when `None`.
    pub ref_length_cells: Option<T>,
    /// Extra factor on the lattice-to-physical speed map.
    pub speed_anchor: T,
}

impl<T: Real> Default for LatticeConfig<T> {
    fn default() -> Self {
        Self { re: T::lit(250.0), u_lat_max: T::lit(0.1), ref_length_cells: None, speed_anchor: T::one() }
    }
}

#[derive(Clone, Debug)]
pub struct Lattice<T> {
    width: usize,
    height: usize,
    node_type: Vec<NodeType<T>>,
    f: Vec<[T; Q]>,
    scratch: Vec<[T; Q]>,
    tau: T,
    u_lat_max: T,
    body_force: Vec2<T>,
    edge_x: EdgeMode,
    edge_y: EdgeMode,
    cell_size: T,
    /// Physical speed (m/s) of one lattice speed unit.
    phys_per_lat: T,
    steps: usize,
    pull: Vec<u32>,
}

impl<T: Real> Lattice<T> {
    /// All-fluid lattice at rest with open edges.
    pub fn new(width: usize, height: usize, tau: T) -> Result<Self, LbmError> {
        if width < 2 || height < 2 || width * height * Q > u32::MAX as usize {
            return Err(LbmError::InvalidParameter("lattice must be at least 2x2 and index in 32 bits".into()));
        }
        if !(tau > T::lit(0.5)) || !tau.is_finite() {
            return Err(LbmError::UnstableTau { tau: tau.as_f64() });
        }
        let rest = equilibrium(T::one(), Vec2::zero());
        Ok(Self {
            width,
            height,
            node_type: vec![NodeType::Fluid; width * height],
            f: vec![rest; width * height],
            scratch: vec![rest; width * height],
            tau,
            u_lat_max: T::lit(0.1),
            body_force: Vec2::zero(),
            edge_x: EdgeMode::Open,
            edge_y: EdgeMode::Open,
            cell_size: T::one(),
            phys_per_lat: T::one(),
            steps: 0,
            pull: Vec::new(),
        })
    }

    pub fn with_edges(mut self, x: EdgeMode, y: EdgeMode) -> Self {
        self.edge_x = x;
        self.edge_y = y;
        self.pull.clear();
        self
    }

    /// Uniform body force per unit volume (lattice units).
    pub fn with_body_force(mut self, force: Vec2<T>) -> Self {
        self.body_force = force;
        self
    }

    pub fn set_node(&mut self, i: usize, j: usize, node: NodeType<T>) {
        let k = j * self.width + i;
        self.node_type[k] = node;
        self.pull.clear();
        if let NodeType::Inlet(u) = node {
            self.f[k] = equilibrium(T::one(), u);
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    pub fn u_lat_max(&self) -> T {
        self.u_lat_max
    }

    pub fn phys_per_lat(&self) -> T {
        self.phys_per_lat
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    pub fn node(&self, i: usize, j: usize) -> NodeType<T> {
        self.node_type[j * self.width + i]
    }

    pub fn populations(&self, i: usize, j: usize) -> &[T; Q] {
        &self.f[j * self.width + i]
    }

    pub fn set_populations(&mut self, i: usize, j: usize, f: [T; Q]) {
        self.f[j * self.width + i] = f;
    }

    /// Density and velocity read-out; velocity includes the half-force shift.
    pub fn macroscopic(&self, i: usize, j: usize) -> (T, Vec2<T>) {
        let (rho, m) = moments(&self.f[j * self.width + i]);
        (rho, (m + self.body_force * T::lit(0.5)) / rho)
    }

    /// Σ ρ over fluid and inlet nodes.
    pub fn total_mass(&self) -> T {
        self.f
            .iter()
            .zip(&self.node_type)
            .filter(|(_, n)| !matches!(n, NodeType::Solid))
            .map(|(f, _)| moments(f).0)
            .sum()
    }

    /// Source index into the flattened populations for every (cell, q) pull,
    /// with bounce-back and periodic wrapping already resolved.
    fn build_pull_table(&mut self) {
        let (w, h) = (self.width, self.height);
        let mut table = vec![0u32; w * h * Q];
        for j in 0..h {
            for i in 0..w {
                let k = j * w + i;
                for q in 0..Q {
                    let own = k * Q + q;
                    table[own] = if matches!(self.node_type[k], NodeType::Solid) {
                        own
                    } else {
                        let si = wrap(i as isize - C[q][0] as isize, w, self.edge_x);
                        let sj = wrap(j as isize - C[q][1] as isize, h, self.edge_y);
                        match (si, sj) {
                            (Some(si), Some(sj)) => {
                                let sk = sj * w + si;
                                if matches!(self.node_type[sk], NodeType::Solid) {
                                    k * Q + OPPOSITE[q]
                                } else {
                                    sk * Q + q
                                }
                            }
                            // Unknown incoming population on an open edge; replaced afterwards.
                            _ => own,
                        }
                    } as u32;
                }
            }
        }
        self.pull = table;
    }

    /// One collide → stream → boundary cycle.
    pub fn step(&mut self) -> Result<(), LbmError> {
        if self.pull.is_empty() {
            self.build_pull_table();
        }
        let w = self.width;
        let omega = T::one() / self.tau;
        let force = self.body_force;
        let forced = force != Vec2::zero();
        let force_pref = T::one() - T::lit(0.5) * omega;
        let blowup_sq = T::lit(BLOWUP_SPEED * BLOWUP_SPEED);
        let nodes = &self.node_type;
        let k = Constants::<T>::new();

        // Collision in place; rows are independent.
        let bad_cell = self
            .f
            .par_chunks_mut(w)
            .enumerate()
            .map(|(j, row)| {
                let mut bad = None;
                for (i, f) in row.iter_mut().enumerate() {
                    match nodes[j * w + i] {
                        NodeType::Solid => {}
                        NodeType::Inlet(u) => *f = equilibrium(T::one(), u),
                        NodeType::Fluid => {
                            let (rho, m) = moments(f);
                            let u = (m + force * k.half) / rho;
                            let usq = u.norm_sq();
                            if !(rho > T::zero()) || !(usq <= blowup_sq) {
                                bad.get_or_insert(i);
                            }
                            collide(f, rho, u, usq, omega, &k);
                            if forced {
                                for q in 0..Q {
                                    let c = Vec2::new(k.cx[q], k.cy[q]);
                                    let cu = c.dot(u);
                                    let term = (c - u) * k.three + c * (k.nine * cu);
                                    f[q] += force_pref * k.w[q] * term.dot(force);
                                }
                            }
                        }
                    }
                }
                bad.map(|i| (i, j))
            })
            .reduce(|| None, |a, b| match (a, b) {
                (Some(x), Some(y)) => Some(if (x.1, x.0) <= (y.1, y.0) { x } else { y }),
                (x, None) => x,
                (None, y) => y,
            });
        if let Some((i, j)) = bad_cell {
            return Err(LbmError::NumericalBlowup { step: self.steps, i, j });
        }

        // Pull streaming into the second buffer.
        let src = self.f.as_flattened();
        let pull = &self.pull;
        self.scratch.as_flattened_mut().par_chunks_mut(w * Q).enumerate().for_each(|(j, row)| {
            let base = j * w * Q;
            for (out, &from) in row.iter_mut().zip(&pull[base..base + w * Q]) {
                *out = src[from as usize];
            }
        });
        std::mem::swap(&mut self.f, &mut self.scratch);

        self.apply_open_edges();
        self.steps += 1;
        Ok(())
    }

    fn apply_open_edges(&mut self) {
        let (w, h) = (self.width, self.height);
        let mut fix = |i: usize, j: usize| {
            let k = j * w + i;
            if !matches!(self.node_type[k], NodeType::Fluid) {
                return;
            }
            let ni = if self.edge_x == EdgeMode::Open && i == 0 {
                1
            } else if self.edge_x == EdgeMode::Open && i == w - 1 {
                w - 2
            } else {
                i
            };
            let nj = if self.edge_y == EdgeMode::Open && j == 0 {
                1
            } else if self.edge_y == EdgeMode::Open && j == h - 1 {
                h - 2
            } else {
                j
            };
            let nk = nj * w + ni;
            if nk != k && matches!(self.node_type[nk], NodeType::Fluid) {
                // Copy velocity and non-equilibrium part; hold the reference density.
                let inner = self.f[nk];
                let (rho, m) = moments(&inner);
                let u = m / rho;
                let pinned = equilibrium(T::one(), u);
                let local = equilibrium(rho, u);
                for q in 0..Q {
                    self.f[k][q] = pinned[q] + inner[q] - local[q];
                }
            }
        };
        if self.edge_x == EdgeMode::Open {
            for j in 0..h {
                fix(0, j);
                fix(w - 1, j);
            }
        }
        if self.edge_y == EdgeMode::Open {
            for i in 0..w {
                fix(i, 0);
                fix(i, h - 1);
            }
        }
    }

    /// Lattice velocity of every cell (zero on solids).
    pub fn velocities(&self) -> Vec<Vec2<T>> {
        (0..self.height)
            .flat_map(|j| (0..self.width).map(move |i| (i, j)))
            .map(|(i, j)| match self.node(i, j) {
                NodeType::Solid => Vec2::zero(),
                _ => self.macroscopic(i, j).1,
            })
            .collect()
    }

    /// Convert the current state to a physical wind field.
    pub fn wind_field(&self) -> WindField<T> {
        let vel = self.velocities();
        let scale = self.phys_per_lat;
        let wall: Vec<bool> = self.node_type.iter().map(|n| matches!(n, NodeType::Solid)).collect();
        let vx = vel.iter().zip(&wall).map(|(v, s)| if *s { T::zero() } else { v.x * scale }).collect();
        let vy = vel.iter().zip(&wall).map(|(v, s)| if *s { T::zero() } else { v.y * scale }).collect();
        WindField::new(self.width, self.height, self.cell_size, vx, vy, wall)
            .expect("lattice dimensions are consistent")
    }
}

/// Lattice constants converted to the scalar type once per step.
struct Constants<T> {
    w: [T; Q],
    cx: [T; Q],
    cy: [T; Q],
    half: T,
    three: T,
    nine: T,
    four_half: T,
    one_half: T,
}

impl<T: Real> Constants<T> {
    fn new() -> Self {
        Self {
            w: std::array::from_fn(weight::<T>),
            cx: std::array::from_fn(|q| T::lit(C[q][0] as f64)),
            cy: std::array::from_fn(|q| T::lit(C[q][1] as f64)),
            half: T::lit(0.5),
            three: T::lit(3.0),
            nine: T::lit(9.0),
            four_half: T::lit(4.5),
            one_half: T::lit(1.5),
        }
    }
}

/// BGK relaxation toward the local equilibrium.
#[inline(always)]
fn collide<T: Real>(f: &mut [T; Q], rho: T, u: Vec2<T>, usq: T, omega: T, k: &Constants<T>) {
    let base = T::one() - k.one_half * usq;
    for q in 0..Q {
        let cu = k.cx[q] * u.x + k.cy[q] * u.y;
        let feq = k.w[q] * rho * (base + cu * (k.three + k.four_half * cu));
        f[q] = f[q] - omega * (f[q] - feq);
    }
}

#[inline]
fn wrap(v: isize, n: usize, mode: EdgeMode) -> Option<usize> {
    if v >= 0 && (v as usize) < n {
        Some(v as usize)
    } else if mode == EdgeMode::Periodic {
        Some(v.rem_euclid(n as isize) as usize)
    } else {
        None
    }
}

/// Assemble the lattice for a scenario: solid nodes from the grid, inlet nodes
/// from the sources scaled so the fastest maps to `u_lat_max`, τ from Re.
pub fn build_lattice<T: Real>(
    grid: &OccupancyGrid<T>,
    sources: &[WindSource<T>],
    config: &LatticeConfig<T>,
) -> Result<Lattice<T>, LbmError> {
    let (w, h) = (grid.width(), grid.height());
    if grid.solid_count() == w * h {
        return Err(LbmError::NoFluidCells);
    }
    if !(config.u_lat_max > T::zero()) || config.u_lat_max > T::lit(MAX_INLET_SPEED) {
        return Err(LbmError::InvalidParameter(format!(
            "u_lat_max must lie in (0, {MAX_INLET_SPEED}]"
        )));
    }
    let ref_len = config.ref_length_cells.unwrap_or_else(|| {
        T::from_usize_lossy(grid.widest_obstacle_cells().unwrap_or_else(|| w.min(h)))
    });
    let tau = reynolds_tau(config.re, config.u_lat_max, ref_len)?;
    let mut lattice = Lattice::new(w, h, tau)?;
    lattice.u_lat_max = config.u_lat_max;
    lattice.cell_size = grid.cell_size();

    for j in 0..h {
        for i in 0..w {
            if grid.is_solid(i, j) {
                lattice.set_node(i, j, NodeType::Solid);
            }
        }
    }

    let v_max = sources.iter().map(|s| s.speed).fold(T::zero(), T::max);
    let lat_per_phys = if v_max > T::zero() { config.u_lat_max / v_max } else { T::zero() };
    lattice.phys_per_lat = if v_max > T::zero() { config.speed_anchor * v_max / config.u_lat_max } else { T::zero() };
    for (idx, s) in sources.iter().enumerate() {
        let u = s.velocity() * lat_per_phys;
        for (i, j) in s.cells(w, h) {
            if grid.is_solid(i, j) {
                return Err(LbmError::InletOnSolid { source_index: idx, i, j });
            }
            lattice.set_node(i, j, NodeType::Inlet(u));
        }
    }
    Ok(lattice)
}

/// Outcome of a steady-state run.
#[derive(Clone, Debug)]
pub struct SteadyRun<T> {
    pub field: WindField<T>,
    pub steps: usize,
    /// `Some(true)` when the convergence check stopped the run early,
    /// `Some(false)` when it was enabled but never satisfied (a warning, not an error).
    pub converged: Option<bool>,
    /// Last measured max-cell velocity change relative to `u_lat_max`.
    pub residual: Option<T>,
}

/// Iterate up to `n_steps`; with `conv_tol > 0`, stop once the max-cell velocity
/// change over `conv_interval` steps, relative to `u_lat_max`, drops below it.
pub fn run_steady<T: Real>(
    lattice: &mut Lattice<T>,
    n_steps: usize,
    conv_tol: T,
    conv_interval: usize,
) -> Result<SteadyRun<T>, LbmError> {
    if n_steps == 0 {
        return Err(LbmError::InvalidParameter("n_steps must be >= 1".into()));
    }
    let check = conv_tol > T::zero() && conv_interval > 0;
    let mut last = check.then(|| lattice.velocities());
    let mut residual = None;
    let mut converged = check.then_some(false);
    let mut done = 0;
    while done < n_steps {
        lattice.step()?;
        done += 1;
        if check && done % conv_interval == 0 {
            let now = lattice.velocities();
            let prev = last.as_ref().expect("snapshot kept when checking");
            let change = now
                .iter()
                .zip(prev)
                .map(|(a, b)| a.dist(*b))
                .fold(T::zero(), T::max)
                / lattice.u_lat_max;
            residual = Some(change);
            last = Some(now);
            if change < conv_tol {
                converged = Some(true);
                break;
            }
        }
    }
    Ok(SteadyRun { field: lattice.wind_field(), steps: done, converged, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Side, SourceRegion};

    fn west_inlet(len: usize, speed: f64) -> WindSource<f64> {
        WindSource {
            region: SourceRegion::Boundary { side: Side::W, start: 0, length: len },
            direction: Vec2::new(1.0, 0.0),
            speed,
        }
    }

    #[test]
    fn rest_equilibrium_is_weights() {
        let f = equilibrium(1.0_f64, Vec2::zero());
        let expect: [f64; Q] = [4.0 / 9.0, 1.0 / 9.0, 1.0 / 9.0, 1.0 / 9.0, 1.0 / 9.0, 1.0 / 36.0, 1.0 / 36.0, 1.0 / 36.0, 1.0 / 36.0];
        for q in 0..Q {
            assert!((f[q] - expect[q]).abs() < 1e-15);
        }
    }

    #[test]
    fn equilibrium_plus_x_population() {
        // (1/9)(1 + 0.3 + 0.045 - 0.015)
        let f = equilibrium(1.0_f64, Vec2::new(0.1, 0.0));
        assert!((f[1] - 0.147_777_777_777_777_8).abs() < 1e-12);
    }

    #[test]
    fn equilibrium_moment_identities() {
        for &(rho, ux, uy) in &[(1.0, 0.0, 0.0), (0.9, 0.1, -0.05), (1.3, -0.2, 0.25), (2.0, 0.0, 0.3_f64)] {
            let u = Vec2::new(ux, uy);
            let (r, m) = moments(&equilibrium(rho, u));
            assert!((r - rho).abs() < 1e-14);
            assert!((m - u * rho).norm() < 1e-14);
        }
    }

    #[test]
    fn moments_match_direct_summation() {
        let f = [0.3, 0.1, 0.12, 0.09, 0.11, 0.02, 0.03, 0.025, 0.035_f64];
        let (rho, m) = moments(&f);
        let mut direct = (0.0, 0.0, 0.0);
        for q in 0..Q {
            direct.0 += f[q];
            direct.1 += f[q] * C[q][0] as f64;
            direct.2 += f[q] * C[q][1] as f64;
        }
        assert!((rho - direct.0).abs() < 1e-15);
        assert!((m.x - direct.1).abs() < 1e-15 && (m.y - direct.2).abs() < 1e-15);
    }

    #[test]
    fn tau_from_reynolds() {
        assert!((reynolds_tau(250.0, 0.1, 40.0).unwrap() - 0.548_f64).abs() < 1e-12);
        assert!((reynolds_tau(10.0, 0.1, 4.0).unwrap() - 0.62_f64).abs() < 1e-12);
        // ν = 1/6 ⇔ τ = 1 ⇔ Re = 6·U·L
        assert!((reynolds_tau(6.0 * 0.1 * 20.0, 0.1, 20.0).unwrap() - 1.0_f64).abs() < 1e-12);
        assert!(matches!(reynolds_tau(0.1, 0.1, 40.0_f64), Err(LbmError::UnstableTau { .. })));
        assert!(reynolds_tau(-1.0, 0.1, 40.0_f64).is_err());
    }

    #[test]
    fn inlet_scaling_single_and_pair() {
        let grid = OccupancyGrid::new(32, 32, 0.1_f64).unwrap();
        let lat = build_lattice(&grid, &[west_inlet(32, 1.0)], &LatticeConfig::default()).unwrap();
        for j in 1..31 {
            assert_eq!(lat.node(0, j), NodeType::Inlet(Vec2::new(0.1, 0.0)));
        }
        assert_eq!(lat.node(1, 5), NodeType::Fluid);

        let a = WindSource { region: SourceRegion::Boundary { side: Side::W, start: 2, length: 4 }, ..west_inlet(1, 2.0) };
        let b = WindSource { region: SourceRegion::Boundary { side: Side::W, start: 10, length: 4 }, ..west_inlet(1, 4.0) };
        let lat = build_lattice(&grid, &[a, b], &LatticeConfig::default()).unwrap();
        assert_eq!(lat.node(0, 3), NodeType::Inlet(Vec2::new(0.05, 0.0)));
        assert_eq!(lat.node(0, 11), NodeType::Inlet(Vec2::new(0.1, 0.0)));
        assert!((lat.phys_per_lat() - 40.0).abs() < 1e-12);
    }

    #[test]
    fn derived_tau_for_obstacle_width() {
        let mut grid = OccupancyGrid::new(120, 80, 0.01_f64).unwrap();
        grid.fill_box(Vec2::new(0.4, 0.2), Vec2::new(0.8, 0.3));
        assert_eq!(grid.widest_obstacle_cells(), Some(40));
        let lat = build_lattice(&grid, &[west_inlet(80, 1.0)], &LatticeConfig::default()).unwrap();
        assert!((lat.tau() - 0.548).abs() < 1e-12);
    }

    #[test]
    fn build_errors() {
        let mut grid = OccupancyGrid::new(8, 8, 0.1_f64).unwrap();
        grid.set(0, 3, crate::env::Cell::Solid);
        let err = build_lattice(&grid, &[west_inlet(8, 1.0)], &LatticeConfig::default()).unwrap_err();
        assert_eq!(err, LbmError::InletOnSolid { source_index: 0, i: 0, j: 3 });
        grid.fill_box(Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0));
        assert_eq!(build_lattice(&grid, &[], &LatticeConfig::default()).unwrap_err(), LbmError::NoFluidCells);
    }

    #[test]
    fn periodic_equilibrium_is_fixed_point() {
        let mut lat = Lattice::new(12, 10, 0.8_f64).unwrap().with_edges(EdgeMode::Periodic, EdgeMode::Periodic);
        let feq = equilibrium(1.02, Vec2::new(0.05, -0.03));
        for j in 0..10 {
            for i in 0..12 {
                lat.set_populations(i, j, feq);
            }
        }
        for _ in 0..50 {
            lat.step().unwrap();
        }
        for j in 0..10 {
            for i in 0..12 {
                let f = lat.populations(i, j);
                for q in 0..Q {
                    assert!((f[q] - feq[q]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn first_step_is_local_to_inlet() {
        let grid = OccupancyGrid::new(16, 16, 0.1_f64).unwrap();
        let src = WindSource { region: SourceRegion::Boundary { side: Side::W, start: 6, length: 4 }, ..west_inlet(1, 1.0) };
        let mut lat = build_lattice(&grid, &[src], &LatticeConfig::default()).unwrap();
        lat.step().unwrap();
        for j in 0..16 {
            for i in 0..16 {
                let (_, m) = moments(lat.populations(i, j));
                let near = i <= 1 && (5..=10).contains(&j);
                if !near {
                    assert!(m.norm() < 1e-15, "momentum at ({i},{j})");
                }
            }
        }
        let (_, m) = moments(lat.populations(1, 7));
        assert!(m.x > 0.0);
    }

    #[test]
    fn blowup_is_reported() {
        let mut lat = Lattice::new(8, 8, 0.9_f64).unwrap();
        lat.set_populations(3, 3, [f64::NAN; Q]);
        assert!(matches!(lat.step(), Err(LbmError::NumericalBlowup { step: 0, i: 3, j: 3 })));
    }
}
