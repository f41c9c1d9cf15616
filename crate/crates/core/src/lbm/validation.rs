//! Analytic checks of the solver: force-driven Poiseuille flow and uniform inlet advection.

use super::{build_lattice, run_steady, viscosity, EdgeMode, Lattice, LatticeConfig, LbmError, NodeType};
use crate::env::{OccupancyGrid, Side, SourceRegion, WindSource};
use crate::num::{Real, Vec2};

#[derive(Clone, Debug, serde::Serialize)]
pub struct PoiseuilleReport {
    pub width: usize,
    pub height: usize,
    pub tau: f64,
    pub u_max_analytic: f64,
    pub rel_l2_error: f64,
    pub steps: usize,
}

/// Periodic channel with solid top and bottom rows driven by a body force.
///
/// Halfway bounce-back puts the walls half a cell inside the solid rows, so the
/// fluid width is `height - 2` and the profile is centered at `(height - 1) / 2`.
pub fn poiseuille<T: Real>(width: usize, height: usize, tau: T, u_max: T, max_steps: usize) -> Result<PoiseuilleReport, LbmError> {
    let channel = T::from_usize_lossy(height - 2);
    let nu = viscosity(tau);
    let force = T::lit(8.0) * nu * u_max / (channel * channel);
    let mut lat = Lattice::new(width, height, tau)?
        .with_edges(EdgeMode::Periodic, EdgeMode::Periodic)
        .with_body_force(Vec2::new(force, T::zero()));
    for i in 0..width {
        lat.set_node(i, 0, NodeType::Solid);
        lat.set_node(i, height - 1, NodeType::Solid);
    }
    lat.u_lat_max = u_max;
    let run = run_steady(&mut lat, max_steps, T::lit(1e-7), 500)?;
    let center = T::from_usize_lossy(height - 1) * T::lit(0.5);
    let half = channel * T::lit(0.5);
    let i = width / 2;
    let (mut num, mut den) = (T::zero(), T::zero());
    for j in 1..height - 1 {
        let r = (T::from_usize_lossy(j) - center) / half;
        let exact = u_max * (T::one() - r * r);
        let got = lat.macroscopic(i, j).1.x;
        num += (got - exact) * (got - exact);
        den += exact * exact;
    }
    Ok(PoiseuilleReport {
        width,
        height,
        tau: tau.as_f64(),
        u_max_analytic: u_max.as_f64(),
        rel_l2_error: (num / den).sqrt().as_f64(),
        steps: run.steps,
    })
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct UniformInletReport {
    pub width: usize,
    pub height: usize,
    pub inlet_speed: f64,
    /// Largest deviation of any interior cell from the inlet velocity, m/s.
    pub max_abs_error: f64,
    pub steps: usize,
}

/// Empty domain with the whole west edge as an inlet; the interior should carry the inlet velocity.
pub fn uniform_inlet<T: Real>(width: usize, height: usize, speed: T, steps: usize) -> Result<UniformInletReport, LbmError> {
    let grid = OccupancyGrid::new(width, height, T::lit(0.01)).map_err(|e| LbmError::InvalidParameter(e.to_string()))?;
    let src = WindSource {
        region: SourceRegion::Boundary { side: Side::W, start: 0, length: height },
        direction: Vec2::new(T::one(), T::zero()),
        speed,
    };
    let config = LatticeConfig { re: T::lit(250.0), u_lat_max: T::lit(0.1), ref_length_cells: Some(T::lit(40.0)), speed_anchor: T::one() };
    let mut lat = build_lattice(&grid, &[src], &config)?;
    let run = run_steady(&mut lat, steps, T::zero(), 0)?;
    let target = Vec2::new(speed, T::zero());
    let mut err = T::zero();
    for j in 1..height - 1 {
        for i in 1..width - 1 {
            err = err.max(run.field.velocity(i, j).dist(target));
        }
    }
    Ok(UniformInletReport { width, height, inlet_speed: speed.as_f64(), max_abs_error: err.as_f64(), steps: run.steps })
}
