//! Wind-aware path planning for small UAVs: lattice-Boltzmann wind estimation,
//! flow-aware cost maps, A* seeding, Bézier refinement, flight replay and
//! robustness metrics.
//!
//! The numerical core is generic over [`num::Real`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`, which the pipeline and CLI use.

pub mod bezier;
pub mod costmap;
pub mod env;
pub mod flightsim;
pub mod lbm;
pub mod metrics;
pub mod num;
pub mod pipeline;
pub mod planner;

pub type Vec2 = num::Vec2<f64>;
pub type OccupancyGrid = env::OccupancyGrid<f64>;
pub type WindSource = env::WindSource<f64>;
pub type Lattice = lbm::Lattice<f64>;
pub type WindField = lbm::WindField<f64>;
pub type CostMap = costmap::CostMap<f64>;
pub type GridPath = planner::GridPath<f64>;
pub type BezierTrajectory = bezier::BezierTrajectory<f64>;
pub type FlightLog = flightsim::FlightLog<f64>;
pub type MetricsReport = metrics::MetricsReport<f64>;
pub type ComparisonReport = metrics::ComparisonReport<f64>;
