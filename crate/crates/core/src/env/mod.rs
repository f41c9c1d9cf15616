//! Environment ingestion: occupancy grids, height maps, wind sources and
//! the grid preprocessing that runs before the flow solver and planner.
//!
//! Cell `(i, j)` covers `[i·h, (i+1)·h) × [j·h, (j+1)·h)` in meters, with `i`
//! growing east and `j` growing north. File formats (PGM, RLE rows) list the
//! northern row first, like an image.

mod pgm;
mod scenario;

pub(crate) use pgm::write_gray_pgm;
pub use pgm::{read_heightmap_pgm, read_occupancy_pgm, write_occupancy_pgm};
pub use scenario::{
    load_scenario, parse_scenario, save_scenario, scenario_to_json, PipelineParams, Scenario,
};

use crate::num::{Real, Vec2};

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("parse error in {path}: {msg}")]
    Parse { path: String, msg: String },
    #[error("invalid {field}: {msg}")]
    Validation { field: String, msg: String },
    #[error("obstacle dilation swallows the {which} position")]
    DilationSwallowsEndpoint { which: &'static str },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl EnvError {
    pub(crate) fn validation(field: impl Into<String>, msg: impl Into<String>) -> Self {
        EnvError::Validation { field: field.into(), msg: msg.into() }
    }

    pub(crate) fn parse(path: impl Into<String>, msg: impl Into<String>) -> Self {
        EnvError::Parse { path: path.into(), msg: msg.into() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Cell {
    Free,
    Solid,
}

/// Planar occupancy raster.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyGrid<T> {
    width: usize,
    height: usize,
    cell_size: T,
    cells: Vec<Cell>,
}

impl<T: Real> OccupancyGrid<T> {
    /// All-free grid.
    pub fn new(width: usize, height: usize, cell_size: T) -> Result<Self, EnvError> {
        Self::from_cells(width, height, cell_size, vec![Cell::Free; width * height])
    }

    pub fn from_cells(
        width: usize,
        height: usize,
        cell_size: T,
        cells: Vec<Cell>,
    ) -> Result<Self, EnvError> {
        if width < 4 || height < 4 {
            return Err(EnvError::validation(
                "grid",
                format!("grid must be at least 4x4, got {width}x{height}"),
            ));
        }
        if !(cell_size > T::zero()) || !cell_size.is_finite() {
            return Err(EnvError::validation("grid.cell_size", "cell_size must be > 0"));
        }
        if cells.len() != width * height {
            return Err(EnvError::validation(
                "grid.cells",
                format!("expected {} cells, got {}", width * height, cells.len()),
            ));
        }
        Ok(Self { width, height, cell_size, cells })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn cell_size(&self) -> T {
        self.cell_size
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    /// Physical extent `(width, height)` in meters.
    pub fn extent(&self) -> Vec2<T> {
        Vec2::new(
            T::from_usize_lossy(self.width) * self.cell_size,
            T::from_usize_lossy(self.height) * self.cell_size,
        )
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.width + i
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Cell {
        self.cells[self.index(i, j)]
    }

    #[inline]
    pub fn is_solid(&self, i: usize, j: usize) -> bool {
        self.get(i, j) == Cell::Solid
    }

    pub fn set(&mut self, i: usize, j: usize, cell: Cell) {
        let k = self.index(i, j);
        self.cells[k] = cell;
    }

    pub fn solid_count(&self) -> usize {
        self.cells.iter().filter(|c| **c == Cell::Solid).count()
    }

    /// Cell containing a continuous position, if inside the domain.
    pub fn cell_of(&self, p: Vec2<T>) -> Option<(usize, usize)> {
        cell_of(p, self.width, self.height, self.cell_size)
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Vec2<T> {
        cell_center(i, j, self.cell_size)
    }

    /// Mark every cell whose center lies in the axis-aligned box `[lo, hi]` (meters).
    pub fn fill_box(&mut self, lo: Vec2<T>, hi: Vec2<T>) {
        for j in 0..self.height {
            for i in 0..self.width {
                let c = self.cell_center(i, j);
                if c.x >= lo.x && c.x <= hi.x && c.y >= lo.y && c.y <= hi.y {
                    self.set(i, j, Cell::Solid);
                }
            }
        }
    }

    /// Cellwise union of two grids of identical shape.
    pub fn union(&self, other: &Self) -> Result<Self, EnvError> {
        if self.width != other.width || self.height != other.height {
            return Err(EnvError::validation("grid", "union of grids with different shapes"));
        }
        let cells = self
            .cells
            .iter()
            .zip(&other.cells)
            .map(|(a, b)| if *a == Cell::Solid || *b == Cell::Solid { Cell::Solid } else { Cell::Free })
            .collect();
        Ok(Self { cells, ..self.clone() })
    }

    /// Largest bounding-box side (in cells) over the 4-connected solid components.
    pub fn widest_obstacle_cells(&self) -> Option<usize> {
        let mut seen = vec![false; self.cells.len()];
        let mut widest = None;
        let mut stack = Vec::new();
        for start in 0..self.cells.len() {
            if seen[start] || self.cells[start] != Cell::Solid {
                continue;
            }
            seen[start] = true;
            stack.push(start);
            let (mut i0, mut i1, mut j0, mut j1) = (usize::MAX, 0, usize::MAX, 0);
            while let Some(k) = stack.pop() {
                let (i, j) = (k % self.width, k / self.width);
                i0 = i0.min(i);
                i1 = i1.max(i);
                j0 = j0.min(j);
                j1 = j1.max(j);
                let mut push = |ni: usize, nj: usize| {
                    let nk = self.index(ni, nj);
                    if !seen[nk] && self.cells[nk] == Cell::Solid {
                        seen[nk] = true;
                        stack.push(nk);
                    }
                };
                if i > 0 {
                    push(i - 1, j);
                }
                if i + 1 < self.width {
                    push(i + 1, j);
                }
                if j > 0 {
                    push(i, j - 1);
                }
                if j + 1 < self.height {
                    push(i, j + 1);
                }
            }
            let side = (i1 - i0 + 1).max(j1 - j0 + 1);
            widest = Some(widest.map_or(side, |w: usize| w.max(side)));
        }
        widest
    }
}

pub(crate) fn cell_of<T: Real>(
    p: Vec2<T>,
    width: usize,
    height: usize,
    cell_size: T,
) -> Option<(usize, usize)> {
    if !p.is_finite() || p.x < T::zero() || p.y < T::zero() {
        return None;
    }
    let i = (p.x / cell_size).floor().to_usize()?;
    let j = (p.y / cell_size).floor().to_usize()?;
    (i < width && j < height).then_some((i, j))
}

#[inline]
pub(crate) fn cell_center<T: Real>(i: usize, j: usize, cell_size: T) -> Vec2<T> {
    let half = T::lit(0.5);
    Vec2::new(
        (T::from_usize_lossy(i) + half) * cell_size,
        (T::from_usize_lossy(j) + half) * cell_size,
    )
}

/// Planar altitude raster (meters).
#[derive(Clone, Debug, PartialEq)]
pub struct HeightMap<T> {
    width: usize,
    height: usize,
    cell_size: T,
    heights: Vec<T>,
}

impl<T: Real> HeightMap<T> {
    pub fn new(width: usize, height: usize, cell_size: T, heights: Vec<T>) -> Result<Self, EnvError> {
        if heights.len() != width * height {
            return Err(EnvError::validation("heightmap", "heights length != width*height"));
        }
        if let Some(h) = heights.iter().find(|h| !h.is_finite() || **h < T::zero()) {
            return Err(EnvError::validation(
                "heightmap",
                format!("heights must be finite and non-negative, found {h}"),
            ));
        }
        if !(cell_size > T::zero()) {
            return Err(EnvError::validation("heightmap.cell_size", "cell_size must be > 0"));
        }
        Ok(Self { width, height, cell_size, heights })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.heights[j * self.width + i]
    }
}

/// Depth filter: a cell is solid iff its height is at or above `h_min`.
pub fn occupancy_from_heightmap<T: Real>(
    hm: &HeightMap<T>,
    h_min: T,
) -> Result<OccupancyGrid<T>, EnvError> {
    if !(h_min >= T::zero()) {
        return Err(EnvError::validation("h_min", "h_min must be >= 0"));
    }
    let cells = hm
        .heights
        .iter()
        .map(|h| if *h >= h_min { Cell::Solid } else { Cell::Free })
        .collect();
    OccupancyGrid::from_cells(hm.width, hm.height, hm.cell_size, cells)
}

/// Buffer radius in whole cells, `ceil(b / h)` with a small tolerance so that
/// exact multiples are not pushed up by rounding.
pub fn buffer_radius_cells<T: Real>(b: T, cell_size: T) -> usize {
    let q = b / cell_size - T::lit(1e-6);
    if q <= T::zero() {
        0
    } else {
        q.ceil().to_usize().unwrap_or(0)
    }
}

/// Binary dilation with a square (Chebyshev) element of radius `ceil(b / h)`,
/// followed by marking the outermost ring of cells solid.
pub fn dilate_obstacles<T: Real>(grid: &OccupancyGrid<T>, b: T) -> Result<OccupancyGrid<T>, EnvError> {
    if !(b >= T::zero()) {
        return Err(EnvError::validation("b", "buffer must be >= 0"));
    }
    let r = buffer_radius_cells(b, grid.cell_size);
    let (w, h) = (grid.width, grid.height);
    let src: Vec<bool> = grid.cells.iter().map(|c| *c == Cell::Solid).collect();

    // Separable max filter: rows, then columns.
    let mut rows = vec![false; w * h];
    for j in 0..h {
        for i in 0..w {
            let lo = i.saturating_sub(r);
            let hi = (i + r).min(w - 1);
            rows[j * w + i] = (lo..=hi).any(|k| src[j * w + k]);
        }
    }
    let mut out = vec![Cell::Free; w * h];
    for j in 0..h {
        let lo = j.saturating_sub(r);
        let hi = (j + r).min(h - 1);
        for i in 0..w {
            let solid = (lo..=hi).any(|k| rows[k * w + i])
                || i == 0
                || j == 0
                || i == w - 1
                || j == h - 1;
            if solid {
                out[j * w + i] = Cell::Solid;
            }
        }
    }
    OccupancyGrid::from_cells(w, h, grid.cell_size, out)
}

/// Reject endpoints that fall on solid cells of a (dilated) grid.
pub fn check_endpoints<T: Real>(
    dilated: &OccupancyGrid<T>,
    start: Vec2<T>,
    goal: Vec2<T>,
) -> Result<(), EnvError> {
    for (which, p) in [("start", start), ("goal", goal)] {
        match dilated.cell_of(p) {
            Some((i, j)) if !dilated.is_solid(i, j) => {}
            _ => return Err(EnvError::DilationSwallowsEndpoint { which }),
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Side {
    N,
    S,
    E,
    W,
}

impl Side {
    /// Unit normal pointing into the domain.
    pub fn inward_normal<T: Real>(self) -> Vec2<T> {
        let (o, z) = (T::one(), T::zero());
        match self {
            Side::N => Vec2::new(z, -o),
            Side::S => Vec2::new(z, o),
            Side::E => Vec2::new(-o, z),
            Side::W => Vec2::new(o, z),
        }
    }
}

/// Where a wind source injects flow.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SourceRegion {
    /// Contiguous run of boundary cells; `start` counts along x for N/S and along y for E/W.
    Boundary { side: Side, start: usize, length: usize },
    /// Axis-aligned block of interior inlet nodes.
    Rect { i0: usize, j0: usize, w: usize, h: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindSource<T> {
    pub region: SourceRegion,
    /// Unit flow direction.
    pub direction: Vec2<T>,
    /// Meters per second.
    pub speed: T,
}

impl<T: Real> WindSource<T> {
    pub fn validate(&self, width: usize, height: usize) -> Result<(), EnvError> {
        let n = self.direction.norm();
        if !((n - T::one()).abs() <= T::lit(1e-6)) {
            return Err(EnvError::validation("sources.direction", format!("not a unit vector (|d| = {n})")));
        }
        if !(self.speed >= T::zero()) || !self.speed.is_finite() {
            return Err(EnvError::validation("sources.speed", "speed must be finite and >= 0"));
        }
        match self.region {
            SourceRegion::Boundary { side, start, length } => {
                let side_len = match side {
                    Side::N | Side::S => width,
                    Side::E | Side::W => height,
                };
                if length == 0 || start + length > side_len {
                    return Err(EnvError::validation(
                        "sources.start",
                        format!("segment {start}+{length} exceeds side length {side_len}"),
                    ));
                }
                if !(self.direction.dot(side.inward_normal()) > T::zero()) {
                    return Err(EnvError::validation(
                        "sources.direction",
                        format!("direction points out of the domain on side {side:?}"),
                    ));
                }
            }
            SourceRegion::Rect { i0, j0, w, h } => {
                if w == 0 || h == 0 || i0 + w > width || j0 + h > height {
                    return Err(EnvError::validation("sources.rect", "rectangle outside the grid"));
                }
            }
        }
        Ok(())
    }

    /// Grid cells covered by the source.
    pub fn cells(&self, width: usize, height: usize) -> Vec<(usize, usize)> {
        match self.region {
            SourceRegion::Boundary { side, start, length } => (start..start + length)
                .map(|k| match side {
                    Side::N => (k, height - 1),
                    Side::S => (k, 0),
                    Side::E => (width - 1, k),
                    Side::W => (0, k),
                })
                .collect(),
            SourceRegion::Rect { i0, j0, w, h } => (j0..j0 + h)
                .flat_map(|j| (i0..i0 + w).map(move |i| (i, j)))
                .collect(),
        }
    }

    pub fn velocity(&self) -> Vec2<T> {
        self.direction * self.speed
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(w: usize, h: usize) -> OccupancyGrid<f64> {
        OccupancyGrid::new(w, h, 0.01).unwrap()
    }

    #[test]
    fn grid_invariants_enforced() {
        assert!(OccupancyGrid::new(3, 8, 0.1_f64).is_err());
        assert!(OccupancyGrid::new(8, 8, 0.0_f64).is_err());
        assert!(OccupancyGrid::from_cells(4, 4, 0.1_f64, vec![Cell::Free; 15]).is_err());
    }

    #[test]
    fn depth_filter_cases() {
        let hm = HeightMap::new(6, 6, 0.1, vec![0.0; 36]).unwrap();
        assert_eq!(occupancy_from_heightmap(&hm, 0.3).unwrap().solid_count(), 0);

        // 0.25 m lying boxes filtered, 1.0 m box kept.
        let mut h = vec![0.25; 36];
        for j in 2..4 {
            for i in 1..5 {
                h[j * 6 + i] = 1.0;
            }
        }
        let occ = occupancy_from_heightmap(&HeightMap::new(6, 6, 0.1, h).unwrap(), 0.3).unwrap();
        for j in 0..6 {
            for i in 0..6 {
                assert_eq!(occ.is_solid(i, j), (1..5).contains(&i) && (2..4).contains(&j));
            }
        }

        let mut h = vec![0.0; 36];
        h[7] = 0.3;
        let occ = occupancy_from_heightmap(&HeightMap::new(6, 6, 0.1, h).unwrap(), 0.3).unwrap();
        assert!(occ.is_solid(1, 1));
        assert_eq!(occ.solid_count(), 1);
    }

    #[test]
    fn dilation_zero_buffer_adds_ring_only() {
        let mut g = grid(10, 8);
        g.set(4, 4, Cell::Solid);
        let d = dilate_obstacles(&g, 0.0).unwrap();
        for j in 0..8 {
            for i in 0..10 {
                let ring = i == 0 || j == 0 || i == 9 || j == 7;
                assert_eq!(d.is_solid(i, j), ring || (i, j) == (4, 4));
            }
        }
    }

    #[test]
    fn dilation_square_element() {
        let mut g = grid(11, 11);
        g.set(5, 5, Cell::Solid);
        let d = dilate_obstacles(&g, 0.02).unwrap();
        let interior_solid = (1..10)
            .flat_map(|j| (1..10).map(move |i| (i, j)))
            .filter(|&(i, j)| d.is_solid(i, j))
            .count();
        assert_eq!(interior_solid, 25);
        assert!(d.is_solid(3, 3) && d.is_solid(7, 7) && !d.is_solid(2, 5));
    }

    #[test]
    fn buffer_radius_from_meters() {
        assert_eq!(buffer_radius_cells(0.1, 0.01), 10);
        assert_eq!(buffer_radius_cells(0.0, 0.01), 0);
        assert_eq!(buffer_radius_cells(0.015, 0.01), 2);
    }

    #[test]
    fn endpoint_swallowed_by_dilation() {
        let mut g = grid(20, 20);
        g.set(10, 10, Cell::Solid);
        let d = dilate_obstacles(&g, 0.03).unwrap();
        let err = check_endpoints(&d, Vec2::new(0.085, 0.105), Vec2::new(0.155, 0.155)).unwrap_err();
        assert!(matches!(err, EnvError::DilationSwallowsEndpoint { which: "start" }));
        assert!(check_endpoints(&d, Vec2::new(0.035, 0.035), Vec2::new(0.155, 0.155)).is_ok());
    }

    #[test]
    fn source_validation() {
        let west = WindSource {
            region: SourceRegion::Boundary { side: Side::W, start: 0, length: 8 },
            direction: Vec2::new(1.0_f64, 0.0),
            speed: 1.0,
        };
        assert!(west.validate(8, 8).is_ok());
        assert_eq!(west.cells(8, 8).len(), 8);
        let outward = WindSource { direction: Vec2::new(-1.0, 0.0), ..west.clone() };
        assert!(matches!(outward.validate(8, 8), Err(EnvError::Validation { .. })));
        let too_long = WindSource {
            region: SourceRegion::Boundary { side: Side::W, start: 2, length: 8 },
            ..west
        };
        assert!(too_long.validate(8, 8).is_err());
    }

    #[test]
    fn widest_obstacle_component() {
        let mut g = grid(20, 20);
        g.fill_box(Vec2::new(0.02, 0.02), Vec2::new(0.07, 0.04));
        g.set(15, 15, Cell::Solid);
        assert_eq!(g.widest_obstacle_cells(), Some(5));
        assert_eq!(grid(5, 5).widest_obstacle_cells(), None);
    }
}
