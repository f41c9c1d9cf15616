//! A* over the cost map on an 8-connected grid, with the against-flow variant.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::path::Path;

use crate::costmap::CostMap;
use crate::env::EnvError;
use crate::num::{Real, Vec2};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PlanError {
    #[error("{which} cell ({i}, {j}) is an obstacle or outside the grid")]
    StartOrGoalBlocked { which: &'static str, i: usize, j: usize },
    #[error("start and goal lie in different free-space components")]
    NoPath,
}

/// 8-neighborhood offsets; diagonals last.
pub const NEIGHBORS: [(isize, isize); 8] = [(1, 0), (0, 1), (-1, 0), (0, -1), (1, 1), (-1, 1), (-1, -1), (1, -1)];

#[derive(Clone, Debug, PartialEq)]
pub struct GridPath<T> {
    pub cells: Vec<(usize, usize)>,
    /// Accumulated edge cost at each cell.
    pub cumulative: Vec<T>,
    pub total_cost: T,
    pub length_m: T,
}

impl<T: Real> GridPath<T> {
    /// Cell centers in meters.
    pub fn points(&self, cell_size: T) -> Vec<Vec2<T>> {
        self.cells.iter().map(|&(i, j)| crate::env::cell_center(i, j, cell_size)).collect()
    }

    /// CSV of `i,j,x_m,y_m,cumulative_cost`.
    pub fn write_csv(&self, path: &Path, cell_size: T) -> Result<(), EnvError> {
        let err = |e: csv::Error| EnvError::Parse { path: path.display().to_string(), msg: e.to_string() };
        let mut wtr = csv::Writer::from_path(path).map_err(err)?;
        wtr.write_record(["i", "j", "x_m", "y_m", "cumulative_cost"]).map_err(err)?;
        for (&(i, j), c) in self.cells.iter().zip(&self.cumulative) {
            let p = crate::env::cell_center(i, j, cell_size);
            wtr.write_record([i.to_string(), j.to_string(), p.x.to_string(), p.y.to_string(), c.to_string()])
                .map_err(err)?;
        }
        wtr.flush().map_err(|e| EnvError::Io { path: path.display().to_string(), source: e })
    }
}

/// Edge cost between 8-neighbors `a` and `b` (flat indices).
#[inline]
pub fn edge_cost<T: Real>(cm: &CostMap<T>, a: usize, b: usize, diagonal: bool, against_flow: bool) -> T {
    let step = if diagonal { cm.cell_size() * T::SQRT_2() } else { cm.cell_size() };
    let costs = cm.costs();
    let mut c = step * (costs[a] + costs[b]) * T::lit(0.5);
    if against_flow {
        let w = cm.width();
        c = c * (T::one() + cm.against_flow_penalty() * cm.speed_norm(b % w, b / w));
    }
    c
}

/// Per-cell lower bound used by the heuristic.
fn min_cell_cost<T: Real>(cm: &CostMap<T>) -> T {
    let lowest = cm
        .costs()
        .iter()
        .zip(cm.obstacles())
        .filter(|(_, o)| !**o)
        .map(|(c, _)| *c)
        .fold(T::infinity(), T::min);
    T::lit(0.1).min(lowest).max(T::zero())
}

#[derive(Clone, Copy, PartialEq)]
struct Open<T> {
    f: T,
    g: T,
    idx: usize,
}

impl<T: Real> Eq for Open<T> {}

impl<T: Real> Ord for Open<T> {
    // BinaryHeap is a max-heap: smallest f first, then larger g, then smaller index.
    fn cmp(&self, o: &Self) -> Ordering {
        o.f.cmp_total(&self.f).then(self.g.cmp_total(&o.g)).then(o.idx.cmp(&self.idx))
    }
}

impl<T: Real> PartialOrd for Open<T> {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

fn check_cell<T: Real>(cm: &CostMap<T>, c: (usize, usize), which: &'static str) -> Result<usize, PlanError> {
    if c.0 >= cm.width() || c.1 >= cm.height() || cm.is_obstacle(c.0, c.1) {
        return Err(PlanError::StartOrGoalBlocked { which, i: c.0, j: c.1 });
    }
    Ok(c.1 * cm.width() + c.0)
}

/// Minimum-cost 8-connected path. The heuristic is Euclidean distance times the
/// smallest possible cell cost (0.1, or lower if the map holds lower costs).
pub fn astar<T: Real>(
    cm: &CostMap<T>,
    start: (usize, usize),
    goal: (usize, usize),
    against_flow: bool,
) -> Result<GridPath<T>, PlanError> {
    let (w, h) = (cm.width(), cm.height());
    let s = check_cell(cm, start, "start")?;
    let g = check_cell(cm, goal, "goal")?;
    let hmin = min_cell_cost(cm);
    let gp = cm.cell_center(goal.0, goal.1);
    let heur = |k: usize| cm.cell_center(k % w, k / w).dist(gp) * hmin;

    let mut best = vec![T::infinity(); w * h];
    let mut parent = vec![usize::MAX; w * h];
    let mut closed = vec![false; w * h];
    let mut open = BinaryHeap::new();
    best[s] = T::zero();
    open.push(Open { f: heur(s), g: T::zero(), idx: s });
    let obstacles = cm.obstacles();

    while let Some(Open { g: gk, idx, .. }) = open.pop() {
        if closed[idx] || gk > best[idx] {
            continue;
        }
        if idx == g {
            break;
        }
        closed[idx] = true;
        let (i, j) = ((idx % w) as isize, (idx / w) as isize);
        for (q, (di, dj)) in NEIGHBORS.iter().enumerate() {
            let (ni, nj) = (i + di, j + dj);
            if ni < 0 || nj < 0 || ni >= w as isize || nj >= h as isize {
                continue;
            }
            let n = nj as usize * w + ni as usize;
            if obstacles[n] {
                continue;
            }
            let cand = gk + edge_cost(cm, idx, n, q >= 4, against_flow);
            if cand < best[n] {
                best[n] = cand;
                parent[n] = idx;
                // Reopen if needed; keeps optimality even if rounding breaks consistency.
                closed[n] = false;
                open.push(Open { f: cand + heur(n), g: cand, idx: n });
            }
        }
    }
    if !best[g].is_finite() {
        return Err(PlanError::NoPath);
    }
    let mut cells = vec![g];
    while *cells.last().expect("nonempty") != s {
        cells.push(parent[*cells.last().expect("nonempty")]);
    }
    cells.reverse();
    let cumulative: Vec<T> = cells.iter().map(|k| best[*k]).collect();
    let cells: Vec<(usize, usize)> = cells.iter().map(|k| (k % w, k / w)).collect();
    let length_m = crate::num::polyline_length(&cells.iter().map(|&(i, j)| cm.cell_center(i, j)).collect::<Vec<_>>());
    Ok(GridPath { cells, cumulative, total_cost: best[g], length_m })
}

/// Against-flow variant selection: mean goal alignment strictly below the threshold.
pub fn select_variant<T: Real>(mean_alignment: T, threshold: T) -> bool {
    mean_alignment < threshold
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(w: usize, h: usize, c: f64) -> CostMap<f64> {
        CostMap::from_costs(w, h, 0.1, vec![c; w * h], vec![false; w * h]).unwrap()
    }

    #[test]
    fn diagonal_closed_form() {
        let cm = uniform(16, 16, 0.5);
        let p = astar(&cm, (1, 1), (14, 14), false).unwrap();
        let expect = 0.5 * 13.0 * 2f64.sqrt() * 0.1;
        assert!((p.total_cost - expect).abs() < 1e-12);
        assert!(p.cells.iter().all(|&(i, j)| i == j));
        assert_eq!(p.cells.len(), 14);
    }

    #[test]
    fn wall_with_gap() {
        let (w, h) = (20, 20);
        let mut obst = vec![false; w * h];
        for j in 0..h {
            if j != 3 {
                obst[j * w + 10] = true;
            }
        }
        let cm = CostMap::from_costs(w, h, 0.1, vec![1.0; w * h], obst).unwrap();
        let p = astar(&cm, (2, 15), (17, 15), false).unwrap();
        assert!(p.cells.contains(&(10, 3)));
        for pair in p.cells.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            assert!(a.0.abs_diff(b.0) <= 1 && a.1.abs_diff(b.1) <= 1 && a != b);
        }
    }

    #[test]
    fn blocked_and_disconnected() {
        let (w, h) = (8, 8);
        let mut obst = vec![false; w * h];
        for j in 0..h {
            obst[j * w + 4] = true;
        }
        let cm = CostMap::from_costs(w, h, 0.1, vec![1.0; w * h], obst).unwrap();
        assert_eq!(astar(&cm, (1, 1), (6, 6), false).unwrap_err(), PlanError::NoPath);
        assert_eq!(
            astar(&cm, (4, 2), (6, 6), false).unwrap_err(),
            PlanError::StartOrGoalBlocked { which: "start", i: 4, j: 2 }
        );
    }

    #[test]
    fn against_flow_penalty_multiplies_edges() {
        let (w, h) = (6, 3);
        let cm = uniform(w, h, 1.0).with_speed_norm(vec![1.0; w * h]).unwrap();
        let plain = astar(&cm, (0, 1), (5, 1), false).unwrap();
        let af = astar(&cm, (0, 1), (5, 1), true).unwrap();
        assert!((af.total_cost - plain.total_cost * 3.5).abs() < 1e-12);
    }

    #[test]
    fn variant_threshold_is_strict() {
        assert!(select_variant(-1.0, -0.3));
        assert!(!select_variant(1.0, -0.3));
        assert!(!select_variant(-0.3, -0.3));
    }
}
