mod common;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use windplan::costmap::{build_costmap, CostMap, CostParams};
use windplan::env::OccupancyGrid;
use windplan::num::Vec2;
use windplan::planner::{astar, PlanError};

use common::dijkstra;

fn random_free(rng: &mut ChaCha8Rng, blocked: &[bool], w: usize, h: usize) -> (usize, usize) {
    loop {
        let (i, j) = (rng.random_range(0..w), rng.random_range(0..h));
        if !blocked[j * w + i] {
            return (i, j);
        }
    }
}

#[test]
fn astar_matches_dijkstra_on_random_maps() {
    let t = Instant::now();
    let (w, h, cs) = (32, 32, 0.05);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut unreachable = 0;
    for _ in 0..50 {
        let costs: Vec<f64> = (0..w * h).map(|_| rng.random_range(0.1..20.0)).collect();
        let density = rng.random_range(0.0..0.35);
        let blocked: Vec<bool> = (0..w * h).map(|_| rng.random_bool(density)).collect();
        let cm = CostMap::from_costs(w, h, cs, costs.clone(), blocked.clone()).unwrap();
        let s = random_free(&mut rng, &blocked, w, h);
        let g = random_free(&mut rng, &blocked, w, h);
        let oracle = dijkstra(&costs, &blocked, w, h, cs, s.1 * w + s.0, g.1 * w + g.0);
        match (astar(&cm, s, g, false), oracle) {
            (Ok(p), Some(d)) => {
                assert_eq!(p.total_cost, d, "start {s:?} goal {g:?}");
                assert_eq!(p.cells.first(), Some(&s));
                assert_eq!(p.cells.last(), Some(&g));
            }
            (Err(PlanError::NoPath), None) => unreachable += 1,
            (got, want) => panic!("astar {got:?} vs oracle {want:?}"),
        }
    }
    assert!(unreachable < 50);
    assert!(t.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn base_mode_is_euclidean_shortest_path() {
    let (w, h, cs) = (40, 30, 0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let mut grid = OccupancyGrid::new(w, h, cs).unwrap();
        for _ in 0..4 {
            let lo = Vec2::new(rng.random_range(0.5..3.0), rng.random_range(0.5..2.5));
            grid.fill_box(lo, lo + Vec2::new(rng.random_range(0.1..0.8), rng.random_range(0.1..0.8)));
        }
        let blocked: Vec<bool> = (0..w * h).map(|k| grid.is_solid(k % w, k / w)).collect();
        let s = random_free(&mut rng, &blocked, w, h);
        let g = random_free(&mut rng, &blocked, w, h);
        if s == g {
            continue;
        }
        let (ps, pg) = (grid.cell_center(s.0, s.1), grid.cell_center(g.0, g.1));
        let cm = build_costmap(None, &grid, ps, pg, &CostParams::default(), false).unwrap();
        // Geometric 8-connected shortest path: unit costs, so cost = length in meters.
        let length = dijkstra(&vec![1.0; w * h], &blocked, w, h, cs, s.1 * w + s.0, g.1 * w + g.0);
        match (astar(&cm, s, g, false), length) {
            (Ok(p), Some(len)) => {
                assert!((p.total_cost - 0.5 * len).abs() < 1e-12, "{} vs {}", p.total_cost, 0.5 * len);
                assert!((p.length_m - len).abs() < 1e-9);
            }
            (Err(PlanError::NoPath), None) => {}
            (got, want) => panic!("astar {got:?} vs oracle {want:?}"),
        }
    }
}

#[test]
fn base_mode_on_open_grid_is_octile_distance() {
    let (w, h, cs) = (25, 17, 0.2);
    let grid = OccupancyGrid::new(w, h, cs).unwrap();
    for (s, g) in [((0, 0), (24, 16)), ((3, 12), (20, 12)), ((5, 1), (7, 15)), ((24, 0), (0, 9))] {
        let cm = build_costmap(None, &grid, grid.cell_center(s.0, s.1), grid.cell_center(g.0, g.1), &CostParams::default(), false)
            .unwrap();
        let (dx, dy) = ((s.0 as f64 - g.0 as f64).abs(), (s.1 as f64 - g.1 as f64).abs());
        let octile = cs * ((dx - dy).abs() + std::f64::consts::SQRT_2 * dx.min(dy));
        let p = astar(&cm, s, g, false).unwrap();
        assert!((p.total_cost - 0.5 * octile).abs() < 1e-12);
    }
}
