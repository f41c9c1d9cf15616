//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use windplan::num::Vec2;

/// Plain O(n²) Dijkstra over the 8-connected grid, no heap, no heuristic.
pub fn dijkstra(costs: &[f64], blocked: &[bool], w: usize, h: usize, cs: f64, s: usize, g: usize) -> Option<f64> {
    let n = w * h;
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    dist[s] = 0.0;
    loop {
        let mut k = usize::MAX;
        for c in 0..n {
            if !done[c] && dist[c].is_finite() && (k == usize::MAX || dist[c] < dist[k]) {
                k = c;
            }
        }
        if k == usize::MAX {
            return None;
        }
        if k == g {
            return Some(dist[g]);
        }
        done[k] = true;
        let (i, j) = ((k % w) as i64, (k / w) as i64);
        for di in -1..=1_i64 {
            for dj in -1..=1_i64 {
                if di == 0 && dj == 0 {
                    continue;
                }
                let (ni, nj) = (i + di, j + dj);
                if ni < 0 || nj < 0 || ni >= w as i64 || nj >= h as i64 {
                    continue;
                }
                let m = nj as usize * w + ni as usize;
                if blocked[m] {
                    continue;
                }
                let step = if di != 0 && dj != 0 { cs * std::f64::consts::SQRT_2 } else { cs };
                let d = dist[k] + step * (costs[k] + costs[m]) * 0.5;
                if d < dist[m] {
                    dist[m] = d;
                }
            }
        }
    }
}

/// Minimum over every monotone coupling of the maximum coupled distance,
/// enumerated by exhaustive recursion.
pub fn frechet_brute(a: &[Vec2<f64>], b: &[Vec2<f64>]) -> f64 {
    fn walk(a: &[Vec2<f64>], b: &[Vec2<f64>], i: usize, j: usize, worst: f64, best: &mut f64) {
        let worst = worst.max(a[i].dist(b[j]));
        if i + 1 == a.len() && j + 1 == b.len() {
            *best = best.min(worst);
            return;
        }
        if i + 1 < a.len() {
            walk(a, b, i + 1, j, worst, best);
        }
        if j + 1 < b.len() {
            walk(a, b, i, j + 1, worst, best);
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            walk(a, b, i + 1, j + 1, worst, best);
        }
    }
    let mut best = f64::INFINITY;
    walk(a, b, 0, 0, 0.0, &mut best);
    best
}

fn cross(o: Vec2<f64>, a: Vec2<f64>, b: Vec2<f64>) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Andrew's monotone chain, counter-clockwise, collinear points dropped.
pub fn hull(points: &[Vec2<f64>]) -> Vec<Vec2<f64>> {
    let mut p = points.to_vec();
    p.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let mut h: Vec<Vec2<f64>> = Vec::new();
    for pass in 0..2 {
        let start = h.len();
        let iter: Box<dyn Iterator<Item = &Vec2<f64>>> = if pass == 0 { Box::new(p.iter()) } else { Box::new(p.iter().rev()) };
        for &q in iter {
            while h.len() >= start + 2 && cross(h[h.len() - 2], h[h.len() - 1], q) <= 0.0 {
                h.pop();
            }
            h.push(q);
        }
        h.pop();
    }
    h
}

pub fn inside_hull(h: &[Vec2<f64>], q: Vec2<f64>, tol: f64) -> bool {
    match h.len() {
        0 => false,
        1 => h[0].dist(q) <= tol,
        2 => windplan::num::point_segment_distance(q, h[0], h[1]) <= tol,
        n => (0..n).all(|k| {
            let (a, b) = (h[k], h[(k + 1) % n]);
            cross(a, b, q) / a.dist(b) >= -tol
        }),
    }
}
