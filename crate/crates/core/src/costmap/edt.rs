/// Exact squared Euclidean distance (in cells, between cell centers) from each
/// cell to the nearest `true` cell; `f64::INFINITY` when there is none.
/// Felzenszwalb–Huttenlocher lower-envelope passes along columns then rows.
pub fn squared_distance_transform(sites: &[bool], width: usize, height: usize) -> Vec<f64> {
    let mut grid: Vec<f64> = sites.iter().map(|s| if *s { 0.0 } else { f64::INFINITY }).collect();
    let n = width.max(height);
    let mut f = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    for i in 0..width {
        for j in 0..height {
            f[j] = grid[j * width + i];
        }
        envelope(&f[..height], &mut d[..height], &mut v, &mut z);
        for j in 0..height {
            grid[j * width + i] = d[j];
        }
    }
    for j in 0..height {
        f[..width].copy_from_slice(&grid[j * width..(j + 1) * width]);
        envelope(&f[..width], &mut d[..width], &mut v, &mut z);
        grid[j * width..(j + 1) * width].copy_from_slice(&d[..width]);
    }
    grid
}

fn envelope(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let Some(first) = f.iter().position(|x| x.is_finite()) else {
        d.fill(f64::INFINITY);
        return;
    };
    let mut k = 0usize;
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in first + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        let inter = |p: usize| ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
        let mut s = inter(v[k]);
        // z[0] is -inf, so this stops at k = 0
        while s <= z[k] {
            k -= 1;
            s = inter(v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        *out = dq * dq + f[p];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(sites: &[bool], w: usize, h: usize) -> Vec<f64> {
        (0..w * h)
            .map(|k| {
                let (i, j) = ((k % w) as f64, (k / w) as f64);
                sites
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| **s)
                    .map(|(m, _)| {
                        let (a, b) = ((m % w) as f64, (m / w) as f64);
                        (a - i).powi(2) + (b - j).powi(2)
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    #[test]
    fn single_site() {
        let mut s = vec![false; 25];
        s[12] = true;
        let d = squared_distance_transform(&s, 5, 5);
        assert_eq!(d[0], 8.0);
        assert_eq!(d[13], 1.0);
        assert!(squared_distance_transform(&[false; 16], 4, 4).iter().all(|x| x.is_infinite()));
    }

    proptest! {
        #[test]
        fn matches_brute_force(w in 1usize..12, h in 1usize..12, seed in any::<u64>()) {
            let sites: Vec<bool> = (0..w * h).map(|k| (seed.rotate_left(k as u32 % 64) ^ (k as u64 * 2654435761)) % 7 == 0).collect();
            prop_assert_eq!(squared_distance_transform(&sites, w, h), brute(&sites, w, h));
        }
    }
}
