//! DBSCAN and k-means over row-major `[N, D]` points.

use alloc::vec;
use alloc::vec::Vec;

use super::hdbscan::relabel;
use crate::rng::Rng;

fn sq_dist(x: &[f64], dim: usize, i: usize, c: &[f64]) -> f64 {
    x[i * dim..(i + 1) * dim]
        .iter()
        .zip(c)
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// `-1` marks noise. A point is core when at least `min_samples` points
/// (itself included) lie within `eps`.
pub fn dbscan(x: &[f64], dim: usize, eps: f64, min_samples: usize) -> Vec<i32> {
    let n = x.len() / dim.max(1);
    let eps2 = eps * eps;
    let neighbours = |i: usize| -> Vec<usize> {
        (0..n)
            .filter(|&j| sq_dist(x, dim, j, &x[i * dim..(i + 1) * dim]) <= eps2)
            .collect()
    };
    let mut raw = vec![usize::MAX; n];
    let mut visited = vec![false; n];
    let mut next = 0;
    for i in 0..n {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        let nb = neighbours(i);
        if nb.len() < min_samples {
            continue;
        }
        raw[i] = next;
        let mut queue = nb;
        let mut q = 0;
        while q < queue.len() {
            let j = queue[q];
            q += 1;
            if raw[j] == usize::MAX {
                raw[j] = next;
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            let nj = neighbours(j);
            if nj.len() >= min_samples {
                queue.extend(nj);
            }
        }
        next += 1;
    }
    relabel(&raw)
}

/// Lloyd's algorithm with k-means++ seeding; `k` is clamped to `N` and
/// empty clusters are dropped from the labels.
pub fn kmeans(x: &[f64], dim: usize, k: usize, seed: u64, max_iter: usize) -> Vec<i32> {
    let n = x.len() / dim.max(1);
    if n == 0 {
        return Vec::new();
    }
    let k = k.clamp(1, n);
    let mut rng = Rng::new(seed);
    let mut centres: Vec<Vec<f64>> = Vec::with_capacity(k);
    centres.push(x[rng.below(n) * dim..][..dim].to_vec());
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x, dim, i, &centres[0])).collect();
    while centres.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total <= 0.0 {
            rng.below(n)
        } else {
            let mut r = rng.uniform() * total;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if r < d {
                    chosen = i;
                    break;
                }
                r -= d;
            }
            chosen
        };
        let c = x[pick * dim..(pick + 1) * dim].to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(x, dim, i, &c));
        }
        centres.push(c);
    }

    let mut assign = vec![0usize; n];
    for it in 0..max_iter.max(1) {
        let mut changed = false;
        for (i, a) in assign.iter_mut().enumerate() {
            let mut best = 0;
            let mut bd = f64::INFINITY;
            for (c, centre) in centres.iter().enumerate() {
                let d = sq_dist(x, dim, i, centre);
                if d < bd {
                    bd = d;
                    best = c;
                }
            }
            if *a != best {
                changed = true;
                *a = best;
            }
        }
        if !changed && it > 0 {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, &a) in assign.iter().enumerate() {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(&x[i * dim..(i + 1) * dim]) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centres[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    relabel(&assign)
}
