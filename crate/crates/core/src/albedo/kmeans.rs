//! Lloyd's k-means with k-means++ seeding, plus an exact 1-D partitioner.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 300;
pub const CONVERGENCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<[f64; 3]>,
    pub assignments: Vec<usize>,
    pub sizes: Vec<usize>,
    /// Sum of squared distances after each assignment step.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
}

#[inline]
pub fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

/// Index of the nearest centroid; ties go to the lower index.
#[inline]
pub fn nearest(centroids: &[[f64; 3]], p: &[f64; 3]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = dist2(c, p);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn plus_plus_seed(points: &[[f64; 3]], k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())]);
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[pick];
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(dist2(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Cluster `points` into `k` groups. Empty clusters keep their previous
/// centroid.
pub fn kmeans(points: &[[f64; 3]], k: usize, seed: u64) -> Result<KMeans> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be positive".into()));
    }
    if points.len() < k {
        return Err(Error::TooFewPixels {
            needed: k,
            got: points.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_seed(points, k, &mut rng);
    let mut assignments = vec![0usize; points.len()];
    let mut history = Vec::new();
    let mut iterations = 0;

    loop {
        let mut objective = 0.0;
        for (a, p) in assignments.iter_mut().zip(points) {
            let (i, d) = nearest(&centroids, p);
            *a = i;
            objective += d;
        }
        history.push(objective);
        iterations += 1;

        let mut sums = vec![[0.0; 3]; k];
        let mut counts = vec![0usize; k];
        for (&a, p) in assignments.iter().zip(points) {
            counts[a] += 1;
            for c in 0..3 {
                sums[a][c] += p[c];
            }
        }
        let mut movement = 0.0f64;
        for j in 0..k {
            if counts[j] == 0 {
                continue;
            }
            let n = counts[j] as f64;
            let next = sums[j].map(|s| s / n);
            movement = movement.max(libm::sqrt(dist2(&next, &centroids[j])));
            centroids[j] = next;
        }
        if movement < CONVERGENCE || iterations >= MAX_ITERATIONS {
            break;
        }
    }

    // final assignment against the settled centroids
    let mut sizes = vec![0usize; k];
    for (a, p) in assignments.iter_mut().zip(points) {
        *a = nearest(&centroids, p).0;
        sizes[*a] += 1;
    }
    Ok(KMeans {
        centroids,
        assignments,
        sizes,
        objective_history: history,
        iterations,
    })
}

/// Optimal partition of sorted 1-D values into `groups` contiguous runs
/// minimising weighted within-group squared deviation. Returns the group
/// index of every value.
pub fn partition_sorted_1d(values: &[f64], weights: &[f64], groups: usize) -> Result<Vec<usize>> {
    let n = values.len();
    if groups == 0 || n < groups || weights.len() != n {
        return Err(Error::InvalidParameter(alloc::format!(
            "cannot split {n} values into {groups} groups"
        )));
    }
    // prefix sums for O(1) segment cost
    let mut sw = vec![0.0; n + 1];
    let mut swx = vec![0.0; n + 1];
    let mut swxx = vec![0.0; n + 1];
    for i in 0..n {
        sw[i + 1] = sw[i] + weights[i];
        swx[i + 1] = swx[i] + weights[i] * values[i];
        swxx[i + 1] = swxx[i] + weights[i] * values[i] * values[i];
    }
    let cost = |i: usize, j: usize| -> f64 {
        let w = sw[j] - sw[i];
        if w <= 0.0 {
            return 0.0;
        }
        let s = swx[j] - swx[i];
        ((swxx[j] - swxx[i]) - s * s / w).max(0.0)
    };

    // best[g][j]: cost of splitting the first j values into g + 1 groups
    let mut best = vec![vec![f64::INFINITY; n + 1]; groups];
    let mut cut = vec![vec![0usize; n + 1]; groups];
    for j in 1..=n {
        best[0][j] = cost(0, j);
    }
    for g in 1..groups {
        for j in (g + 1)..=n {
            for i in g..j {
                let c = best[g - 1][i] + cost(i, j);
                if c < best[g][j] {
                    best[g][j] = c;
                    cut[g][j] = i;
                }
            }
        }
    }
    let mut labels = vec![0usize; n];
    let mut end = n;
    for g in (0..groups).rev() {
        let start = if g == 0 { 0 } else { cut[g][end] };
        for l in &mut labels[start..end] {
            *l = g;
        }
        end = start;
    }
    Ok(labels)
}
