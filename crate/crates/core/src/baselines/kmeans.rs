use std::time::Instant;

use rand::Rng as _;

use super::{check_k, flatten, ClusteringResult, Method};
use crate::error::Result;
use crate::seed::Rng;
use crate::stimuli::Point;

const MAX_ITERS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub labels: Vec<usize>,
    /// Row-major `k x dim`.
    pub centers: Vec<f64>,
    pub sse: f64,
    /// SSE after every assignment step of the winning restart.
    pub sse_history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn row(data: &[f64], dim: usize, i: usize) -> &[f64] {
    &data[i * dim..(i + 1) * dim]
}

fn plus_plus_seed(data: &[f64], dim: usize, k: usize, rng: &mut Rng) -> Vec<f64> {
    let n = data.len() / dim;
    let mut centers = Vec::with_capacity(k * dim);
    centers.extend_from_slice(row(data, dim, rng.random_range(0..n)));
    let mut best: Vec<f64> = (0..n).map(|i| sq_dist(row(data, dim, i), &centers[..dim])).collect();
    for _ in 1..k {
        let total: f64 = best.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &w) in best.iter().enumerate() {
                if r < w {
                    chosen = i;
                    break;
                }
                r -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = row(data, dim, pick).to_vec();
        for (i, b) in best.iter_mut().enumerate() {
            *b = b.min(sq_dist(row(data, dim, i), &c));
        }
        centers.extend(c);
    }
    centers
}

fn assign(data: &[f64], dim: usize, centers: &[f64], labels: &mut [usize]) -> (bool, f64) {
    let k = centers.len() / dim;
    let mut changed = false;
    let mut sse = 0.0;
    for (i, l) in labels.iter_mut().enumerate() {
        let x = row(data, dim, i);
        let (mut best, mut bd) = (0, f64::INFINITY);
        for c in 0..k {
            let d = sq_dist(x, &centers[c * dim..(c + 1) * dim]);
            if d < bd {
                best = c;
                bd = d;
            }
        }
        changed |= *l != best;
        *l = best;
        sse += bd;
    }
    (changed, sse)
}

fn sse_of(data: &[f64], dim: usize, centers: &[f64], labels: &[usize]) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist(row(data, dim, i), &centers[l * dim..(l + 1) * dim]))
        .sum()
}

fn update_centers(data: &[f64], dim: usize, k: usize, labels: &mut [usize], centers: &mut [f64]) {
    let mut counts = vec![0usize; k];
    let mut sums = vec![0.0; k * dim];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, &v) in sums[l * dim..(l + 1) * dim].iter_mut().zip(row(data, dim, i)) {
            *s += v;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            for d in 0..dim {
                centers[c * dim + d] = sums[c * dim + d] / counts[c] as f64;
            }
        }
    }
    // Empty clusters take over the point farthest from its own center.
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let far = (0..labels.len())
            .filter(|&i| counts[labels[i]] > 1)
            .max_by(|&a, &b| {
                let da = sq_dist(row(data, dim, a), &centers[labels[a] * dim..(labels[a] + 1) * dim]);
                let db = sq_dist(row(data, dim, b), &centers[labels[b] * dim..(labels[b] + 1) * dim]);
                da.total_cmp(&db)
            });
        if let Some(i) = far {
            counts[labels[i]] -= 1;
            labels[i] = c;
            counts[c] = 1;
            centers[c * dim..(c + 1) * dim].copy_from_slice(row(data, dim, i));
        }
    }
}

fn lloyd(data: &[f64], dim: usize, k: usize, rng: &mut Rng) -> KMeansFit {
    let n = data.len() / dim;
    let mut centers = plus_plus_seed(data, dim, k, rng);
    let mut labels = vec![usize::MAX; n];
    let mut history = Vec::new();
    for _ in 0..MAX_ITERS {
        let (changed, sse) = assign(data, dim, &centers, &mut labels);
        history.push(sse);
        if !changed {
            break;
        }
        update_centers(data, dim, k, &mut labels, &mut centers);
    }
    let sse = sse_of(data, dim, &centers, &labels);
    KMeansFit {
        labels,
        centers,
        sse,
        sse_history: history,
    }
}

/// Lloyd's algorithm from k-means++ seeds on row-major `n x dim` data,
/// keeping the restart with the lowest sum of squared errors.
pub fn kmeans_rows(data: &[f64], dim: usize, k: usize, restarts: usize, rng: &mut Rng) -> Result<KMeansFit> {
    check_k(data.len() / dim.max(1), k)?;
    let mut best: Option<KMeansFit> = None;
    for _ in 0..restarts.max(1) {
        let fit = lloyd(data, dim, k, rng);
        if best.as_ref().is_none_or(|b| fit.sse < b.sse) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

pub fn kmeans(points: &[Point], k: usize, restarts: usize, rng: &mut Rng) -> Result<ClusteringResult> {
    let start = Instant::now();
    let fit = kmeans_rows(&flatten(points), 2, k, restarts, rng)?;
    Ok(ClusteringResult::from_raw(&fit.labels, Method::KMeans)
        .with_param("k", k as f64)
        .with_param("restarts", restarts as f64)
        .timed(start))
}
