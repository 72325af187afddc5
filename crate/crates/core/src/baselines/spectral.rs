//! Graph-based baselines: Ng-Jordan-Weiss spectral clustering and
//! recursive Shi-Malik normalized cuts, both on a Gaussian affinity graph.

use std::collections::VecDeque;
use std::time::Instant;

use super::kmeans::kmeans_rows;
use super::linalg::symmetric_eigen;
use super::{check_k, median_pairwise_distance, ClusteringResult, Method};
use crate::error::{CoreError, Result};
use crate::seed::Rng;
use crate::stimuli::Point;

/// Affinities below this count as missing edges when looking for
/// connected components.
const EDGE_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaRule {
    Fixed(f64),
    /// `factor * median pairwise distance`.
    MedianHeuristic(f64),
}

/// Kernel `exp(-d^2 / 2 sigma^2)` bandwidth selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffinityParams {
    pub sigma: SigmaRule,
}

impl Default for AffinityParams {
    fn default() -> Self {
        Self {
            sigma: SigmaRule::MedianHeuristic(0.15),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralParams {
    pub affinity: AffinityParams,
    /// Larger inputs are clustered on a uniform subsample and the labels
    /// propagated to the rest by nearest sampled neighbour.
    pub max_points: usize,
    pub kmeans_restarts: usize,
}

impl Default for SpectralParams {
    fn default() -> Self {
        Self {
            affinity: AffinityParams::default(),
            max_points: 1500,
            kmeans_restarts: 10,
        }
    }
}

pub fn resolve_sigma(points: &[Point], params: &AffinityParams) -> Result<f64> {
    let sigma = match params.sigma {
        SigmaRule::Fixed(s) => s,
        SigmaRule::MedianHeuristic(f) => f * median_pairwise_distance(points),
    };
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(CoreError::InvalidInput(format!("affinity bandwidth {sigma} must be positive")));
    }
    Ok(sigma)
}

/// Dense Gaussian affinity matrix with a zero diagonal.
pub fn affinity_matrix(points: &[Point], sigma: f64) -> Vec<f64> {
    let n = points.len();
    let denom = 2.0 * sigma * sigma;
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = (-points[i].dist2(&points[j]) / denom).exp();
            w[i * n + j] = v;
            w[j * n + i] = v;
        }
    }
    w
}

fn degrees(w: &[f64], n: usize) -> Vec<f64> {
    (0..n).map(|i| w[i * n..(i + 1) * n].iter().sum()).collect()
}

/// `D^{-1/2} W D^{-1/2}`; callers must drop zero-degree nodes first.
fn normalized_affinity(w: &[f64], d: &[f64]) -> Vec<f64> {
    let n = d.len();
    let inv: Vec<f64> = d.iter().map(|&v| 1.0 / v.sqrt()).collect();
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = inv[i] * w[i * n + j] * inv[j];
        }
    }
    m
}

fn submatrix(w: &[f64], n: usize, idx: &[usize]) -> Vec<f64> {
    let m = idx.len();
    let mut out = vec![0.0; m * m];
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            out[a * m + b] = w[i * n + j];
        }
    }
    out
}

fn nearest_among(points: &[Point], from: usize, candidates: &[usize]) -> usize {
    *candidates
        .iter()
        .min_by(|&&a, &&b| points[from].dist2(&points[a]).total_cmp(&points[from].dist2(&points[b])))
        .expect("non-empty candidates")
}

/// Runs `cluster` on at most `max_points` uniformly chosen points and gives
/// every other point the label of its nearest chosen neighbour.
fn with_subsample(
    points: &[Point],
    max_points: usize,
    rng: &mut Rng,
    cluster: impl FnOnce(&[Point], &mut Rng) -> Result<Vec<usize>>,
) -> Result<Vec<usize>> {
    if points.len() <= max_points.max(2) {
        return cluster(points, rng);
    }
    let mut keep: Vec<usize> = rand::seq::index::sample(rng, points.len(), max_points).into_vec();
    keep.sort_unstable();
    let sub: Vec<Point> = keep.iter().map(|&i| points[i]).collect();
    let sub_labels = cluster(&sub, rng)?;
    let local: Vec<usize> = (0..keep.len()).collect();
    Ok(points
        .iter()
        .map(|p| {
            let j = *local
                .iter()
                .min_by(|&&a, &&b| p.dist2(&sub[a]).total_cmp(&p.dist2(&sub[b])))
                .expect("non-empty subsample");
            sub_labels[j]
        })
        .collect())
}

fn njw_labels(points: &[Point], k: usize, sigma: f64, restarts: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    let n = points.len();
    if k == 1 {
        return Ok(vec![0; n]);
    }
    let w = affinity_matrix(points, sigma);
    let d = degrees(&w, n);
    let active: Vec<usize> = (0..n).filter(|&i| d[i] > EDGE_EPS).collect();
    if active.len() < k {
        return Ok(kmeans_rows(&super::flatten(points), 2, k, restarts, rng)?.labels);
    }
    let sub_w = submatrix(&w, n, &active);
    let sub_d: Vec<f64> = active.iter().map(|&i| d[i]).collect();
    let eig = symmetric_eigen(&normalized_affinity(&sub_w, &sub_d), active.len());
    let m = active.len();
    let mut rows = vec![0.0; m * k];
    for r in 0..m {
        for c in 0..k {
            rows[r * k + c] = eig.vectors[r * m + c];
        }
        let norm = rows[r * k..(r + 1) * k].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            rows[r * k..(r + 1) * k].iter_mut().for_each(|v| *v /= norm);
        }
    }
    let fit = kmeans_rows(&rows, k, k, restarts, rng)?;
    let mut labels = vec![usize::MAX; n];
    for (a, &i) in active.iter().enumerate() {
        labels[i] = fit.labels[a];
    }
    for i in 0..n {
        if labels[i] == usize::MAX {
            labels[i] = labels[nearest_among(points, i, &active)];
        }
    }
    Ok(labels)
}

/// NJW: top-`k` eigenvectors of `D^{-1/2} W D^{-1/2}`, rows scaled to unit
/// length, then k-means on the rows. Isolated points inherit the label of
/// their nearest connected neighbour.
pub fn spectral_njw(points: &[Point], k: usize, params: &SpectralParams, rng: &mut Rng) -> Result<ClusteringResult> {
    let start = Instant::now();
    check_k(points.len(), k)?;
    let sigma = resolve_sigma(points, &params.affinity)?;
    let labels = with_subsample(points, params.max_points, rng, |pts, rng| {
        njw_labels(pts, k, sigma, params.kmeans_restarts, rng)
    })?;
    Ok(ClusteringResult::from_raw(&labels, Method::Njw)
        .with_param("k", k as f64)
        .with_param("sigma", sigma)
        .timed(start))
}

/// `cut(A,B)/assoc(A,V) + cut(A,B)/assoc(B,V)` for the split given by
/// `in_a` over a dense affinity matrix.
pub fn ncut_value(w: &[f64], n: usize, in_a: &[bool]) -> f64 {
    let (mut cut, mut assoc_a, mut assoc_b) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let v = w[i * n + j];
            if in_a[i] {
                assoc_a += v;
            } else {
                assoc_b += v;
            }
            if in_a[i] && !in_a[j] {
                cut += v;
            }
        }
    }
    if assoc_a == 0.0 || assoc_b == 0.0 {
        return f64::INFINITY;
    }
    cut / assoc_a + cut / assoc_b
}

/// Connected components of the thresholded graph restricted to `idx`.
fn components(w: &[f64], n: usize, idx: &[usize]) -> Vec<Vec<usize>> {
    let mut seen = vec![false; idx.len()];
    let mut out = Vec::new();
    for s in 0..idx.len() {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut comp = vec![idx[s]];
        let mut queue = VecDeque::from([s]);
        while let Some(a) = queue.pop_front() {
            for b in 0..idx.len() {
                if !seen[b] && w[idx[a] * n + idx[b]] > EDGE_EPS {
                    seen[b] = true;
                    comp.push(idx[b]);
                    queue.push_back(b);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Two-way split of a connected part along the second generalized
/// eigenvector of `(D - W) x = lambda D x`, thresholded where the normalized
/// cut is smallest.
fn bipartition(w: &[f64], n: usize, part: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let comps = components(w, n, part);
    if comps.len() > 1 {
        let first = comps[0].clone();
        let rest: Vec<usize> = comps[1..].concat();
        return (first, rest);
    }
    let m = part.len();
    let sub = submatrix(w, n, part);
    let d = degrees(&sub, m);
    let eig = symmetric_eigen(&normalized_affinity(&sub, &d), m);
    // second largest eigenvalue of D^-1/2 W D^-1/2 = second smallest lambda
    let x: Vec<f64> = (0..m).map(|i| eig.vectors[i * m + 1] / d[i].sqrt()).collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));

    let total: f64 = d.iter().sum();
    let mut in_a = vec![false; m];
    let (mut cut, mut assoc_a) = (0.0, 0.0);
    let (mut best, mut best_t) = (f64::INFINITY, 1);
    for t in 0..m - 1 {
        let u = order[t];
        let (mut to_a, mut to_b) = (0.0, 0.0);
        for j in 0..m {
            if j == u {
                continue;
            }
            if in_a[j] {
                to_a += sub[u * m + j];
            } else {
                to_b += sub[u * m + j];
            }
        }
        cut += to_b - to_a;
        assoc_a += d[u];
        in_a[u] = true;
        let assoc_b = total - assoc_a;
        // only thresholds between distinct eigenvector values
        if x[order[t + 1]] == x[u] || assoc_a <= 0.0 || assoc_b <= 0.0 {
            continue;
        }
        let value = cut / assoc_a + cut / assoc_b;
        if value < best {
            best = value;
            best_t = t + 1;
        }
    }
    let mut a: Vec<usize> = order[..best_t].iter().map(|&i| part[i]).collect();
    let mut b: Vec<usize> = order[best_t..].iter().map(|&i| part[i]).collect();
    a.sort_unstable();
    b.sort_unstable();
    (a, b)
}

fn min_distance(points: &[Point], a: &[usize], b: &[usize]) -> f64 {
    a.iter()
        .flat_map(|&i| b.iter().map(move |&j| (i, j)))
        .map(|(i, j)| points[i].dist2(&points[j]))
        .fold(f64::INFINITY, f64::min)
}

fn ncut_labels(points: &[Point], k: usize, sigma: f64) -> Vec<usize> {
    let n = points.len();
    let w = affinity_matrix(points, sigma);
    let all: Vec<usize> = (0..n).collect();
    let mut parts = components(&w, n, &all);
    // too many components: fold the smallest into its closest neighbour
    while parts.len() > k {
        let (small, _) = parts.iter().enumerate().min_by_key(|(i, p)| (p.len(), *i)).expect("parts");
        let victim = parts.remove(small);
        let target = (0..parts.len())
            .min_by(|&a, &b| min_distance(points, &victim, &parts[a]).total_cmp(&min_distance(points, &victim, &parts[b])))
            .expect("parts remain");
        parts[target].extend(victim);
        parts[target].sort_unstable();
    }
    while parts.len() < k {
        let (largest, _) = parts
            .iter()
            .enumerate()
            .max_by(|(i, a), (j, b)| a.len().cmp(&b.len()).then(j.cmp(i)))
            .expect("parts");
        if parts[largest].len() < 2 {
            break;
        }
        let part = parts.remove(largest);
        let (a, b) = bipartition(&w, n, &part);
        parts.insert(largest, b);
        parts.insert(largest, a);
    }
    let mut labels = vec![0; n];
    for (l, p) in parts.iter().enumerate() {
        for &i in p {
            labels[i] = l;
        }
    }
    labels
}

/// Recursive normalized cuts: connected components first, then repeatedly
/// bipartition the part with the most points until `k` parts exist.
pub fn normalized_cut(points: &[Point], k: usize, params: &SpectralParams, rng: &mut Rng) -> Result<ClusteringResult> {
    let start = Instant::now();
    check_k(points.len(), k)?;
    let sigma = resolve_sigma(points, &params.affinity)?;
    let labels = with_subsample(points, params.max_points, rng, |pts, _| Ok(ncut_labels(pts, k, sigma)))?;
    Ok(ClusteringResult::from_raw(&labels, Method::NormalizedCut)
        .with_param("k", k as f64)
        .with_param("sigma", sigma)
        .timed(start))
}
