//! Clustering by fast search and find of density peaks.

use std::time::Instant;

use super::{check_k, distance_matrix, ClusteringResult, Method};
use crate::error::{CoreError, Result};
use crate::stimuli::Point;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CutoffRule {
    /// Cutoff distance in pixels.
    Fixed(f64),
    /// Cutoff at this fraction of the sorted pairwise distances, so that a
    /// point has on average about `fraction * n` neighbours within it.
    Percentile(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfsfdpParams {
    /// Number of centers to pick.
    pub q: usize,
    pub cutoff: CutoffRule,
}

impl CfsfdpParams {
    pub fn new(q: usize) -> Self {
        Self {
            q,
            cutoff: CutoffRule::Percentile(0.02),
        }
    }
}

/// Per-point local density, distance to the nearest denser point and that
/// point's index (the densest point points at itself).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityPeaks {
    pub rho: Vec<f64>,
    pub delta: Vec<f64>,
    pub nearest_higher: Vec<usize>,
    pub centers: Vec<usize>,
    pub cutoff: f64,
}

pub fn density_cutoff(points: &[Point], rule: CutoffRule) -> Result<f64> {
    let dc = match rule {
        CutoffRule::Fixed(d) => d,
        CutoffRule::Percentile(f) => {
            let n = points.len();
            let mut d: Vec<f64> = (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .map(|(i, j)| points[i].dist(&points[j]))
                .collect();
            if d.is_empty() {
                return Err(CoreError::InvalidInput("need at least two points".into()));
            }
            let pos = ((f * d.len() as f64).round() as usize).clamp(1, d.len()) - 1;
            *d.select_nth_unstable_by(pos, f64::total_cmp).1
        }
    };
    if !(dc > 0.0 && dc.is_finite()) {
        return Err(CoreError::InvalidInput(format!("cutoff distance {dc} must be positive")));
    }
    Ok(dc)
}

/// Density peaks with a Gaussian kernel `rho_i = sum_j exp(-(d_ij/d_c)^2)`.
///
/// Density ties rank the lower index as denser, which keeps the
/// nearest-higher chain acyclic. Centers are the `q` points closest to the
/// (1, 1) corner of the min-max normalized (rho, delta) plane; every other
/// point joins the cluster of its nearest denser point.
pub fn cfsfdp(points: &[Point], params: &CfsfdpParams) -> Result<(ClusteringResult, DensityPeaks)> {
    let start = Instant::now();
    let n = points.len();
    check_k(n, params.q)?;
    let dc = if n >= 2 { density_cutoff(points, params.cutoff)? } else { 1.0 };
    let dist = distance_matrix(points);

    let rho: Vec<f64> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let r = dist[i * n + j] / dc;
                    (-r * r).exp()
                })
                .sum()
        })
        .collect();
    let mut rank: Vec<usize> = (0..n).collect();
    rank.sort_by(|&a, &b| rho[b].total_cmp(&rho[a]).then(a.cmp(&b)));

    let mut delta = vec![0.0; n];
    let mut nearest_higher = vec![0; n];
    let top = rank[0];
    delta[top] = dist.iter().copied().fold(0.0, f64::max);
    nearest_higher[top] = top;
    for r in 1..n {
        let i = rank[r];
        let (mut best, mut bd) = (rank[0], f64::INFINITY);
        for &j in &rank[..r] {
            let d = dist[i * n + j];
            if d < bd || (d == bd && j < best) {
                best = j;
                bd = d;
            }
        }
        delta[i] = bd;
        nearest_higher[i] = best;
    }

    let normalize = |v: &[f64]| -> Vec<f64> {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        v.iter().map(|&x| if span > 0.0 { (x - lo) / span } else { 1.0 }).collect()
    };
    let (nr, nd) = (normalize(&rho), normalize(&delta));
    let mut position = vec![0; n];
    for (r, &i) in rank.iter().enumerate() {
        position[i] = r;
    }
    let mut by_corner: Vec<usize> = (0..n).collect();
    let corner = |i: usize| (1.0 - nr[i]).hypot(1.0 - nd[i]);
    by_corner.sort_by(|&a, &b| corner(a).total_cmp(&corner(b)).then(position[a].cmp(&position[b])));
    // The densest point sits exactly on the corner, so it is always a center.
    let mut centers: Vec<usize> = by_corner[..params.q].to_vec();
    centers.sort_by_key(|&i| position[i]);

    let mut labels = vec![usize::MAX; n];
    for (l, &c) in centers.iter().enumerate() {
        labels[c] = l;
    }
    for &i in &rank {
        if labels[i] == usize::MAX {
            labels[i] = labels[nearest_higher[i]];
        }
    }
    let result = ClusteringResult::from_raw(&labels, Method::Cfsfdp)
        .with_param("q", params.q as f64)
        .with_param("dc", dc)
        .timed(start);
    Ok((
        result,
        DensityPeaks {
            rho,
            delta,
            nearest_higher,
            centers,
            cutoff: dc,
        },
    ))
}
