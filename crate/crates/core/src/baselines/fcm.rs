use std::time::Instant;

use rand::Rng as _;

use super::{check_k, ClusteringResult, Method};
use crate::error::{CoreError, Result};
use crate::seed::Rng;
use crate::stimuli::Point;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FcmParams {
    pub fuzziness: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for FcmParams {
    fn default() -> Self {
        Self {
            fuzziness: 2.0,
            tol: 1e-5,
            max_iters: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcmFit {
    /// Row-major `n x k`, rows sum to one.
    pub memberships: Vec<f64>,
    pub centers: Vec<Point>,
    pub labels: Vec<usize>,
    pub iterations: usize,
}

/// Membership update `u_ij = 1 / sum_l (d_ij / d_il)^(2/(m-1))`. A point
/// sitting on a center belongs to that center alone.
pub fn update_memberships(points: &[Point], centers: &[Point], fuzziness: f64) -> Vec<f64> {
    let k = centers.len();
    let expo = 2.0 / (fuzziness - 1.0);
    let mut u = vec![0.0; points.len() * k];
    for (i, p) in points.iter().enumerate() {
        let row = &mut u[i * k..(i + 1) * k];
        let d: Vec<f64> = centers.iter().map(|c| p.dist(c)).collect();
        if let Some(hit) = d.iter().position(|&v| v == 0.0) {
            row[hit] = 1.0;
            continue;
        }
        // work relative to the nearest center so large exponents stay finite
        let dmin = d.iter().copied().fold(f64::INFINITY, f64::min);
        let w: Vec<f64> = d.iter().map(|&dj| (dmin / dj).powf(expo)).collect();
        let total: f64 = w.iter().sum();
        for (r, wj) in row.iter_mut().zip(w) {
            *r = wj / total;
        }
    }
    u
}

fn update_centers(points: &[Point], u: &[f64], k: usize, m: f64) -> Vec<Point> {
    (0..k)
        .map(|j| {
            let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
            for (i, p) in points.iter().enumerate() {
                let w = u[i * k + j].powf(m);
                sx += w * p.x;
                sy += w * p.y;
                sw += w;
            }
            if sw > 0.0 {
                Point::new(sx / sw, sy / sw)
            } else {
                points[0]
            }
        })
        .collect()
}

/// Alternating center/membership updates from random memberships until
/// the largest membership change drops below `tol`.
pub fn fuzzy_cmeans_fit(points: &[Point], k: usize, params: FcmParams, rng: &mut Rng) -> Result<FcmFit> {
    check_k(points.len(), k)?;
    if !(params.fuzziness > 1.0) {
        return Err(CoreError::InvalidInput(format!("fuzziness {} must exceed 1", params.fuzziness)));
    }
    let n = points.len();
    let mut u: Vec<f64> = (0..n * k).map(|_| rng.random::<f64>() + 1e-3).collect();
    for row in u.chunks_mut(k) {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    let mut centers = update_centers(points, &u, k, params.fuzziness);
    let mut iterations = 0;
    for _ in 0..params.max_iters {
        iterations += 1;
        let next = update_memberships(points, &centers, params.fuzziness);
        let change = next.iter().zip(&u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        u = next;
        centers = update_centers(points, &u, k, params.fuzziness);
        if change < params.tol {
            break;
        }
    }
    let labels = u
        .chunks(k)
        .map(|row| {
            let mut best = 0;
            for j in 1..k {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect();
    Ok(FcmFit {
        memberships: u,
        centers,
        labels,
        iterations,
    })
}

pub fn fuzzy_cmeans(points: &[Point], k: usize, params: FcmParams, rng: &mut Rng) -> Result<ClusteringResult> {
    let start = Instant::now();
    let fit = fuzzy_cmeans_fit(points, k, params, rng)?;
    Ok(ClusteringResult::from_raw(&fit.labels, Method::FuzzyCMeans)
        .with_param("k", k as f64)
        .with_param("fuzziness", params.fuzziness)
        .timed(start))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng;

    fn blobs() -> Vec<Point> {
        vec![
            Point::new(0.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(1.0, 0.0),
            Point::new(20.0, 20.0),
            Point::new(20.0, 21.0),
        ]
    }

    #[test]
    fn rows_sum_to_one() {
        let pts = blobs();
        let centers = [Point::new(0.0, 0.0), Point::new(3.0, 3.0), Point::new(15.0, 18.0)];
        let u = update_memberships(&pts, &centers, 2.0);
        for row in u.chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        // point on a center
        assert_eq!(&u[0..3], &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn huge_fuzziness_tends_to_uniform() {
        let fit = fuzzy_cmeans_fit(&blobs(), 2, FcmParams { fuzziness: 200.0, ..Default::default() }, &mut rng(1))
            .unwrap();
        for &v in &fit.memberships {
            assert!((v - 0.5).abs() < 0.02, "{v}");
        }
    }

    #[test]
    fn rejects_fuzziness_at_one() {
        let p = FcmParams { fuzziness: 1.0, ..Default::default() };
        assert!(fuzzy_cmeans_fit(&blobs(), 2, p, &mut rng(1)).is_err());
    }
}
