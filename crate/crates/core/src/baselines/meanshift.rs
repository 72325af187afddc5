use std::time::Instant;

use super::{ClusteringResult, Method};
use crate::error::{CoreError, Result};
use crate::stimuli::Point;

const MAX_ITERS: usize = 500;

fn seek_mode(points: &[Point], start: Point, h: f64) -> Point {
    let h2 = h * h;
    let mut y = start;
    for _ in 0..MAX_ITERS {
        let (mut sx, mut sy, mut count) = (0.0, 0.0, 0usize);
        for p in points {
            if p.dist2(&y) <= h2 {
                sx += p.x;
                sy += p.y;
                count += 1;
            }
        }
        if count == 0 {
            break;
        }
        let next = Point::new(sx / count as f64, sy / count as f64);
        let shift = next.dist(&y);
        y = next;
        if shift < 1e-3 * h {
            break;
        }
    }
    y
}

/// Flat-kernel mean shift from every point. Returns the merged modes and
/// each point's mode index; modes closer than `h/2` to an earlier mode are
/// merged into it.
pub fn mean_shift_modes(points: &[Point], h: f64) -> Result<(Vec<Point>, Vec<usize>)> {
    if !(h > 0.0) {
        return Err(CoreError::InvalidInput(format!("bandwidth {h} must be positive")));
    }
    let mut modes: Vec<Point> = Vec::new();
    let mut labels = Vec::with_capacity(points.len());
    for &p in points {
        let m = seek_mode(points, p, h);
        match modes.iter().position(|q| q.dist(&m) < h / 2.0) {
            Some(i) => labels.push(i),
            None => {
                modes.push(m);
                labels.push(modes.len() - 1);
            }
        }
    }
    Ok((modes, labels))
}

/// Mean shift clustering; the number of clusters comes from the data.
pub fn mean_shift(points: &[Point], h: f64) -> Result<ClusteringResult> {
    let start = Instant::now();
    let (_, labels) = mean_shift_modes(points, h)?;
    Ok(ClusteringResult::from_raw(&labels, Method::MeanShift)
        .with_param("bandwidth", h)
        .timed(start))
}
