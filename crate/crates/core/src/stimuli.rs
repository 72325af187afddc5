//! Synthetic clustering scenes: filled and hollow shapes or Gaussian blobs,
//! rasterized to binary images with order-normalized ground truth.

use std::f64::consts::TAU;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::seed::Rng;

/// Reference raster size that the default parameter ranges are expressed in.
pub const REFERENCE_SIZE: usize = 128;

/// Inner radius / inner half-side of the hollow shapes relative to scale.
pub const HOLLOW_RATIO: f64 = 0.8;
/// Bar half-width relative to scale (bar is `2s` long and `0.4s` wide).
pub const BAR_HALF_WIDTH: f64 = 0.2;

const MAX_PLACEMENT_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Circle,
    Ring,
    Square,
    SquareRing,
    Bar,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 5] = [
        ShapeKind::Circle,
        ShapeKind::Ring,
        ShapeKind::Square,
        ShapeKind::SquareRing,
        ShapeKind::Bar,
    ];

    /// Membership test in shape-local coordinates (centered, unrotated).
    pub fn contains(self, scale: f64, x: f64, y: f64) -> bool {
        let eps = 1e-9 * scale;
        let inner = HOLLOW_RATIO * scale;
        match self {
            ShapeKind::Circle => x.hypot(y) <= scale + eps,
            ShapeKind::Ring => {
                let r = x.hypot(y);
                r >= inner - eps && r <= scale + eps
            }
            ShapeKind::Square => x.abs() <= scale + eps && y.abs() <= scale + eps,
            ShapeKind::SquareRing => {
                let m = x.abs().max(y.abs());
                m >= inner - eps && m <= scale + eps
            }
            ShapeKind::Bar => x.abs() <= scale + eps && y.abs() <= BAR_HALF_WIDTH * scale + eps,
        }
    }

    /// Half extents of the axis-aligned box around the shape rotated by `theta`.
    pub fn rotated_half_extents(self, scale: f64, theta: f64) -> (f64, f64) {
        let (s, c) = theta.sin_cos();
        match self {
            ShapeKind::Circle | ShapeKind::Ring => (scale, scale),
            ShapeKind::Square | ShapeKind::SquareRing => {
                let e = scale * (c.abs() + s.abs());
                (e, e)
            }
            ShapeKind::Bar => {
                let (a, b) = (scale, BAR_HALF_WIDTH * scale);
                (a * c.abs() + b * s.abs(), a * s.abs() + b * c.abs())
            }
        }
    }

    fn sample_local(self, scale: f64, rng: &mut Rng) -> (f64, f64) {
        let inner = HOLLOW_RATIO * scale;
        match self {
            ShapeKind::Circle => {
                let r = scale * rng.random::<f64>().sqrt();
                let t = rng.random_range(0.0..TAU);
                (r * t.cos(), r * t.sin())
            }
            ShapeKind::Ring => {
                let u: f64 = rng.random();
                let r = (inner * inner + u * (scale * scale - inner * inner)).sqrt();
                let t = rng.random_range(0.0..TAU);
                (r * t.cos(), r * t.sin())
            }
            ShapeKind::Square => (rng.random_range(-scale..scale), rng.random_range(-scale..scale)),
            ShapeKind::SquareRing => loop {
                let (x, y) = (rng.random_range(-scale..scale), rng.random_range(-scale..scale));
                if x.abs().max(y.abs()) >= inner {
                    break (x, y);
                }
            },
            ShapeKind::Bar => (
                rng.random_range(-scale..scale),
                rng.random_range(-BAR_HALF_WIDTH * scale..BAR_HALF_WIDTH * scale),
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntRange {
    pub min: usize,
    pub max: usize,
}

impl IntRange {
    pub fn new(min: usize, max: usize) -> Self {
        Self { min, max }
    }

    pub fn single(v: usize) -> Self {
        Self { min: v, max: v }
    }

    pub fn contains(&self, v: usize) -> bool {
        (self.min..=self.max).contains(&v)
    }

    pub fn sample(&self, rng: &mut Rng) -> usize {
        rng.random_range(self.min..=self.max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealRange {
    pub min: f64,
    pub max: f64,
}

impl RealRange {
    pub fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        if self.max > self.min {
            rng.random_range(self.min..self.max)
        } else {
            self.min
        }
    }
}

/// How cluster ids are assigned to generated clusters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelOrder {
    /// Ascending by topmost point (min y, then min x).
    #[default]
    Topdown,
    /// A random permutation per stimulus; control condition.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSceneSpec {
    pub shapes: Vec<ShapeKind>,
    pub object_count: IntRange,
    pub density: IntRange,
    pub scale: RealRange,
    pub image_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub label_order: LabelOrder,
    /// Draw one shape kind per scene and use it for every object.
    #[serde(default)]
    pub same_kind: bool,
}

impl Default for ShapeSceneSpec {
    fn default() -> Self {
        Self {
            shapes: ShapeKind::ALL.to_vec(),
            object_count: IntRange::single(2),
            density: IntRange::new(200, 300),
            scale: RealRange::new(10.0, 30.0),
            image_size: REFERENCE_SIZE,
            seed: 0,
            label_order: LabelOrder::Topdown,
            same_kind: false,
        }
    }
}

fn scale_count(v: usize, area: f64) -> usize {
    ((v as f64 * area).round() as usize).max(1)
}

impl ShapeSceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CoreError::InvalidSpec(m));
        if self.shapes.is_empty() {
            return bad("shape set is empty".into());
        }
        if self.object_count.min < 1 || self.object_count.min > self.object_count.max {
            return bad(format!("object count range {:?} must satisfy 1 <= min <= max", self.object_count));
        }
        if self.density.min < 1 || self.density.min > self.density.max {
            return bad(format!("density range {:?} must satisfy 1 <= min <= max", self.density));
        }
        let half = self.image_size as f64 / 2.0;
        if !(self.scale.min > 0.0 && self.scale.min <= self.scale.max && self.scale.max < half) {
            return bad(format!("scale range {:?} must lie in (0, {half})", self.scale));
        }
        Ok(())
    }

    /// The same scene family rendered at a different raster size: lengths
    /// scale linearly, point counts with area, so point density per pixel
    /// is preserved.
    pub fn scaled_to(&self, image_size: usize) -> Self {
        let r = image_size as f64 / REFERENCE_SIZE as f64;
        let a = r * r;
        Self {
            density: IntRange::new(scale_count(self.density.min, a), scale_count(self.density.max, a)),
            scale: RealRange::new(self.scale.min * r, self.scale.max * r),
            image_size,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSceneSpec {
    pub cluster_counts: Vec<usize>,
    pub mean_range: RealRange,
    pub points: IntRange,
    pub covariance_scale: f64,
    pub image_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub label_order: LabelOrder,
}

impl Default for GaussianSceneSpec {
    fn default() -> Self {
        Self {
            cluster_counts: vec![2, 3],
            mean_range: RealRange::new(20.0, 100.0),
            points: IntRange::new(100, 400),
            covariance_scale: 25.0,
            image_size: REFERENCE_SIZE,
            seed: 0,
            label_order: LabelOrder::Topdown,
        }
    }
}

impl GaussianSceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CoreError::InvalidSpec(m));
        if self.cluster_counts.is_empty() || self.cluster_counts.contains(&0) {
            return bad(format!("cluster counts {:?} must be non-empty and positive", self.cluster_counts));
        }
        let size = self.image_size as f64;
        let m = self.mean_range;
        if !(m.min >= 0.0 && m.min <= m.max && m.max < size) {
            return bad(format!("mean range {m:?} must lie in [0, {size})"));
        }
        if self.points.min < 2 || self.points.min > self.points.max {
            return bad(format!("points range {:?} must satisfy 2 <= min <= max", self.points));
        }
        if !(self.covariance_scale > 0.0 && self.covariance_scale.is_finite()) {
            return bad(format!("covariance scale {} must be positive", self.covariance_scale));
        }
        Ok(())
    }

    /// Rescaled copy; see [`ShapeSceneSpec::scaled_to`]. Covariance scales
    /// with area since it is a squared length.
    pub fn scaled_to(&self, image_size: usize) -> Self {
        let r = image_size as f64 / REFERENCE_SIZE as f64;
        let a = r * r;
        Self {
            mean_range: RealRange::new(self.mean_range.min * r, self.mean_range.max * r),
            points: IntRange::new(scale_count(self.points.min, a).max(2), scale_count(self.points.max, a).max(2)),
            covariance_scale: self.covariance_scale * a,
            image_size,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(&self, o: &Point) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }

    pub fn dist2(&self, o: &Point) -> f64 {
        let (dx, dy) = (self.x - o.x, self.y - o.y);
        dx * dx + dy * dy
    }
}

/// Labeled 2-D points. Ids lie in `0..k` and every id occurs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointSet {
    pub points: Vec<Point>,
    pub labels: Vec<usize>,
    pub k: usize,
}

impl PointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points of each cluster, in label order.
    pub fn clusters(&self) -> Vec<Vec<Point>> {
        let mut out = vec![Vec::new(); self.k];
        for (p, &l) in self.points.iter().zip(&self.labels) {
            out[l].push(*p);
        }
        out
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.k];
        for &l in &self.labels {
            out[l] += 1;
        }
        out
    }
}

/// Background sentinel in ground-truth label maps.
pub const BACKGROUND: i32 = -1;

#[derive(Debug, Clone, PartialEq)]
pub struct Stimulus {
    pub point_set: PointSet,
    pub image_size: usize,
    /// Row-major, `image_size^2`, 1 for foreground.
    pub image: Vec<u8>,
    /// Row-major cluster id per pixel, [`BACKGROUND`] elsewhere.
    pub gt_label_map: Vec<i32>,
    /// Noise pixels as (x, y) columns/rows.
    pub noise_pixels: Vec<(usize, usize)>,
}

impl Stimulus {
    pub fn from_point_set(point_set: PointSet, image_size: usize) -> Self {
        let (image, gt_label_map) = rasterize(&point_set, image_size);
        Self {
            point_set,
            image_size,
            image,
            gt_label_map,
            noise_pixels: Vec::new(),
        }
    }

    pub fn k(&self) -> usize {
        self.point_set.k
    }

    pub fn foreground_count(&self) -> usize {
        self.image.iter().filter(|&&v| v != 0).count()
    }

    /// Flat pixel index of a point.
    pub fn pixel_of(&self, p: &Point) -> usize {
        pixel_index(p, self.image_size)
    }
}

pub fn pixel_index(p: &Point, image_size: usize) -> usize {
    let x = (p.x.floor() as usize).min(image_size - 1);
    let y = (p.y.floor() as usize).min(image_size - 1);
    y * image_size + x
}

fn rotate(theta: f64, x: f64, y: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    (c * x - s * y, s * x + c * y)
}

/// Samples `density` points uniformly over one shape, rotated by
/// `rotation` about its center and moved to `translation`.
///
/// Fails when the rotated shape does not fit in `[0, image_size)^2`.
pub fn sample_shape_points(
    kind: ShapeKind,
    scale: f64,
    density: usize,
    rotation: f64,
    translation: (f64, f64),
    image_size: usize,
    rng: &mut Rng,
) -> Result<Vec<Point>> {
    let (ex, ey) = kind.rotated_half_extents(scale, rotation);
    let (tx, ty) = translation;
    let size = image_size as f64;
    if tx - ex < 0.0 || ty - ey < 0.0 || tx + ex >= size || ty + ey >= size {
        return Err(CoreError::ShapeOutOfBounds {
            image_size,
            detail: format!("{kind:?} scale {scale:.2} at ({tx:.2}, {ty:.2}) spans +-({ex:.2}, {ey:.2})"),
        });
    }
    Ok((0..density)
        .map(|_| {
            let (lx, ly) = kind.sample_local(scale, rng);
            let (rx, ry) = rotate(rotation, lx, ly);
            // keep rounding at the box edge from landing on image_size
            Point::new((tx + rx).clamp(0.0, size.next_down()), (ty + ry).clamp(0.0, size.next_down()))
        })
        .collect())
}

/// Orders clusters by topmost point (smallest min-y, then smallest min-x)
/// and labels them 0, 1, ... in that order. Output points are grouped by
/// label, so the result does not depend on the input order.
pub fn assign_topdown_labels(clusters: Vec<Vec<Point>>) -> Result<PointSet> {
    let mut keyed: Vec<((f64, f64), Vec<Point>)> = clusters
        .into_iter()
        .map(|c| {
            let min_y = c.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
            let min_x = c.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
            ((min_y, min_x), c)
        })
        .collect();
    if keyed.is_empty() || keyed.iter().any(|(_, c)| c.is_empty()) {
        return Err(CoreError::InvalidInput("need at least one non-empty cluster".into()));
    }
    keyed.sort_by(|(a, _), (b, _)| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    Ok(label_in_order(keyed.into_iter().map(|(_, c)| c)))
}

fn label_in_order(clusters: impl Iterator<Item = Vec<Point>>) -> PointSet {
    let mut ps = PointSet::default();
    for (label, c) in clusters.enumerate() {
        ps.labels.extend(std::iter::repeat_n(label, c.len()));
        ps.points.extend(c);
        ps.k = label + 1;
    }
    ps
}

fn assign_labels(clusters: Vec<Vec<Point>>, order: LabelOrder, rng: &mut Rng) -> Result<PointSet> {
    match order {
        LabelOrder::Topdown => assign_topdown_labels(clusters),
        LabelOrder::Random => {
            let mut ps = assign_topdown_labels(clusters)?;
            let mut perm: Vec<usize> = (0..ps.k).collect();
            perm.shuffle(rng);
            let mut clusters = vec![Vec::new(); ps.k];
            for (p, l) in ps.points.drain(..).zip(ps.labels.drain(..)) {
                clusters[perm[l]].push(p);
            }
            Ok(label_in_order(clusters.into_iter()))
        }
    }
}

/// Binary image and ground-truth map of a point set. A pixel hit by
/// several clusters takes the lowest label.
pub fn rasterize(point_set: &PointSet, image_size: usize) -> (Vec<u8>, Vec<i32>) {
    let mut image = vec![0u8; image_size * image_size];
    let mut gt = vec![BACKGROUND; image_size * image_size];
    for (p, &l) in point_set.points.iter().zip(&point_set.labels) {
        let i = pixel_index(p, image_size);
        image[i] = 1;
        let l = l as i32;
        if gt[i] == BACKGROUND || l < gt[i] {
            gt[i] = l;
        }
    }
    (image, gt)
}

/// Generates one shape scene: `k` objects with independently drawn kind,
/// scale, density, rotation and a translation that keeps them in frame.
pub fn generate_shape_stimulus(spec: &ShapeSceneSpec, rng: &mut Rng) -> Result<Stimulus> {
    spec.validate()?;
    let size = spec.image_size as f64;
    let k = spec.object_count.sample(rng);
    let shared = if spec.same_kind { spec.shapes.choose(rng).copied() } else { None };
    let mut clusters = Vec::with_capacity(k);
    for _ in 0..k {
        let kind = match shared {
            Some(kind) => kind,
            None => *spec.shapes.choose(rng).expect("validated non-empty"),
        };
        let density = spec.density.sample(rng);
        let mut placed = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let scale = spec.scale.sample(rng);
            let theta = rng.random_range(0.0..TAU);
            let (ex, ey) = kind.rotated_half_extents(scale, theta);
            if 2.0 * ex >= size || 2.0 * ey >= size {
                continue;
            }
            let tx = rng.random_range(ex..size - ex);
            let ty = rng.random_range(ey..size - ey);
            if let Ok(points) = sample_shape_points(kind, scale, density, theta, (tx, ty), spec.image_size, rng) {
                placed = Some(points);
                break;
            }
        }
        clusters.push(placed.ok_or(CoreError::PlacementFailed(MAX_PLACEMENT_ATTEMPTS))?);
    }
    let ps = assign_labels(clusters, spec.label_order, rng)?;
    Ok(Stimulus::from_point_set(ps, spec.image_size))
}

/// Generates a Gaussian mixture scene. Each component has covariance
/// `covariance_scale * A^T A` with `A` uniform on `[0,1]^{2x2}`; samples
/// falling outside the image are redrawn.
pub fn generate_gaussian_stimulus(spec: &GaussianSceneSpec, rng: &mut Rng) -> Result<Stimulus> {
    spec.validate()?;
    let m = *spec.cluster_counts.choose(rng).expect("validated non-empty");
    let mut clusters = Vec::with_capacity(m);
    for _ in 0..m {
        let mean = (spec.mean_range.sample(rng), spec.mean_range.sample(rng));
        let a: [f64; 4] = std::array::from_fn(|_| rng.random::<f64>());
        let count = spec.points.sample(rng);
        let points = sample_gaussian_cluster(mean, a, spec.covariance_scale, count, spec.image_size, rng)?;
        clusters.push(points);
    }
    let ps = assign_labels(clusters, spec.label_order, rng)?;
    Ok(Stimulus::from_point_set(ps, spec.image_size))
}

/// Draws `count` in-image points from `N(mean, scale * A^T A)` for a
/// row-major `A`, redrawing samples that fall outside the image.
pub fn sample_gaussian_cluster(
    mean: (f64, f64),
    a: [f64; 4],
    scale: f64,
    count: usize,
    image_size: usize,
    rng: &mut Rng,
) -> Result<Vec<Point>> {
    let size = image_size as f64;
    let root = scale.sqrt();
    let mut points = Vec::with_capacity(count);
    let (mut attempts, mut rejected) = (0usize, 0usize);
    while points.len() < count {
        let z0: f64 = StandardNormal.sample(rng);
        let z1: f64 = StandardNormal.sample(rng);
        // x = mean + sqrt(s) A^T z has covariance s A^T A
        let x = mean.0 + root * (a[0] * z0 + a[2] * z1);
        let y = mean.1 + root * (a[1] * z0 + a[3] * z1);
        attempts += 1;
        if (0.0..size).contains(&x) && (0.0..size).contains(&y) {
            points.push(Point::new(x, y));
        } else {
            rejected += 1;
            if attempts >= 1000 && rejected * 100 > attempts * 99 {
                return Err(CoreError::DegenerateGaussian { rejected, attempts });
            }
        }
    }
    Ok(points)
}

/// Covariance `scale * A^T A` for a row-major `A = [a b; c d]`.
pub fn gaussian_covariance(a: [f64; 4], scale: f64) -> [f64; 4] {
    let [p, q, r, s] = a;
    [scale * (p * p + r * r), scale * (p * q + r * s), scale * (p * q + r * s), scale * (q * q + s * s)]
}

/// Flips `count` distinct background pixels to foreground. Point set and
/// ground truth are left untouched; noise pixels stay [`BACKGROUND`].
pub fn inject_noise(stimulus: &Stimulus, count: usize, rng: &mut Rng) -> Result<Stimulus> {
    let background: Vec<usize> = (0..stimulus.image.len()).filter(|&i| stimulus.image[i] == 0).collect();
    if count > background.len() {
        return Err(CoreError::NotEnoughBackground {
            requested: count,
            available: background.len(),
        });
    }
    let mut out = stimulus.clone();
    let mut chosen: Vec<usize> = rand::seq::index::sample(rng, background.len(), count)
        .into_iter()
        .map(|j| background[j])
        .collect();
    chosen.sort_unstable();
    for &i in &chosen {
        out.image[i] = 1;
        out.noise_pixels.push((i % stimulus.image_size, i / stimulus.image_size));
    }
    Ok(out)
}
