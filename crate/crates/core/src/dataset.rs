//! Stimulus datasets: generation and the on-disk directory layout.
//!
//! A dataset directory holds `manifest.json` plus three files per stimulus:
//! `NNNN.points` (one `x y label` row per point, noise pixels as
//! `x y noise`), `NNNN.img.pgm` (0/255 raster) and `NNNN.gt.pgm`
//! (label + 1, 0 for background).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::pgm::GrayImage;
use crate::seed::{derive_seed, rng};
use crate::stimuli::{
    generate_gaussian_stimulus, generate_shape_stimulus, inject_noise, GaussianSceneSpec, LabelOrder, Point,
    PointSet, ShapeSceneSpec, Stimulus, BACKGROUND,
};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SceneSpec {
    Shape(ShapeSceneSpec),
    Gaussian(GaussianSceneSpec),
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            SceneSpec::Shape(s) => s.validate(),
            SceneSpec::Gaussian(s) => s.validate(),
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            SceneSpec::Shape(s) => s.seed,
            SceneSpec::Gaussian(s) => s.seed,
        }
    }

    pub fn image_size(&self) -> usize {
        match self {
            SceneSpec::Shape(s) => s.image_size,
            SceneSpec::Gaussian(s) => s.image_size,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut out = self.clone();
        match &mut out {
            SceneSpec::Shape(s) => s.seed = seed,
            SceneSpec::Gaussian(s) => s.seed = seed,
        }
        out
    }

    pub fn with_label_order(&self, order: LabelOrder) -> Self {
        let mut out = self.clone();
        match &mut out {
            SceneSpec::Shape(s) => s.label_order = order,
            SceneSpec::Gaussian(s) => s.label_order = order,
        }
        out
    }

    pub fn scaled_to(&self, image_size: usize) -> Self {
        match self {
            SceneSpec::Shape(s) => SceneSpec::Shape(s.scaled_to(image_size)),
            SceneSpec::Gaussian(s) => SceneSpec::Gaussian(s.scaled_to(image_size)),
        }
    }

    /// Generates stimulus `index` from its own derived stream.
    pub fn generate_one(&self, index: usize) -> Result<Stimulus> {
        let mut r = rng(self.stimulus_seed(index));
        match self {
            SceneSpec::Shape(s) => generate_shape_stimulus(s, &mut r),
            SceneSpec::Gaussian(s) => generate_gaussian_stimulus(s, &mut r),
        }
    }

    pub fn stimulus_seed(&self, index: usize) -> u64 {
        derive_seed(self.seed(), "stimulus", index as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: SceneSpec,
    pub count: usize,
    /// Background pixels flipped per stimulus.
    #[serde(default)]
    pub noise: usize,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub stimuli: Vec<Stimulus>,
}

/// Generates `count` stimuli in parallel; each stimulus depends only on the
/// spec seed and its index. With `noise > 0` every stimulus additionally
/// receives that many noise pixels from an independent stream.
pub fn generate(spec: &SceneSpec, count: usize, noise: usize) -> Result<Dataset> {
    spec.validate()?;
    let stimuli = (0..count)
        .into_par_iter()
        .map(|i| {
            let s = spec.generate_one(i)?;
            if noise == 0 {
                return Ok(s);
            }
            inject_noise(&s, noise, &mut rng(derive_seed(spec.seed(), "noise", i as u64)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        manifest: Manifest {
            spec: spec.clone(),
            count,
            noise,
            seeds: (0..count).map(|i| spec.stimulus_seed(i)).collect(),
        },
        stimuli,
    })
}

/// Adds `count` noise pixels to every stimulus of a clean dataset.
pub fn with_noise(dataset: &Dataset, count: usize) -> Result<Dataset> {
    let seed = dataset.manifest.spec.seed();
    let stimuli = dataset
        .stimuli
        .par_iter()
        .enumerate()
        .map(|(i, s)| inject_noise(s, count, &mut rng(derive_seed(seed, "noise", i as u64))))
        .collect::<Result<Vec<_>>>()?;
    let mut manifest = dataset.manifest.clone();
    manifest.noise += count;
    Ok(Dataset { manifest, stimuli })
}

fn stem(dir: &Path, i: usize, ext: &str) -> PathBuf {
    dir.join(format!("{i:04}.{ext}"))
}

pub fn points_text(s: &Stimulus) -> String {
    let mut out = String::new();
    for (p, l) in s.point_set.points.iter().zip(&s.point_set.labels) {
        let _ = writeln!(out, "{} {} {}", p.x, p.y, l);
    }
    for (x, y) in &s.noise_pixels {
        let _ = writeln!(out, "{x} {y} noise");
    }
    out
}

pub fn save_stimulus(dir: &Path, i: usize, s: &Stimulus) -> Result<()> {
    let path = stem(dir, i, "points");
    std::fs::write(&path, points_text(s)).map_err(|e| CoreError::io(&path, e))?;
    let n = s.image_size;
    let img = s.image.iter().map(|&v| if v != 0 { 255 } else { 0 }).collect();
    GrayImage::new(n, n, img)?.save(&stem(dir, i, "img.pgm"))?;
    let gt = s.gt_label_map.iter().map(|&l| (l + 1).clamp(0, 255) as u8).collect();
    GrayImage::new(n, n, gt)?.save(&stem(dir, i, "gt.pgm"))
}

pub fn load_stimulus(dir: &Path, i: usize) -> Result<Stimulus> {
    let path = stem(dir, i, "points");
    let text = std::fs::read_to_string(&path).map_err(|e| CoreError::io(&path, e))?;
    let bad = |line: usize, detail: &str| CoreError::Format {
        what: "points file",
        path: path.clone(),
        detail: format!("line {}: {detail}", line + 1),
    };
    let mut ps = PointSet::default();
    let mut noise = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 3 {
            return Err(bad(ln, "expected three fields"));
        }
        if f[2] == "noise" {
            let px = |s: &str| s.parse::<usize>().map_err(|_| bad(ln, "bad noise coordinate"));
            noise.push((px(f[0])?, px(f[1])?));
        } else {
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(ln, "bad coordinate"));
            let label = f[2].parse::<usize>().map_err(|_| bad(ln, "bad label"))?;
            ps.points.push(Point::new(num(f[0])?, num(f[1])?));
            ps.labels.push(label);
            ps.k = ps.k.max(label + 1);
        }
    }
    let img = GrayImage::load(&stem(dir, i, "img.pgm"))?;
    let gt = GrayImage::load(&stem(dir, i, "gt.pgm"))?;
    if img.width != img.height || (gt.width, gt.height) != (img.width, img.height) {
        return Err(bad(0, "raster sizes disagree"));
    }
    Ok(Stimulus {
        point_set: ps,
        image_size: img.width,
        image: img.pixels.iter().map(|&v| u8::from(v != 0)).collect(),
        gt_label_map: gt.pixels.iter().map(|&v| if v == 0 { BACKGROUND } else { i32::from(v) - 1 }).collect(),
        noise_pixels: noise,
    })
}

pub fn save(dataset: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CoreError::io(dir, e))?;
    let path = dir.join(MANIFEST);
    let json = serde_json::to_string_pretty(&dataset.manifest)?;
    std::fs::write(&path, json + "\n").map_err(|e| CoreError::io(&path, e))?;
    dataset
        .stimuli
        .par_iter()
        .enumerate()
        .try_for_each(|(i, s)| save_stimulus(dir, i, s))
}

pub fn load(dir: &Path) -> Result<Dataset> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| CoreError::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let stimuli = (0..manifest.count)
        .into_par_iter()
        .map(|i| load_stimulus(dir, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { manifest, stimuli })
}
