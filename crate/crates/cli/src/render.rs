//! Grayscale and color renders of stimuli and predicted label maps.

use std::path::Path;

use anyhow::{Context, Result};
use image::{Rgb, RgbImage};

use oclu_core::pgm::GrayImage;
use oclu_core::stimuli::Stimulus;

const PALETTE: [[u8; 3]; 8] = [
    [230, 25, 75],
    [60, 180, 75],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
];

/// Gray level of cluster `label` among `k`: evenly spaced in 64..=255,
/// with background at 0.
pub fn gray_level(label: i32, k: usize) -> u8 {
    if label < 0 {
        return 0;
    }
    if k <= 1 {
        return 255;
    }
    let step = 191.0 / (k - 1) as f64;
    (64.0 + step * label as f64).round().min(255.0) as u8
}

pub fn input_image(s: &Stimulus) -> GrayImage {
    let pixels = s.image.iter().map(|&v| if v > 0 { 255 } else { 0 }).collect();
    GrayImage::new(s.image_size, s.image_size, pixels).expect("image raster matches its size")
}

/// Label map as gray levels; `k` should cover every label in the map.
pub fn label_image(labels: &[i32], size: usize, k: usize) -> GrayImage {
    let pixels = labels.iter().map(|&l| gray_level(l, k)).collect();
    GrayImage::new(size, size, pixels).expect("label map matches its size")
}

/// Label map in color; background black, labels cycling through a fixed
/// palette.
pub fn label_color(labels: &[i32], size: usize) -> RgbImage {
    RgbImage::from_fn(size as u32, size as u32, |x, y| {
        let l = labels[y as usize * size + x as usize];
        if l < 0 {
            Rgb([0, 0, 0])
        } else {
            Rgb(PALETTE[l as usize % PALETTE.len()])
        }
    })
}

/// Writes `{stem}.input.pgm`, `{stem}.gt.pgm`, `{stem}.gt.png` and, given a
/// prediction, `{stem}.pred.pgm` and `{stem}.pred.png`.
pub fn render_stimulus(dir: &Path, stem: &str, s: &Stimulus, predicted: Option<&[i32]>) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let n = s.image_size;
    input_image(s).save(&dir.join(format!("{stem}.input.pgm")))?;
    let mut maps = vec![("gt", s.gt_label_map.as_slice())];
    if let Some(p) = predicted {
        maps.push(("pred", p));
    }
    for (tag, labels) in maps {
        let k = labels.iter().map(|&l| l + 1).max().unwrap_or(0).max(s.point_set.k as i32) as usize;
        label_image(labels, n, k).save(&dir.join(format!("{stem}.{tag}.pgm")))?;
        let png = dir.join(format!("{stem}.{tag}.png"));
        label_color(labels, n).save(&png).with_context(|| format!("writing {}", png.display()))?;
    }
    Ok(())
}
