use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use oclu_core::stimuli::{GaussianSceneSpec, ShapeSceneSpec, REFERENCE_SIZE};
use oclu_core::unet::UNetConfig;

/// Scale at which recipes run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// 64x64 rasters, four encoder stacks, training sets shrunk five-fold.
    Desk,
    /// 128x128 rasters, five encoder stacks, full dataset sizes.
    Paper,
}

impl Profile {
    pub fn image_size(self) -> usize {
        match self {
            Profile::Desk => 64,
            Profile::Paper => REFERENCE_SIZE,
        }
    }

    pub fn model(self) -> UNetConfig {
        match self {
            Profile::Desk => UNetConfig::desk(),
            Profile::Paper => UNetConfig::default(),
        }
    }

    /// A full-size training-set count at this profile.
    pub fn train_count(self, full: usize) -> usize {
        match self {
            Profile::Desk => (full / 5).max(1),
            Profile::Paper => full,
        }
    }

    /// Raster area relative to the reference 128x128 image.
    pub fn area_ratio(self) -> f64 {
        let r = self.image_size() as f64 / REFERENCE_SIZE as f64;
        r * r
    }

    pub fn shapes(self) -> ShapeSceneSpec {
        ShapeSceneSpec::default().scaled_to(self.image_size())
    }

    pub fn gaussians(self) -> GaussianSceneSpec {
        GaussianSceneSpec::default().scaled_to(self.image_size())
    }
}
