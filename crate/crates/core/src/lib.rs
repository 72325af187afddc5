//! Clustering workbench: synthetic point-set stimuli, a U-Net that
//! clusters rasterized point sets, six classical baselines and pairwise
//! Rand evaluation.

pub mod baselines;
pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod pgm;
pub mod seed;
pub mod stimuli;
pub mod unet;

pub use error::{CoreError, Result};
