//! Dataset generation, training, benchmarking and experiment recipes for
//! the point-clustering U-Net and its classical baselines.

pub mod bench;
pub mod commands;
pub mod experiment;
pub mod gradcheck;
pub mod profile;
pub mod render;
pub mod report;
