//! The subcommands as library functions.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};

use oclu_core::baselines::Method;
use oclu_core::checkpoint::{load_checkpoint, save_checkpoint};
use oclu_core::dataset::{self, Dataset, SceneSpec};
use oclu_core::seed::derive_seed;
use oclu_core::stimuli::BACKGROUND;
use oclu_core::unet::{build_unet, predict_pixel_labels, train, TrainConfig, TrainReport, UNetConfig, UNetModel};

use crate::bench::{bench, run_baseline, BaselineGrid};
use crate::experiment::check_cluster_counts;
use crate::render::render_stimulus;
use crate::report::{write_loss_csv, Report};

pub const LOSS_CSV: &str = "loss.csv";

/// Generates `count` stimuli from `spec` reseeded with `seed` and writes
/// them with their manifest to `out`.
pub fn cmd_gen(spec: &SceneSpec, count: usize, noise: usize, out: &Path, seed: u64) -> Result<Dataset> {
    let spec = spec.with_seed(seed);
    let d = dataset::generate(&spec, count, noise)?;
    dataset::save(&d, out)?;
    Ok(d)
}

/// Trains a fresh model on the dataset in `data` and writes the checkpoint
/// plus a per-epoch loss CSV next to it.
pub fn cmd_train(
    data: &Path,
    model: UNetConfig,
    tc: &TrainConfig,
    init_seed: u64,
    checkpoint: &Path,
    log: &mut dyn FnMut(&str),
) -> Result<(UNetModel<f32>, TrainReport)> {
    let d = dataset::load(data)?;
    if d.stimuli.is_empty() {
        bail!("dataset {} is empty", data.display());
    }
    check_cluster_counts(&d.stimuli, model.output_channels, &data.display().to_string())?;
    if let Some(s) = d.stimuli.iter().find(|s| s.image_size != model.image_size) {
        bail!("dataset images are {0}x{0} but the model expects {1}x{1}", s.image_size, model.image_size);
    }
    let mut net = build_unet::<f32>(model, init_seed)?;
    let report = train(&mut net, &d.stimuli, tc, |e, loss| log(&format!("epoch {}/{}: loss {loss:.6}", e + 1, tc.epochs)))?;
    if let Some(dir) = checkpoint.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    save_checkpoint(&net, checkpoint)?;
    let loss_path = checkpoint.with_file_name(LOSS_CSV);
    let mut w = BufWriter::new(File::create(&loss_path).with_context(|| format!("writing {}", loss_path.display()))?);
    write_loss_csv(&mut w, &report.loss_history)?;
    w.flush()?;
    Ok((net, report))
}

/// Benchmarks `methods` on the dataset in `data` and writes the report to
/// `out`.
pub fn cmd_bench(
    data: &Path,
    methods: &[Method],
    grid: &BaselineGrid,
    checkpoint: Option<&Path>,
    seed: u64,
    out: &Path,
    deterministic: bool,
) -> Result<Report> {
    let d = dataset::load(data)?;
    let model = checkpoint.map(load_checkpoint).transpose()?;
    if methods.contains(&Method::Cnn) && model.is_none() {
        bail!("benchmarking the CNN needs --checkpoint");
    }
    let b = bench(&d.stimuli, methods, grid, model.as_ref(), seed)?;
    let report = Report::from_bench(b);
    let echo = serde_json::json!({
        "dataset": data,
        "manifest": d.manifest,
        "methods": methods,
        "grid": grid,
        "checkpoint": checkpoint,
        "seed": seed,
    });
    report.write(out, &echo, deterministic)?;
    Ok(report)
}

/// Pixel label map from per-point labels.
pub fn point_labels_to_map(s: &oclu_core::stimuli::Stimulus, labels: &[usize]) -> Vec<i32> {
    let mut map = vec![BACKGROUND; s.image_size * s.image_size];
    for (p, &l) in s.point_set.points.iter().zip(labels) {
        map[s.pixel_of(p)] = l as i32;
    }
    map
}

/// Renders stimulus `index` of the dataset in `data`: input, ground truth
/// and one prediction per method. Baselines use the first value of their
/// grid.
pub fn cmd_render(
    data: &Path,
    index: usize,
    methods: &[Method],
    grid: &BaselineGrid,
    checkpoint: Option<&Path>,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let s = dataset::load_stimulus(data, index)?;
    let stem = format!("{index:04}");
    render_stimulus(out, &stem, &s, None)?;
    for &m in methods {
        let map = if m == Method::Cnn {
            let path = checkpoint.context("rendering the CNN needs --checkpoint")?;
            predict_pixel_labels(&load_checkpoint(path)?, &s)?
        } else {
            let (_, values) = grid.settings(m);
            let value = *values.first().with_context(|| format!("empty parameter grid for {m}"))?;
            point_labels_to_map(&s, &run_baseline(m, value, &s, seed, index)?.labels)
        };
        render_stimulus(out, &format!("{stem}.{}", m.short_name()), &s, Some(&map))?;
    }
    Ok(())
}

/// Init seed of a standalone training run.
pub fn train_init_seed(seed: u64) -> u64 {
    derive_seed(seed, "init", 0)
}
