//! Experiment recipes 1-9 and their runner.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use oclu_core::baselines::Method;
use oclu_core::checkpoint::{load_checkpoint, save_checkpoint};
use oclu_core::dataset::{self, SceneSpec};
use oclu_core::evaluation::aggregate;
use oclu_core::seed::derive_seed;
use oclu_core::stimuli::{GaussianSceneSpec, IntRange, LabelOrder, ShapeKind, ShapeSceneSpec, Stimulus};
use oclu_core::unet::{build_unet, train, TrainConfig, TrainReport, UNetConfig, UNetModel};

use crate::bench::{bench, evaluate_cnn, BaselineGrid};
use crate::profile::Profile;
use crate::report::{CurveRow, Report};

pub const TEST_COUNT: usize = 200;
pub const CHECKPOINT: &str = "model.ckpt";

/// A generated dataset: a scene family, its size and per-stimulus noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPlan {
    pub name: String,
    pub spec: SceneSpec,
    pub count: usize,
}

impl DataPlan {
    /// The spec seed comes from the master seed and the plan name, so a
    /// plan shared by several experiments yields the same stimuli.
    pub fn new(name: &str, spec: SceneSpec, count: usize, master: u64) -> Self {
        Self {
            name: name.into(),
            spec: spec.with_seed(derive_seed(master, name, 0)),
            count,
        }
    }

    pub fn generate(&self) -> Result<Vec<Stimulus>> {
        let d = dataset::generate(&self.spec, self.count, 0).with_context(|| format!("generating {}", self.name))?;
        Ok(d.stimuli)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainPlan {
    pub data: DataPlan,
    pub config: TrainConfig,
    /// Small training sets get extra epochs until at least this many
    /// optimizer steps are taken.
    pub min_steps: usize,
}

/// Epochs needed for `min_steps` updates over `n` samples, never fewer
/// than `epochs`.
pub fn effective_epochs(epochs: usize, min_steps: usize, n: usize, batch: usize) -> usize {
    let per_epoch = n.div_ceil(batch.max(1)).max(1);
    epochs.max(min_steps.div_ceil(per_epoch))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveFamily {
    pub name: String,
    pub train: TrainPlan,
    pub test: DataPlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseFamily {
    pub name: String,
    pub checkpoint_from: u8,
    pub test: DataPlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Recipe {
    /// Train (or reuse a checkpoint) and compare every method on a test set.
    Benchmark {
        train: Option<TrainPlan>,
        checkpoint_from: Option<u8>,
        test: DataPlan,
    },
    /// Evaluate a model on scenes with a different object count than it
    /// was trained on, next to the model trained for that count.
    Transfer {
        checkpoint_from: u8,
        reference_from: u8,
        test: DataPlan,
    },
    /// CNN accuracy against training-set size; size 0 is the untrained net.
    LearningCurve {
        families: Vec<CurveFamily>,
        sizes: Vec<usize>,
    },
    /// CNN accuracy against background noise pixels per image.
    NoiseSweep {
        families: Vec<NoiseFamily>,
        levels: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub id: u8,
    pub description: String,
    pub profile: Profile,
    pub seed: u64,
    pub deterministic: bool,
    pub model: UNetConfig,
    pub methods: Vec<Method>,
    pub grid: BaselineGrid,
    pub recipe: Recipe,
}

/// Optional changes to a recipe, e.g. for smoke runs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub train_count: Option<usize>,
    pub test_count: Option<usize>,
    pub epochs: Option<usize>,
    pub min_steps: Option<usize>,
    pub methods: Option<Vec<Method>>,
    pub grid: Option<BaselineGrid>,
    pub noise_levels: Option<Vec<usize>>,
    pub train_sizes: Option<Vec<usize>>,
    pub label_order: Option<LabelOrder>,
}

fn shape_spec(profile: Profile, objects: usize, kinds: &[ShapeKind]) -> SceneSpec {
    SceneSpec::Shape(ShapeSceneSpec {
        shapes: kinds.to_vec(),
        object_count: IntRange::single(objects),
        ..profile.shapes()
    })
}

fn gaussian_spec(profile: Profile, points: IntRange) -> SceneSpec {
    let full = GaussianSceneSpec {
        points,
        ..GaussianSceneSpec::default()
    };
    SceneSpec::Gaussian(full.scaled_to(profile.image_size()))
}

const RINGS: [ShapeKind; 3] = [ShapeKind::Ring, ShapeKind::SquareRing, ShapeKind::Bar];

pub const PRESETS: [&str; 7] = ["shapes2", "same_kind", "shapes3", "rings2", "rings3", "gauss", "dense_gauss"];

/// Named scene families used by the recipes, at `profile` scale.
pub fn preset(name: &str, profile: Profile) -> Result<SceneSpec> {
    let spec = match name {
        "shapes2" => shape_spec(profile, 2, &ShapeKind::ALL),
        "shapes3" => shape_spec(profile, 3, &ShapeKind::ALL),
        "rings2" => shape_spec(profile, 2, &RINGS),
        "rings3" => shape_spec(profile, 3, &RINGS),
        "same_kind" => SceneSpec::Shape(ShapeSceneSpec {
            same_kind: true,
            shapes: ShapeKind::ALL.to_vec(),
            object_count: IntRange::single(2),
            ..profile.shapes()
        }),
        "gauss" => gaussian_spec(profile, IntRange::new(100, 400)),
        "dense_gauss" => gaussian_spec(profile, IntRange::new(400, 700)),
        other => bail!("unknown preset {other:?}; expected one of {}", PRESETS.join(", ")),
    };
    Ok(spec)
}

/// Background noise pixels per image swept by the noise recipe.
pub const NOISE_LEVELS: [usize; 4] = [0, 250, 500, 1000];

/// Builds the recipe for experiment `id` at `profile`.
pub fn recipe(id: u8, profile: Profile, seed: u64) -> Result<ExperimentConfig> {
    let plan = |name: &str, spec: SceneSpec, count: usize| DataPlan::new(name, spec, count, seed);
    let training = |name: &str, spec: SceneSpec, full: usize| TrainPlan {
        data: plan(name, spec, profile.train_count(full)),
        config: TrainConfig {
            seed: derive_seed(seed, "shuffle", u64::from(id)),
            ..TrainConfig::default()
        },
        min_steps: 400,
    };
    let shapes2 = preset("shapes2", profile)?;
    let shapes3 = preset("shapes3", profile)?;
    let rings3 = preset("rings3", profile)?;
    let rings2 = preset("rings2", profile)?;
    let gauss = preset("gauss", profile)?;
    let dense = preset("dense_gauss", profile)?;
    let same_kind = preset("same_kind", profile)?;

    let (description, recipe) = match id {
        1 => (
            "2 objects from 5 shapes",
            Recipe::Benchmark {
                train: Some(training("shapes2/train", shapes2.clone(), 1800)),
                checkpoint_from: None,
                test: plan("shapes2/test", shapes2, TEST_COUNT),
            },
        ),
        2 => (
            "2 objects of one shape kind, experiment 1 model",
            Recipe::Benchmark {
                train: None,
                checkpoint_from: Some(1),
                test: plan("same_kind/test", same_kind, TEST_COUNT),
            },
        ),
        3 => (
            "3 objects from Ring, SquareRing and Bar",
            Recipe::Benchmark {
                train: Some(training("rings3/train", rings3.clone(), 2700)),
                checkpoint_from: None,
                test: plan("rings3/test", rings3, TEST_COUNT),
            },
        ),
        4 => (
            "3 objects from 5 shapes",
            Recipe::Benchmark {
                train: Some(training("shapes3/train", shapes3.clone(), 7000)),
                checkpoint_from: None,
                test: plan("shapes3/test", shapes3, TEST_COUNT),
            },
        ),
        5 => (
            "2 or 3 Gaussians with 100-400 points each",
            Recipe::Benchmark {
                train: Some(training("gauss/train", gauss.clone(), 1800)),
                checkpoint_from: None,
                test: plan("gauss/test", gauss, TEST_COUNT),
            },
        ),
        6 => (
            "2 or 3 Gaussians with 400-700 points each",
            Recipe::Benchmark {
                train: Some(training("dense_gauss/train", dense.clone(), 1800)),
                checkpoint_from: None,
                test: plan("dense_gauss/test", dense, TEST_COUNT),
            },
        ),
        7 => (
            "experiment 3 model on 2-object scenes of the same shape family",
            Recipe::Transfer {
                checkpoint_from: 3,
                reference_from: 1,
                test: plan("rings2/test", rings2, TEST_COUNT),
            },
        ),
        8 => {
            let sizes = match profile {
                Profile::Desk => vec![0, 1, 10, 100, 200, 600, 1400],
                Profile::Paper => vec![0, 1, 10, 100, 1000, 3000, 7000],
            };
            let pool = *sizes.iter().max().expect("sizes");
            let family = |name: &str, spec: SceneSpec, test: &str| {
                let mut t = training(&format!("{name}/pool"), spec.clone(), pool);
                t.data.count = pool;
                CurveFamily {
                    name: name.into(),
                    train: t,
                    test: plan(test, spec, TEST_COUNT),
                }
            };
            (
                "CNN accuracy against training-set size",
                Recipe::LearningCurve {
                    families: vec![
                        family("shapes2", shapes2, "shapes2/test"),
                        family("gauss", gauss, "gauss/test"),
                    ],
                    sizes,
                },
            )
        }
        9 => (
            "CNN accuracy against background noise",
            Recipe::NoiseSweep {
                families: vec![
                    NoiseFamily {
                        name: "shapes2".into(),
                        checkpoint_from: 1,
                        test: plan("shapes2/test", shapes2, TEST_COUNT),
                    },
                    NoiseFamily {
                        name: "gauss".into(),
                        checkpoint_from: 5,
                        test: plan("gauss/test", gauss, TEST_COUNT),
                    },
                ],
                levels: NOISE_LEVELS.to_vec(),
            },
        ),
        other => bail!("unknown experiment {other}; expected 1-9"),
    };
    let methods = match recipe {
        Recipe::LearningCurve { .. } | Recipe::NoiseSweep { .. } => vec![Method::Cnn],
        _ => Method::ALL.to_vec(),
    };
    Ok(ExperimentConfig {
        id,
        description: description.into(),
        profile,
        seed,
        deterministic: true,
        model: profile.model(),
        methods,
        grid: BaselineGrid::default(),
        recipe,
    })
}

impl ExperimentConfig {
    pub fn apply(&mut self, o: &Overrides) {
        let counts = |plan: &mut DataPlan, count: Option<usize>| {
            if let Some(c) = count {
                plan.count = c;
            }
        };
        let train = |t: &mut TrainPlan| {
            counts(&mut t.data, o.train_count);
            if let Some(e) = o.epochs {
                t.config.epochs = e;
            }
            if let Some(m) = o.min_steps {
                t.min_steps = m;
            }
            if let Some(order) = o.label_order {
                t.data.spec = t.data.spec.with_label_order(order);
            }
            t.config.deterministic = self.deterministic;
        };
        match &mut self.recipe {
            Recipe::Benchmark { train: t, test, .. } => {
                if let Some(t) = t {
                    train(t);
                }
                counts(test, o.test_count);
            }
            Recipe::Transfer { test, .. } => counts(test, o.test_count),
            Recipe::LearningCurve { families, sizes } => {
                if let Some(s) = &o.train_sizes {
                    *sizes = s.clone();
                }
                let pool = sizes.iter().copied().max().unwrap_or(0);
                for f in families {
                    train(&mut f.train);
                    f.train.data.count = pool;
                    counts(&mut f.test, o.test_count);
                }
            }
            Recipe::NoiseSweep { families, levels } => {
                if let Some(l) = &o.noise_levels {
                    *levels = l.clone();
                }
                for f in families {
                    counts(&mut f.test, o.test_count);
                }
            }
        }
        if let Some(m) = &o.methods {
            self.methods = m.clone();
        }
        if let Some(g) = &o.grid {
            self.grid = g.clone();
        }
    }
}

/// Where experiment `id` keeps its outputs under `root`.
pub fn experiment_dir(root: &Path, id: u8) -> PathBuf {
    root.join(format!("exp{id}"))
}

fn prerequisite(root: &Path, id: u8, needed_by: u8) -> Result<UNetModel<f32>> {
    let path = experiment_dir(root, id).join(CHECKPOINT);
    if !path.exists() {
        bail!(
            "experiment {needed_by} needs the experiment {id} checkpoint at {}; run `oclu experiment {id}` first",
            path.display()
        );
    }
    load_checkpoint(&path).with_context(|| format!("loading {}", path.display()))
}

/// Fails with the offending stimulus when a training set holds more
/// clusters than the model has output channels.
pub fn check_cluster_counts(stimuli: &[Stimulus], channels: usize, name: &str) -> Result<()> {
    if let Some((i, s)) = stimuli.iter().enumerate().find(|(_, s)| s.k() > channels) {
        bail!(
            "{name} stimulus {i:04} has {} clusters but the model has only {channels} output channels",
            s.k()
        );
    }
    Ok(())
}

/// Trains a fresh model on the first `n` stimuli of `data`.
pub fn train_on(
    model_cfg: UNetConfig,
    plan: &TrainPlan,
    data: &[Stimulus],
    init_seed: u64,
    log: &mut dyn FnMut(&str),
) -> Result<(UNetModel<f32>, TrainReport)> {
    check_cluster_counts(data, model_cfg.output_channels, &plan.data.name)?;
    let mut model = build_unet::<f32>(model_cfg, init_seed)?;
    if data.is_empty() {
        return Ok((model, TrainReport { loss_history: Vec::new(), steps: 0 }));
    }
    let tc = TrainConfig {
        epochs: effective_epochs(plan.config.epochs, plan.min_steps, data.len(), plan.config.batch_size),
        ..plan.config
    };
    let report = train(&mut model, data, &tc, |e, loss| {
        if (e + 1) % 5 == 0 || e + 1 == tc.epochs {
            log(&format!("  epoch {}/{}: loss {loss:.6}", e + 1, tc.epochs));
        }
    })?;
    Ok((model, report))
}

/// Runs a recipe, writing its files under `out_root/exp{id}`. Checkpoints
/// of earlier experiments are looked up under `checkpoint_root`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out_root: &Path,
    checkpoint_root: &Path,
    log: &mut dyn FnMut(&str),
) -> Result<Report> {
    let start = Instant::now();
    let dir = experiment_dir(out_root, cfg.id);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let init_seed = derive_seed(cfg.seed, "init", u64::from(cfg.id));
    let mut report = match &cfg.recipe {
        Recipe::Benchmark {
            train: plan,
            checkpoint_from,
            test,
        } => {
            let model = match (plan, checkpoint_from) {
                (Some(plan), _) => {
                    log(&format!("generating {} ({} stimuli)", plan.data.name, plan.data.count));
                    let data = plan.data.generate()?;
                    log(&format!("training on {} stimuli", data.len()));
                    let (model, tr) = train_on(cfg.model, plan, &data, init_seed, log)?;
                    save_checkpoint(&model, &dir.join(CHECKPOINT))?;
                    Some((model, tr.loss_history))
                }
                (None, Some(from)) => Some((prerequisite(checkpoint_root, *from, cfg.id)?, Vec::new())),
                (None, None) => None,
            };
            log(&format!("generating {} ({} stimuli)", test.name, test.count));
            let stimuli = test.generate()?;
            log("benchmarking");
            let b = bench(&stimuli, &cfg.methods, &cfg.grid, model.as_ref().map(|m| &m.0), cfg.seed)?;
            let mut r = Report::from_bench(b);
            r.loss_history = model.map(|m| m.1).unwrap_or_default();
            r
        }
        Recipe::Transfer {
            checkpoint_from,
            reference_from,
            test,
        } => {
            let model = prerequisite(checkpoint_root, *checkpoint_from, cfg.id)?;
            let reference = prerequisite(checkpoint_root, *reference_from, cfg.id)?;
            let stimuli = test.generate()?;
            let b = bench(&stimuli, &cfg.methods, &cfg.grid, Some(&model), cfg.seed)?;
            let mut r = Report::from_bench(b);
            for (name, m) in [
                (format!("cnn_from_exp{checkpoint_from}"), &model),
                (format!("cnn_from_exp{reference_from}"), &reference),
            ] {
                let s = aggregate(&evaluate_cnn(m, &stimuli)?)?[0];
                r.notes.push((name, s.mean, s.std));
            }
            r
        }
        Recipe::LearningCurve { families, sizes } => {
            let mut rows = Vec::new();
            for f in families {
                log(&format!("generating {} and {}", f.train.data.name, f.test.name));
                let pool = f.train.data.generate()?;
                let test = f.test.generate()?;
                for &n in sizes {
                    ensure!(n <= pool.len(), "training size {n} exceeds the pool of {}", pool.len());
                    log(&format!("{}: training on {n} stimuli", f.name));
                    let seed = derive_seed(cfg.seed, &format!("init/{}", f.name), n as u64);
                    let (model, _) = train_on(cfg.model, &f.train, &pool[..n], seed, log)?;
                    let s = aggregate(&evaluate_cnn(&model, &test)?)?[0];
                    log(&format!("{}: n={n} accuracy {:.3}", f.name, s.mean));
                    rows.push(CurveRow {
                        dataset: f.name.clone(),
                        x: n,
                        mean: s.mean,
                        std: s.std,
                    });
                }
            }
            Report {
                curve: Some(("train_size".into(), rows)),
                ..Report::default()
            }
        }
        Recipe::NoiseSweep { families, levels } => {
            let mut rows = Vec::new();
            for f in families {
                let model = prerequisite(checkpoint_root, f.checkpoint_from, cfg.id)?;
                let clean = dataset::generate(&f.test.spec, f.test.count, 0)?;
                for &level in levels {
                    let stimuli = if level == 0 { clean.clone() } else { dataset::with_noise(&clean, level)? };
                    let s = aggregate(&evaluate_cnn(&model, &stimuli.stimuli)?)?[0];
                    log(&format!("{}: noise {level} accuracy {:.3}", f.name, s.mean));
                    rows.push(CurveRow {
                        dataset: f.name.clone(),
                        x: level,
                        mean: s.mean,
                        std: s.std,
                    });
                }
            }
            Report {
                curve: Some(("noise_pixels".into(), rows)),
                ..Report::default()
            }
        }
    };
    report.wall_clock_secs = if cfg.deterministic { 0.0 } else { start.elapsed().as_secs_f64() };
    report.write(&dir, cfg, cfg.deterministic)?;
    Ok(report)
}
