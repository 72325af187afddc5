use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use oclu_cli::bench::BaselineGrid;
use oclu_cli::commands::{cmd_bench, cmd_gen, cmd_render, cmd_train, train_init_seed};
use oclu_cli::experiment::{preset, recipe, run_experiment, Overrides};
use oclu_cli::gradcheck::full_suite;
use oclu_cli::profile::Profile;
use oclu_cli::report::format_summaries;
use oclu_core::baselines::Method;
use oclu_core::dataset::SceneSpec;
use oclu_core::stimuli::LabelOrder;
use oclu_core::unet::TrainConfig;

#[derive(Parser)]
#[command(name = "oclu", version, about = "Point-cluster segmentation with a U-Net and classical baselines")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Master seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Profile::Desk)]
    profile: Profile,
    /// Bit-reproducible training and runtime-free reports.
    #[arg(long, global = true)]
    deterministic: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset.
    Gen {
        /// Scene spec as JSON.
        #[arg(long, conflicts_with = "preset")]
        spec: Option<PathBuf>,
        /// Named scene family (shapes2, same_kind, shapes3, rings2, rings3, gauss, dense_gauss).
        #[arg(long, default_value = "shapes2")]
        preset: String,
        #[arg(long, default_value_t = 200)]
        count: usize,
        /// Background noise pixels per stimulus.
        #[arg(long, default_value_t = 0)]
        noise: usize,
    },
    /// Train a model on a dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, default_value_t = 16)]
        batch_size: usize,
        #[arg(long, default_value_t = 1e-3)]
        learning_rate: f64,
        #[arg(long)]
        early_stop: bool,
    },
    /// Benchmark methods on a dataset.
    Bench {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "cnn,km,fcm,njw,sc,ms,cfsfdp")]
        methods: Vec<Method>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Baseline parameter grid as JSON.
        #[arg(long)]
        grid: Option<PathBuf>,
    },
    /// Run an experiment recipe (1-9).
    Experiment {
        id: u8,
        /// Directory holding exp{k}/model.ckpt of earlier experiments.
        #[arg(long)]
        checkpoints: Option<PathBuf>,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Render a stimulus and method predictions as PGM and PNG.
    Render {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, value_delimiter = ',')]
        methods: Vec<Method>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Check every op and a small U-Net against finite differences.
    Gradcheck,
}

#[derive(Args)]
struct OverrideArgs {
    #[arg(long)]
    train_count: Option<usize>,
    #[arg(long)]
    test_count: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    min_steps: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long)]
    grid: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    noise_levels: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    train_sizes: Option<Vec<usize>>,
    /// Label order of training targets: topdown or random.
    #[arg(long)]
    label_order: Option<String>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn grid_from(path: Option<&PathBuf>) -> Result<BaselineGrid> {
    path.map_or_else(|| Ok(BaselineGrid::default()), read_json)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let c = &cli.common;
    let mut log = |m: &str| eprintln!("{m}");
    match cli.command {
        Command::Gen { spec, preset: name, count, noise } => {
            let spec: SceneSpec = match spec {
                Some(p) => read_json(&p)?,
                None => preset(&name, c.profile)?,
            };
            cmd_gen(&spec, count, noise, &c.out, c.seed)?;
            println!("wrote {count} stimuli to {}", c.out.display());
        }
        Command::Train { data, epochs, batch_size, learning_rate, early_stop } => {
            let tc = TrainConfig {
                batch_size,
                learning_rate,
                epochs,
                seed: c.seed,
                deterministic: c.deterministic,
                early_stop,
            };
            let ckpt = c.out.join("model.ckpt");
            cmd_train(&data, c.profile.model(), &tc, train_init_seed(c.seed), &ckpt, &mut log)?;
            println!("wrote {}", ckpt.display());
        }
        Command::Bench { data, methods, checkpoint, grid } => {
            let grid = grid_from(grid.as_ref())?;
            let r = cmd_bench(&data, &methods, &grid, checkpoint.as_deref(), c.seed, &c.out, c.deterministic)?;
            println!("{}", format_summaries(&r.summaries));
        }
        Command::Experiment { id, checkpoints, overrides: o } => {
            let mut cfg = recipe(id, c.profile, c.seed)?;
            cfg.deterministic = c.deterministic;
            let label_order = match o.label_order.as_deref() {
                None => None,
                Some("topdown") => Some(LabelOrder::Topdown),
                Some("random") => Some(LabelOrder::Random),
                Some(other) => anyhow::bail!("unknown label order {other:?}"),
            };
            cfg.apply(&Overrides {
                train_count: o.train_count,
                test_count: o.test_count,
                epochs: o.epochs,
                min_steps: o.min_steps,
                methods: o.methods,
                grid: o.grid.as_ref().map(read_json).transpose()?,
                noise_levels: o.noise_levels,
                train_sizes: o.train_sizes,
                label_order,
            });
            let root = checkpoints.unwrap_or_else(|| c.out.clone());
            let r = run_experiment(&cfg, &c.out, &root, &mut log)?;
            if !r.summaries.is_empty() {
                println!("{}", format_summaries(&r.summaries));
            }
            for (name, mean, std) in &r.notes {
                println!("{name}: {mean:.3} ± {std:.3}");
            }
            if let Some((x, rows)) = &r.curve {
                for row in rows {
                    println!("{} {x}={} {:.3} ± {:.3}", row.dataset, row.x, row.mean, row.std);
                }
            }
        }
        Command::Render { data, index, methods, checkpoint } => {
            cmd_render(&data, index, &methods, &BaselineGrid::single(), checkpoint.as_deref(), c.seed, &c.out)?;
            println!("wrote renders to {}", c.out.display());
        }
        Command::Gradcheck => {
            let checks = full_suite(c.seed)?;
            let mut ok = true;
            for ch in &checks {
                let status = if ch.passed() { "ok" } else { "FAIL" };
                let r = &ch.report;
                let mut extra = String::new();
                if r.skipped() + r.unresolved() > 0 {
                    extra = format!("  ({} at kinks, {} below resolution, of {})", r.skipped(), r.unresolved(), r.elements());
                }
                println!("{:<20} max rel err {:.3e}  {status}{extra}", ch.name, r.max_relative_error());
                ok &= ch.passed();
            }
            if !ok {
                anyhow::bail!("gradient check failed");
            }
        }
    }
    Ok(())
}
