use std::path::Path;

use oclu_cli::bench::{bench, BaselineGrid};
use oclu_cli::commands::{cmd_bench, cmd_gen, cmd_render, cmd_train, point_labels_to_map};
use oclu_cli::experiment::{
    effective_epochs, preset, recipe, run_experiment, DataPlan, Overrides, Recipe, PRESETS,
};
use oclu_cli::profile::Profile;
use oclu_cli::render::{gray_level, label_image};
use oclu_core::baselines::{kmeans, Method};
use oclu_core::checkpoint::save_checkpoint;
use oclu_core::dataset::{self, SceneSpec};
use oclu_core::evaluation::evaluate_stimulus;
use oclu_core::pgm::GrayImage;
use oclu_core::seed::rng_for;
use oclu_core::stimuli::{IntRange, ShapeSceneSpec};
use oclu_core::unet::{build_unet, TrainConfig, UNetConfig};

fn tiny_model() -> UNetConfig {
    UNetConfig {
        depth: 2,
        base_filters: 4,
        output_channels: 3,
        image_size: 32,
        kernel_size: 3,
    }
}

fn tiny_spec(objects: usize) -> SceneSpec {
    SceneSpec::Shape(ShapeSceneSpec {
        object_count: IntRange::single(objects),
        ..ShapeSceneSpec::default().scaled_to(32)
    })
}

fn quiet(_: &str) {}

#[test]
fn recipes_cover_all_experiments() {
    for id in 1..=9 {
        let cfg = recipe(id, Profile::Desk, 0).unwrap();
        assert_eq!(cfg.id, id);
        assert_eq!(cfg.model, UNetConfig::desk());
        match &cfg.recipe {
            Recipe::Benchmark { test, .. } | Recipe::Transfer { test, .. } => {
                assert_eq!(test.count, 200);
                assert_eq!(cfg.methods, Method::ALL.to_vec());
            }
            Recipe::LearningCurve { .. } | Recipe::NoiseSweep { .. } => assert_eq!(cfg.methods, vec![Method::Cnn]),
        }
    }
    assert!(recipe(0, Profile::Desk, 0).is_err());
    assert!(recipe(10, Profile::Desk, 0).is_err());
}

#[test]
fn recipe_sizes_follow_profile() {
    let sizes = |id, p| match recipe(id, p, 0).unwrap().recipe {
        Recipe::Benchmark { train: Some(t), .. } => t.data.count,
        _ => unreachable!(),
    };
    assert_eq!(sizes(1, Profile::Paper), 1800);
    assert_eq!(sizes(3, Profile::Paper), 2700);
    assert_eq!(sizes(4, Profile::Paper), 7000);
    assert_eq!(sizes(1, Profile::Desk), 360);
    assert_eq!(sizes(3, Profile::Desk), 540);
    match recipe(8, Profile::Paper, 0).unwrap().recipe {
        Recipe::LearningCurve { sizes, families } => {
            assert_eq!(sizes, vec![0, 1, 10, 100, 1000, 3000, 7000]);
            assert!(families.iter().all(|f| f.train.data.count == 7000));
        }
        _ => unreachable!(),
    }
    match recipe(9, Profile::Paper, 0).unwrap().recipe {
        Recipe::NoiseSweep { levels, .. } => assert_eq!(levels, vec![0, 250, 500, 1000]),
        _ => unreachable!(),
    }
    match recipe(6, Profile::Paper, 0).unwrap().recipe {
        Recipe::Benchmark { test, .. } => match test.spec {
            SceneSpec::Gaussian(g) => assert_eq!(g.points, IntRange::new(400, 700)),
            _ => unreachable!(),
        },
        _ => unreachable!(),
    }
}

#[test]
fn shared_test_sets_are_identical_across_recipes() {
    let test_of = |id| match recipe(id, Profile::Desk, 5).unwrap().recipe {
        Recipe::Benchmark { test, .. } => test,
        _ => unreachable!(),
    };
    let noise = match recipe(9, Profile::Desk, 5).unwrap().recipe {
        Recipe::NoiseSweep { families, .. } => families,
        _ => unreachable!(),
    };
    assert_eq!(test_of(1), noise[0].test);
    assert_eq!(test_of(5), noise[1].test);
    assert_ne!(test_of(1).spec.seed(), test_of(3).spec.seed());
}

#[test]
fn overrides_rewrite_sizes_and_methods() {
    let mut cfg = recipe(1, Profile::Desk, 0).unwrap();
    cfg.apply(&Overrides {
        train_count: Some(7),
        test_count: Some(3),
        epochs: Some(2),
        min_steps: Some(0),
        methods: Some(vec![Method::KMeans]),
        ..Overrides::default()
    });
    match &cfg.recipe {
        Recipe::Benchmark { train: Some(t), test, .. } => {
            assert_eq!((t.data.count, test.count, t.config.epochs, t.min_steps), (7, 3, 2, 0));
        }
        _ => unreachable!(),
    }
    assert_eq!(cfg.methods, vec![Method::KMeans]);
}

#[test]
fn small_sets_get_enough_steps() {
    assert_eq!(effective_epochs(30, 400, 100, 16), 58);
    assert_eq!(effective_epochs(30, 400, 360, 16), 30);
    assert_eq!(effective_epochs(30, 400, 1, 16), 400);
    assert_eq!(effective_epochs(5, 0, 10, 16), 5);
}

#[test]
fn presets_are_valid() {
    for name in PRESETS {
        for p in [Profile::Desk, Profile::Paper] {
            let spec = preset(name, p).unwrap();
            spec.validate().unwrap();
            assert_eq!(spec.image_size(), p.image_size());
        }
    }
    assert!(preset("nope", Profile::Desk).is_err());
    let s = DataPlan::new("same_kind/test", preset("same_kind", Profile::Desk).unwrap(), 10, 0).generate().unwrap();
    assert!(s.iter().all(|x| x.k() == 2));
}

#[test]
fn gen_is_reproducible_and_handles_empty() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, e) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("e"));
    cmd_gen(&tiny_spec(2), 4, 5, &a, 9).unwrap();
    cmd_gen(&tiny_spec(2), 4, 5, &b, 9).unwrap();
    for f in std::fs::read_dir(&a).unwrap() {
        let name = f.unwrap().file_name();
        assert_eq!(std::fs::read(a.join(&name)).unwrap(), std::fs::read(b.join(&name)).unwrap(), "{name:?}");
    }
    let d = cmd_gen(&tiny_spec(2), 0, 0, &e, 9).unwrap();
    assert!(d.stimuli.is_empty());
    assert_eq!(std::fs::read_dir(&e).unwrap().count(), 1);
    assert!(e.join(dataset::MANIFEST).exists());
}

#[test]
fn train_smoke_and_cluster_count_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("one");
    cmd_gen(&tiny_spec(2), 1, 0, &data, 1).unwrap();
    let tc = TrainConfig {
        epochs: 3,
        ..TrainConfig::default()
    };
    let ckpt = dir.path().join("run/model.ckpt");
    let (_, report) = cmd_train(&data, tiny_model(), &tc, 0, &ckpt, &mut quiet).unwrap();
    assert_eq!(report.loss_history.len(), 3);
    assert!(ckpt.exists());
    let loss = std::fs::read_to_string(dir.path().join("run/loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 4);
    let again = dir.path().join("again/model.ckpt");
    cmd_train(&data, tiny_model(), &tc, 0, &again, &mut quiet).unwrap();
    assert_eq!(std::fs::read(&ckpt).unwrap(), std::fs::read(&again).unwrap());
    assert_eq!(loss, std::fs::read_to_string(dir.path().join("again/loss.csv")).unwrap());

    let many = dir.path().join("many");
    cmd_gen(&tiny_spec(4), 2, 0, &many, 1).unwrap();
    let err = cmd_train(&many, tiny_model(), &tc, 0, &dir.path().join("x.ckpt"), &mut quiet).unwrap_err();
    let msg = format!("{err:#}");
    assert!(msg.contains("stimulus 0000") && msg.contains("4 clusters"), "{msg}");
}

#[test]
fn bench_errors_and_single_method_agreement() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    let d = cmd_gen(&tiny_spec(2), 5, 0, &data, 3).unwrap();
    let grid = BaselineGrid::single();
    let out = dir.path().join("r");
    assert!(cmd_bench(&data, &[], &grid, None, 0, &out, true).is_err());
    assert!(cmd_bench(&data, &[Method::Cnn], &grid, None, 0, &out, true).is_err());
    assert!(bench(&d.stimuli, &[Method::Cnn], &grid, None, 0).is_err());

    let ckpt = dir.path().join("m.ckpt");
    save_checkpoint(&build_unet::<f32>(tiny_model(), 0).unwrap(), &ckpt).unwrap();
    let all = cmd_bench(&data, &Method::ALL, &grid, Some(&ckpt), 0, &out, true).unwrap();
    let order: Vec<Method> = all.summaries.iter().map(|s| s.method).collect();
    assert_eq!(order, Method::ALL.to_vec());
    let table = std::fs::read_to_string(out.join("table.csv")).unwrap();
    assert!(table.starts_with("CNN,kM,FCM,NJW,SC,MS,CFSFDP\n"));
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.starts_with("method,mean,std\n"));

    // k-means alone, run directly with the bench's seed stream
    let direct: f64 = d
        .stimuli
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut r = rng_for(0, "bench/kM", i as u64);
            let res = kmeans(&s.point_set.points, s.k(), 10, &mut r).unwrap();
            evaluate_stimulus("x", s, &res).unwrap().accuracy
        })
        .sum::<f64>()
        / 5.0;
    let alone = bench(&d.stimuli, &[Method::KMeans], &grid, None, 0).unwrap();
    assert_eq!(alone.mean_of(Method::KMeans), all.mean_of(Method::KMeans));
    assert!((alone.mean_of(Method::KMeans).unwrap() - direct).abs() < 1e-12);
}

#[test]
fn grid_keeps_best_setting() {
    let d = dataset::generate(&tiny_spec(2).with_seed(4), 4, 0).unwrap();
    let grid = BaselineGrid::default();
    let b = bench(&d.stimuli, &[Method::MeanShift, Method::Cfsfdp], &grid, None, 0).unwrap();
    for m in [Method::MeanShift, Method::Cfsfdp] {
        let best = b.grid.iter().filter(|g| g.method == m).map(|g| g.mean).fold(f64::MIN, f64::max);
        assert_eq!(b.mean_of(m), Some(best));
        assert_eq!(b.grid.iter().filter(|g| g.method == m).count(), grid.settings(m).1.len());
    }
    assert_eq!(b.records.len(), 8);
}

#[test]
fn missing_prerequisite_checkpoints_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    for (id, needs) in [(2, 1), (7, 3), (9, 1)] {
        let cfg = recipe(id, Profile::Desk, 0).unwrap();
        let err = run_experiment(&cfg, dir.path(), dir.path(), &mut quiet).unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains(&format!("experiment {needs} checkpoint")), "{msg}");
    }
}

#[test]
fn render_levels_and_prediction_pixels() {
    assert_eq!(gray_level(-1, 3), 0);
    let levels: Vec<u8> = (0..3).map(|l| gray_level(l, 3)).collect();
    assert_eq!(levels, vec![64, 160, 255]);

    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    let d = cmd_gen(&tiny_spec(3), 1, 0, &data, 8).unwrap();
    let s = &d.stimuli[0];
    let out = dir.path().join("img");
    cmd_render(&data, 0, &[Method::KMeans], &BaselineGrid::single(), None, 0, &out).unwrap();

    let gt = GrayImage::load(&out.join("0000.gt.pgm")).unwrap();
    let mut seen: Vec<u8> = gt.pixels.iter().copied().filter(|&v| v > 0).collect();
    seen.sort_unstable();
    seen.dedup();
    assert_eq!(seen.len(), s.k());

    // every point pixel in the prediction render carries its k-means label
    let res = kmeans(&s.point_set.points, s.k(), 10, &mut rng_for(0, "bench/kM", 0)).unwrap();
    let pred = GrayImage::load(&out.join("0000.kM.pred.pgm")).unwrap();
    let k = res.k_found.max(s.k());
    for (p, &l) in s.point_set.points.iter().zip(&res.labels) {
        assert_eq!(pred.pixels[s.pixel_of(p)], gray_level(l as i32, k));
    }
    let png = image::open(out.join("0000.kM.pred.png")).unwrap().to_rgb8();
    let map = point_labels_to_map(s, &res.labels);
    for (i, &l) in map.iter().enumerate() {
        let px = png.get_pixel((i % s.image_size) as u32, (i / s.image_size) as u32);
        assert_eq!(px.0 == [0, 0, 0], l < 0);
    }

    // render of a reloaded stimulus reproduces the same bytes
    let again = dir.path().join("again");
    dataset::save(&dataset::load(&data).unwrap(), &dir.path().join("d2")).unwrap();
    cmd_render(&dir.path().join("d2"), 0, &[], &BaselineGrid::single(), None, 0, &again).unwrap();
    for f in ["0000.input.pgm", "0000.gt.pgm", "0000.gt.png"] {
        assert_eq!(std::fs::read(out.join(f)).unwrap(), std::fs::read(again.join(f)).unwrap());
    }
    let img = label_image(&s.gt_label_map, s.image_size, s.k());
    assert_eq!(img, gt);
}

#[test]
fn tiny_experiment_writes_report_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = recipe(1, Profile::Desk, 2).unwrap();
    cfg.apply(&Overrides {
        train_count: Some(2),
        test_count: Some(2),
        epochs: Some(1),
        min_steps: Some(0),
        methods: Some(vec![Method::Cnn, Method::KMeans]),
        grid: Some(BaselineGrid::single()),
        ..Overrides::default()
    });
    let r = run_experiment(&cfg, dir.path(), dir.path(), &mut quiet).unwrap();
    assert_eq!(r.summaries.len(), 2);
    let exp = dir.path().join("exp1");
    for f in ["report.csv", "table.csv", "records.csv", "grid.csv", "loss.csv", "config.json", "model.ckpt"] {
        assert!(exp.join(f).exists(), "{f}");
    }
    let echo: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(exp.join("config.json")).unwrap()).unwrap();
    assert_eq!(echo["profile"], "desk");
    assert_eq!(echo["recipe"]["train"]["data"]["count"], 2);

    // experiment 2 picks up the checkpoint just written
    let mut cfg2 = recipe(2, Profile::Desk, 2).unwrap();
    cfg2.apply(&Overrides {
        test_count: Some(2),
        methods: Some(vec![Method::Cnn]),
        ..Overrides::default()
    });
    run_experiment(&cfg2, dir.path(), dir.path(), &mut quiet).unwrap();
    assert!(Path::new(&dir.path().join("exp2/report.csv")).exists());
}
