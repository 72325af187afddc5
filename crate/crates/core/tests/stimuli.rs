use oclu_core::seed::{rng, rng_for};
use oclu_core::stimuli::{
    gaussian_covariance, generate_gaussian_stimulus, generate_shape_stimulus, inject_noise, sample_gaussian_cluster,
    sample_shape_points, GaussianSceneSpec, IntRange, LabelOrder, ShapeKind, ShapeSceneSpec, BACKGROUND,
};
use proptest::prelude::*;

#[test]
fn sample_covariance_matches_generator() {
    let a = [0.9, 0.2, 0.3, 0.7];
    let scale = 25.0;
    let pts = sample_gaussian_cluster((256.0, 256.0), a, scale, 10_000, 512, &mut rng(5)).unwrap();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.x).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.y).sum::<f64>() / n;
    let cxx = pts.iter().map(|p| (p.x - mx).powi(2)).sum::<f64>() / (n - 1.0);
    let cyy = pts.iter().map(|p| (p.y - my).powi(2)).sum::<f64>() / (n - 1.0);
    let cxy = pts.iter().map(|p| (p.x - mx) * (p.y - my)).sum::<f64>() / (n - 1.0);
    // A^T A by hand for A = [0.9 0.2; 0.3 0.7]
    let want = [scale * 0.90, scale * 0.39, scale * 0.39, scale * 0.53];
    let got = gaussian_covariance(a, scale);
    for (w, g) in want.iter().zip(got) {
        assert!((w - g).abs() < 1e-12);
    }
    for (est, w) in [cxx, cxy, cxy, cyy].iter().zip(want) {
        assert!((est - w).abs() / w < 0.10, "{est} vs {w}");
    }
}

#[test]
fn degenerate_gaussian_spec_is_rejected() {
    let spec = GaussianSceneSpec {
        covariance_scale: 0.0,
        ..GaussianSceneSpec::default()
    };
    assert!(generate_gaussian_stimulus(&spec, &mut rng(0)).is_err());
    // a mean at the corner with a huge spread loses nearly every draw
    assert!(sample_gaussian_cluster((0.0, 0.0), [1.0; 4], 1e8, 100, 8, &mut rng(0)).is_err());
}

#[test]
fn gaussian_cluster_sizes_follow_spec() {
    let spec = GaussianSceneSpec::default();
    for i in 0..20 {
        let s = generate_gaussian_stimulus(&spec, &mut rng_for(3, "g", i)).unwrap();
        assert!(spec.cluster_counts.contains(&s.k()));
        assert!(s.point_set.cluster_sizes().iter().all(|&c| spec.points.contains(c)));
    }
}

#[test]
fn single_object_map_has_one_label() {
    let spec = ShapeSceneSpec {
        object_count: IntRange::single(1),
        ..ShapeSceneSpec::default()
    };
    let s = generate_shape_stimulus(&spec, &mut rng(4)).unwrap();
    assert!(s.gt_label_map.iter().all(|&l| l == BACKGROUND || l == 0));
}

#[test]
fn noise_adds_exact_pixel_count() {
    let s = generate_shape_stimulus(&ShapeSceneSpec::default(), &mut rng(9)).unwrap();
    let before = s.foreground_count();
    assert_eq!(inject_noise(&s, 0, &mut rng(1)).unwrap(), s);
    let noisy = inject_noise(&s, 500, &mut rng(1)).unwrap();
    assert_eq!(noisy.foreground_count(), before + 500);
    assert_eq!(noisy.gt_label_map, s.gt_label_map);
    assert_eq!(noisy.point_set, s.point_set);
    for &(x, y) in &noisy.noise_pixels {
        assert_eq!(noisy.gt_label_map[y * s.image_size + x], BACKGROUND);
    }
    assert!(inject_noise(&s, s.image.len(), &mut rng(1)).is_err());
}

fn shape_kind() -> impl Strategy<Value = ShapeKind> {
    prop::sample::select(ShapeKind::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampled_points_satisfy_shape_predicate(
        kind in shape_kind(),
        scale in 5.0f64..30.0,
        theta in 0.0f64..std::f64::consts::TAU,
        seed in any::<u64>(),
    ) {
        let t = (64.0, 64.0);
        let pts = sample_shape_points(kind, scale, 200, theta, t, 128, &mut rng(seed)).unwrap();
        prop_assert_eq!(pts.len(), 200);
        let (s, c) = theta.sin_cos();
        for p in pts {
            let (dx, dy) = (p.x - t.0, p.y - t.1);
            // inverse rotation back to the shape frame
            let (lx, ly) = (c * dx + s * dy, -s * dx + c * dy);
            prop_assert!(kind.contains(scale, lx, ly), "{:?} ({}, {})", kind, lx, ly);
        }
    }

    #[test]
    fn shape_scenes_are_well_formed(seed in any::<u64>(), random in any::<bool>()) {
        let spec = ShapeSceneSpec {
            object_count: IntRange::new(1, 3),
            label_order: if random { LabelOrder::Random } else { LabelOrder::Topdown },
            ..ShapeSceneSpec::default().scaled_to(64)
        };
        let s = generate_shape_stimulus(&spec, &mut rng(seed)).unwrap();
        prop_assert_eq!(&s, &generate_shape_stimulus(&spec, &mut rng(seed)).unwrap());
        let ps = &s.point_set;
        prop_assert!(spec.object_count.contains(ps.k));
        prop_assert!(ps.cluster_sizes().iter().all(|&c| spec.density.contains(c)));
        prop_assert!(ps.points.iter().all(|p| p.x >= 0.0 && p.y >= 0.0 && p.x < 64.0 && p.y < 64.0));

        if !random {
            let tops: Vec<(f64, f64)> = ps
                .clusters()
                .iter()
                .map(|c| {
                    let y = c.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
                    let x = c.iter().filter(|p| p.y == y).map(|p| p.x).fold(f64::INFINITY, f64::min);
                    (y, x)
                })
                .collect();
            prop_assert!(tops.windows(2).all(|w| w[0] <= w[1]));
        }

        // every point reads back its own label unless its pixel is contested
        let mut owners = vec![Vec::new(); s.image.len()];
        for (p, &l) in ps.points.iter().zip(&ps.labels) {
            owners[s.pixel_of(p)].push(l);
        }
        for (p, &l) in ps.points.iter().zip(&ps.labels) {
            let i = s.pixel_of(p);
            let contested = owners[i].iter().any(|&o| o != l);
            prop_assert!(contested || s.gt_label_map[i] == l as i32);
            prop_assert_eq!(s.image[i], 1);
        }
        let fg = s.image.iter().filter(|&&v| v == 1).count();
        prop_assert_eq!(fg, owners.iter().filter(|o| !o.is_empty()).count());
        prop_assert!(s.image.iter().zip(&s.gt_label_map).all(|(&v, &l)| (v == 0) == (l == BACKGROUND)));
    }
}
