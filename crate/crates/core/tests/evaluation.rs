use oclu_core::baselines::{ClusteringResult, Method};
use oclu_core::evaluation::{aggregate, evaluate_stimulus, pairwise_rand_accuracy, EvalRecord};
use oclu_core::seed::rng;
use oclu_core::stimuli::{inject_noise, Point, PointSet, Stimulus};
use proptest::prelude::*;
use rand::Rng;

/// Co-membership matrices compared entry by entry, diagonal excluded.
fn hamming_accuracy(gt: &[usize], pred: &[usize]) -> f64 {
    let n = gt.len();
    let co = |l: &[usize]| -> Vec<bool> { (0..n * n).map(|ij| l[ij / n] == l[ij % n]).collect() };
    let (a, b) = (co(gt), co(pred));
    let mismatches = (0..n * n).filter(|&ij| ij / n != ij % n && a[ij] != b[ij]).count();
    1.0 - mismatches as f64 / (n * (n - 1)) as f64
}

fn record(acc: f64) -> EvalRecord {
    EvalRecord {
        stimulus_id: "s".into(),
        method: Method::KMeans,
        n: 10,
        accuracy: acc,
        noise_excluded: 0,
        runtime_secs: 0.0,
    }
}

#[test]
fn worked_examples() {
    assert_eq!(pairwise_rand_accuracy(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
    assert!((pairwise_rand_accuracy(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap() - 2.0 / 6.0).abs() < 1e-15);
}

#[test]
fn pair_formula_matches_matrix_hamming() {
    let mut r = rng(11);
    for _ in 0..100 {
        let n = r.random_range(2..=50);
        let (ka, kb) = (r.random_range(1..=5), r.random_range(1..=5));
        let gt: Vec<usize> = (0..n).map(|_| r.random_range(0..ka)).collect();
        let pred: Vec<usize> = (0..n).map(|_| r.random_range(0..kb)).collect();
        let fast = pairwise_rand_accuracy(&gt, &pred).unwrap();
        assert!((fast - hamming_accuracy(&gt, &pred)).abs() < 1e-12);
    }
}

#[test]
fn random_balanced_prediction_is_near_chance() {
    let mut r = rng(3);
    let gt: Vec<usize> = (0..2000).map(|i| i % 2).collect();
    let pred: Vec<usize> = (0..2000).map(|_| r.random_range(0..2)).collect();
    let acc = pairwise_rand_accuracy(&gt, &pred).unwrap();
    assert!((acc - 0.5).abs() < 0.02, "{acc}");
}

#[test]
fn one_cluster_prediction_scores_within_pair_fraction() {
    let pts: Vec<Point> = (0..20).map(|i| Point::new(i as f64, if i < 10 { 1.0 } else { 30.0 })).collect();
    let ps = PointSet {
        points: pts,
        labels: (0..20).map(|i| usize::from(i >= 10)).collect(),
        k: 2,
    };
    let s = Stimulus::from_point_set(ps, 32);
    let rec = evaluate_stimulus("a", &s, &ClusteringResult::from_raw(&[0; 20], Method::KMeans)).unwrap();
    // 2 * C(10,2) within-cluster pairs out of C(20,2)
    assert!((rec.accuracy - 90.0 / 190.0).abs() < 1e-12);

    let noisy = inject_noise(&s, 50, &mut rng(1)).unwrap();
    let again = evaluate_stimulus("a", &noisy, &ClusteringResult::from_raw(&[0; 20], Method::KMeans)).unwrap();
    assert_eq!(again.accuracy, rec.accuracy);
    assert_eq!(again.noise_excluded, 50);
}

#[test]
fn aggregate_matches_two_pass() {
    let s = aggregate(&[record(0.8), record(0.9)]).unwrap();
    assert!((s[0].mean - 0.85).abs() < 1e-12 && (s[0].std - 0.05).abs() < 1e-12);
    assert_eq!(aggregate(&[record(0.7)]).unwrap()[0].std, 0.0);
    assert!(aggregate(&[]).is_err());

    let mut r = rng(5);
    let vals: Vec<f64> = (0..500).map(|_| r.random()).collect();
    let recs: Vec<_> = vals.iter().map(|&v| record(v)).collect();
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
    let s = &aggregate(&recs).unwrap()[0];
    assert!((s.mean - mean).abs() < 1e-12 && (s.std - var.sqrt()).abs() < 1e-12);
}

fn partitions() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (2usize..40).prop_flat_map(|n| (prop::collection::vec(0usize..4, n), prop::collection::vec(0usize..4, n)))
}

proptest! {
    #[test]
    fn symmetric((a, b) in partitions()) {
        let ab = pairwise_rand_accuracy(&a, &b).unwrap();
        prop_assert_eq!(ab, pairwise_rand_accuracy(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
    }

    #[test]
    fn invariant_to_relabeling((a, b) in partitions(), perm in Just([0usize, 1, 2, 3]).prop_shuffle()) {
        let relabeled: Vec<usize> = b.iter().map(|&l| perm[l] + 7).collect();
        let x = pairwise_rand_accuracy(&a, &b).unwrap();
        prop_assert!((x - pairwise_rand_accuracy(&a, &relabeled).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn perfect_iff_same_partition((a, b) in partitions()) {
        let same = (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])));
        prop_assert_eq!(pairwise_rand_accuracy(&a, &b).unwrap() == 1.0, same);
    }
}
