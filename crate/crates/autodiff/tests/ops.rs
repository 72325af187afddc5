//! Operator tests against naive nested-loop references and finite
//! differences.

use oclu_autodiff::{adam_step, finite_diff_check, finite_diff_check_smooth, AdamConfig, AdamState, AutodiffError, Graph, NodeId, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Random values kept at least `gap` away from zero.
fn away_from_zero(shape: &[usize], gap: f64, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let v: f64 = rng.random_range(gap..1.0);
        if rng.random_bool(0.5) {
            v
        } else {
            -v
        }
    })
}

fn naive_conv(input: &Tensor<f64>, kernel: &Tensor<f64>, bias: &Tensor<f64>) -> Vec<f64> {
    let (c, h, w) = input.chw().unwrap();
    let (f, k) = (kernel.shape()[0], kernel.shape()[2]);
    let pad = (k / 2) as isize;
    let mut out = vec![0.0; f * h * w];
    for fo in 0..f {
        for y in 0..h {
            for x in 0..w {
                let mut acc = bias.values()[fo];
                for ci in 0..c {
                    for ky in 0..k {
                        for kx in 0..k {
                            let sy = y as isize + ky as isize - pad;
                            let sx = x as isize + kx as isize - pad;
                            if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                continue;
                            }
                            acc += kernel.at(&[fo, ci, ky, kx]) * input.at(&[ci, sy as usize, sx as usize]);
                        }
                    }
                }
                out[(fo * h + y) * w + x] = acc;
            }
        }
    }
    out
}

fn naive_pool(input: &Tensor<f64>) -> Vec<f64> {
    let (c, h, w) = input.chw().unwrap();
    let mut out = Vec::new();
    for ci in 0..c {
        for y in 0..h / 2 {
            for x in 0..w / 2 {
                let mut m = f64::NEG_INFINITY;
                for dy in 0..2 {
                    for dx in 0..2 {
                        m = m.max(input.at(&[ci, 2 * y + dy, 2 * x + dx]));
                    }
                }
                out.push(m);
            }
        }
    }
    out
}

fn naive_upsample(input: &Tensor<f64>) -> Vec<f64> {
    let (c, h, w) = input.chw().unwrap();
    let mut out = Vec::new();
    for ci in 0..c {
        for y in 0..2 * h {
            for x in 0..2 * w {
                out.push(input.at(&[ci, y / 2, x / 2]));
            }
        }
    }
    out
}

fn conv_of(input: Tensor<f64>, kernel: Tensor<f64>, bias: Tensor<f64>) -> Vec<f64> {
    let mut g = Graph::new();
    let (i, k, b) = (g.leaf(input), g.leaf(kernel), g.leaf(bias));
    let out = g.conv2d(i, k, b).unwrap();
    g.value(out).values().to_vec()
}

/// Scalarizes an op output with fixed random weights so every output
/// element contributes to the checked gradient.
fn reduce(g: &mut Graph<f64>, out: NodeId, seed: u64) -> oclu_autodiff::Result<NodeId> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = g.value(out).len();
    let w = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    g.dot_const(out, w)
}

#[test]
fn conv_identity_and_zero_kernels() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random(&[2, 5, 5], &mut rng);
    let mut ident = Tensor::zeros(&[2, 2, 1, 1]);
    ident.values_mut()[0] = 1.0;
    ident.values_mut()[3] = 1.0;
    assert_eq!(conv_of(x.clone(), ident, Tensor::zeros(&[2])), x.values());

    let zero = conv_of(x, Tensor::zeros(&[3, 2, 3, 3]), Tensor::zeros(&[3]));
    assert!(zero.iter().all(|&v| v == 0.0));
}

#[test]
fn conv_matches_nested_loop_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random(&[2, 4, 4], &mut rng);
    let k = random(&[3, 2, 3, 3], &mut rng);
    let b = random(&[3], &mut rng);
    let want = naive_conv(&x, &k, &b);
    let got = conv_of(x, k, b);
    for (a, b) in got.iter().zip(&want) {
        assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }
}

#[test]
fn conv_rejects_bad_shapes() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::zeros(&[2, 4, 4]));
    let k = g.leaf(Tensor::zeros(&[3, 1, 3, 3]));
    let b = g.leaf(Tensor::zeros(&[3]));
    assert!(matches!(g.conv2d(x, k, b), Err(AutodiffError::ShapeMismatch { .. })));
    let even = g.leaf(Tensor::zeros(&[3, 2, 2, 2]));
    assert!(g.conv2d(x, even, b).is_err());
}

#[test]
fn pool_window_max_and_tie_break() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::new(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let p = g.max_pool2x2(x).unwrap();
    assert_eq!(g.value(p).values(), &[4.0]);

    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::full(&[1, 4, 4], 3.0));
    let p = g.max_pool2x2(x).unwrap();
    assert!(g.value(p).values().iter().all(|&v| v == 3.0));
    let l = g.dot_const(p, vec![1.0; 4]).unwrap();
    g.backward(l).unwrap();
    let grad = g.grad(x).unwrap();
    let hot: Vec<usize> = (0..16).filter(|&i| grad[i] != 0.0).collect();
    assert_eq!(hot, vec![0, 2, 8, 10]);
}

#[test]
fn pool_rejects_odd_dimensions() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::zeros(&[1, 3, 4]));
    assert!(g.max_pool2x2(x).is_err());
}

#[test]
fn pool_and_upsample_match_loop_references() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random(&[3, 8, 8], &mut rng);
    let mut g = Graph::new();
    let id = g.leaf(x.clone());
    let p = g.max_pool2x2(id).unwrap();
    let u = g.upsample_nearest2x(id).unwrap();
    assert_eq!(g.value(p).values(), &naive_pool(&x)[..]);
    assert_eq!(g.value(u).values(), &naive_upsample(&x)[..]);
}

#[test]
fn upsample_replicates_and_round_trips_constants() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::full(&[1, 1, 1], 7.0));
    let u = g.upsample_nearest2x(x).unwrap();
    assert_eq!(g.value(u).shape(), &[1, 2, 2]);
    assert_eq!(g.value(u).values(), &[7.0; 4]);

    let c = Tensor::full(&[2, 6, 6], -1.5);
    let x = g.leaf(c.clone());
    let p = g.max_pool2x2(x).unwrap();
    let u = g.upsample_nearest2x(p).unwrap();
    assert_eq!(g.value(u), &c);
}

#[test]
fn activations_pointwise_values() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::new(&[3], vec![-2.0, 3.0, 0.0]).unwrap());
    let r = g.relu(x);
    let s = g.sigmoid(x);
    assert_eq!(g.value(r).values(), &[0.0, 3.0, 0.0]);
    assert_eq!(g.value(s).values()[2], 0.5);
}

#[test]
fn activation_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    // h = 1e-6 with every input at least 1e-2 from the ReLU kink.
    let x = away_from_zero(&[2, 3, 3], 1e-2, &mut rng);
    let rep = finite_diff_check(&[x.clone()], |g, ids| { let y = g.relu(ids[0]); reduce(g, y, 9) }, 1e-6, 1e-6).unwrap();
    assert!(rep.passed(), "{rep:?}");
    let rep = finite_diff_check(&[x], |g, ids| { let y = g.sigmoid(ids[0]); reduce(g, y, 9) }, 1e-6, 1e-6).unwrap();
    assert!(rep.passed(), "{rep:?}");
}

#[test]
fn smooth_check_skips_probes_across_a_kink() {
    // element 0 sits h/2 from the ReLU kink, element 1 far from it
    let h = 1e-5;
    let x = Tensor::new(&[2], vec![h / 2.0, 0.5]).unwrap();
    let loss = |g: &mut Graph<f64>, ids: &[NodeId]| {
        let y = g.relu(ids[0]);
        let t = g.constant(Tensor::zeros(&[2]));
        g.mse_loss(y, t)
    };
    let strict = finite_diff_check(&[x.clone()], loss, h, 1e-4).unwrap();
    assert!(!strict.passed());
    let smooth = finite_diff_check_smooth(&[x], loss, h, 1e-4, 1e-4).unwrap();
    assert_eq!((smooth.skipped(), smooth.elements()), (1, 2));
    assert!(smooth.passed(), "{smooth:?}");
}

#[test]
fn smooth_check_holds_tiny_gradients_to_the_rounding_bound() {
    // the second gradient sits far below what a quotient of f ~ 5e5 resolves
    let x = Tensor::new(&[2], vec![1000.0, 1e-3]).unwrap();
    let loss = |g: &mut Graph<f64>, ids: &[NodeId]| {
        let t = g.constant(Tensor::zeros(&[2]));
        g.mse_loss(ids[0], t)
    };
    let strict = finite_diff_check(&[x.clone()], loss, 1e-5, 1e-4).unwrap();
    assert!(!strict.passed(), "{strict:?}");
    let rep = finite_diff_check_smooth(&[x], loss, 1e-5, 1e-4, 1e-4).unwrap();
    assert_eq!((rep.skipped(), rep.unresolved()), (0, 1));
    assert!(rep.passed(), "{rep:?}");
}

#[test]
fn smooth_check_still_catches_a_wrong_gradient() {
    // x * 2x with the second factor detached from the tape
    let x = Tensor::new(&[3], vec![0.3, -0.7, 1.1]).unwrap();
    let rep = finite_diff_check_smooth(
        &[x],
        |g, ids| {
            let v = g.value(ids[0]).clone();
            let twice = g.constant(Tensor::from_fn(&[3], |i| 2.0 * v.values()[i]));
            let y = g.mul(ids[0], twice)?;
            let t = g.constant(Tensor::zeros(&[3]));
            g.mse_loss(y, t)
        },
        1e-5,
        1e-4,
        1e-4,
    )
    .unwrap();
    assert_eq!(rep.skipped(), 0);
    assert!(!rep.passed());
}

#[test]
fn concat_shapes_and_empty_operand() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = random(&[2, 4, 4], &mut rng);
    let mut g = Graph::new();
    let ia = g.leaf(a.clone());
    let ib = g.leaf(random(&[3, 4, 4], &mut rng));
    let c = g.concat_channels(ia, ib).unwrap();
    assert_eq!(g.value(c).shape(), &[5, 4, 4]);
    let empty = g.leaf(Tensor::zeros(&[0, 4, 4]));
    let same = g.concat_channels(ia, empty).unwrap();
    assert_eq!(g.value(same).values(), a.values());
    let wrong = g.leaf(Tensor::zeros(&[1, 2, 4]));
    assert!(g.concat_channels(ia, wrong).is_err());
}

#[test]
fn broadcast_multiply_by_ones_and_zeros() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let a = random(&[3, 4, 4], &mut rng);
    let mut g = Graph::new();
    let ia = g.leaf(a.clone());
    let ones = g.leaf(Tensor::full(&[1, 4, 4], 1.0));
    let zeros = g.leaf(Tensor::zeros(&[1, 4, 4]));
    let p = g.mul(ia, ones).unwrap();
    assert_eq!(g.value(p).values(), a.values());
    let z = g.mul(ia, zeros).unwrap();
    assert!(g.value(z).values().iter().all(|&v| v == 0.0));
    let l = g.dot_const(z, vec![1.0; 48]).unwrap();
    g.backward(l).unwrap();
    assert!(g.grad(ia).unwrap().iter().all(|&v| v == 0.0));
    let bad = g.leaf(Tensor::zeros(&[2, 4, 4]));
    assert!(g.mul(ia, bad).is_err());
}

#[test]
fn mse_values_and_gradient() {
    let mut g = Graph::<f64>::new();
    let t = Tensor::new(&[4], vec![1.0, -1.0, 0.5, 2.0]).unwrap();
    let p = g.leaf(t.clone());
    let q = g.constant(t.clone());
    let l = g.mse_loss(p, q).unwrap();
    assert_eq!(g.value(l).values()[0], 0.0);
    let shifted = g.leaf(t.map(|v| v + 2.0));
    let l2 = g.mse_loss(shifted, q).unwrap();
    assert_eq!(g.value(l2).values()[0], 4.0);
    g.backward(l2).unwrap();
    // 2 (pred - target) / N
    assert!(g.grad(shifted).unwrap().iter().all(|&v| (v - 1.0).abs() < 1e-15));

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let pred = random(&[2, 3, 3], &mut rng);
    let target = random(&[2, 3, 3], &mut rng);
    let rep = finite_diff_check(&[pred, target], |g, ids| g.mse_loss(ids[0], ids[1]), 1e-5, 1e-6).unwrap();
    assert!(rep.passed(), "{rep:?}");

    let wrong = g.constant(Tensor::zeros(&[3]));
    assert!(g.mse_loss(p, wrong).is_err());
}

#[test]
fn linear_function_gradient_is_exact_to_rounding() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = random(&[3, 4, 4], &mut rng);
    let rep = finite_diff_check(&[x], |g, ids| reduce(g, ids[0], 1), 1e-5, 1e-4).unwrap();
    assert!(rep.max_relative_error() < 1e-9, "{}", rep.max_relative_error());
}

#[test]
fn backward_requires_scalar() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::zeros(&[2]));
    assert!(matches!(g.backward(x), Err(AutodiffError::NonScalarOutput(_))));
}

#[test]
fn adam_zero_gradient_is_noop() {
    let mut params = vec![Tensor::new(&[3], vec![1.0, -2.0, 3.0]).unwrap()];
    let before = params.clone();
    let mut st = AdamState::new(AdamConfig::default(), &params);
    assert_eq!(st.config.learning_rate, 0.001);
    adam_step(&mut params, &[&[0.0, 0.0, 0.0]], &mut st).unwrap();
    assert_eq!(params, before);
    assert_eq!(st.t, 1);
}

#[test]
fn adam_first_step_is_lr_times_sign() {
    let mut params: Vec<Tensor<f64>> = vec![Tensor::new(&[3], vec![0.0, 0.0, 0.0]).unwrap()];
    let mut st = AdamState::new(AdamConfig::default(), &params);
    let g: [f64; 3] = [0.5, -3.0, 1e-3];
    adam_step(&mut params, &[&g], &mut st).unwrap();
    // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
    for (&w, &gi) in params[0].values().iter().zip(&g) {
        let want = -0.001 * gi / (gi.abs() + 1e-8);
        assert!((w - want).abs() < 1e-15, "{w} vs {want}");
        assert!((w.abs() - 0.001).abs() < 1e-7);
    }
}

#[test]
fn adam_rejects_non_finite_gradient() {
    let mut params = vec![Tensor::new(&[2], vec![1.0, 1.0]).unwrap()];
    let before = params.clone();
    let mut st = AdamState::new(AdamConfig::default(), &params);
    let err = adam_step(&mut params, &[&[f64::NAN, 0.0]], &mut st).unwrap_err();
    assert_eq!(err, AutodiffError::NonFiniteGradient { index: 0 });
    assert_eq!(params, before);
    assert_eq!(st.t, 0);
}

#[test]
fn f32_path_matches_f64_shapes() {
    let mut g = Graph::<f32>::new();
    let x = g.leaf(Tensor::full(&[1, 8, 8], 1.0));
    let k = g.leaf(Tensor::full(&[4, 1, 3, 3], 0.1));
    let b = g.leaf(Tensor::zeros(&[4]));
    let c = g.conv2d(x, k, b).unwrap();
    let p = g.max_pool2x2(c).unwrap();
    let u = g.upsample_nearest2x(p).unwrap();
    let cat = g.concat_channels(u, c).unwrap();
    assert_eq!(g.value(cat).shape(), &[8, 8, 8]);
    // interior cells see all nine taps
    assert!((g.value(c).at(&[0, 4, 4]) - 0.9).abs() < 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn conv_equals_reference_on_random_shapes(
        c in 1usize..4, f in 1usize..4, h in 1usize..7, w in 1usize..7,
        k in prop::sample::select(vec![1usize, 3, 5]), seed in any::<u64>()
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&[c, h, w], &mut rng);
        let kern = random(&[f, c, k, k], &mut rng);
        let b = random(&[f], &mut rng);
        let want = naive_conv(&x, &kern, &b);
        let got = conv_of(x, kern, b);
        for (a, b) in got.iter().zip(&want) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn every_op_passes_gradient_check(
        c in 1usize..3, half in 1usize..4, seed in any::<u64>()
    ) {
        let (h, w) = (2 * half, 2 * half);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (step, tol) = (1e-5, 1e-4);

        let x = random(&[c, h, w], &mut rng);
        let kern = random(&[2, c, 3, 3], &mut rng);
        let b = random(&[2], &mut rng);
        let rep = finite_diff_check(&[x, kern, b], |g, ids| {
            let y = g.conv2d(ids[0], ids[1], ids[2])?;
            reduce(g, y, seed)
        }, step, tol).unwrap();
        prop_assert!(rep.passed(), "conv {:?}", rep);

        // distinct values spaced well beyond 2h keep pool windows tie-free
        let mut vals: Vec<f64> = (0..c * h * w).map(|i| i as f64 * 0.01).collect();
        for i in (1..vals.len()).rev() {
            vals.swap(i, rng.random_range(0..=i));
        }
        let x = Tensor::new(&[c, h, w], vals).unwrap();
        let rep = finite_diff_check(&[x], |g, ids| {
            let y = g.max_pool2x2(ids[0])?;
            reduce(g, y, seed)
        }, step, tol).unwrap();
        prop_assert!(rep.passed(), "pool {:?}", rep);

        let x = random(&[c, h, w], &mut rng);
        let rep = finite_diff_check(&[x], |g, ids| {
            let y = g.upsample_nearest2x(ids[0])?;
            reduce(g, y, seed)
        }, step, tol).unwrap();
        prop_assert!(rep.passed(), "upsample {:?}", rep);

        let x = away_from_zero(&[c, h, w], 10.0 * step, &mut rng);
        let rep = finite_diff_check(&[x.clone()], |g, ids| {
            let y = g.relu(ids[0]);
            reduce(g, y, seed)
        }, step, tol).unwrap();
        prop_assert!(rep.passed(), "relu {:?}", rep);
        let rep = finite_diff_check(&[x], |g, ids| {
            let y = g.sigmoid(ids[0]);
            reduce(g, y, seed)
        }, step, tol).unwrap();
        prop_assert!(rep.passed(), "sigmoid {:?}", rep);

        let a = random(&[c, h, w], &mut rng);
        let b = random(&[2, h, w], &mut rng);
        let rep = finite_diff_check(&[a.clone(), b], |g, ids| {
            let y = g.concat_channels(ids[0], ids[1])?;
            reduce(g, y, seed)
        }, step, tol).unwrap();
        prop_assert!(rep.passed(), "concat {:?}", rep);

        let m = random(&[1, h, w], &mut rng);
        let rep = finite_diff_check(&[a.clone(), m], |g, ids| {
            let y = g.mul(ids[0], ids[1])?;
            reduce(g, y, seed)
        }, step, tol).unwrap();
        prop_assert!(rep.passed(), "mul {:?}", rep);

        let t = random(&[c, h, w], &mut rng);
        let rep = finite_diff_check(&[a, t], |g, ids| g.mse_loss(ids[0], ids[1]), step, tol).unwrap();
        prop_assert!(rep.passed(), "mse {:?}", rep);
    }
}
