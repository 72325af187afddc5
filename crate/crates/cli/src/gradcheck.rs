//! Finite-difference checks of every graph op and a small U-Net.

use oclu_autodiff::{finite_diff_check, finite_diff_check_smooth, GradCheckReport, Graph, NodeId, Result, Tensor};
use oclu_core::seed::rng;
use oclu_core::unet::{build_unet, UNetConfig};
use rand::seq::SliceRandom;
use rand::Rng;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Second-to-first difference ratio above which a probe straddles a kink.
pub const KINK_RATIO: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct NamedCheck {
    pub name: &'static str,
    pub report: GradCheckReport,
}

impl NamedCheck {
    pub fn passed(&self) -> bool {
        self.report.passed()
    }
}

fn uniform(shape: &[usize], lo: f64, hi: f64, r: &mut impl Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| r.random_range(lo..hi))
}

/// Values with magnitude in `gap..1`, so no input sits near a ReLU kink.
fn off_kink(shape: &[usize], gap: f64, r: &mut impl Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let v: f64 = r.random_range(gap..1.0);
        if r.random_bool(0.5) {
            v
        } else {
            -v
        }
    })
}

/// Scalarizes `out` with fixed random weights.
fn reduce(g: &mut Graph<f64>, out: NodeId, seed: u64) -> Result<NodeId> {
    let mut r = rng(seed);
    let n = g.value(out).len();
    g.dot_const(out, (0..n).map(|_| r.random_range(-1.0..1.0)).collect())
}

/// Checks conv, pool, upsample, ReLU, sigmoid, concat, broadcast mul and
/// MSE on random `c x 6 x 6` inputs.
pub fn op_checks(seed: u64) -> Result<Vec<NamedCheck>> {
    let mut r = rng(seed);
    let (c, h, w) = (2, 6, 6);
    let mut out = Vec::new();
    let mut push = |name, report| out.push(NamedCheck { name, report });

    let x = uniform(&[c, h, w], -1.0, 1.0, &mut r);
    let k = uniform(&[3, c, 3, 3], -1.0, 1.0, &mut r);
    let b = uniform(&[3], -1.0, 1.0, &mut r);
    push(
        "conv2d",
        finite_diff_check(&[x, k, b], |g, ids| {
            let y = g.conv2d(ids[0], ids[1], ids[2])?;
            reduce(g, y, seed)
        }, STEP, TOLERANCE)?,
    );

    // a shuffled ramp with spacing far above 2h keeps windows tie-free
    let mut vals: Vec<f64> = (0..c * h * w).map(|i| i as f64 * 0.01).collect();
    vals.shuffle(&mut r);
    push(
        "max_pool2x2",
        finite_diff_check(&[Tensor::new(&[c, h, w], vals)?], |g, ids| {
            let y = g.max_pool2x2(ids[0])?;
            reduce(g, y, seed)
        }, STEP, TOLERANCE)?,
    );

    let x = uniform(&[c, h, w], -1.0, 1.0, &mut r);
    push(
        "upsample_nearest2x",
        finite_diff_check(&[x], |g, ids| {
            let y = g.upsample_nearest2x(ids[0])?;
            reduce(g, y, seed)
        }, STEP, TOLERANCE)?,
    );

    let x = off_kink(&[c, h, w], 10.0 * STEP, &mut r);
    push(
        "relu",
        finite_diff_check(&[x.clone()], |g, ids| {
            let y = g.relu(ids[0]);
            reduce(g, y, seed)
        }, STEP, TOLERANCE)?,
    );
    push(
        "sigmoid",
        finite_diff_check(&[x], |g, ids| {
            let y = g.sigmoid(ids[0]);
            reduce(g, y, seed)
        }, STEP, TOLERANCE)?,
    );

    let a = uniform(&[c, h, w], -1.0, 1.0, &mut r);
    let b = uniform(&[3, h, w], -1.0, 1.0, &mut r);
    push(
        "concat_channels",
        finite_diff_check(&[a.clone(), b], |g, ids| {
            let y = g.concat_channels(ids[0], ids[1])?;
            reduce(g, y, seed)
        }, STEP, TOLERANCE)?,
    );

    let same = uniform(&[c, h, w], -1.0, 1.0, &mut r);
    push(
        "mul",
        finite_diff_check(&[a.clone(), same], |g, ids| {
            let y = g.mul(ids[0], ids[1])?;
            reduce(g, y, seed)
        }, STEP, TOLERANCE)?,
    );
    let mask = uniform(&[1, h, w], -1.0, 1.0, &mut r);
    push(
        "mul_broadcast",
        finite_diff_check(&[a.clone(), mask], |g, ids| {
            let y = g.mul(ids[0], ids[1])?;
            reduce(g, y, seed)
        }, STEP, TOLERANCE)?,
    );

    let t = uniform(&[c, h, w], -1.0, 1.0, &mut r);
    push(
        "mse_loss",
        finite_diff_check(&[a, t], |g, ids| g.mse_loss(ids[0], ids[1]), STEP, TOLERANCE)?,
    );
    Ok(out)
}

/// Checks every parameter of a depth-2 U-Net on an 8x8 input. Biases are
/// randomized and the input is continuous so no ReLU or pool input lands
/// on a kink or tie.
pub fn unet_check(seed: u64) -> anyhow::Result<NamedCheck> {
    let cfg = UNetConfig {
        depth: 2,
        base_filters: 3,
        output_channels: 2,
        image_size: 8,
        kernel_size: 3,
    };
    let model = build_unet::<f64>(cfg, seed)?;
    let mut r = rng(seed ^ 0x5eed);
    let params: Vec<Tensor<f64>> = model
        .params
        .iter()
        .zip(&model.names)
        .map(|(p, name)| {
            if name.ends_with("bias") {
                Tensor::from_fn(p.shape(), |_| r.random_range(-0.2..0.2))
            } else {
                p.clone()
            }
        })
        .collect();
    let input = uniform(&[1, 8, 8], 0.2, 1.0, &mut r);
    let target = Tensor::from_fn(&[2, 8, 8], |_| f64::from(r.random_range(0..2u8)));
    let report = finite_diff_check_smooth(
        &params,
        |g, ids| {
            let x = g.constant(input.clone());
            let y = g.constant(target.clone());
            let out = model.forward(g, ids, x)?;
            g.mse_loss(out, y)
        },
        STEP,
        TOLERANCE,
        KINK_RATIO,
    )?;
    Ok(NamedCheck { name: "unet_depth2_8x8", report })
}

/// All op checks followed by the U-Net check.
pub fn full_suite(seed: u64) -> anyhow::Result<Vec<NamedCheck>> {
    let mut checks = op_checks(seed)?;
    checks.push(unet_check(seed)?);
    Ok(checks)
}
