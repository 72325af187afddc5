//! Encoder-decoder network that maps a binary point raster to one sigmoid
//! map per cluster, masked by the input.
//!
//! Encoder: `depth` stacks of [conv-ReLU, conv-ReLU, 2x2 max-pool].
//! Decoder: `depth` stacks of [2x upsample, concat mirrored encoder
//! features, conv-ReLU, conv-ReLU]. Head: `output_channels` 1x1 filters,
//! sigmoid, then pointwise multiplication by the input image.

use std::time::Instant;

use oclu_autodiff::{adam_step, AdamConfig, AdamState, Graph, NodeId, Real, Tensor};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{ClusteringResult, Method};
use crate::error::{CoreError, Result};
use crate::seed::{self, Rng};
use crate::stimuli::{Stimulus, BACKGROUND};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UNetConfig {
    pub depth: usize,
    pub base_filters: usize,
    pub output_channels: usize,
    pub image_size: usize,
    pub kernel_size: usize,
}

impl Default for UNetConfig {
    fn default() -> Self {
        Self {
            depth: 5,
            base_filters: 16,
            output_channels: 3,
            image_size: 128,
            kernel_size: 3,
        }
    }
}

impl UNetConfig {
    /// Reduced CPU profile: 64x64 inputs, four stacks.
    pub fn desk() -> Self {
        Self {
            depth: 4,
            image_size: 64,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CoreError::InvalidSpec(m));
        if self.depth == 0 || self.base_filters == 0 || self.output_channels == 0 {
            return bad(format!("depth, filters and channels must be positive: {self:?}"));
        }
        if self.kernel_size % 2 == 0 {
            return bad(format!("kernel size {} must be odd", self.kernel_size));
        }
        let div = 1usize << self.depth;
        if self.image_size == 0 || self.image_size % div != 0 {
            return bad(format!("image size {} is not divisible by 2^{}", self.image_size, self.depth));
        }
        Ok(())
    }

    /// Spatial size at the bottom of the encoder.
    pub fn bottleneck_size(&self) -> usize {
        self.image_size >> self.depth
    }

    /// Names and shapes of all parameters in forward order.
    pub fn parameter_layout(&self) -> Vec<(String, Vec<usize>)> {
        let (f, k) = (self.base_filters, self.kernel_size);
        let mut out = Vec::new();
        let mut conv = |name: String, fin: usize, fout: usize, k: usize| {
            out.push((format!("{name}.weight"), vec![fout, fin, k, k]));
            out.push((format!("{name}.bias"), vec![fout]));
        };
        for d in 0..self.depth {
            conv(format!("enc{d}.conv1"), if d == 0 { 1 } else { f }, f, k);
            conv(format!("enc{d}.conv2"), f, f, k);
        }
        for d in (0..self.depth).rev() {
            conv(format!("dec{d}.conv1"), 2 * f, f, k);
            conv(format!("dec{d}.conv2"), f, f, k);
        }
        conv("head".into(), f, self.output_channels, 1);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UNetModel<T> {
    pub config: UNetConfig,
    pub names: Vec<String>,
    pub params: Vec<Tensor<T>>,
}

/// Builds a freshly initialized network: He-uniform kernels before ReLU,
/// Glorot-uniform for the sigmoid head, zero biases.
pub fn build_unet<T: Real>(config: UNetConfig, seed: u64) -> Result<UNetModel<T>> {
    config.validate()?;
    let mut rng = seed::rng(seed);
    let mut names = Vec::new();
    let mut params = Vec::new();
    for (name, shape) in config.parameter_layout() {
        let t = if name.ends_with(".bias") {
            Tensor::zeros(&shape)
        } else {
            let fan_in = (shape[1] * shape[2] * shape[3]) as f64;
            let fan_out = (shape[0] * shape[2] * shape[3]) as f64;
            let limit = if name.starts_with("head") {
                (6.0 / (fan_in + fan_out)).sqrt()
            } else {
                (6.0 / fan_in).sqrt()
            };
            Tensor::from_fn(&shape, |_| T::from_f64_lossy(rng.random_range(-limit..limit)))
        };
        names.push(name);
        params.push(t);
    }
    Ok(UNetModel { config, names, params })
}

impl<T: Real> UNetModel<T> {
    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn cast<U: Real>(&self) -> UNetModel<U> {
        UNetModel {
            config: self.config,
            names: self.names.clone(),
            params: self.params.iter().map(|t| t.map(|v| U::from_f64_lossy(v.as_f64()))).collect(),
        }
    }

    /// Records the parameters on `g`, as leaves when `trainable`.
    pub fn attach(&self, g: &mut Graph<T>, trainable: bool) -> Vec<NodeId> {
        self.params
            .iter()
            .map(|p| if trainable { g.leaf(p.clone()) } else { g.constant(p.clone()) })
            .collect()
    }

    /// Forward pass on a `1 x S x S` input node.
    pub fn forward(&self, g: &mut Graph<T>, params: &[NodeId], input: NodeId) -> oclu_autodiff::Result<NodeId> {
        let mut next = params.iter().copied();
        let mut conv = |g: &mut Graph<T>, x: NodeId| {
            let w = next.next().expect("parameter layout");
            let b = next.next().expect("parameter layout");
            g.conv2d(x, w, b)
        };
        let mut x = input;
        let mut skips = Vec::with_capacity(self.config.depth);
        for _ in 0..self.config.depth {
            let a = conv(g, x)?;
            let a = g.relu(a);
            let a = conv(g, a)?;
            let a = g.relu(a);
            skips.push(a);
            x = g.max_pool2x2(a)?;
        }
        for skip in skips.into_iter().rev() {
            let up = g.upsample_nearest2x(x)?;
            let cat = g.concat_channels(up, skip)?;
            let a = conv(g, cat)?;
            let a = g.relu(a);
            let a = conv(g, a)?;
            x = g.relu(a);
        }
        let logits = conv(g, x)?;
        let maps = g.sigmoid(logits);
        g.mul(maps, input)
    }

    /// Output maps (`output_channels x S x S`) for an input image.
    pub fn predict_maps(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let params = self.attach(&mut g, false);
        let x = g.constant(input.clone());
        let out = self.forward(&mut g, &params, x)?;
        Ok(g.take(out))
    }

    /// Loss and per-parameter gradients for one sample.
    pub fn loss_and_grads(&self, input: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Vec<Vec<T>>)> {
        let mut g = Graph::new();
        let params = self.attach(&mut g, true);
        let x = g.constant(input.clone());
        let y = g.constant(target.clone());
        let out = self.forward(&mut g, &params, x)?;
        let loss = g.mse_loss(out, y)?;
        g.backward(loss)?;
        let value = g.value(loss).values()[0].as_f64();
        let grads = params
            .iter()
            .zip(&self.params)
            .map(|(&id, p)| g.grad(id).map_or_else(|| vec![T::zero(); p.len()], <[T]>::to_vec))
            .collect();
        Ok((value, grads))
    }

    fn check_stimulus(&self, s: &Stimulus) -> Result<()> {
        if s.image_size != self.config.image_size {
            return Err(CoreError::InvalidInput(format!(
                "stimulus is {}px but the model expects {}px",
                s.image_size, self.config.image_size
            )));
        }
        Ok(())
    }
}

/// The stimulus raster (noise included) as a `1 x S x S` tensor.
pub fn encode_input<T: Real>(stimulus: &Stimulus) -> Tensor<T> {
    let n = stimulus.image_size;
    Tensor::from_fn(&[1, n, n], |i| if stimulus.image[i] != 0 { T::one() } else { T::zero() })
}

/// One-hot target: channel `c` is 1 where the ground truth is `c`.
pub fn encode_target<T: Real>(stimulus: &Stimulus, output_channels: usize) -> Result<Tensor<T>> {
    if stimulus.k() > output_channels {
        return Err(CoreError::TooManyClusters {
            clusters: stimulus.k(),
            channels: output_channels,
        });
    }
    let hw = stimulus.image_size * stimulus.image_size;
    let mut t = Tensor::zeros(&[output_channels, stimulus.image_size, stimulus.image_size]);
    let v = t.values_mut();
    for (i, &l) in stimulus.gt_label_map.iter().enumerate() {
        if l != BACKGROUND {
            v[l as usize * hw + i] = T::one();
        }
    }
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub deterministic: bool,
    /// Stop once the epoch loss improved by less than `1e-4` (relative)
    /// over the last five epochs.
    pub early_stop: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            learning_rate: 1e-3,
            epochs: 30,
            seed: 0,
            deterministic: true,
            early_stop: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(CoreError::InvalidSpec(format!(
                "batch size must be >= 1 and learning rate > 0: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss per epoch, measured on the batches as they were
    /// visited.
    pub loss_history: Vec<f64>,
    pub steps: u64,
}

/// Trains with mini-batch Adam on the mean squared error between output
/// maps and one-hot targets.
///
/// Per-sample gradients are computed in parallel. With `deterministic` they
/// are summed in batch order, so results do not depend on the thread count
/// or scheduling; otherwise they are tree-reduced as threads finish.
pub fn train(
    model: &mut UNetModel<f32>,
    dataset: &[Stimulus],
    tc: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainReport> {
    tc.validate()?;
    for s in dataset {
        model.check_stimulus(s)?;
        if s.k() > model.config.output_channels {
            return Err(CoreError::TooManyClusters {
                clusters: s.k(),
                channels: model.config.output_channels,
            });
        }
    }
    let adam = AdamConfig {
        learning_rate: tc.learning_rate,
        ..AdamConfig::default()
    };
    let mut state = AdamState::new(adam, &model.params);
    let mut rng: Rng = seed::rng_for(tc.seed, "shuffle", 0);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = Vec::with_capacity(tc.epochs);
    let channels = model.config.output_channels;

    for epoch in 0..tc.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(tc.batch_size) {
            let per_sample = |i: usize| -> Result<(f64, Vec<Vec<f32>>)> {
                let s = &dataset[i];
                model.loss_and_grads(&encode_input(s), &encode_target(s, channels)?)
            };
            let (loss, mut sum) = if tc.deterministic {
                let results: Vec<_> = batch.par_iter().map(|&i| per_sample(i)).collect();
                let mut sum = zero_grads(model);
                let mut loss = 0.0;
                for r in results {
                    let (l, g) = r?;
                    loss += l;
                    add_grads(&mut sum, g);
                }
                (loss, sum)
            } else {
                // tree reduction in whatever order the thread pool finishes
                batch.par_iter().map(|&i| per_sample(i)).try_reduce(
                    || (0.0, zero_grads(model)),
                    |(la, mut ga), (lb, gb)| {
                        add_grads(&mut ga, gb);
                        Ok((la + lb, ga))
                    },
                )?
            };
            if !loss.is_finite() {
                return Err(CoreError::NonFiniteLoss { epoch, loss });
            }
            epoch_loss += loss;
            let scale = 1.0 / batch.len() as f32;
            sum.iter_mut().flatten().for_each(|v| *v *= scale);
            let refs: Vec<&[f32]> = sum.iter().map(Vec::as_slice).collect();
            adam_step(&mut model.params, &refs, &mut state)?;
        }
        let mean = epoch_loss / dataset.len().max(1) as f64;
        history.push(mean);
        on_epoch(epoch, mean);
        if tc.early_stop && history.len() > 5 {
            let past = history[history.len() - 6];
            if (past - mean) / past.max(f64::MIN_POSITIVE) < 1e-4 {
                break;
            }
        }
    }
    Ok(TrainReport {
        loss_history: history,
        steps: state.t,
    })
}

fn zero_grads(model: &UNetModel<f32>) -> Vec<Vec<f32>> {
    model.params.iter().map(|p| vec![0.0; p.len()]).collect()
}

fn add_grads(acc: &mut [Vec<f32>], g: Vec<Vec<f32>>) {
    for (a, b) in acc.iter_mut().zip(g) {
        a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
    }
}

/// Mean loss over a dataset without updating anything.
pub fn mean_loss(model: &UNetModel<f32>, dataset: &[Stimulus]) -> Result<f64> {
    let losses: Vec<Result<f64>> = dataset
        .par_iter()
        .map(|s| {
            let out = model.predict_maps(&encode_input(s))?;
            let t: Tensor<f32> = encode_target(s, model.config.output_channels)?;
            let n = out.len() as f64;
            Ok(out.values().iter().zip(t.values()).map(|(&a, &b)| ((a - b) as f64).powi(2)).sum::<f64>() / n)
        })
        .collect();
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / dataset.len().max(1) as f64)
}

/// Argmax channel at each foreground pixel (lowest channel on ties),
/// [`BACKGROUND`] elsewhere.
pub fn predict_pixel_labels(model: &UNetModel<f32>, stimulus: &Stimulus) -> Result<Vec<i32>> {
    model.check_stimulus(stimulus)?;
    let maps = model.predict_maps(&encode_input(stimulus))?;
    Ok(decode_argmax(maps.values(), model.config.output_channels, &stimulus.image))
}

pub fn decode_argmax(maps: &[f32], channels: usize, image: &[u8]) -> Vec<i32> {
    let hw = image.len();
    (0..hw)
        .map(|i| {
            if image[i] == 0 {
                return BACKGROUND;
            }
            let mut best = 0;
            for c in 1..channels {
                if maps[c * hw + i] > maps[best * hw + i] {
                    best = c;
                }
            }
            best as i32
        })
        .collect()
}

/// Per-point labels: the winning output channel at each point's pixel.
/// Labels are raw channel indices; `k_found` counts distinct ones.
pub fn predict_labels(model: &UNetModel<f32>, stimulus: &Stimulus) -> Result<ClusteringResult> {
    let start = Instant::now();
    let pixels = predict_pixel_labels(model, stimulus)?;
    let labels: Vec<usize> = stimulus
        .point_set
        .points
        .iter()
        .map(|p| pixels[stimulus.pixel_of(p)] as usize)
        .collect();
    let mut seen = labels.clone();
    seen.sort_unstable();
    seen.dedup();
    Ok(ClusteringResult {
        labels,
        k_found: seen.len(),
        method: Method::Cnn,
        params_used: Default::default(),
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}
