//! Best-of-grid benchmarking of the CNN and the six baselines.

use std::collections::BTreeMap;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use oclu_core::baselines::{
    cfsfdp, fuzzy_cmeans, kmeans, mean_shift, normalized_cut, spectral_njw, AffinityParams, CfsfdpParams,
    ClusteringResult, CutoffRule, FcmParams, Method, SigmaRule, SpectralParams,
};
use oclu_core::evaluation::{aggregate, evaluate_stimulus, EvalRecord, Summary};
use oclu_core::seed::rng_for;
use oclu_core::stimuli::Stimulus;
use oclu_core::unet::{predict_labels, UNetModel};

/// Parameter values swept per baseline; each method reports its best mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineGrid {
    pub kmeans_restarts: usize,
    pub fcm_fuzziness: Vec<f64>,
    /// Affinity bandwidths for NJW and normalized cuts, as multiples of the
    /// median pairwise distance.
    pub sigma_factors: Vec<f64>,
    /// Mean-shift bandwidths as fractions of the image size.
    pub bandwidth_fractions: Vec<f64>,
    /// CFSFDP cutoff quantiles of the pairwise distances.
    pub cutoff_quantiles: Vec<f64>,
}

impl Default for BaselineGrid {
    fn default() -> Self {
        Self {
            kmeans_restarts: 10,
            fcm_fuzziness: vec![1.5, 2.0, 2.5],
            sigma_factors: vec![0.05, 0.1, 0.15, 0.25, 0.5],
            bandwidth_fractions: vec![0.05, 0.1, 0.15, 0.2, 0.3],
            cutoff_quantiles: vec![0.01, 0.02, 0.05, 0.1],
        }
    }
}

impl BaselineGrid {
    /// One value per method: the cheapest meaningful sweep.
    pub fn single() -> Self {
        Self {
            kmeans_restarts: 10,
            fcm_fuzziness: vec![2.0],
            sigma_factors: vec![0.15],
            bandwidth_fractions: vec![0.1],
            cutoff_quantiles: vec![0.02],
        }
    }

    /// The swept parameter of a method and its values.
    pub fn settings(&self, method: Method) -> (&'static str, Vec<f64>) {
        match method {
            Method::Cnn => ("none", vec![0.0]),
            Method::KMeans => ("restarts", vec![self.kmeans_restarts as f64]),
            Method::FuzzyCMeans => ("m", self.fcm_fuzziness.clone()),
            Method::Njw | Method::NormalizedCut => ("sigma_factor", self.sigma_factors.clone()),
            Method::MeanShift => ("bandwidth_fraction", self.bandwidth_fractions.clone()),
            Method::Cfsfdp => ("dc_quantile", self.cutoff_quantiles.clone()),
        }
    }
}

/// Runs one baseline with one grid value on one stimulus. Every method but
/// mean shift is handed the true cluster count.
pub fn run_baseline(method: Method, value: f64, stimulus: &Stimulus, seed: u64, index: usize) -> Result<ClusteringResult> {
    let points = &stimulus.point_set.points;
    let k = stimulus.k();
    let mut rng = rng_for(seed, &format!("bench/{}", method.short_name()), index as u64);
    let spectral = || SpectralParams {
        affinity: AffinityParams {
            sigma: SigmaRule::MedianHeuristic(value),
        },
        ..SpectralParams::default()
    };
    let result = match method {
        Method::Cnn => bail!("the CNN is not a baseline"),
        Method::KMeans => kmeans(points, k, value as usize, &mut rng)?,
        Method::FuzzyCMeans => fuzzy_cmeans(
            points,
            k,
            FcmParams {
                fuzziness: value,
                ..FcmParams::default()
            },
            &mut rng,
        )?,
        Method::Njw => spectral_njw(points, k, &spectral(), &mut rng)?,
        Method::NormalizedCut => normalized_cut(points, k, &spectral(), &mut rng)?,
        Method::MeanShift => mean_shift(points, value * stimulus.image_size as f64)?,
        Method::Cfsfdp => {
            let params = CfsfdpParams {
                q: k,
                cutoff: CutoffRule::Percentile(value),
            };
            cfsfdp(points, &params)?.0
        }
    };
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub method: Method,
    pub param: String,
    pub value: f64,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchResult {
    /// Best grid setting per method, in table order.
    pub summaries: Vec<Summary>,
    /// Per-stimulus records at each method's best setting.
    pub records: Vec<EvalRecord>,
    pub grid: Vec<GridRow>,
}

impl BenchResult {
    pub fn mean_of(&self, method: Method) -> Option<f64> {
        self.summaries.iter().find(|s| s.method == method).map(|s| s.mean)
    }

    /// Highest best-of-grid mean among the baselines that were run.
    pub fn best_baseline(&self) -> Option<(Method, f64)> {
        self.summaries
            .iter()
            .filter(|s| s.method != Method::Cnn)
            .map(|s| (s.method, s.mean))
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

pub fn stimulus_id(index: usize) -> String {
    format!("{index:04}")
}

/// CNN records for every stimulus; no cluster counts are consumed.
pub fn evaluate_cnn(model: &UNetModel<f32>, stimuli: &[Stimulus]) -> Result<Vec<EvalRecord>> {
    stimuli
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let result = predict_labels(model, s)?;
            Ok(evaluate_stimulus(&stimulus_id(i), s, &result)?)
        })
        .collect()
}

fn evaluate_setting(method: Method, value: f64, stimuli: &[Stimulus], seed: u64) -> Result<Vec<EvalRecord>> {
    stimuli
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let result = run_baseline(method, value, s, seed, i)
                .with_context(|| format!("{method} on stimulus {}", stimulus_id(i)))?;
            Ok(evaluate_stimulus(&stimulus_id(i), s, &result)?)
        })
        .collect()
}

/// Scores each requested method on `stimuli`, sweeping baseline grids and
/// keeping each method's best mean. The CNN needs `model`; baselines never
/// see it.
pub fn bench(
    stimuli: &[Stimulus],
    methods: &[Method],
    grid: &BaselineGrid,
    model: Option<&UNetModel<f32>>,
    seed: u64,
) -> Result<BenchResult> {
    if methods.is_empty() {
        bail!("no methods to benchmark");
    }
    if stimuli.is_empty() {
        bail!("no stimuli to benchmark on");
    }
    let mut ordered = methods.to_vec();
    ordered.sort();
    ordered.dedup();

    let mut out = BenchResult::default();
    let mut best: BTreeMap<Method, (Summary, Vec<EvalRecord>)> = BTreeMap::new();
    for method in ordered {
        if method == Method::Cnn {
            let model = model.context("benchmarking the CNN needs a checkpoint")?;
            let records = evaluate_cnn(model, stimuli)?;
            let s = aggregate(&records)?[0];
            out.grid.push(GridRow {
                method,
                param: "none".into(),
                value: 0.0,
                mean: s.mean,
                std: s.std,
            });
            best.insert(method, (s, records));
            continue;
        }
        let (param, values) = grid.settings(method);
        if values.is_empty() {
            bail!("empty parameter grid for {method}");
        }
        for value in values {
            let records = evaluate_setting(method, value, stimuli, seed)?;
            let s = aggregate(&records)?[0];
            out.grid.push(GridRow {
                method,
                param: param.into(),
                value,
                mean: s.mean,
                std: s.std,
            });
            if best.get(&method).is_none_or(|(b, _)| s.mean > b.mean) {
                best.insert(method, (s, records));
            }
        }
    }
    for (_, (s, records)) in best {
        out.summaries.push(s);
        out.records.extend(records);
    }
    Ok(out)
}
