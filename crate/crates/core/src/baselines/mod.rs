//! Classical clustering baselines over raw point coordinates.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::stimuli::Point;

mod cfsfdp;
mod fcm;
mod kmeans;
pub mod linalg;
mod meanshift;
mod spectral;

pub use cfsfdp::{cfsfdp, density_cutoff, CfsfdpParams, CutoffRule, DensityPeaks};
pub use fcm::{fuzzy_cmeans, fuzzy_cmeans_fit, update_memberships, FcmFit, FcmParams};
pub use kmeans::{kmeans, kmeans_rows, KMeansFit};
pub use meanshift::{mean_shift, mean_shift_modes};
pub use spectral::{
    affinity_matrix, ncut_value, normalized_cut, resolve_sigma, spectral_njw, AffinityParams, SigmaRule,
    SpectralParams,
};

/// The seven clustering methods compared in reports, in table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    Cnn,
    KMeans,
    FuzzyCMeans,
    Njw,
    NormalizedCut,
    MeanShift,
    Cfsfdp,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Cnn,
        Method::KMeans,
        Method::FuzzyCMeans,
        Method::Njw,
        Method::NormalizedCut,
        Method::MeanShift,
        Method::Cfsfdp,
    ];

    pub const BASELINES: [Method; 6] = [
        Method::KMeans,
        Method::FuzzyCMeans,
        Method::Njw,
        Method::NormalizedCut,
        Method::MeanShift,
        Method::Cfsfdp,
    ];

    /// Column header used in report tables.
    pub fn short_name(self) -> &'static str {
        match self {
            Method::Cnn => "CNN",
            Method::KMeans => "kM",
            Method::FuzzyCMeans => "FCM",
            Method::Njw => "NJW",
            Method::NormalizedCut => "SC",
            Method::MeanShift => "MS",
            Method::Cfsfdp => "CFSFDP",
        }
    }

    /// Whether the method is handed the true cluster count.
    pub fn takes_cluster_count(self) -> bool {
        !matches!(self, Method::Cnn | Method::MeanShift)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Method {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        let m = match s.to_ascii_lowercase().as_str() {
            "cnn" => Method::Cnn,
            "km" | "kmeans" => Method::KMeans,
            "fcm" => Method::FuzzyCMeans,
            "njw" => Method::Njw,
            "sc" | "nc" | "ncut" => Method::NormalizedCut,
            "ms" | "meanshift" => Method::MeanShift,
            "cfsfdp" => Method::Cfsfdp,
            other => return Err(CoreError::InvalidInput(format!("unknown method {other:?}"))),
        };
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub labels: Vec<usize>,
    pub k_found: usize,
    pub method: Method,
    pub params_used: BTreeMap<String, f64>,
    pub runtime_secs: f64,
}

impl ClusteringResult {
    /// Wraps raw labels, renumbering them contiguously by first appearance.
    pub fn from_raw(labels: &[usize], method: Method) -> Self {
        let labels = compact_labels(labels);
        let k_found = labels.iter().max().map_or(0, |m| m + 1);
        Self {
            labels,
            k_found,
            method,
            params_used: BTreeMap::new(),
            runtime_secs: 0.0,
        }
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params_used.insert(key.to_string(), value);
        self
    }

    pub fn timed(mut self, start: std::time::Instant) -> Self {
        self.runtime_secs = start.elapsed().as_secs_f64();
        self
    }
}

/// Renumbers ids to `0..k` in order of first appearance.
pub fn compact_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(CoreError::InvalidInput(format!("cluster count {k} must be in 1..={n}")));
    }
    Ok(())
}

pub(crate) fn flatten(points: &[Point]) -> Vec<f64> {
    points.iter().flat_map(|p| [p.x, p.y]).collect()
}

/// Full pairwise Euclidean distance matrix, row-major.
pub fn distance_matrix(points: &[Point]) -> Vec<f64> {
    let n = points.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = points[i].dist(&points[j]);
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

/// Median of the strictly upper-triangular pairwise distances.
pub fn median_pairwise_distance(points: &[Point]) -> f64 {
    let n = points.len();
    let mut v: Vec<f64> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| points[i].dist(&points[j]))
        .collect();
    if v.is_empty() {
        return 0.0;
    }
    let mid = v.len() / 2;
    *v.select_nth_unstable_by(mid, f64::total_cmp).1
}
