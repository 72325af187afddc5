//! Pairwise Rand accuracy and per-method aggregation.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::baselines::{ClusteringResult, Method};
use crate::error::{CoreError, Result};
use crate::stimuli::Stimulus;

/// Fraction of unordered point pairs on which two labelings agree about
/// co-membership. Diagonal pairs are not counted.
///
/// Computed from the contingency table: the disagreeing pairs are
/// `sum C(a_i,2) + sum C(b_j,2) - 2 sum C(n_ij,2)`.
pub fn pairwise_rand_accuracy(gt: &[usize], pred: &[usize]) -> Result<f64> {
    if gt.len() != pred.len() {
        return Err(CoreError::InvalidInput(format!(
            "label lengths differ: {} vs {}",
            gt.len(),
            pred.len()
        )));
    }
    let n = gt.len();
    if n < 2 {
        return Err(CoreError::InvalidInput(format!("need at least 2 points, got {n}")));
    }
    let pairs = |c: u64| c * c.saturating_sub(1) / 2;
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    let mut cells: HashMap<(usize, usize), u64> = HashMap::new();
    for (&a, &b) in gt.iter().zip(pred) {
        *rows.entry(a).or_default() += 1;
        *cols.entry(b).or_default() += 1;
        *cells.entry((a, b)).or_default() += 1;
    }
    let same_gt: u64 = rows.values().map(|&c| pairs(c)).sum();
    let same_pred: u64 = cols.values().map(|&c| pairs(c)).sum();
    let same_both: u64 = cells.values().map(|&c| pairs(c)).sum();
    let disagree = same_gt + same_pred - 2 * same_both;
    let total = pairs(n as u64);
    Ok(1.0 - disagree as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub stimulus_id: String,
    pub method: Method,
    pub n: usize,
    pub accuracy: f64,
    pub noise_excluded: usize,
    pub runtime_secs: f64,
}

/// Scores a clustering of a stimulus's genuine points. Noise pixels are
/// not points and never enter the score.
pub fn evaluate_stimulus(id: &str, stimulus: &Stimulus, result: &ClusteringResult) -> Result<EvalRecord> {
    let gt = &stimulus.point_set.labels;
    if result.labels.len() != gt.len() {
        return Err(CoreError::InvalidInput(format!(
            "{id}: {} predicted labels for {} points",
            result.labels.len(),
            gt.len()
        )));
    }
    Ok(EvalRecord {
        stimulus_id: id.to_string(),
        method: result.method,
        n: gt.len(),
        accuracy: pairwise_rand_accuracy(gt, &result.labels)?,
        noise_excluded: stimulus.noise_pixels.len(),
        runtime_secs: result.runtime_secs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: Method,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub count: usize,
}

/// Mean and population standard deviation of accuracy per method, in
/// table order. Uses Welford's single-pass update.
pub fn aggregate(records: &[EvalRecord]) -> Result<Vec<Summary>> {
    if records.is_empty() {
        return Err(CoreError::InvalidInput("no records to aggregate".into()));
    }
    let mut acc: BTreeMap<Method, (usize, f64, f64)> = BTreeMap::new();
    for r in records {
        let (n, mean, m2) = acc.entry(r.method).or_insert((0, 0.0, 0.0));
        *n += 1;
        let delta = r.accuracy - *mean;
        *mean += delta / *n as f64;
        *m2 += delta * (r.accuracy - *mean);
    }
    Ok(acc
        .into_iter()
        .map(|(method, (count, mean, m2))| Summary {
            method,
            mean,
            std: (m2 / count as f64).max(0.0).sqrt(),
            count,
        })
        .collect())
}

/// `stimulus_id,method,n,accuracy,runtime` rows with a header line.
pub fn write_records_csv(mut w: impl Write, records: &[EvalRecord]) -> std::io::Result<()> {
    writeln!(w, "stimulus_id,method,n,accuracy,runtime")?;
    for r in records {
        writeln!(w, "{},{},{},{},{}", r.stimulus_id, r.method, r.n, r.accuracy, r.runtime_secs)?;
    }
    Ok(())
}

/// `method,mean,std` rows with a header line.
pub fn write_summary_csv(mut w: impl Write, rows: &[Summary]) -> std::io::Result<()> {
    writeln!(w, "method,mean,std")?;
    for s in rows {
        writeln!(w, "{},{},{}", s.method, s.mean, s.std)?;
    }
    Ok(())
}
