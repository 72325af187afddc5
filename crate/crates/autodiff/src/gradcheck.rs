use crate::error::Result;
use crate::graph::{Graph, NodeId};
use crate::tensor::Tensor;

/// Relative error `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputReport {
    pub index: usize,
    pub max_relative_error: f64,
    /// Flat element index where the worst error occurred.
    pub worst_element: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub elements: usize,
    /// Elements left out because a kink lies within `x ± h`.
    pub skipped: usize,
    /// Elements missing the tolerance whose difference quotient is too
    /// small to resolve to it; these are held to the rounding bound.
    pub unresolved: usize,
    /// Unresolved elements that still missed the rounding bound.
    pub unresolved_failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub inputs: Vec<InputReport>,
    pub tolerance: f64,
    pub step: f64,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.inputs.iter().map(|r| r.max_relative_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_relative_error() < self.tolerance && self.inputs.iter().all(|r| r.unresolved_failures == 0)
    }

    pub fn elements(&self) -> usize {
        self.inputs.iter().map(|r| r.elements).sum()
    }

    pub fn skipped(&self) -> usize {
        self.inputs.iter().map(|r| r.skipped).sum()
    }

    pub fn unresolved(&self) -> usize {
        self.inputs.iter().map(|r| r.unresolved).sum()
    }
}

fn evaluate<F>(f: &F, inputs: &[Tensor<f64>]) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[NodeId]) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let out = f(&mut g, &ids)?;
    Ok(g.value(out).values()[0])
}

/// Compares back-propagated gradients of the scalar built by `f` against
/// central differences `(f(x+h) - f(x-h)) / 2h`, element by element for
/// every input.
pub fn finite_diff_check<F>(inputs: &[Tensor<f64>], f: F, h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[NodeId]) -> Result<NodeId>,
{
    check(inputs, f, h, tol, None)
}

/// Like [`finite_diff_check`], but skips elements where `f` is not smooth
/// on `[x - h, x + h]`: a ReLU input or pooling tie crossed by the probe.
/// An element counts as such when its one-sided slopes disagree,
/// `|f(x+h) - 2f(x) + f(x-h)| > kink * |f(x+h) - f(x-h)| + 16 eps |f(x)|`. The test uses
/// function values only, never the analytic gradient.
///
/// An element missing `tol` whose quotient rounding bound
/// `16 eps |f(x)| / 2h` exceeds `tol` times the quotient is held to that
/// bound absolutely.
pub fn finite_diff_check_smooth<F>(inputs: &[Tensor<f64>], f: F, h: f64, tol: f64, kink: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[NodeId]) -> Result<NodeId>,
{
    check(inputs, f, h, tol, Some(kink))
}

fn check<F>(inputs: &[Tensor<f64>], f: F, h: f64, tol: f64, kink: Option<f64>) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[NodeId]) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = f(&mut g, &ids)?;
    g.backward(out)?;
    let analytic: Vec<Vec<f64>> = ids
        .iter()
        .zip(inputs)
        .map(|(&id, t)| g.grad(id).map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec))
        .collect();
    drop(g);

    let f0 = evaluate(&f, inputs)?;
    let mut probe = inputs.to_vec();
    let mut reports = Vec::with_capacity(inputs.len());
    for (i, grad) in analytic.iter().enumerate() {
        let mut rep = InputReport {
            index: i,
            max_relative_error: 0.0,
            worst_element: 0,
            analytic: 0.0,
            numeric: 0.0,
            elements: inputs[i].len(),
            skipped: 0,
            unresolved: 0,
            unresolved_failures: 0,
        };
        let mut first = true;
        for j in 0..inputs[i].len() {
            let x = inputs[i].values()[j];
            probe[i].values_mut()[j] = x + h;
            let fp = evaluate(&f, &probe)?;
            probe[i].values_mut()[j] = x - h;
            let fm = evaluate(&f, &probe)?;
            probe[i].values_mut()[j] = x;
            let noise = 16.0 * f64::EPSILON * f0.abs();
            if kink.is_some_and(|k| (fp - 2.0 * f0 + fm).abs() > k * (fp - fm).abs() + noise) {
                rep.skipped += 1;
                continue;
            }
            let numeric = (fp - fm) / (2.0 * h);
            let err = relative_error(grad[j], numeric);
            if kink.is_some() && err >= tol {
                let rounding = noise / (2.0 * h);
                if rounding > tol * numeric.abs() {
                    rep.unresolved += 1;
                    if (grad[j] - numeric).abs() > rounding {
                        rep.unresolved_failures += 1;
                    }
                    continue;
                }
            }
            if err > rep.max_relative_error || first {
                rep = InputReport {
                    max_relative_error: err,
                    worst_element: j,
                    analytic: grad[j],
                    numeric,
                    ..rep
                };
                first = false;
            }
        }
        reports.push(rep);
    }
    Ok(GradCheckReport {
        inputs: reports,
        tolerance: tol,
        step: h,
    })
}
