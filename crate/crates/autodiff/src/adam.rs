use crate::error::{AutodiffError, Result};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates for a fixed list of parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(config: AdamConfig, params: &[Tensor<T>]) -> Self {
        Self {
            config,
            m: params.iter().map(|p| vec![T::zero(); p.len()]).collect(),
            v: params.iter().map(|p| vec![T::zero(); p.len()]).collect(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of `params` from `grads`.
///
/// Gradients are validated before anything is touched, so a non-finite
/// gradient leaves parameters and state exactly as they were.
pub fn adam_step<T: Real>(params: &mut [Tensor<T>], grads: &[&[T]], state: &mut AdamState<T>) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(AutodiffError::StateMismatch(format!(
            "{} parameters, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || state.m[i].len() != p.len() {
            return Err(AutodiffError::StateMismatch(format!(
                "parameter {i}: {} values, {} gradient entries, {} moment entries",
                p.len(),
                g.len(),
                state.m[i].len()
            )));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(AutodiffError::NonFiniteGradient { index: i });
        }
    }

    state.t += 1;
    let c = state.config;
    let t = state.t as i32;
    let b1 = T::from_f64_lossy(c.beta1);
    let b2 = T::from_f64_lossy(c.beta2);
    let one = T::one();
    let corr1 = T::from_f64_lossy(1.0 - c.beta1.powi(t));
    let corr2 = T::from_f64_lossy(1.0 - c.beta2.powi(t));
    let lr = T::from_f64_lossy(c.learning_rate);
    let eps = T::from_f64_lossy(c.epsilon);

    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (((w, &gi), mi), vi) in p.values_mut().iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1 * *mi + (one - b1) * gi;
            *vi = b2 * *vi + (one - b2) * gi * gi;
            let m_hat = *mi / corr1;
            let v_hat = *vi / corr2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
