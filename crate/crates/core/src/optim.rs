//! Adam optimizer.

use ndarray::{Array2, Zip};

use crate::error::{KesError, Result};
use crate::model::{GradientSet, ModelParams};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    first: Vec<Array2<f64>>,
    second: Vec<Array2<f64>>,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Array2<f64>> = params
            .tensors()
            .into_iter()
            .map(|(_, t)| Array2::zeros(t.raw_dim()))
            .collect();
        AdamState {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &GradientSet,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    let grad_tensors = grads.tensors();
    let param_tensors = params.tensors_mut();
    if grad_tensors.len() != param_tensors.len() || state.first.len() != param_tensors.len() {
        return Err(KesError::Internal(
            "gradient set does not match parameters".into(),
        ));
    }
    state.step += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    for (((p, (_, g)), m), v) in param_tensors
        .into_iter()
        .zip(grad_tensors)
        .zip(&mut state.first)
        .zip(&mut state.second)
    {
        if p.shape() != g.shape() {
            return Err(KesError::Internal("gradient shape mismatch".into()));
        }
        Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        });
    }
    Ok(())
}
