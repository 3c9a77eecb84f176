//! Adam with bias correction plus the cosine learning-rate schedule.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-parameter Adam moment buffers.
#[derive(Debug, Clone)]
pub struct AdamState {
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    step_count: u64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl AdamState {
    /// Zero moments shaped after `params`, with defaults beta1 = 0.9,
    /// beta2 = 0.999, epsilon = 1e-8.
    pub fn new(params: &[&Tensor]) -> Self {
        Self::with_betas(params, 0.9, 0.999)
    }

    pub fn with_betas(params: &[&Tensor], beta1: f64, beta2: f64) -> Self {
        AdamState {
            first_moment: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            second_moment: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            step_count: 0,
            beta1,
            beta2,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }
}

/// One bias-corrected Adam update, in place:
///
/// m = b1*m + (1-b1)*g; v = b2*v + (1-b2)*g^2;
/// p -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
///
/// Gradients are read from each parameter's grad buffer.
pub fn adam_step(params: &mut [&mut Tensor], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != state.first_moment.len() {
        return Err(Error::contract(format!(
            "adam_step: {} params vs state for {}",
            params.len(),
            state.first_moment.len()
        )));
    }
    for (i, p) in params.iter().enumerate() {
        if p.numel() != state.first_moment[i].len() {
            return Err(Error::contract(format!(
                "adam_step: param {i} has {} elements, moments have {}",
                p.numel(),
                state.first_moment[i].len()
            )));
        }
        let grad = p
            .grad()
            .ok_or_else(|| Error::contract(format!("adam_step: param {i} has no gradient buffer")))?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::contract(format!(
                "adam_step: param {i} has a non-finite gradient"
            )));
        }
    }

    state.step_count += 1;
    let t = state.step_count as i32;
    let bias1 = 1.0 - state.beta1.powi(t);
    let bias2 = 1.0 - state.beta2.powi(t);

    for (i, p) in params.iter_mut().enumerate() {
        let grad = p.grad().expect("validated above").to_vec();
        let m = &mut state.first_moment[i];
        let v = &mut state.second_moment[i];
        let values = p.values_mut();
        for j in 0..grad.len() {
            let g = grad[j];
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
            let m_hat = m[j] / bias1;
            let v_hat = v[j] / bias2;
            values[j] -= lr * m_hat / (v_hat.sqrt() + state.epsilon);
        }
    }
    Ok(())
}

/// Cosine decay without restarts, from `base_lr` at t = 0 down to 0 at
/// `total_iterations`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub total_iterations: u64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            base_lr: 8e-5,
            total_iterations: 5000,
        }
    }
}

/// `base_lr * 0.5 * (1 + cos(pi * t / total))`.
pub fn cosine_decay(schedule: &LrSchedule, t: u64) -> Result<f64> {
    if t > schedule.total_iterations {
        return Err(Error::contract(format!(
            "cosine_decay: iteration {t} beyond horizon {}",
            schedule.total_iterations
        )));
    }
    let frac = t as f64 / schedule.total_iterations as f64;
    Ok(schedule.base_lr * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos()))
}
