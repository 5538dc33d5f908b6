//! Adam with bias correction.

use crate::nncore::{NncoreError, ParamTensor};

struct MomentPair {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Optimizer state: one first/second-moment pair per parameter tensor,
/// allocated on the first step. The same tensors must be presented in
/// the same order on every call.
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    moments: Vec<MomentPair>,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        AdamState::with_hyperparams(lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyperparams(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        AdamState {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over the given parameters; gradients are zeroed after
    /// the update.
    pub fn step(&mut self, params: &mut [&mut ParamTensor]) -> Result<(), NncoreError> {
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|p| MomentPair {
                    m: vec![0.0; p.values.numel()],
                    v: vec![0.0; p.values.numel()],
                })
                .collect();
        }
        if self.moments.len() != params.len()
            || self
                .moments
                .iter()
                .zip(params.iter())
                .any(|(mp, p)| mp.m.len() != p.values.numel())
        {
            return Err(NncoreError::ShapeMismatch {
                context: "adam moment alignment",
                expected: vec![self.moments.len()],
                got: vec![params.len()],
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (p, mp) in params.iter_mut().zip(self.moments.iter_mut()) {
            let grads = p.grad.as_mut_slice();
            let vals = p.values.as_mut_slice();
            for ((x, g), (m, v)) in vals
                .iter_mut()
                .zip(grads.iter())
                .zip(mp.m.iter_mut().zip(mp.v.iter_mut()))
            {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *x -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            p.zero_grad();
        }
        Ok(())
    }
}
