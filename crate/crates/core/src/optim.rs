// SPDX-License-Identifier: MIT OR Apache-2.0

//! Adam with bias correction.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// Optimizer state for a fixed, ordered list of parameter tensors.
///
/// A slot whose gradient is `None` on a step is left untouched, moments
/// included; each slot keeps its own update count for bias correction.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    slot_steps: Vec<u64>,
}

impl AdamState {
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let first: Vec<Tensor> = params.into_iter().map(|p| Tensor::zeros(p.shape())).collect();
        let second = first.clone();
        let slot_steps = vec![0; first.len()];
        Self {
            config,
            step: 0,
            first,
            second,
            slot_steps,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, slot: usize) -> &Tensor {
        &self.first[slot]
    }

    pub fn second_moment(&self, slot: usize) -> &Tensor {
        &self.second[slot]
    }

    /// Apply one update. `params` and `grads` are aligned with the slots
    /// given at construction.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Option<&Tensor>]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::ShapeMismatch {
                op: "adam_step",
                left: vec![self.first.len()],
                right: vec![params.len(), grads.len()],
            });
        }
        for (slot, (p, g)) in params.iter().zip(grads).enumerate() {
            let shape = self.first[slot].shape();
            if p.shape() != shape || g.is_some_and(|g| g.shape() != shape) {
                return Err(Error::ShapeMismatch {
                    op: "adam_step",
                    left: shape.to_vec(),
                    right: g.map_or(p.shape().to_vec(), |g| g.shape().to_vec()),
                });
            }
        }

        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        for (slot, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let Some(g) = g else { continue };
            self.slot_steps[slot] += 1;
            let t = self.slot_steps[slot] as i32;
            let c1 = 1.0 - beta1.powi(t);
            let c2 = 1.0 - beta2.powi(t);
            let m = self.first[slot].data_mut();
            let v = self.second[slot].data_mut();
            for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
            if !p.is_finite() {
                return Err(Error::NonFinite("adam_step"));
            }
        }
        Ok(())
    }
}
