use super::{Gradients, ModelParams};
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moment estimates, one buffer per tensor in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let sizes: Vec<usize> = params.tensors().iter().map(|(_, t)| t.as_slice().len()).collect();
        AdamState {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update of every parameter.
    ///
    /// Fails without touching `params` if any gradient entry is non-finite; the
    /// error names the offending tensor.
    pub fn step(&mut self, params: &mut ModelParams, grads: &Gradients, lr: f64) -> Result<()> {
        if grads.shape != params.shape {
            return Err(Error::Shape {
                what: "gradients".into(),
                expected: format!("{:?}", params.shape),
                got: format!("{:?}", grads.shape),
            });
        }
        for (name, g) in grads.tensors() {
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient of {name}")));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - ADAM_BETA1.powi(t);
        let c2 = 1.0 - ADAM_BETA2.powi(t);
        let grad_tensors = grads.tensors();
        for (k, (_, p)) in params.tensors_mut().into_iter().enumerate() {
            let g = grad_tensors[k].1.as_slice();
            let m = &mut self.m[k];
            let v = &mut self.v[k];
            for (idx, x) in p.as_mut_slice().iter_mut().enumerate() {
                let gi = g[idx];
                m[idx] = ADAM_BETA1 * m[idx] + (1.0 - ADAM_BETA1) * gi;
                v[idx] = ADAM_BETA2 * v[idx] + (1.0 - ADAM_BETA2) * gi * gi;
                let m_hat = m[idx] / c1;
                let v_hat = v[idx] / c2;
                *x -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
        params.check_finite()
    }
}
