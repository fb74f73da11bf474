use crate::error::{shape_err, Result};
use crate::tensors::TensorSet;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl Default for OptimizerKind {
    fn default() -> Self {
        Self::adam()
    }
}

/// `θ ← θ − lr·g`
pub fn sgd_step(params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
    if params.len() != grads.len() {
        return Err(shape_err("sgd_step", params.len(), grads.len()));
    }
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
    Ok(())
}

/// First and second moment estimates for one tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamMoments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamMoments {
    pub fn zeros(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }
}

/// One bias-corrected Adam update. `step` counts from 1.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    moments: &mut AdamMoments,
    lr: f64,
    (beta1, beta2, epsilon): (f64, f64, f64),
    step: u64,
) -> Result<()> {
    if params.len() != grads.len() || moments.m.len() != params.len() {
        return Err(shape_err("adam_step", params.len(), grads.len()));
    }
    let t = step.max(1) as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for ((p, &g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(moments.m.iter_mut().zip(moments.v.iter_mut()))
    {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
    }
    Ok(())
}

/// Optimizer with per-tensor state, applied to any [`TensorSet`].
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    step: u64,
    moments: Vec<AdamMoments>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Self {
            kind,
            lr,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut impl TensorSet, grads: &impl TensorSet) -> Result<()> {
        let grads = grads.tensors();
        let mut params = params.tensors_mut();
        if grads.len() != params.len() {
            return Err(shape_err("Optimizer::step", params.len(), grads.len()));
        }
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for ((_, p), g) in params.iter_mut().zip(&grads) {
                    sgd_step(p, g.data, self.lr)?;
                }
            }
            OptimizerKind::Adam {
                beta1,
                beta2,
                epsilon,
            } => {
                if self.moments.is_empty() {
                    self.moments = params.iter().map(|(_, p)| AdamMoments::zeros(p.len())).collect();
                }
                for (((_, p), g), m) in params.iter_mut().zip(&grads).zip(&mut self.moments) {
                    adam_step(p, g.data, m, self.lr, (beta1, beta2, epsilon), self.step)?;
                }
            }
        }
        Ok(())
    }
}
