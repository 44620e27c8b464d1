use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::model::ParameterStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adadelta,
}

/// Scales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before scaling.
pub fn clip_gradients(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
    if norm.is_finite() && norm > max_norm {
        let scale = max_norm / norm;
        grads.iter_mut().flatten().for_each(|g| *g *= scale);
    }
    norm
}

/// Running averages kept by Adadelta; unused for SGD.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: Optimizer,
    sq_grad: Vec<Vec<f64>>,
    sq_update: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(store: &ParameterStore, kind: Optimizer) -> Self {
        let zeros = || -> Vec<Vec<f64>> {
            match kind {
                Optimizer::Sgd => Vec::new(),
                Optimizer::Adadelta => store.tensors().iter().map(|t| vec![0.0; t.len()]).collect(),
            }
        };
        Self {
            kind,
            sq_grad: zeros(),
            sq_update: zeros(),
        }
    }

    pub fn apply(&mut self, store: &mut ParameterStore, grads: &[Vec<f64>], cfg: &TrainConfig) {
        let lr = cfg.learning_rate;
        match self.kind {
            Optimizer::Sgd => {
                for (t, g) in store.tensors_mut().iter_mut().zip(grads) {
                    for (p, g) in t.data_mut().iter_mut().zip(g) {
                        *p -= lr * g;
                    }
                }
            }
            Optimizer::Adadelta => {
                let (rho, eps) = (cfg.rho, cfg.epsilon);
                for (k, (t, g)) in store.tensors_mut().iter_mut().zip(grads).enumerate() {
                    let eg = &mut self.sq_grad[k];
                    let ex = &mut self.sq_update[k];
                    for (i, (p, &g)) in t.data_mut().iter_mut().zip(g).enumerate() {
                        eg[i] = rho * eg[i] + (1.0 - rho) * g * g;
                        let dx = -((ex[i] + eps).sqrt() / (eg[i] + eps).sqrt()) * g;
                        ex[i] = rho * ex[i] + (1.0 - rho) * dx * dx;
                        *p += lr * dx;
                    }
                }
            }
        }
    }
}
