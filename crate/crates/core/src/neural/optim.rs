use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{Gradients, ParamId, ParameterSet, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
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

/// Plain SGD or Adam over a chosen subset of parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    /// Number of Adam updates taken so far.
    pub steps: u64,
    /// First and second moments, indexed like the parameter set.
    pub moments: Vec<(Array2<Real>, Array2<Real>)>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, params: &ParameterSet) -> Self {
        let moments = match kind {
            OptimizerKind::Sgd => Vec::new(),
            OptimizerKind::Adam { .. } => params
                .tensors()
                .iter()
                .map(|t| {
                    (
                        Array2::zeros(t.value.raw_dim()),
                        Array2::zeros(t.value.raw_dim()),
                    )
                })
                .collect(),
        };
        Self {
            kind,
            steps: 0,
            moments,
        }
    }

    /// Updates the trainable parameters among `ids`.
    pub fn step(&mut self, params: &mut ParameterSet, grads: &Gradients, ids: &[ParamId], lr: f64) {
        let lr = lr as Real;
        match self.kind {
            OptimizerKind::Sgd => {
                for &id in ids {
                    if params.tensor(id).trainable {
                        params.get_mut(id).scaled_add(-lr, &grads[id]);
                    }
                }
            }
            OptimizerKind::Adam {
                beta1,
                beta2,
                epsilon,
            } => {
                self.steps += 1;
                let (b1, b2, eps) = (beta1 as Real, beta2 as Real, epsilon as Real);
                let c1 = 1.0 - b1.powi(self.steps as i32);
                let c2 = 1.0 - b2.powi(self.steps as i32);
                for &id in ids {
                    if !params.tensor(id).trainable {
                        continue;
                    }
                    let (m, v) = &mut self.moments[id.index()];
                    let g = &grads[id];
                    ndarray::Zip::from(params.get_mut(id))
                        .and(m)
                        .and(v)
                        .and(g)
                        .for_each(|w, m, v, &g| {
                            *m = b1 * *m + (1.0 - b1) * g;
                            *v = b2 * *v + (1.0 - b2) * g * g;
                            *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                        });
                }
            }
        }
    }
}
