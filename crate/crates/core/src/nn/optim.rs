use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Config(format!("unknown optimizer {other:?} (expected sgd or adam)"))),
        }
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd { lr: f64 },
    Adam { lr: f64, t: i32, m: Vec<Vec<f64>>, v: Vec<Vec<f64>> },
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        Ok(match kind {
            OptimizerKind::Sgd => Optimizer::Sgd { lr },
            OptimizerKind::Adam => Optimizer::Adam { lr, t: 0, m: Vec::new(), v: Vec::new() },
        })
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    pub fn step(&mut self, params: Vec<&mut Tensor>) -> Result<()> {
        for (i, p) in params.iter().enumerate() {
            match &p.grad {
                None => return Err(Error::Validation(format!("parameter tensor {i} has no gradient"))),
                Some(g) => {
                    if let Some(j) = g.iter().position(|v| !v.is_finite()) {
                        return Err(Error::NonFinite(format!("gradient of parameter tensor {i} at index {j}")));
                    }
                }
            }
        }
        match self {
            Optimizer::Sgd { lr } => {
                for p in params {
                    let g = p.grad.as_mut().unwrap();
                    for (w, gv) in p.data.iter_mut().zip(g.iter_mut()) {
                        *w -= *lr * *gv;
                        *gv = 0.0;
                    }
                }
            }
            Optimizer::Adam { lr, t, m, v } => {
                if m.is_empty() {
                    *m = params.iter().map(|p| vec![0.0; p.len()]).collect();
                    *v = m.clone();
                }
                if m.len() != params.len() {
                    return Err(Error::Validation("parameter set changed between Adam steps".into()));
                }
                *t += 1;
                let c1 = 1.0 - ADAM_BETA1.powi(*t);
                let c2 = 1.0 - ADAM_BETA2.powi(*t);
                for ((p, m), v) in params.into_iter().zip(m.iter_mut()).zip(v.iter_mut()) {
                    let g = p.grad.as_mut().unwrap();
                    for k in 0..p.data.len() {
                        let gk = g[k];
                        m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * gk;
                        v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * gk * gk;
                        p.data[k] -= *lr * (m[k] / c1) / ((v[k] / c2).sqrt() + ADAM_EPSILON);
                        g[k] = 0.0;
                    }
                }
            }
        }
        Ok(())
    }
}
