//! First-order optimizers over a [`ParameterStore`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ParameterStore;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: OptimizerKind,
    learning_rate: f64,
    moments: BTreeMap<String, Moments>,
    steps: u64,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {learning_rate}")));
        }
        Ok(Self { kind, learning_rate, moments: BTreeMap::new(), steps: 0 })
    }

    pub fn sgd(learning_rate: f64) -> Result<Self> {
        Self::new(OptimizerKind::Sgd, learning_rate)
    }

    pub fn adam(learning_rate: f64) -> Result<Self> {
        Self::new(OptimizerKind::Adam, learning_rate)
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Updates every parameter in the store.
    pub fn step_all(&mut self, store: &mut ParameterStore) -> Result<()> {
        let names: Vec<String> = store.names().map(str::to_string).collect();
        self.step(store, &names)
    }

    /// Updates only `names`; other parameters and their moment buffers are untouched.
    /// Gradients of the updated parameters are cleared afterwards.
    pub fn step<S: AsRef<str>>(&mut self, store: &mut ParameterStore, names: &[S]) -> Result<()> {
        for name in names {
            if store.get(name.as_ref())?.grad().is_none() {
                return Err(Error::MissingGradient(name.as_ref().to_string()));
            }
        }
        for name in names {
            let name = name.as_ref();
            let tensor = store.get_mut(name)?;
            let grad = tensor.take_grad().expect("checked above");
            match self.kind {
                OptimizerKind::Sgd => {
                    for (w, g) in tensor.values_mut().iter_mut().zip(&grad) {
                        *w -= self.learning_rate * g;
                    }
                }
                OptimizerKind::Adam => {
                    let n = grad.len();
                    let mom = self
                        .moments
                        .entry(name.to_string())
                        .or_insert_with(|| Moments { m: vec![0.0; n], v: vec![0.0; n], t: 0 });
                    mom.t += 1;
                    let bc1 = 1.0 - BETA1.powi(mom.t as i32);
                    let bc2 = 1.0 - BETA2.powi(mom.t as i32);
                    for (i, w) in tensor.values_mut().iter_mut().enumerate() {
                        let g = grad[i];
                        mom.m[i] = BETA1 * mom.m[i] + (1.0 - BETA1) * g;
                        mom.v[i] = BETA2 * mom.v[i] + (1.0 - BETA2) * g * g;
                        let m_hat = mom.m[i] / bc1;
                        let v_hat = mom.v[i] / bc2;
                        *w -= self.learning_rate * m_hat / (v_hat.sqrt() + EPS);
                    }
                }
            }
        }
        self.steps += 1;
        Ok(())
    }
}
