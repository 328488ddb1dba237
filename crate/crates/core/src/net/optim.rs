//! Adam with bias correction and a reduce-on-plateau learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauConfig {
    pub factor: f64,
    pub patience: usize,
    pub lr_min: f64,
    /// Relative improvement below which a loss counts as "not improved".
    pub rel_tol: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        Self {
            factor: 0.5,
            patience: 50,
            lr_min: 1e-5,
            rel_tol: 1e-4,
        }
    }
}

/// Adam moments plus plateau bookkeeping for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    lr: f64,
    pub adam: AdamConfig,
    pub plateau: PlateauConfig,
    best: f64,
    bad_epochs: usize,
}

impl OptimizerState {
    pub fn new(len: usize, lr: f64) -> Result<Self> {
        Self::with_config(len, lr, AdamConfig::default(), PlateauConfig::default())
    }

    pub fn with_config(len: usize, lr: f64, adam: AdamConfig, plateau: PlateauConfig) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        Ok(Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            lr,
            adam,
            plateau,
            best: f64::INFINITY,
            bad_epochs: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update. Entries with `trainable[i] == false`
    /// are left bitwise untouched, moments included.
    pub fn adam_step(&mut self, theta: &mut [f64], grad: &[f64], trainable: Option<&[bool]>) -> Result<()> {
        let n = self.m.len();
        if theta.len() != n || grad.len() != n {
            return Err(Error::InputShape {
                expected: n,
                got: if theta.len() != n { theta.len() } else { grad.len() },
            });
        }
        if let Some(mask) = trainable {
            if mask.len() != n {
                return Err(Error::InputShape {
                    expected: n,
                    got: mask.len(),
                });
            }
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.adam;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for i in 0..n {
            if trainable.is_some_and(|m| !m[i]) {
                continue;
            }
            let g = grad[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            theta[i] -= self.lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }

    /// Feeds one loss value to the plateau schedule; returns true when the
    /// learning rate was reduced.
    pub fn plateau_step(&mut self, loss: f64) -> bool {
        if loss < self.best * (1.0 - self.plateau.rel_tol) {
            self.best = loss;
            self.bad_epochs = 0;
            return false;
        }
        self.bad_epochs += 1;
        if self.bad_epochs >= self.plateau.patience {
            self.bad_epochs = 0;
            let reduced = (self.lr * self.plateau.factor).max(self.plateau.lr_min);
            let changed = reduced < self.lr;
            self.lr = reduced;
            return changed;
        }
        false
    }
}
