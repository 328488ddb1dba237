//! Comparison trainers: from scratch, plain transfer and first-order MAML.

use serde::{Deserialize, Serialize};

use crate::lam::TaskSampler;
use crate::net::{Activation, DenseNet, OptimizerState, Surrogate};
use crate::pde::{PinnObjective, ReferenceField};
use crate::tasks::derive_seed;
use crate::train::{fit, FitOptions, FitReport, DIVERGENCE_LOSS};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Scratch,
    Transfer,
    MamlFirstOrder,
}

impl BaselineKind {
    pub fn label(self) -> &'static str {
        match self {
            BaselineKind::Scratch => "pinn_scratch",
            BaselineKind::Transfer => "pinn_transfer",
            BaselineKind::MamlFirstOrder => "maml",
        }
    }
}

/// Trains a freshly initialized network on one task.
pub fn train_scratch(
    sizes: &[usize],
    activation: Activation,
    objective: &PinnObjective,
    opts: &FitOptions,
    seed: u64,
    reference: Option<&ReferenceField>,
) -> Result<(DenseNet, FitReport)> {
    let mut net = DenseNet::new(sizes, activation, seed)?;
    let report = fit(&mut net, objective, opts, None, reference)?;
    Ok((net, report))
}

/// Fine-tunes every parameter of a copy of `pretrained`.
pub fn train_transfer(
    pretrained: &DenseNet,
    objective: &PinnObjective,
    opts: &FitOptions,
    reference: Option<&ReferenceField>,
) -> Result<(DenseNet, FitReport)> {
    let mut net = pretrained.clone();
    let report = fit(&mut net, objective, opts, None, reference)?;
    Ok((net, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MamlOptions {
    pub meta_iters: usize,
    pub inner_steps: usize,
    /// Shared by the inner SGD steps and the outer Adam update.
    pub lr: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MamlReport {
    /// Post-adaptation loss of the sampled task at every meta-iteration.
    pub losses: Vec<f64>,
    pub diverged: bool,
}

/// First-order MAML: per meta-iteration, adapt to one sampled task with
/// `inner_steps` SGD steps and apply the gradient at the adapted point to the
/// meta-parameters with Adam.
pub fn maml_train(init: &DenseNet, tasks: &[PinnObjective], opts: &MamlOptions) -> Result<(DenseNet, MamlReport)> {
    if tasks.len() < 2 {
        return Err(Error::Config("MAML needs at least 2 tasks".into()));
    }
    let mut meta = init.clone();
    let mut theta = meta.param_values();
    let mut opt = OptimizerState::new(theta.len(), opts.lr)?;
    let mut sampler = TaskSampler::new(&[tasks.len()], derive_seed(opts.seed, "maml/sampler"))?;
    let mut losses = Vec::with_capacity(opts.meta_iters);
    let mut adapted = meta.clone();
    for _ in 0..opts.meta_iters {
        let task = &tasks[sampler.next(0)];
        adapted.set_param_values(&theta)?;
        let mut phi = theta.clone();
        for _ in 0..opts.inner_steps {
            let (_, g) = task.loss_and_grad(&adapted)?;
            for (p, gi) in phi.iter_mut().zip(&g) {
                *p -= opts.lr * gi;
            }
            adapted.set_param_values(&phi)?;
        }
        let (l, g) = match task.loss_and_grad(&adapted) {
            Ok(v) => v,
            Err(Error::NonFiniteLoss { .. }) => {
                return Ok((meta, MamlReport { losses, diverged: true }));
            }
            Err(e) => return Err(e),
        };
        losses.push(l.total);
        if !l.total.is_finite() || l.total > DIVERGENCE_LOSS {
            return Ok((meta, MamlReport { losses, diverged: true }));
        }
        opt.adam_step(&mut theta, &g, None)?;
        meta.set_param_values(&theta)?;
    }
    Ok((meta, MamlReport { losses, diverged: false }))
}

/// Fine-tunes a copy of a meta-initialization on one task.
pub fn maml_adapt(
    meta_init: &DenseNet,
    objective: &PinnObjective,
    opts: &FitOptions,
    reference: Option<&ReferenceField>,
) -> Result<(DenseNet, FitReport)> {
    train_transfer(meta_init, objective, opts, reference)
}
