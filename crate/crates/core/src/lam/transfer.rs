use serde::{Deserialize, Serialize};

use super::ModularNet;
use crate::net::{DenseNet, FreezeMask, PlateauConfig};
use crate::pde::{PinnObjective, ReferenceField};
use crate::train::{fit, fit_with, FitOptions, FitReport};
use crate::{Error, Result};

/// Whether routing weights are learned during transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    /// Updated with the shared rate and clipped to `[0, 1]` after every step.
    #[default]
    Learnable,
    /// Held at the initial value.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferOptions {
    pub budget: usize,
    pub lr: f64,
    pub lambda_init: f64,
    #[serde(default)]
    pub lambda_mode: LambdaMode,
    #[serde(default)]
    pub plateau: Option<PlateauConfig>,
    #[serde(default)]
    pub mse_every: usize,
}

impl TransferOptions {
    pub fn new(budget: usize, lr: f64) -> Self {
        Self {
            budget,
            lr,
            lambda_init: 0.5,
            lambda_mode: LambdaMode::Learnable,
            plateau: None,
            mse_every: 0,
        }
    }

    fn fit_options(&self) -> FitOptions {
        FitOptions {
            epochs: self.budget,
            lr: self.lr,
            adam: Default::default(),
            plateau: self.plateau,
            mse_every: self.mse_every,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRecord {
    pub epoch: usize,
    pub loss: f64,
    pub mse: Option<f64>,
    pub lambdas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferSession {
    pub net: ModularNet,
    pub trajectory: Vec<TransferRecord>,
    pub diverged: bool,
}

impl TransferSession {
    pub fn final_mse(&self) -> Option<f64> {
        self.trajectory.iter().rev().find_map(|r| r.mse)
    }
}

/// Adapts a copy of a trained modular net to a new task: all input networks,
/// the meta network and (unless fixed) the routing weights.
pub fn transfer_adapt(
    net: &ModularNet,
    objective: &PinnObjective,
    opts: &TransferOptions,
    reference: Option<&ReferenceField>,
) -> Result<TransferSession> {
    if !(0.0..=1.0).contains(&opts.lambda_init) {
        return Err(Error::Config(format!(
            "initial routing weight {} outside [0, 1]",
            opts.lambda_init
        )));
    }
    let mut model = net.clone();
    model.set_lambdas(opts.lambda_init);
    let lay = model.layout();
    let mut mask = vec![true; lay.len()];
    if opts.lambda_mode == LambdaMode::Fixed {
        mask[lay.lambdas.clone()].fill(false);
    }
    let mut lambdas = vec![model.lambdas.clone()];
    let lam_range = lay.lambdas.clone();
    let report = fit_with(
        &mut model,
        |m: &ModularNet| objective.loss_and_grad(m).map(|(l, g)| (l.total, g)),
        &opts.fit_options(),
        Some(&mask),
        reference,
        |theta| {
            for l in &mut theta[lam_range.clone()] {
                *l = l.clamp(0.0, 1.0);
            }
            lambdas.push(theta[lam_range.clone()].to_vec());
        },
    )?;
    let trajectory = report
        .trajectory
        .iter()
        .zip(lambdas)
        .map(|(r, l)| TransferRecord {
            epoch: r.epoch,
            loss: r.loss,
            mse: r.mse,
            lambdas: l,
        })
        .collect();
    Ok(TransferSession {
        net: model,
        trajectory,
        diverged: report.diverged,
    })
}

/// Fine-tunes a copy of a plain network with some layers frozen, recording the
/// grid MSE every epoch.
pub fn layer_freeze_experiment(
    net: &DenseNet,
    mask: &FreezeMask,
    objective: &PinnObjective,
    budget: usize,
    lr: f64,
    reference: &ReferenceField,
) -> Result<FitReport> {
    let trainable = mask.trainable(net)?;
    let mut model = net.clone();
    fit(
        &mut model,
        objective,
        &FitOptions::new(budget, lr).with_mse_every(1),
        Some(&trainable),
        Some(reference),
    )
}
