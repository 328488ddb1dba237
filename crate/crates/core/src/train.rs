//! Gradient-descent loops shared by pre-training, transfer and the baselines.

use serde::{Deserialize, Serialize};

use crate::net::{AdamConfig, OptimizerState, PlateauConfig, Surrogate};
use crate::pde::{mse_on_grid_par, PinnObjective, ReferenceField};
use crate::{Error, Result};

/// Loss above which a run is declared diverged.
pub const DIVERGENCE_LOSS: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub epochs: usize,
    pub lr: f64,
    #[serde(default)]
    pub adam: AdamConfig,
    /// Reduce-on-plateau schedule; `None` keeps the rate constant.
    #[serde(default)]
    pub plateau: Option<PlateauConfig>,
    /// Grid MSE is recorded every `mse_every` epochs and at the last epoch
    /// (0 records only the last).
    #[serde(default)]
    pub mse_every: usize,
}

impl FitOptions {
    pub fn new(epochs: usize, lr: f64) -> Self {
        Self {
            epochs,
            lr,
            adam: AdamConfig::default(),
            plateau: None,
            mse_every: 0,
        }
    }

    pub fn with_plateau(mut self, plateau: PlateauConfig) -> Self {
        self.plateau = Some(plateau);
        self
    }

    pub fn with_mse_every(mut self, every: usize) -> Self {
        self.mse_every = every;
        self
    }

    fn records_mse(&self, epoch: usize) -> bool {
        epoch == self.epochs || (self.mse_every > 0 && epoch % self.mse_every == 0)
    }
}

/// State after `epoch` optimizer steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// `epochs + 1` entries unless the run diverged.
    pub trajectory: Vec<EpochRecord>,
    pub diverged: bool,
}

impl FitReport {
    pub fn initial_loss(&self) -> f64 {
        self.trajectory.first().map_or(f64::NAN, |r| r.loss)
    }

    pub fn final_loss(&self) -> f64 {
        self.trajectory.last().map_or(f64::NAN, |r| r.loss)
    }

    /// Last recorded grid MSE.
    pub fn final_mse(&self) -> Option<f64> {
        self.trajectory.iter().rev().find_map(|r| r.mse)
    }

    pub fn mean_loss(&self) -> f64 {
        self.trajectory.iter().map(|r| r.loss).sum::<f64>() / self.trajectory.len() as f64
    }
}

/// Runs Adam on `model` against an arbitrary loss. `after_step` sees the
/// parameter vector after every update (used for projections such as
/// clipping).
pub fn fit_with<S, L, H>(
    model: &mut S,
    loss_and_grad: L,
    opts: &FitOptions,
    trainable: Option<&[bool]>,
    reference: Option<&ReferenceField>,
    mut after_step: H,
) -> Result<FitReport>
where
    S: Surrogate,
    L: Fn(&S) -> Result<(f64, Vec<f64>)>,
    H: FnMut(&mut [f64]),
{
    let mut state = OptimizerState::with_config(
        model.num_params(),
        opts.lr,
        opts.adam,
        opts.plateau.unwrap_or_default(),
    )?;
    let mut theta = model.param_values();
    let mut trajectory = Vec::with_capacity(opts.epochs + 1);
    for epoch in 0..=opts.epochs {
        let (loss, grad) = match loss_and_grad(model) {
            Ok(v) => v,
            Err(Error::NonFiniteLoss { .. }) => {
                return Ok(FitReport {
                    trajectory,
                    diverged: true,
                })
            }
            Err(e) => return Err(e),
        };
        let mse = match reference {
            Some(r) if opts.records_mse(epoch) => Some(mse_on_grid_par(model, r, Default::default())?),
            _ => None,
        };
        trajectory.push(EpochRecord { epoch, loss, mse });
        if !loss.is_finite() || loss > DIVERGENCE_LOSS {
            return Ok(FitReport {
                trajectory,
                diverged: true,
            });
        }
        if epoch == opts.epochs {
            break;
        }
        state.adam_step(&mut theta, &grad, trainable)?;
        if opts.plateau.is_some() {
            state.plateau_step(loss);
        }
        after_step(&mut theta);
        model.set_param_values(&theta)?;
    }
    Ok(FitReport {
        trajectory,
        diverged: false,
    })
}

/// [`fit_with`] on a single PINN objective.
pub fn fit<S: Surrogate>(
    model: &mut S,
    objective: &PinnObjective,
    opts: &FitOptions,
    trainable: Option<&[bool]>,
    reference: Option<&ReferenceField>,
) -> Result<FitReport> {
    fit_with(
        model,
        |m| objective.loss_and_grad(m).map(|(l, g)| (l.total, g)),
        opts,
        trainable,
        reference,
        |_| {},
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{Activation, DenseNet};
    use crate::pde::{helmholtz_reference, sample_collocation, PdeProblem};
    use crate::tasks::{Family, TaskConfig};

    fn objective() -> (PinnObjective, ReferenceField) {
        let t = TaskConfig::new(Family::Helmholtz2d, vec![1.0, 4.0, 5.0]).unwrap();
        let p = PdeProblem::new(&t, 0.1).unwrap();
        let r = helmholtz_reference(&t, &p.domain, 9).unwrap();
        let c = sample_collocation(&p, 64, 32, 1).unwrap();
        (PinnObjective::new(p, c).unwrap(), r)
    }

    #[test]
    fn trajectory_shape_and_descent() {
        let (obj, r) = objective();
        let mut net = DenseNet::new(&[2, 8, 1], Activation::Tanh, 3).unwrap();
        let rep = fit(&mut net, &obj, &FitOptions::new(40, 1e-2).with_mse_every(10), None, Some(&r)).unwrap();
        assert_eq!(rep.trajectory.len(), 41);
        assert!(!rep.diverged);
        assert!(rep.final_loss() < rep.initial_loss());
        assert_eq!(rep.trajectory.iter().filter(|e| e.mse.is_some()).count(), 5);
        assert_eq!(rep.final_loss(), obj.loss(&net).unwrap().total);
    }

    #[test]
    fn zero_epochs_changes_nothing() {
        let (obj, _) = objective();
        let mut net = DenseNet::new(&[2, 8, 1], Activation::Tanh, 3).unwrap();
        let before = net.clone();
        let rep = fit(&mut net, &obj, &FitOptions::new(0, 1e-2), None, None).unwrap();
        assert_eq!(rep.trajectory.len(), 1);
        assert_eq!(net, before);
    }
}
