use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModularNet;
use crate::net::{OptimizerState, Surrogate};
use crate::pde::PinnObjective;
use crate::tasks::derive_seed;
use crate::train::DIVERGENCE_LOSS;
use crate::{Error, Result};

/// Which parameters phase 1 updates besides the frozen `in0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase1Scope {
    /// Every cluster network and the meta network.
    #[default]
    AllBranches,
    /// Only the routed cluster network and the meta network.
    MainBranch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPlan {
    pub n1: usize,
    pub n2: usize,
    pub epochs: usize,
    pub lambda_main: f64,
    pub lambda_other: f64,
    pub lr: f64,
    pub seed: u64,
    #[serde(default)]
    pub phase1_scope: Phase1Scope,
}

impl Default for TrainingPlan {
    fn default() -> Self {
        Self {
            n1: 100,
            n2: 50,
            epochs: 1,
            lambda_main: 1.0,
            lambda_other: 0.1,
            lr: 2e-3,
            seed: 0,
            phase1_scope: Phase1Scope::AllBranches,
        }
    }
}

impl TrainingPlan {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.lambda_other && self.lambda_other <= self.lambda_main && self.lambda_main <= 1.0) {
            return Err(Error::Config(format!(
                "routing weights must satisfy 0 < other ({}) <= main ({}) <= 1",
                self.lambda_other, self.lambda_main
            )));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

/// One optimizer run inside a phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseLog {
    pub phase: u8,
    pub epoch: usize,
    /// Cluster index (phase 1) or `usize::MAX` for the summed phase-2 loss.
    pub cluster: usize,
    /// Task index inside the cluster (phase 1 only).
    pub task: usize,
    pub loss_start: f64,
    pub loss_end: f64,
    pub diverged: bool,
}

/// Round-robin task order per cluster, reshuffled each time a cluster's list
/// is exhausted.
#[derive(Debug, Clone)]
pub struct TaskSampler {
    orders: Vec<Vec<usize>>,
    cursor: Vec<usize>,
    rng: ChaCha8Rng,
}

impl TaskSampler {
    pub fn new(cluster_sizes: &[usize], seed: u64) -> Result<Self> {
        if cluster_sizes.iter().any(|&n| n == 0) {
            return Err(Error::Config("every cluster needs at least one task".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let orders = cluster_sizes
            .iter()
            .map(|&n| {
                let mut o: Vec<usize> = (0..n).collect();
                o.shuffle(&mut rng);
                o
            })
            .collect();
        Ok(Self {
            orders,
            cursor: vec![0; cluster_sizes.len()],
            rng,
        })
    }

    pub fn next(&mut self, cluster: usize) -> usize {
        if self.cursor[cluster] == self.orders[cluster].len() {
            self.orders[cluster].shuffle(&mut self.rng);
            self.cursor[cluster] = 0;
        }
        let t = self.orders[cluster][self.cursor[cluster]];
        self.cursor[cluster] += 1;
        t
    }
}

/// Drives the two training phases with persistent optimizer state.
#[derive(Debug, Clone)]
pub struct LamTrainer {
    pub plan: TrainingPlan,
    sampler: TaskSampler,
    opt1: OptimizerState,
    opt2: OptimizerState,
    epoch: usize,
    pub logs: Vec<PhaseLog>,
}

fn check_clusters(net: &ModularNet, clusters: &[Vec<PinnObjective>]) -> Result<()> {
    if clusters.len() != net.k() {
        return Err(Error::Contract(format!(
            "{} task clusters for {} cluster networks",
            clusters.len(),
            net.k()
        )));
    }
    if clusters.iter().any(|c| c.is_empty()) {
        return Err(Error::Config("every cluster needs at least one task".into()));
    }
    Ok(())
}

fn diverged(loss: f64) -> bool {
    !loss.is_finite() || loss > DIVERGENCE_LOSS
}

impl LamTrainer {
    pub fn new(net: &ModularNet, clusters: &[Vec<PinnObjective>], plan: TrainingPlan) -> Result<Self> {
        plan.validate()?;
        check_clusters(net, clusters)?;
        let sizes: Vec<usize> = clusters.iter().map(Vec::len).collect();
        let n = net.num_params();
        Ok(Self {
            sampler: TaskSampler::new(&sizes, derive_seed(plan.seed, "lam/sampler"))?,
            opt1: OptimizerState::new(n, plan.lr)?,
            opt2: OptimizerState::new(n, plan.lr)?,
            epoch: 0,
            logs: Vec::new(),
            plan,
        })
    }

    fn phase1_mask(&self, net: &ModularNet, j: usize) -> Vec<bool> {
        let lay = net.layout();
        match self.plan.phase1_scope {
            Phase1Scope::AllBranches => {
                let mut r: Vec<_> = lay.clusters.clone();
                r.push(lay.meta.clone());
                lay.mask(&r)
            }
            Phase1Scope::MainBranch => lay.mask(&[lay.clusters[j].clone(), lay.meta.clone()]),
        }
    }

    /// One pass over the clusters: `n1` steps on one sampled task each.
    pub fn phase1(&mut self, net: &mut ModularNet, clusters: &[Vec<PinnObjective>]) -> Result<()> {
        check_clusters(net, clusters)?;
        for j in 0..net.k() {
            let t = self.sampler.next(j);
            let obj = &clusters[j][t];
            net.route(j, self.plan.lambda_main, self.plan.lambda_other);
            let mask = self.phase1_mask(net, j);
            let snapshot = net.clone();
            let mut theta = net.param_values();
            let mut log = PhaseLog {
                phase: 1,
                epoch: self.epoch,
                cluster: j,
                task: t,
                loss_start: f64::NAN,
                loss_end: f64::NAN,
                diverged: false,
            };
            for it in 0..=self.plan.n1 {
                let step = match obj.loss_and_grad(&*net) {
                    Ok((l, g)) if !diverged(l.total) => Some((l.total, g)),
                    Ok(_) | Err(Error::NonFiniteLoss { .. }) => None,
                    Err(e) => return Err(e),
                };
                let Some((loss, grad)) = step else {
                    log.diverged = true;
                    *net = snapshot.clone();
                    break;
                };
                if it == 0 {
                    log.loss_start = loss;
                }
                log.loss_end = loss;
                if it == self.plan.n1 {
                    break;
                }
                self.opt1.adam_step(&mut theta, &grad, Some(&mask))?;
                net.set_param_values(&theta)?;
            }
            self.logs.push(log);
        }
        Ok(())
    }

    /// `n2` meta-network updates on the summed loss of one task per cluster.
    pub fn phase2(&mut self, net: &mut ModularNet, clusters: &[Vec<PinnObjective>]) -> Result<()> {
        check_clusters(net, clusters)?;
        let lay = net.layout();
        let mask = lay.mask(&[lay.meta.clone()]);
        let snapshot = net.clone();
        let mut theta = net.param_values();
        let mut log = PhaseLog {
            phase: 2,
            epoch: self.epoch,
            cluster: usize::MAX,
            task: 0,
            loss_start: f64::NAN,
            loss_end: f64::NAN,
            diverged: false,
        };
        for it in 0..self.plan.n2 {
            let picks: Vec<usize> = (0..net.k()).map(|j| self.sampler.next(j)).collect();
            let (loss, grad) = summed_loss_and_grad(net, clusters, &picks, self.plan.lambda_main, self.plan.lambda_other)?;
            if diverged(loss) {
                log.diverged = true;
                *net = snapshot;
                break;
            }
            if it == 0 {
                log.loss_start = loss;
            }
            log.loss_end = loss;
            self.opt2.adam_step(&mut theta, &grad, Some(&mask))?;
            net.set_param_values(&theta)?;
        }
        self.logs.push(log);
        Ok(())
    }

    /// `plan.epochs` repetitions of phase 1 followed by phase 2.
    pub fn train(&mut self, net: &mut ModularNet, clusters: &[Vec<PinnObjective>]) -> Result<()> {
        for _ in 0..self.plan.epochs {
            self.phase1(net, clusters)?;
            self.phase2(net, clusters)?;
            self.epoch += 1;
        }
        Ok(())
    }
}

/// Sum over clusters of the loss of task `picks[j]` with branch `j` routed,
/// and its gradient. `net`'s routing weights are left unchanged.
pub fn summed_loss_and_grad(
    net: &ModularNet,
    clusters: &[Vec<PinnObjective>],
    picks: &[usize],
    main: f64,
    other: f64,
) -> Result<(f64, Vec<f64>)> {
    let mut routed = net.clone();
    let mut total = 0.0;
    let mut grad = vec![0.0; net.num_params()];
    for (j, &t) in picks.iter().enumerate() {
        routed.route(j, main, other);
        match clusters[j][t].loss_and_grad(&routed) {
            Ok((l, g)) => {
                total += l.total;
                for (a, b) in grad.iter_mut().zip(&g) {
                    *a += b;
                }
            }
            Err(Error::NonFiniteLoss { .. }) => return Ok((f64::INFINITY, grad)),
            Err(e) => return Err(e),
        }
    }
    Ok((total, grad))
}

/// One phase-1 pass with a fresh trainer.
pub fn phase1_train(net: &mut ModularNet, clusters: &[Vec<PinnObjective>], plan: &TrainingPlan) -> Result<Vec<PhaseLog>> {
    let mut tr = LamTrainer::new(net, clusters, plan.clone())?;
    tr.phase1(net, clusters)?;
    Ok(tr.logs)
}

/// One phase-2 run with a fresh trainer.
pub fn phase2_train(net: &mut ModularNet, clusters: &[Vec<PinnObjective>], plan: &TrainingPlan) -> Result<Vec<PhaseLog>> {
    let mut tr = LamTrainer::new(net, clusters, plan.clone())?;
    tr.phase2(net, clusters)?;
    Ok(tr.logs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampler_covers_each_cluster_before_repeating() {
        let mut s = TaskSampler::new(&[3, 1], 5).unwrap();
        let mut first: Vec<usize> = (0..3).map(|_| s.next(0)).collect();
        first.sort();
        assert_eq!(first, vec![0, 1, 2]);
        assert_eq!(s.next(1), 0);
        assert_eq!(s.next(1), 0);
        assert!(TaskSampler::new(&[2, 0], 1).is_err());
    }

    #[test]
    fn plan_validation() {
        assert!(TrainingPlan::default().validate().is_ok());
        let bad = TrainingPlan {
            lambda_other: 1.5,
            ..TrainingPlan::default()
        };
        assert!(bad.validate().is_err());
    }
}
