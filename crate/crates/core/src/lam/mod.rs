//! Modular networks: `K + 1` input networks combined by routing weights and
//! fed into one shared meta network.

mod training;
mod transfer;

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::net::jet::JetBatch;
use crate::net::{DenseNet, DenseTape, Surrogate};
use crate::tasks::derive_seed;
use crate::{Error, Result};

pub use training::{
    phase1_train, phase2_train, summed_loss_and_grad, LamTrainer, Phase1Scope, PhaseLog, TaskSampler, TrainingPlan,
};
pub use transfer::{
    layer_freeze_experiment, transfer_adapt, LambdaMode, TransferOptions, TransferRecord, TransferSession,
};

/// `meta(in0(x) + sum_j lambda_j in_j(x))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModularNet {
    pub in0: DenseNet,
    pub in_cluster: Vec<DenseNet>,
    pub meta: DenseNet,
    pub lambdas: Vec<f64>,
    pub split_depth: usize,
}

/// Where each block sits in the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ModularLayout {
    pub in0: Range<usize>,
    pub clusters: Vec<Range<usize>>,
    pub meta: Range<usize>,
    pub lambdas: Range<usize>,
}

impl ModularLayout {
    pub fn len(&self) -> usize {
        self.lambdas.end
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All input-network parameters, `in0` first.
    pub fn inputs(&self) -> Range<usize> {
        self.in0.start..self.meta.start
    }

    /// A mask that is `true` on the listed ranges only.
    pub fn mask(&self, ranges: &[Range<usize>]) -> Vec<bool> {
        let mut m = vec![false; self.len()];
        for r in ranges {
            m[r.clone()].fill(true);
        }
        m
    }
}

pub struct ModularTape {
    in0: DenseTape,
    branches: Vec<(JetBatch, DenseTape)>,
    meta: DenseTape,
}

impl ModularNet {
    pub fn from_parts(
        in0: DenseNet,
        in_cluster: Vec<DenseNet>,
        meta: DenseNet,
        lambdas: Vec<f64>,
        split_depth: usize,
    ) -> Result<Self> {
        let net = Self {
            in0,
            in_cluster,
            meta,
            lambdas,
            split_depth,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_cluster.iter().any(|n| n.sizes() != self.in0.sizes()) {
            return Err(Error::Contract("all input networks must share layer sizes".into()));
        }
        if self.meta.input_dim() != self.in0.output_dim() {
            return Err(Error::Contract(format!(
                "meta input {} does not match input-network output {}",
                self.meta.input_dim(),
                self.in0.output_dim()
            )));
        }
        if self.lambdas.len() != self.in_cluster.len() {
            return Err(Error::Contract(format!(
                "{} routing weights for {} clusters",
                self.lambdas.len(),
                self.in_cluster.len()
            )));
        }
        if self.split_depth != self.in0.num_layers() {
            return Err(Error::Contract("split depth disagrees with input-network depth".into()));
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.in_cluster.len()
    }

    pub fn set_lambdas(&mut self, value: f64) {
        self.lambdas.iter_mut().for_each(|l| *l = value);
    }

    /// Training-phase routing: `main` on branch `j`, `other` elsewhere.
    pub fn route(&mut self, j: usize, main: f64, other: f64) {
        for (i, l) in self.lambdas.iter_mut().enumerate() {
            *l = if i == j { main } else { other };
        }
    }

    pub fn layout(&self) -> ModularLayout {
        let mut off = 0;
        let mut take = |n: usize| {
            let r = off..off + n;
            off += n;
            r
        };
        let in0 = take(self.in0.num_params());
        let clusters = self.in_cluster.iter().map(|n| take(n.num_params())).collect();
        let meta = take(self.meta.num_params());
        let lambdas = take(self.lambdas.len());
        ModularLayout {
            in0,
            clusters,
            meta,
            lambdas,
        }
    }

    /// Plain evaluation at one point.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let out = self.eval(&JetBatch::seed(x, x.len(), crate::net::jet::JetOrder::Value))?;
        Ok(out.get(0, 0, 0))
    }

    /// The single network `meta(in0(x))` the modules were split from.
    pub fn reassembled(&self) -> Result<DenseNet> {
        let mut layers = self.in0.layers().to_vec();
        layers.extend_from_slice(self.meta.layers());
        DenseNet::from_layers(layers, self.meta.activation(), self.meta.activates_output())
    }

    fn hidden(&self, input: &JetBatch) -> Result<JetBatch> {
        let mut h = self.in0.eval_jets(input)?;
        for (net, &l) in self.in_cluster.iter().zip(&self.lambdas) {
            if l != 0.0 {
                h.axpy(l, &net.eval_jets(input)?);
            }
        }
        Ok(h)
    }
}

/// Copies the first `split_depth` layers into `in0` and the rest into the
/// meta network, and adds `k` freshly initialized cluster input networks.
pub fn split_pretrained(pretrained: &DenseNet, split_depth: usize, k: usize, seed: u64) -> Result<ModularNet> {
    let (in0, meta) = pretrained.split_at(split_depth)?;
    let in_cluster = (0..k)
        .map(|j| {
            DenseNet::new(in0.sizes(), in0.activation(), derive_seed(seed, &format!("in_cluster/{j}")))
                .map(|n| n.with_activated_output(true))
        })
        .collect::<Result<Vec<_>>>()?;
    ModularNet::from_parts(in0, in_cluster, meta, vec![TrainingPlan::default().lambda_other; k], split_depth)
}

impl Surrogate for ModularNet {
    type Tape = ModularTape;

    fn input_dim(&self) -> usize {
        self.in0.input_dim()
    }

    fn num_params(&self) -> usize {
        self.layout().len()
    }

    fn eval(&self, input: &JetBatch) -> Result<JetBatch> {
        self.meta.eval_jets(&self.hidden(input)?)
    }

    fn forward(&self, input: &JetBatch) -> Result<(JetBatch, ModularTape)> {
        let (mut h, t0) = self.in0.forward_jets(input)?;
        let mut branches = Vec::with_capacity(self.k());
        for (net, &l) in self.in_cluster.iter().zip(&self.lambdas) {
            let (hj, tj) = net.forward_jets(input)?;
            h.axpy(l, &hj);
            branches.push((hj, tj));
        }
        let (out, tm) = self.meta.forward_jets(&h)?;
        Ok((
            out,
            ModularTape {
                in0: t0,
                branches,
                meta: tm,
            },
        ))
    }

    fn backward(&self, tape: &ModularTape, out_adj: &JetBatch, grad: &mut [f64]) {
        let lay = self.layout();
        let h_adj = self
            .meta
            .backward_jets(&tape.meta, out_adj, &mut grad[lay.meta.clone()], true)
            .expect("input adjoint requested");
        self.in0.backward_jets(&tape.in0, &h_adj, &mut grad[lay.in0.clone()], false);
        for (j, ((net, (hj, tj)), &l)) in self
            .in_cluster
            .iter()
            .zip(&tape.branches)
            .zip(&self.lambdas)
            .enumerate()
        {
            grad[lay.lambdas.start + j] += h_adj.dot(hj);
            if l != 0.0 {
                net.backward_jets(tj, &h_adj.scaled(l), &mut grad[lay.clusters[j].clone()], false);
            }
        }
    }

    fn param_values(&self) -> Vec<f64> {
        let mut v = self.in0.param_values();
        for n in &self.in_cluster {
            v.extend(n.param_values());
        }
        v.extend(self.meta.param_values());
        v.extend_from_slice(&self.lambdas);
        v
    }

    fn set_param_values(&mut self, values: &[f64]) -> Result<()> {
        let lay = self.layout();
        if values.len() != lay.len() {
            return Err(Error::InputShape {
                expected: lay.len(),
                got: values.len(),
            });
        }
        self.in0.set_params(&values[lay.in0.clone()])?;
        for (n, r) in self.in_cluster.iter_mut().zip(&lay.clusters) {
            n.set_params(&values[r.clone()])?;
        }
        self.meta.set_params(&values[lay.meta.clone()])?;
        self.lambdas.copy_from_slice(&values[lay.lambdas]);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::Activation;

    fn pretrained() -> DenseNet {
        DenseNet::new(&[2, 10, 10, 10, 1], Activation::Tanh, 4).unwrap()
    }

    #[test]
    fn split_shapes() {
        let m = split_pretrained(&pretrained(), 1, 3, 0).unwrap();
        assert_eq!(m.in0.sizes(), &[2, 10]);
        assert_eq!(m.meta.sizes(), &[10, 10, 10, 1]);
        assert_eq!(m.k(), 3);
        assert!(split_pretrained(&pretrained(), 4, 3, 0).is_err());
        assert!(split_pretrained(&pretrained(), 0, 3, 0).is_err());
    }

    #[test]
    fn paper_parameter_counts() {
        let p = DenseNet::new(&[2, 10, 10, 10, 10, 1], Activation::Tanh, 0).unwrap();
        assert_eq!(p.num_params(), 371);
        let m = split_pretrained(&p, 2, 3, 0).unwrap();
        assert_eq!(m.num_params(), 794);
    }

    #[test]
    fn vanishing_branches_reproduce_pretrained() {
        let p = pretrained();
        let mut m = split_pretrained(&p, 2, 3, 7).unwrap();
        m.set_lambdas(0.0);
        let x = [0.3, -0.7];
        assert_eq!(m.predict(&x).unwrap(), p.forward(&x).unwrap()[0]);
        assert_eq!(m.reassembled().unwrap(), p);

        let mut z = split_pretrained(&p, 2, 3, 7).unwrap();
        for n in &mut z.in_cluster {
            let zeros = vec![0.0; n.num_params()];
            n.set_params(&zeros).unwrap();
        }
        // tanh(0) = 0, so zero branches add nothing whatever lambda is
        assert_eq!(z.predict(&x).unwrap(), p.forward(&x).unwrap()[0]);
    }

    #[test]
    fn single_branch_reduction() {
        let p = pretrained();
        let mut m = split_pretrained(&p, 1, 1, 2).unwrap();
        m.lambdas = vec![1.0];
        let zeros = vec![0.0; m.in0.num_params()];
        m.in0.set_params(&zeros).unwrap();
        let mut direct = m.in_cluster[0].layers().to_vec();
        direct.extend_from_slice(m.meta.layers());
        let d = DenseNet::from_layers(direct, Activation::Tanh, false).unwrap();
        let x = [1.1, 0.2];
        assert!((m.predict(&x).unwrap() - d.forward(&x).unwrap()[0]).abs() < 1e-15);
    }

    #[test]
    fn split_is_deterministic() {
        let a = split_pretrained(&pretrained(), 2, 3, 9).unwrap();
        let b = split_pretrained(&pretrained(), 2, 3, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn flat_round_trip() {
        let mut m = split_pretrained(&pretrained(), 2, 2, 1).unwrap();
        let v: Vec<f64> = (0..m.num_params()).map(|i| i as f64 * 1e-3).collect();
        m.set_param_values(&v).unwrap();
        assert_eq!(m.param_values(), v);
        assert_eq!(m.lambdas, v[v.len() - 2..].to_vec());
    }
}
