#![allow(dead_code)]

use std::path::Path;

use lampinn_bench::config::{preset, KChoice};
use lampinn_bench::ExperimentConfig;

/// A few-second Helmholtz experiment with every stage enabled.
pub fn tiny(out: &Path) -> ExperimentConfig {
    let mut c = preset("helmholtz-desk").unwrap();
    c.name = "tiny".into();
    c.setup.m_interior = 100;
    c.setup.n_data = 40;
    c.setup.eval_resolution = 20;
    c.arch.sizes = vec![2, 8, 8, 8, 1];
    c.pretrain.epochs = 50;
    c.preprocess.budget = 5;
    c.cluster.k = KChoice::Fixed(3);
    c.cluster.stability_seeds = 3;
    c.train.n1 = 3;
    c.train.n2 = 2;
    c.transfer.budget = 20;
    c.transfer.mse_every = 5;
    c.unseen.count = 4;
    c.ood.scales = vec![120.0];
    c.ood.count = 2;
    c.maml.meta_iters = 3;
    c.affinity_transfer.targets_per_cluster = 1;
    c.stats.bootstrap_resamples = 200;
    c.seeds = vec![0, 1];
    c.out_dir = out.to_path_buf();
    c
}

/// Every training and adaptation budget set to zero.
pub fn zero_budget(out: &Path) -> ExperimentConfig {
    let mut c = tiny(out);
    c.pretrain.epochs = 0;
    c.preprocess.budget = 0;
    c.train.n1 = 0;
    c.train.n2 = 0;
    c.transfer.budget = 0;
    c.maml.meta_iters = 0;
    c
}
