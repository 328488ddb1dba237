//! Experiment configuration: TOML schema, named presets and validation.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use lampinn::affinity::FeatureSet;
use lampinn::baselines::BaselineKind;
use lampinn::lam::{LambdaMode, Phase1Scope, TrainingPlan};
use lampinn::net::{Activation, PlateauConfig};
use lampinn::pde::BenchSetup;
use lampinn::tasks::{Family, LevelScheme};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

pub const PRESETS: [&str; 3] = ["helmholtz-paper", "burgers-paper", "helmholtz-desk"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoK {
    Auto,
}

/// Cluster count: a fixed number or `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KChoice {
    Fixed(usize),
    Auto(AutoK),
}

/// Scalar used to rank unseen tasks into groups A and B.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AffinityScore {
    L1,
    L2,
    #[default]
    L3,
    EmbeddingNorm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DoeConfig {
    pub scheme: LevelScheme,
    /// Seed for random designs.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    /// Layer widths of the full network, input to output.
    pub sizes: Vec<usize>,
    /// Number of layers assigned to the input networks.
    pub split_depth: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessConfig {
    pub budget: usize,
    pub lr: f64,
    pub features: FeatureSet,
    /// Replace the loss metrics with random draws (ablation).
    pub random_metrics: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    pub k: KChoice,
    /// Candidate range for the stability report, inclusive.
    pub k_min: usize,
    pub k_max: usize,
    /// k-means seeds of the stability report.
    pub stability_seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub n1: usize,
    pub n2: usize,
    pub epochs: usize,
    pub lambda_main: f64,
    pub lambda_other: f64,
    pub lr: f64,
    pub phase1_scope: Phase1Scope,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferConfig {
    /// Epochs per unseen task, shared by every method.
    pub budget: usize,
    pub lr: f64,
    pub lambda_init: f64,
    pub lambda_mode: LambdaMode,
    pub plateau: bool,
    /// Grid MSE is recorded every this many epochs.
    pub mse_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnseenConfig {
    pub count: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OodConfig {
    /// Extensions of the design range in percent, e.g. 110.
    pub scales: Vec<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MamlConfig {
    pub meta_iters: usize,
    pub inner_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffinityTransferConfig {
    pub enabled: bool,
    /// Target tasks drawn from each cluster.
    pub targets_per_cluster: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsConfig {
    pub affinity_score: AffinityScore,
    pub bootstrap_resamples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    pub setup: BenchSetup,
    pub doe: DoeConfig,
    /// Pre-training task; the family reference task when absent.
    #[serde(default)]
    pub reference_task: Option<Vec<f64>>,
    pub arch: ArchConfig,
    pub pretrain: PretrainConfig,
    pub preprocess: PreprocessConfig,
    pub cluster: ClusterConfig,
    pub train: TrainConfig,
    pub transfer: TransferConfig,
    pub unseen: UnseenConfig,
    pub ood: OodConfig,
    pub baselines: Vec<BaselineKind>,
    pub maml: MamlConfig,
    pub affinity_transfer: AffinityTransferConfig,
    pub stats: StatsConfig,
    /// One full pipeline run per seed.
    pub seeds: Vec<u64>,
    /// Fan independent tasks out over the thread pool.
    pub parallel: bool,
    pub out_dir: PathBuf,
}

fn helmholtz_paper() -> ExperimentConfig {
    ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        name: "helmholtz-paper".into(),
        setup: BenchSetup {
            family: Family::Helmholtz2d,
            domain_scale: 1.0,
            m_interior: 10_000,
            n_data: 400,
            eval_resolution: 100,
            eval_snapshots: 0,
        },
        doe: DoeConfig {
            scheme: LevelScheme::paper_default(),
            seed: 0,
        },
        reference_task: None,
        arch: ArchConfig {
            sizes: vec![2, 10, 10, 10, 10, 1],
            split_depth: 2,
            activation: Activation::Tanh,
        },
        pretrain: PretrainConfig { epochs: 5000, lr: 2e-3 },
        preprocess: PreprocessConfig {
            budget: 50,
            lr: 2e-3,
            features: FeatureSet::Full,
            random_metrics: false,
        },
        cluster: ClusterConfig {
            k: KChoice::Fixed(3),
            k_min: 2,
            k_max: 6,
            stability_seeds: 20,
        },
        train: TrainConfig {
            n1: 100,
            n2: 50,
            epochs: 1,
            lambda_main: 1.0,
            lambda_other: 0.1,
            lr: 2e-3,
            phase1_scope: Phase1Scope::AllBranches,
        },
        transfer: TransferConfig {
            budget: 500,
            lr: 2e-3,
            lambda_init: 0.5,
            lambda_mode: LambdaMode::Learnable,
            plateau: true,
            mse_every: 10,
        },
        unseen: UnseenConfig { count: 10, seed: 2024 },
        ood: OodConfig {
            scales: vec![110.0, 120.0, 130.0],
            count: 5,
        },
        baselines: vec![BaselineKind::Scratch, BaselineKind::Transfer, BaselineKind::MamlFirstOrder],
        maml: MamlConfig {
            meta_iters: 150,
            inner_steps: 1,
        },
        affinity_transfer: AffinityTransferConfig {
            enabled: true,
            targets_per_cluster: 2,
        },
        stats: StatsConfig {
            affinity_score: AffinityScore::L3,
            bootstrap_resamples: 10_000,
            seed: 0,
        },
        seeds: vec![0, 1, 2, 3, 4],
        parallel: true,
        out_dir: PathBuf::from("runs/helmholtz-paper"),
    }
}

fn burgers_paper() -> ExperimentConfig {
    let mut c = helmholtz_paper();
    c.name = "burgers-paper".into();
    c.setup = BenchSetup {
        family: Family::Burgers1d,
        domain_scale: 1.0,
        m_interior: 100_000,
        n_data: 50_000,
        eval_resolution: 256,
        eval_snapshots: 100,
    };
    c.arch = ArchConfig {
        sizes: vec![2, 20, 20, 20, 20, 20, 20, 20, 20, 1],
        split_depth: 4,
        activation: Activation::Tanh,
    };
    c.pretrain.epochs = 30_000;
    c.preprocess.budget = 500;
    c.cluster.k = KChoice::Fixed(5);
    c.train.n1 = 1000;
    c.train.n2 = 100;
    c.transfer.budget = 1000;
    c.maml.meta_iters = 1100;
    c.out_dir = PathBuf::from("runs/burgers-paper");
    c
}

fn helmholtz_desk() -> ExperimentConfig {
    let mut c = helmholtz_paper();
    c.name = "helmholtz-desk".into();
    c.setup.domain_scale = 0.2;
    c.setup.m_interior = 900;
    c.setup.n_data = 120;
    c.setup.eval_resolution = 50;
    c.pretrain.epochs = 2000;
    c.cluster.k = KChoice::Auto(AutoK::Auto);
    c.ood.count = 3;
    c.seeds = vec![0, 1, 2];
    c.out_dir = PathBuf::from("runs/helmholtz-desk");
    c
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    match name {
        "helmholtz-paper" => Ok(helmholtz_paper()),
        "burgers-paper" => Ok(burgers_paper()),
        "helmholtz-desk" => Ok(helmholtz_desk()),
        other => bail!("unknown preset `{other}` (available: {})", PRESETS.join(", ")),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let probe: toml::Table = toml::from_str(text).context("config is not valid TOML")?;
        match probe.get("schema_version").and_then(|v| v.as_integer()) {
            Some(v) if v == SCHEMA_VERSION as i64 => {}
            Some(v) => bail!("config schema version {v} is not supported (expected {SCHEMA_VERSION})"),
            None => bail!("config has no schema_version"),
        }
        let cfg: Self = toml::from_str(text).context("config does not match the schema")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        let json = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn family(&self) -> Family {
        self.setup.family
    }

    pub fn training_plan(&self, seed: u64) -> TrainingPlan {
        TrainingPlan {
            n1: self.train.n1,
            n2: self.train.n2,
            epochs: self.train.epochs,
            lambda_main: self.train.lambda_main,
            lambda_other: self.train.lambda_other,
            lr: self.train.lr,
            seed,
            phase1_scope: self.train.phase1_scope,
        }
    }

    pub fn plateau(&self) -> Option<PlateauConfig> {
        self.transfer.plateau.then(PlateauConfig::default)
    }

    /// Checks every field before any compute runs.
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.schema_version == SCHEMA_VERSION,
            "schema version {} is not supported",
            self.schema_version
        );
        let s = &self.setup;
        ensure!(s.domain_scale > 0.0 && s.domain_scale.is_finite(), "setup.domain_scale must be positive");
        ensure!(s.m_interior + s.n_data > 0, "setup needs collocation or data points");
        match s.family {
            Family::Helmholtz2d => ensure!(s.eval_resolution >= 2, "setup.eval_resolution must be at least 2"),
            Family::Burgers1d => {
                ensure!(s.eval_resolution >= 64, "Burgers reference needs eval_resolution >= 64");
                ensure!(s.eval_snapshots >= 1, "Burgers reference needs eval_snapshots >= 1");
            }
        }
        match &self.doe.scheme {
            LevelScheme::Factorial(c) => ensure!(c.iter().all(|&n| n >= 1), "every factor needs a level"),
            LevelScheme::Random { count } => ensure!(*count >= 2, "random design needs at least 2 tasks"),
        }
        if let Some(r) = &self.reference_task {
            ensure!(r.len() == 3, "reference_task needs 3 values");
            lampinn::tasks::TaskConfig::new(s.family, r.clone())?;
        }
        let a = &self.arch;
        ensure!(a.sizes.len() >= 3, "arch.sizes needs at least one hidden layer");
        ensure!(a.sizes[0] == 2 && *a.sizes.last().unwrap() == 1, "arch.sizes must map 2 inputs to 1 output");
        ensure!(a.sizes.iter().all(|&w| w > 0), "arch.sizes must be positive");
        ensure!(
            a.split_depth >= 1 && a.split_depth < a.sizes.len() - 1,
            "arch.split_depth must leave layers on both sides of the split"
        );
        ensure!(self.pretrain.lr > 0.0, "pretrain.lr must be positive");
        ensure!(self.preprocess.lr > 0.0, "preprocess.lr must be positive");
        let c = &self.cluster;
        match c.k {
            KChoice::Fixed(k) => ensure!(k >= 1, "cluster.k must be at least 1"),
            KChoice::Auto(_) => {
                ensure!(c.k_min >= 2 && c.k_min <= c.k_max, "auto k needs 2 <= k_min <= k_max");
                ensure!(c.stability_seeds >= 2, "auto k needs at least 2 stability seeds");
            }
        }
        self.training_plan(0).validate()?;
        let t = &self.transfer;
        ensure!(t.lr > 0.0, "transfer.lr must be positive");
        ensure!((0.0..=1.0).contains(&t.lambda_init), "transfer.lambda_init must lie in [0, 1]");
        ensure!(
            self.unseen.count >= 2 && self.unseen.count % 2 == 0,
            "unseen.count must be even and at least 2 so the tasks split into two equal groups"
        );
        ensure!(
            self.ood.scales.iter().all(|&p| p > 100.0 && p.is_finite()),
            "ood.scales must exceed 100"
        );
        ensure!(self.ood.scales.is_empty() || self.ood.count >= 1, "ood.count must be at least 1");
        let mut seen = Vec::new();
        for b in &self.baselines {
            ensure!(!seen.contains(b), "baseline `{}` listed twice", b.label());
            seen.push(*b);
        }
        if self.baselines.contains(&BaselineKind::MamlFirstOrder) {
            ensure!(self.maml.inner_steps >= 1, "maml.inner_steps must be at least 1");
        }
        ensure!(self.stats.bootstrap_resamples >= 1, "stats.bootstrap_resamples must be at least 1");
        ensure!(!self.seeds.is_empty(), "seeds must not be empty");
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        ensure!(sorted.len() == self.seeds.len(), "seeds must be distinct");
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for name in PRESETS {
            let c = preset(name).unwrap();
            c.validate().unwrap();
            let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.hash(), c.hash());
        }
        assert!(preset("nope").is_err());
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = preset("helmholtz-desk").unwrap();
        let mut b = a.clone();
        b.out_dir = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.transfer.budget += 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn bad_configs_rejected() {
        let text = preset("helmholtz-desk").unwrap().to_toml().unwrap();
        let bumped = text.replace("schema_version = 1", "schema_version = 2");
        assert!(ExperimentConfig::from_toml(&bumped).is_err());
        let mut c = preset("helmholtz-desk").unwrap();
        c.cluster.stability_seeds = 1;
        assert!(c.validate().is_err());
        let mut c = preset("helmholtz-desk").unwrap();
        c.arch.split_depth = 5;
        assert!(c.validate().is_err());
        let mut c = preset("helmholtz-desk").unwrap();
        c.seeds = vec![1, 1];
        assert!(c.validate().is_err());
        let mut c = preset("helmholtz-desk").unwrap();
        c.unseen.count = 5;
        assert!(c.validate().is_err());
    }
}
