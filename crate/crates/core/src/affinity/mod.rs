//! Learning-affinity metrics, task embeddings and clustering.

mod kmeans;
mod metrics;
mod stability;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::net::DenseNet;
use crate::pde::PinnObjective;
use crate::tasks::TaskConfig;
use crate::train::{fit, FitOptions};
use crate::{Error, Result};

pub use kmeans::{kmeans, wcss, Clustering, KMeansOptions};
pub use metrics::{adjusted_rand_index, hungarian_assignment, hungarian_disagreement, silhouette};
pub use stability::{select_k, stability_report, StabilityRow, ARI_STABLE};

/// Loss statistics of one short transfer session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossMetrics {
    /// Loss before any update.
    pub l1: f64,
    /// Loss after the last update.
    pub l2: f64,
    /// Mean loss over all recorded epochs, epoch 0 included.
    pub l3: f64,
    pub diverged: bool,
}

impl LossMetrics {
    pub fn as_array(&self) -> [f64; 3] {
        [self.l1, self.l2, self.l3]
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }
}

/// Fine-tunes a copy of `pretrained` on `objective` for `budget_epochs` Adam
/// steps at a constant rate and summarizes the loss curve.
pub fn short_transfer_session(
    pretrained: &DenseNet,
    objective: &PinnObjective,
    budget_epochs: usize,
    lr: f64,
) -> Result<LossMetrics> {
    let mut net = pretrained.clone();
    let report = fit(&mut net, objective, &FitOptions::new(budget_epochs, lr), None, None)?;
    if report.trajectory.is_empty() {
        return Ok(LossMetrics {
            l1: f64::INFINITY,
            l2: f64::INFINITY,
            l3: f64::INFINITY,
            diverged: true,
        });
    }
    Ok(LossMetrics {
        l1: report.initial_loss(),
        l2: report.final_loss(),
        l3: report.mean_loss(),
        diverged: report.diverged,
    })
}

/// Seeded uniform stand-ins for the loss metrics (ablation without
/// learning-affinity information).
pub fn random_metrics(n: usize, seed: u64) -> Vec<LossMetrics> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| LossMetrics {
            l1: rng.gen_range(0.0..1.0),
            l2: rng.gen_range(0.0..1.0),
            l3: rng.gen_range(0.0..1.0),
            diverged: false,
        })
        .collect()
}

/// Which raw features enter the embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    /// Task parameters followed by the three loss metrics.
    #[default]
    Full,
    /// Task parameters only.
    ParamsOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEmbedding {
    pub task_id: String,
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
}

/// `sign(z) log(1 + |z|)`; equals `log1p` on nonnegative inputs.
pub fn signed_log1p(z: f64) -> f64 {
    z.signum() * z.abs().ln_1p()
}

/// log1p transform followed by feature-wise z-scoring with the population
/// standard deviation. Constant features map to 0.
pub fn build_embedding(tasks: &[(TaskConfig, LossMetrics)], features: FeatureSet) -> Result<Vec<TaskEmbedding>> {
    if tasks.len() < 2 {
        return Err(Error::Config(format!(
            "embedding needs at least 2 tasks, got {}",
            tasks.len()
        )));
    }
    let raw: Vec<Vec<f64>> = tasks
        .iter()
        .map(|(t, m)| {
            if !m.is_finite() {
                return Err(Error::NumericOverflow {
                    context: format!("loss metrics of task {}", t.id),
                });
            }
            let mut z = t.values.clone();
            if features == FeatureSet::Full {
                z.extend_from_slice(&m.as_array());
            }
            Ok(z)
        })
        .collect::<Result<_>>()?;
    let width = raw[0].len();
    if raw.iter().any(|z| z.len() != width) {
        return Err(Error::Contract("tasks have differing parameter counts".into()));
    }
    let logged: Vec<Vec<f64>> = raw.iter().map(|z| z.iter().map(|&v| signed_log1p(v)).collect()).collect();
    let n = tasks.len() as f64;
    let mut normalized = vec![vec![0.0; width]; tasks.len()];
    for f in 0..width {
        let col: Vec<f64> = logged.iter().map(|z| z[f]).collect();
        if col.iter().all(|&v| v == col[0]) {
            continue;
        }
        let mean = col.iter().sum::<f64>() / n;
        let centered: Vec<f64> = col.iter().map(|v| v - mean).collect();
        let sd = (centered.iter().map(|d| d * d).sum::<f64>() / n).sqrt();
        for (row, c) in normalized.iter_mut().zip(&centered) {
            row[f] = c / sd;
        }
    }
    Ok(tasks
        .iter()
        .zip(raw)
        .zip(normalized)
        .map(|(((t, _), raw), normalized)| TaskEmbedding {
            task_id: t.id.clone(),
            raw,
            normalized,
        })
        .collect())
}

/// Normalized vectors of a set of embeddings.
pub fn feature_matrix(embeddings: &[TaskEmbedding]) -> Vec<Vec<f64>> {
    embeddings.iter().map(|e| e.normalized.clone()).collect()
}
