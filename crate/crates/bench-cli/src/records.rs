//! Serializable results produced by the pipeline stages.

use lampinn::lam::{PhaseLog, TransferSession};
use lampinn::train::FitReport;
use serde::{Deserialize, Serialize};

use crate::store::fnum;

pub const LAM_METHOD: &str = "lam_pinn";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    #[serde(with = "fnum")]
    pub loss: f64,
    #[serde(with = "fnum::opt")]
    pub mse: Option<f64>,
    /// Routing weights after this epoch; empty for plain networks.
    #[serde(with = "fnum::vec", default)]
    pub lambdas: Vec<f64>,
}

/// One method adapted to one task under one run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: String,
    pub task_id: String,
    pub seed: u64,
    pub curve: Vec<CurvePoint>,
    #[serde(with = "fnum")]
    pub final_mse: f64,
    pub diverged: bool,
    /// Relative change of the mean absolute weight of each layer.
    #[serde(with = "fnum::vec", default)]
    pub layer_change: Vec<f64>,
}

impl RunRecord {
    /// The final point always carries the final MSE so that exports can be
    /// aggregated from the curve alone.
    fn finish(mut self, fallback_mse: impl FnOnce() -> f64) -> Self {
        let recorded = self.curve.last().and_then(|p| p.mse);
        self.final_mse = match recorded {
            Some(m) => m,
            None => {
                let m = fallback_mse();
                if let Some(last) = self.curve.last_mut() {
                    last.mse = Some(m);
                }
                m
            }
        };
        self
    }

    pub fn from_fit(
        method: &str,
        task_id: &str,
        seed: u64,
        report: &FitReport,
        fallback_mse: impl FnOnce() -> f64,
    ) -> Self {
        Self {
            method: method.to_string(),
            task_id: task_id.to_string(),
            seed,
            curve: report
                .trajectory
                .iter()
                .map(|e| CurvePoint {
                    epoch: e.epoch,
                    loss: e.loss,
                    mse: e.mse,
                    lambdas: Vec::new(),
                })
                .collect(),
            final_mse: f64::NAN,
            diverged: report.diverged,
            layer_change: Vec::new(),
        }
        .finish(fallback_mse)
    }

    pub fn from_session(task_id: &str, seed: u64, s: &TransferSession, fallback_mse: impl FnOnce() -> f64) -> Self {
        Self {
            method: LAM_METHOD.to_string(),
            task_id: task_id.to_string(),
            seed,
            curve: s
                .trajectory
                .iter()
                .map(|r| CurvePoint {
                    epoch: r.epoch,
                    loss: r.loss,
                    mse: r.mse,
                    lambdas: r.lambdas.clone(),
                })
                .collect(),
            final_mse: f64::NAN,
            diverged: s.diverged,
            layer_change: Vec::new(),
        }
        .finish(fallback_mse)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    #[serde(with = "fnum")]
    pub l1: f64,
    #[serde(with = "fnum")]
    pub l2: f64,
    #[serde(with = "fnum")]
    pub l3: f64,
    pub diverged: bool,
}

impl From<lampinn::affinity::LossMetrics> for MetricsRow {
    fn from(m: lampinn::affinity::LossMetrics) -> Self {
        Self {
            l1: m.l1,
            l2: m.l2,
            l3: m.l3,
            diverged: m.diverged,
        }
    }
}

impl From<MetricsRow> for lampinn::affinity::LossMetrics {
    fn from(m: MetricsRow) -> Self {
        Self {
            l1: m.l1,
            l2: m.l2,
            l3: m.l3,
            diverged: m.diverged,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsArtifact {
    pub training: Vec<MetricsRow>,
    pub unseen: Vec<MetricsRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilitySummary {
    pub k: usize,
    pub silhouette_mean: f64,
    pub silhouette_sd: f64,
    pub ari_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterArtifact {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub objective: f64,
    /// Normalized embedding of each training task.
    pub embedding: Vec<Vec<f64>>,
    pub stability: Vec<StabilitySummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    pub phase: u8,
    pub epoch: usize,
    pub cluster: Option<usize>,
    pub task: usize,
    #[serde(with = "fnum")]
    pub loss_start: f64,
    #[serde(with = "fnum")]
    pub loss_end: f64,
    pub diverged: bool,
}

impl From<&PhaseLog> for PhaseRow {
    fn from(l: &PhaseLog) -> Self {
        Self {
            phase: l.phase,
            epoch: l.epoch,
            cluster: (l.cluster != usize::MAX).then_some(l.cluster),
            task: l.task,
            loss_start: l.loss_start,
            loss_end: l.loss_end,
            diverged: l.diverged,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodRecord {
    pub scale: f64,
    pub method: String,
    pub task_id: String,
    #[serde(with = "fnum")]
    pub final_mse: f64,
}

/// Transfer from a network pre-trained on one cluster's representative task
/// to a task of some cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinityRecord {
    pub source_cluster: usize,
    pub target_cluster: usize,
    pub task_id: String,
    pub within: bool,
    #[serde(with = "fnum")]
    pub final_mse: f64,
}
