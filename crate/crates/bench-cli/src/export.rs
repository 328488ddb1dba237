//! Result export: long-format CSV, per-group summaries and paired statistics.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use lampinn::affinity::{build_embedding, LossMetrics};
use lampinn::stats::{bootstrap_reduction_ci, group_split, mean_sd, median, wilcoxon_signed_rank, ReductionCi, WilcoxonResult};
use lampinn::tasks::derive_seed;
use serde::{Deserialize, Serialize};

use crate::config::AffinityScore;
use crate::pipeline::Pipeline;
use crate::records::{AffinityRecord, MetricsRow, OodRecord, RunRecord, LAM_METHOD};
use crate::store::{fnum, read_json, write_atomic, write_json};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    A,
    B,
}

impl Group {
    pub fn label(self) -> &'static str {
        match self {
            Group::A => "A",
            Group::B => "B",
        }
    }
}

/// Everything the exports are computed from.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub methods: Vec<String>,
    pub seeds: Vec<u64>,
    /// Unseen task ids in file order.
    pub tasks: Vec<String>,
    pub runs: Vec<RunRecord>,
    /// Group of each unseen task under each seed.
    pub groups: BTreeMap<(u64, String), Group>,
    pub ood: Vec<OodRecord>,
    pub affinity: Vec<AffinityRecord>,
}

/// Scalar per task used for the A/B split.
pub fn affinity_scores(
    score: AffinityScore,
    tasks: &[lampinn::tasks::TaskConfig],
    metrics: &[MetricsRow],
) -> Result<Vec<f64>> {
    if tasks.len() != metrics.len() {
        bail!("{} unseen tasks but {} metric rows", tasks.len(), metrics.len());
    }
    Ok(match score {
        AffinityScore::L1 => metrics.iter().map(|m| m.l1).collect(),
        AffinityScore::L2 => metrics.iter().map(|m| m.l2).collect(),
        AffinityScore::L3 => metrics.iter().map(|m| m.l3).collect(),
        AffinityScore::EmbeddingNorm => {
            let pairs: Vec<_> = tasks
                .iter()
                .cloned()
                .zip(metrics.iter().map(|&m| LossMetrics::from(m)))
                .collect();
            build_embedding(&pairs, lampinn::affinity::FeatureSet::Full)?
                .iter()
                .map(|e| e.normalized.iter().map(|v| v * v).sum::<f64>().sqrt())
                .collect()
        }
    })
}

pub fn collect(p: &Pipeline) -> Result<Bundle> {
    let unseen = p.unseen_tasks()?;
    let tasks: Vec<String> = unseen.iter().map(|t| t.id.clone()).collect();
    let methods = p.methods();
    let mut runs = Vec::new();
    let mut groups = BTreeMap::new();
    let mut ood = Vec::new();
    let mut affinity = Vec::new();
    for &seed in &p.cfg.seeds {
        let metrics = p.metrics(seed)?;
        let scores = affinity_scores(p.cfg.stats.affinity_score, &unseen, &metrics.unseen)?;
        let items: Vec<(String, f64)> = tasks.iter().cloned().zip(scores).collect();
        let (a, b) = group_split(&items)?;
        for i in a {
            groups.insert((seed, tasks[i].clone()), Group::A);
        }
        for i in b {
            groups.insert((seed, tasks[i].clone()), Group::B);
        }
        for m in &methods {
            runs.extend(p.runs(seed, m)?);
        }
        ood.extend(read_json::<Vec<OodRecord>>(&p.layout.seed_file(seed, "ood.json"))?);
        affinity.extend(read_json::<Vec<AffinityRecord>>(
            &p.layout.seed_file(seed, "affinity_transfer.json"),
        )?);
    }
    Ok(Bundle {
        methods,
        seeds: p.cfg.seeds.clone(),
        tasks,
        runs,
        groups,
        ood,
        affinity,
    })
}

pub const CSV_HEADER: [&str; 7] = ["method", "task_id", "group", "seed", "epoch", "loss", "mse"];

/// One row per recorded epoch; `mse` is empty where it was not evaluated.
pub fn write_results_csv(path: &Path, b: &Bundle) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in &b.runs {
        let group = b
            .groups
            .get(&(r.seed, r.task_id.clone()))
            .with_context(|| format!("task {} has no group", r.task_id))?;
        for c in &r.curve {
            w.write_record([
                r.method.as_str(),
                r.task_id.as_str(),
                group.label(),
                &r.seed.to_string(),
                &c.epoch.to_string(),
                &c.loss.to_string(),
                &c.mse.map(|m| m.to_string()).unwrap_or_default(),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("flushing CSV: {e}"))?;
    write_atomic(path, &bytes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    #[serde(with = "fnum")]
    pub mean: f64,
    #[serde(with = "fnum")]
    pub sd: f64,
    pub n: usize,
}

impl MeanSd {
    pub fn of(v: &[f64]) -> Self {
        let (mean, sd) = mean_sd(v);
        Self { mean, sd, n: v.len() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    #[serde(with = "fnum")]
    pub mean_all: f64,
    #[serde(with = "fnum")]
    pub mean_a: f64,
    #[serde(with = "fnum")]
    pub mean_b: f64,
    /// `|mean_a - mean_b|`.
    #[serde(with = "fnum")]
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    /// Final MSE over all tasks and seeds.
    pub all: MeanSd,
    pub group_a: MeanSd,
    pub group_b: MeanSd,
    pub per_seed: Vec<SeedSummary>,
    #[serde(with = "fnum")]
    pub median_mean_all: f64,
    #[serde(with = "fnum")]
    pub median_gap: f64,
    pub diverged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub methods: BTreeMap<String, MethodSummary>,
}

fn mean(v: &[f64]) -> f64 {
    mean_sd(v).0
}

pub fn summarize(b: &Bundle) -> Result<Summary> {
    let mut methods = BTreeMap::new();
    for m in &b.methods {
        let runs: Vec<&RunRecord> = b.runs.iter().filter(|r| &r.method == m).collect();
        if runs.is_empty() {
            bail!("no runs recorded for {m}");
        }
        let group_of = |r: &RunRecord| b.groups[&(r.seed, r.task_id.clone())];
        let pick = |seed: Option<u64>, g: Option<Group>| -> Vec<f64> {
            runs.iter()
                .filter(|r| seed.is_none_or(|s| r.seed == s))
                .filter(|r| g.is_none_or(|g| group_of(r) == g))
                .map(|r| r.final_mse)
                .collect()
        };
        let per_seed: Vec<SeedSummary> = b
            .seeds
            .iter()
            .map(|&s| {
                let (a, bb) = (mean(&pick(Some(s), Some(Group::A))), mean(&pick(Some(s), Some(Group::B))));
                SeedSummary {
                    seed: s,
                    mean_all: mean(&pick(Some(s), None)),
                    mean_a: a,
                    mean_b: bb,
                    gap: (a - bb).abs(),
                }
            })
            .collect();
        let summary = MethodSummary {
            all: MeanSd::of(&pick(None, None)),
            group_a: MeanSd::of(&pick(None, Some(Group::A))),
            group_b: MeanSd::of(&pick(None, Some(Group::B))),
            median_mean_all: median(&per_seed.iter().map(|s| s.mean_all).collect::<Vec<_>>()),
            median_gap: median(&per_seed.iter().map(|s| s.gap).collect::<Vec<_>>()),
            per_seed,
            diverged: runs.iter().filter(|r| r.diverged).count(),
        };
        methods.insert(m.clone(), summary);
    }
    Ok(Summary { methods })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline: String,
    pub n_tasks: usize,
    /// `None` when the test is undefined for these data.
    pub wilcoxon: Option<WilcoxonResult>,
    pub reduction: Option<ReductionCi>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodSummary {
    pub scale: f64,
    pub method: String,
    pub mse: MeanSd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinitySummary {
    pub within: MeanSd,
    pub cross: MeanSd,
    #[serde(with = "fnum")]
    pub median_within: f64,
    #[serde(with = "fnum")]
    pub median_cross: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub comparisons: Vec<Comparison>,
    pub ood: Vec<OodSummary>,
    pub affinity: Option<AffinitySummary>,
}

/// Final MSE of each unseen task averaged over seeds.
fn task_means(b: &Bundle, method: &str) -> Vec<f64> {
    b.tasks
        .iter()
        .map(|t| {
            let v: Vec<f64> = b
                .runs
                .iter()
                .filter(|r| r.method == method && &r.task_id == t)
                .map(|r| r.final_mse)
                .collect();
            mean(&v)
        })
        .collect()
}

pub fn compare(b: &Bundle, resamples: usize, seed: u64) -> StatsReport {
    let ours = task_means(b, LAM_METHOD);
    let comparisons = b
        .methods
        .iter()
        .filter(|m| m.as_str() != LAM_METHOD)
        .map(|m| {
            let base = task_means(b, m);
            let mut notes = Vec::new();
            let wilcoxon = wilcoxon_signed_rank(&ours, &base)
                .map_err(|e| notes.push(format!("wilcoxon: {e}")))
                .ok();
            let reduction = bootstrap_reduction_ci(&ours, &base, resamples, derive_seed(seed, &format!("bootstrap/{m}")))
                .map_err(|e| notes.push(format!("bootstrap: {e}")))
                .ok();
            Comparison {
                baseline: m.clone(),
                n_tasks: ours.len(),
                wilcoxon,
                reduction,
                note: (!notes.is_empty()).then(|| notes.join("; ")),
            }
        })
        .collect();
    let mut ood_groups: BTreeMap<(u64, String), Vec<f64>> = BTreeMap::new();
    for r in &b.ood {
        ood_groups.entry((r.scale.to_bits(), r.method.clone())).or_default().push(r.final_mse);
    }
    let ood = ood_groups
        .into_iter()
        .map(|((scale, method), v)| OodSummary {
            scale: f64::from_bits(scale),
            method,
            mse: MeanSd::of(&v),
        })
        .collect();
    let affinity = (!b.affinity.is_empty()).then(|| {
        let within: Vec<f64> = b.affinity.iter().filter(|r| r.within).map(|r| r.final_mse).collect();
        let cross: Vec<f64> = b.affinity.iter().filter(|r| !r.within).map(|r| r.final_mse).collect();
        AffinitySummary {
            median_within: median(&within),
            median_cross: median(&cross),
            within: MeanSd::of(&within),
            cross: MeanSd::of(&cross),
        }
    });
    StatsReport {
        comparisons,
        ood,
        affinity,
    }
}

pub fn write_all(p: &Pipeline, b: &Bundle) -> Result<()> {
    write_results_csv(&p.layout.file("results.csv"), b)?;
    write_json(&p.layout.file("summary.json"), &summarize(b)?)?;
    let s = &p.cfg.stats;
    write_json(&p.layout.file("stats.json"), &compare(b, s.bootstrap_resamples, s.seed))
}

/// Markdown table of the summary, one row per method.
pub fn render_report(summary: &Summary, stats: &StatsReport) -> String {
    let mut out = String::from("| method | mean MSE | SD | group A | group B | median gap |\n|---|---|---|---|---|---|\n");
    for (m, s) in &summary.methods {
        out.push_str(&format!(
            "| {m} | {:.3e} | {:.3e} | {:.3e} | {:.3e} | {:.3e} |\n",
            s.all.mean, s.all.sd, s.group_a.mean, s.group_b.mean, s.median_gap
        ));
    }
    if !stats.comparisons.is_empty() {
        out.push_str("\n| baseline | reduction % | 95% CI | Wilcoxon p |\n|---|---|---|---|\n");
        for c in &stats.comparisons {
            let red = c
                .reduction
                .map(|r| (format!("{:.1}", r.reduction), format!("[{:.1}, {:.1}]", r.ci_low, r.ci_high)))
                .unwrap_or(("n/a".into(), "n/a".into()));
            let p = c.wilcoxon.map(|w| format!("{:.4}", w.p_value)).unwrap_or("n/a".into());
            out.push_str(&format!("| {} | {} | {} | {} |\n", c.baseline, red.0, red.1, p));
        }
    }
    if let Some(a) = &stats.affinity {
        out.push_str(&format!(
            "\nwithin-cluster median MSE {:.3e} ({} runs), cross-cluster {:.3e} ({} runs)\n",
            a.median_within, a.within.n, a.median_cross, a.cross.n
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::CurvePoint;

    fn run(method: &str, task: &str, seed: u64, mse: f64) -> RunRecord {
        RunRecord {
            method: method.into(),
            task_id: task.into(),
            seed,
            curve: vec![CurvePoint {
                epoch: 0,
                loss: 1.0,
                mse: Some(mse),
                lambdas: vec![],
            }],
            final_mse: mse,
            diverged: false,
            layer_change: vec![],
        }
    }

    fn bundle() -> Bundle {
        let tasks: Vec<String> = ["t0", "t1", "t2", "t3"].map(String::from).to_vec();
        let mut runs = Vec::new();
        let mut groups = BTreeMap::new();
        for seed in [0, 1] {
            for (i, t) in tasks.iter().enumerate() {
                runs.push(run(LAM_METHOD, t, seed, 0.1 * (i + 1) as f64 + seed as f64 * 0.01));
                runs.push(run("pinn_scratch", t, seed, 0.5 * (i + 1) as f64));
                groups.insert((seed, t.clone()), if i < 2 { Group::A } else { Group::B });
            }
        }
        Bundle {
            methods: vec![LAM_METHOD.into(), "pinn_scratch".into()],
            seeds: vec![0, 1],
            tasks,
            runs,
            groups,
            ood: vec![],
            affinity: vec![],
        }
    }

    #[test]
    fn summary_groups_and_gaps() {
        let s = summarize(&bundle()).unwrap();
        let scratch = &s.methods["pinn_scratch"];
        assert_eq!(scratch.group_a.n, 4);
        assert!((scratch.group_a.mean - 0.75).abs() < 1e-15);
        assert!((scratch.group_b.mean - 1.75).abs() < 1e-15);
        assert!((scratch.median_gap - 1.0).abs() < 1e-15);
    }

    #[test]
    fn comparison_reports_undefined_tests_instead_of_failing() {
        let r = compare(&bundle(), 100, 1);
        assert_eq!(r.comparisons.len(), 1);
        let c = &r.comparisons[0];
        assert!(c.reduction.unwrap().reduction > 0.0);
        assert!(c.wilcoxon.is_none() && c.note.as_deref().unwrap().contains("wilcoxon"));
    }

    #[test]
    fn csv_has_fixed_header_and_empty_missing_mse() {
        let mut b = bundle();
        b.runs[0].curve.insert(
            0,
            CurvePoint {
                epoch: 0,
                loss: 2.0,
                mse: None,
                lambdas: vec![],
            },
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_results_csv(&path, &b).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "method,task_id,group,seed,epoch,loss,mse");
        assert!(lines.next().unwrap().ends_with(",2,"));
    }
}
