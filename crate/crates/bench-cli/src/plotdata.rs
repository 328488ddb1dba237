//! Tab-separated plot data: seed means with standard deviations.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Result};
use lampinn::baselines::BaselineKind;
use lampinn::stats::mean_sd;

use crate::pipeline::Pipeline;
use crate::records::{OodRecord, RunRecord, LAM_METHOD};
use crate::store::{read_json, write_atomic};

pub const KINDS: [&str; 4] = ["convergence", "lambda_trajectory", "layer_magnitudes", "ood_sweep"];

/// Writes the files of one plot kind and returns their paths.
pub fn emit(p: &Pipeline, kind: &str) -> Result<Vec<PathBuf>> {
    let files = match kind {
        "convergence" => {
            let mut files = Vec::new();
            for m in p.methods() {
                let per_seed = p.cfg.seeds.iter().map(|&s| p.runs(s, &m)).collect::<Result<Vec<_>>>()?;
                files.push((format!("convergence_{m}.tsv"), convergence(&per_seed)));
            }
            files
        }
        "lambda_trajectory" => {
            let first = p.unseen_tasks()?.into_iter().next().map(|t| t.id);
            let mut runs = Vec::new();
            for &s in &p.cfg.seeds {
                runs.extend(p.runs(s, LAM_METHOD)?.into_iter().filter(|r| Some(&r.task_id) == first.as_ref()));
            }
            let (mean, sd) = lambda_trajectory(&runs);
            vec![
                ("lambda_trajectory.tsv".to_string(), mean),
                ("lambda_trajectory_sd.tsv".to_string(), sd),
            ]
        }
        "layer_magnitudes" => {
            let method = BaselineKind::Transfer.label();
            let per_seed = if p.cfg.baselines.contains(&BaselineKind::Transfer) {
                p.cfg.seeds.iter().map(|&s| p.runs(s, method)).collect::<Result<Vec<_>>>()?
            } else {
                Vec::new()
            };
            vec![("layer_magnitudes.tsv".to_string(), layer_magnitudes(&per_seed))]
        }
        "ood_sweep" => {
            let per_seed = p
                .cfg
                .seeds
                .iter()
                .map(|&s| read_json::<Vec<OodRecord>>(&p.layout.seed_file(s, "ood.json")))
                .collect::<Result<Vec<_>>>()?;
            vec![("ood_sweep.tsv".to_string(), ood_sweep(&per_seed))]
        }
        other => bail!("unknown plot kind {other:?}; expected one of {}", KINDS.join(", ")),
    };
    let dir = p.plots_dir();
    let mut out = Vec::new();
    for (name, text) in files {
        let path = dir.join(name);
        write_atomic(&path, text.as_bytes())?;
        out.push(path);
    }
    Ok(out)
}

fn mean_of(v: &[f64]) -> f64 {
    mean_sd(v).0
}

/// Task-averaged MSE per seed at each epoch where every task recorded one,
/// then mean and SD over seeds.
pub fn convergence(per_seed: &[Vec<RunRecord>]) -> String {
    let mut by_epoch: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for runs in per_seed {
        let mut acc: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for r in runs {
            for c in &r.curve {
                if let Some(m) = c.mse {
                    acc.entry(c.epoch).or_default().push(m);
                }
            }
        }
        for (epoch, v) in acc {
            if v.len() == runs.len() {
                by_epoch.entry(epoch).or_default().push(mean_of(&v));
            }
        }
    }
    let mut out = String::from("epoch\tmean_mse\tsd_mse\n");
    for (epoch, v) in by_epoch {
        if v.len() == per_seed.len() {
            let (m, sd) = mean_sd(&v);
            writeln!(out, "{epoch}\t{m:e}\t{sd:e}").unwrap();
        }
    }
    out
}

/// Routing-weight trajectories averaged over runs that share the most common
/// cluster count (smallest on ties).
pub fn lambda_trajectory(runs: &[RunRecord]) -> (String, String) {
    let mut by_k: BTreeMap<usize, Vec<&RunRecord>> = BTreeMap::new();
    for r in runs {
        if let Some(c) = r.curve.first() {
            by_k.entry(c.lambdas.len()).or_default().push(r);
        }
    }
    let best = by_k
        .iter()
        .filter(|(k, _)| **k > 0)
        .max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(a.0)));
    let (k, group) = match best {
        Some((k, g)) => (*k, g.clone()),
        None => (0, Vec::new()),
    };
    let header: String = std::iter::once("epoch".to_string())
        .chain((1..=k).map(|j| format!("lambda_{j}")))
        .collect::<Vec<_>>()
        .join("\t")
        + "\n";
    let (mut mean, mut sd) = (header.clone(), header);
    let mut by_epoch: BTreeMap<usize, Vec<&[f64]>> = BTreeMap::new();
    for r in &group {
        for c in &r.curve {
            by_epoch.entry(c.epoch).or_default().push(&c.lambdas);
        }
    }
    for (epoch, rows) in by_epoch {
        if rows.len() != group.len() {
            continue;
        }
        write!(mean, "{epoch}").unwrap();
        write!(sd, "{epoch}").unwrap();
        for j in 0..k {
            let v: Vec<f64> = rows.iter().map(|l| l[j]).collect();
            let (m, s) = mean_sd(&v);
            write!(mean, "\t{m:e}").unwrap();
            write!(sd, "\t{s:e}").unwrap();
        }
        mean.push('\n');
        sd.push('\n');
    }
    (mean, sd)
}

/// Relative weight change per layer after transfer: task mean per seed, then
/// mean and SD over seeds.
pub fn layer_magnitudes(per_seed: &[Vec<RunRecord>]) -> String {
    let mut seed_means: Vec<Vec<f64>> = Vec::new();
    for runs in per_seed {
        let layers = runs.first().map_or(0, |r| r.layer_change.len());
        if layers == 0 {
            continue;
        }
        seed_means.push(
            (0..layers)
                .map(|l| mean_of(&runs.iter().map(|r| r.layer_change[l]).collect::<Vec<_>>()))
                .collect(),
        );
    }
    let mut out = String::from("layer\tmean_change\tsd_change\n");
    let layers = seed_means.iter().map(Vec::len).min().unwrap_or(0);
    for l in 0..layers {
        let (m, sd) = mean_sd(&seed_means.iter().map(|s| s[l]).collect::<Vec<_>>());
        writeln!(out, "{}\t{m:e}\t{sd:e}", l + 1).unwrap();
    }
    out
}

/// Final MSE per range extension and method.
pub fn ood_sweep(per_seed: &[Vec<OodRecord>]) -> String {
    let mut cells: BTreeMap<(u64, String), Vec<f64>> = BTreeMap::new();
    for recs in per_seed {
        let mut acc: BTreeMap<(u64, String), Vec<f64>> = BTreeMap::new();
        for r in recs {
            acc.entry((r.scale.to_bits(), r.method.clone())).or_default().push(r.final_mse);
        }
        for (key, v) in acc {
            cells.entry(key).or_default().push(mean_of(&v));
        }
    }
    let mut rows: Vec<(f64, String, Vec<f64>)> =
        cells.into_iter().map(|((s, m), v)| (f64::from_bits(s), m, v)).collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    let mut out = String::from("scale\tmethod\tmean_mse\tsd_mse\n");
    for (scale, method, v) in rows {
        let (m, sd) = mean_sd(&v);
        writeln!(out, "{scale}\t{method}\t{m:e}\t{sd:e}").unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::CurvePoint;

    fn run(seed: u64, mses: &[f64], lambdas: &[f64]) -> RunRecord {
        RunRecord {
            method: LAM_METHOD.into(),
            task_id: "t".into(),
            seed,
            curve: mses
                .iter()
                .enumerate()
                .map(|(e, &m)| CurvePoint {
                    epoch: e * 10,
                    loss: m,
                    mse: Some(m),
                    lambdas: lambdas.to_vec(),
                })
                .collect(),
            final_mse: *mses.last().unwrap(),
            diverged: false,
            layer_change: vec![0.1, 0.2],
        }
    }

    fn column(text: &str, col: usize) -> Vec<f64> {
        text.lines().skip(1).map(|l| l.split('\t').nth(col).unwrap().parse().unwrap()).collect()
    }

    #[test]
    fn single_seed_has_zero_sd() {
        let t = convergence(&[vec![run(0, &[1.0, 0.5], &[])]]);
        assert!(t.starts_with("epoch\tmean_mse\tsd_mse\n"));
        assert_eq!(column(&t, 2), vec![0.0, 0.0]);
        assert_eq!(column(&t, 0), vec![0.0, 10.0]);
    }

    #[test]
    fn convergence_averages_seeds() {
        let t = convergence(&[vec![run(0, &[1.0, 0.5], &[])], vec![run(1, &[3.0, 1.5], &[])]]);
        assert_eq!(column(&t, 1), vec![2.0, 1.0]);
    }

    #[test]
    fn lambda_columns_follow_cluster_count() {
        let (m, sd) = lambda_trajectory(&[run(0, &[1.0], &[0.5, 0.25, 1.0]), run(1, &[1.0], &[0.5, 0.75, 0.0])]);
        assert!(m.starts_with("epoch\tlambda_1\tlambda_2\tlambda_3\n"));
        assert_eq!(column(&m, 2), vec![0.5]);
        assert_eq!(column(&sd, 1), vec![0.0]);
    }

    #[test]
    fn ood_sweep_rows_sorted_by_scale() {
        let rec = |scale: f64, mse: f64| OodRecord {
            scale,
            method: "pinn_scratch".into(),
            task_id: "t".into(),
            final_mse: mse,
        };
        let t = ood_sweep(&[vec![rec(130.0, 4.0), rec(110.0, 1.0), rec(110.0, 3.0)]]);
        assert_eq!(column(&t, 0), vec![110.0, 130.0]);
        assert_eq!(column(&t, 2), vec![2.0, 4.0]);
    }

    #[test]
    fn layer_magnitudes_one_row_per_layer() {
        let t = layer_magnitudes(&[vec![run(0, &[1.0], &[])]]);
        assert_eq!(column(&t, 1), vec![0.1, 0.2]);
    }
}
