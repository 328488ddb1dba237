mod common;

use std::collections::BTreeMap;

use lampinn_bench::export::Summary;
use lampinn_bench::store::{read_json, Manifest};
use lampinn_bench::{plotdata, Pipeline, Stage};

#[derive(Debug, serde::Deserialize)]
struct Row {
    method: String,
    task_id: String,
    group: String,
    seed: u64,
    epoch: usize,
    #[allow(dead_code)]
    loss: f64,
    mse: Option<f64>,
}

fn rows(path: &std::path::Path) -> Vec<Row> {
    csv::Reader::from_path(path).unwrap().deserialize().map(|r| r.unwrap()).collect()
}

fn full_run(dir: &std::path::Path) -> Pipeline {
    let mut p = Pipeline::open(common::tiny(dir)).unwrap();
    p.run_through(Stage::Plotdata).unwrap();
    p
}

#[test]
fn csv_aggregates_match_summary() {
    let dir = tempfile::tempdir().unwrap();
    let p = full_run(dir.path());
    let rows = rows(&p.layout.file("results.csv"));
    assert!(rows.iter().all(|r| r.group == "A" || r.group == "B"));
    // last row of each run carries its final MSE
    let mut last: BTreeMap<(String, String, u64), (usize, f64, String)> = BTreeMap::new();
    for r in &rows {
        let key = (r.method.clone(), r.task_id.clone(), r.seed);
        if last.get(&key).is_none_or(|v| r.epoch >= v.0) {
            last.insert(key, (r.epoch, r.mse.unwrap_or(f64::NAN), r.group.clone()));
        }
    }
    let summary: Summary = read_json(&p.layout.file("summary.json")).unwrap();
    assert_eq!(summary.methods.len(), 4);
    for (method, s) in &summary.methods {
        for (group, stats) in [(None, &s.all), (Some("A"), &s.group_a), (Some("B"), &s.group_b)] {
            let v: Vec<f64> = last
                .iter()
                .filter(|((m, _, _), (_, _, g))| m == method && group.is_none_or(|want| g == want))
                .map(|(_, (_, mse, _))| *mse)
                .collect();
            let (mean, sd) = lampinn::stats::mean_sd(&v);
            assert_eq!(v.len(), stats.n);
            assert!((mean - stats.mean).abs() <= 1e-12 * mean.abs().max(1.0), "{method} {group:?}");
            assert!((sd - stats.sd).abs() <= 1e-12 * sd.abs().max(1.0), "{method} {group:?}");
        }
    }
    for kind in plotdata::KINDS {
        assert!(!plotdata::emit(&p, kind).unwrap().is_empty());
    }
    assert!(plotdata::emit(&p, "histogram").is_err());
}

#[test]
fn zero_budgets_complete_with_short_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = Pipeline::open(common::zero_budget(dir.path())).unwrap();
    p.run_through(Stage::Plotdata).unwrap();
    for m in p.methods() {
        for &s in &p.cfg.seeds {
            for r in p.runs(s, &m).unwrap() {
                assert!(r.curve.len() <= 1, "{m}: {} points", r.curve.len());
            }
        }
    }
}

#[test]
fn completed_stages_are_not_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = Pipeline::open(common::tiny(dir.path())).unwrap();
    p.run_through(Stage::Train).unwrap();
    let ckpt = p.layout.seed_file(0, "lam.ckpt");
    let before = std::fs::read(&ckpt).unwrap();
    // a marker in place of the checkpoint survives a resumed run
    std::fs::write(&ckpt, b"marker").unwrap();
    let mut again = Pipeline::open(common::tiny(dir.path())).unwrap();
    again.run_through(Stage::Train).unwrap();
    assert_eq!(std::fs::read(&ckpt).unwrap(), b"marker");
    std::fs::write(&ckpt, &before).unwrap();
    again.run_through(Stage::Transfer).unwrap();
    let m: Manifest = read_json(&p.layout.manifest()).unwrap();
    assert!(m.completed.contains(&"transfer/seed-1".to_string()));
    assert!(m.failed_stage.is_none());
}

#[test]
fn failures_are_tagged_in_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = Pipeline::open(common::tiny(dir.path())).unwrap();
    p.run_through(Stage::Pretrain).unwrap();
    std::fs::write(p.layout.seed_file(0, "pretrained.ckpt"), b"LAMCKPT\0trunc").unwrap();
    let err = p.run_through(Stage::Preprocess).unwrap_err();
    assert!(format!("{err:#}").contains("preprocess/seed-0"));
    let m: Manifest = read_json(&p.layout.manifest()).unwrap();
    assert_eq!(m.failed_stage.as_deref(), Some("preprocess/seed-0"));
    assert!(m.failure.is_some());
}

#[test]
fn a_different_config_cannot_reuse_an_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = Pipeline::open(common::tiny(dir.path())).unwrap();
    p.run_through(Stage::Doe).unwrap();
    let mut other = common::tiny(dir.path());
    other.transfer.budget += 1;
    assert!(Pipeline::open(other).is_err());
    assert!(Pipeline::open(common::tiny(dir.path())).is_ok());
}

#[test]
fn sequential_and_parallel_runs_agree_bitwise() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut ca = common::tiny(a.path());
    ca.ood.scales.clear();
    ca.affinity_transfer.enabled = false;
    let mut cb = ca.clone();
    cb.out_dir = b.path().to_path_buf();
    cb.parallel = !ca.parallel;
    for c in [ca, cb] {
        Pipeline::open(c).unwrap().run_through(Stage::Stats).unwrap();
    }
    let read = |d: &std::path::Path| std::fs::read(d.join("results.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}
