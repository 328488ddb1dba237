//! Resumable experiment pipeline: DoE, pre-training, affinity preprocessing,
//! clustering, modular training, transfer, baselines and evaluation.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use lampinn::affinity::{
    build_embedding, feature_matrix, kmeans, random_metrics, select_k, short_transfer_session, stability_report,
    Clustering, KMeansOptions, LossMetrics,
};
use lampinn::baselines::{maml_adapt, maml_train, train_scratch, train_transfer, BaselineKind, MamlOptions};
use lampinn::checkpoint::{Checkpoint, Model};
use lampinn::exec::map_ordered;
use lampinn::lam::{split_pretrained, transfer_adapt, LamTrainer, ModularNet, TransferOptions};
use lampinn::net::{DenseNet, PlateauConfig};
use lampinn::pde::{mse_on_grid, PinnObjective, ReferenceField};
use lampinn::tasks::{derive_seed, ood_extend, read_tasks, sample_unseen, training_design, write_tasks, TaskConfig};
use lampinn::train::FitOptions;
use lampinn::Parallelism;

use crate::config::{ExperimentConfig, KChoice};
use crate::records::{
    AffinityRecord, ClusterArtifact, MetricsArtifact, MetricsRow, OodRecord, PhaseRow, RunRecord,
    StabilitySummary, LAM_METHOD,
};
use crate::store::{read_json, write_atomic, write_json, Layout, Manifest};
use crate::{export, plotdata};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Doe,
    Pretrain,
    Preprocess,
    Cluster,
    Train,
    Transfer,
    Baseline,
    Ood,
    Affinity,
    Stats,
    Plotdata,
}

impl Stage {
    pub const ALL: [Stage; 11] = [
        Stage::Doe,
        Stage::Pretrain,
        Stage::Preprocess,
        Stage::Cluster,
        Stage::Train,
        Stage::Transfer,
        Stage::Baseline,
        Stage::Ood,
        Stage::Affinity,
        Stage::Stats,
        Stage::Plotdata,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Doe => "doe",
            Stage::Pretrain => "pretrain",
            Stage::Preprocess => "preprocess",
            Stage::Cluster => "cluster",
            Stage::Train => "train",
            Stage::Transfer => "transfer",
            Stage::Baseline => "baseline",
            Stage::Ood => "ood",
            Stage::Affinity => "affinity",
            Stage::Stats => "stats",
            Stage::Plotdata => "plotdata",
        }
    }

    fn per_seed(self) -> bool {
        !matches!(self, Stage::Doe | Stage::Stats | Stage::Plotdata)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Out-of-distribution tasks at one range extension.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OodSet {
    pub scale: f64,
    pub tasks: Vec<TaskConfig>,
}

pub struct Pipeline {
    pub cfg: ExperimentConfig,
    pub layout: Layout,
    manifest: Manifest,
    mode: Parallelism,
    timing: BTreeMap<String, f64>,
}

fn stage_key(stage: Stage, seed: Option<u64>) -> String {
    match seed {
        Some(s) => format!("{stage}/seed-{s}"),
        None => stage.to_string(),
    }
}

fn method_file(method: &str) -> String {
    format!("runs_{method}.json")
}

impl Pipeline {
    /// Validates the config and opens (or creates) its output directory.
    pub fn open(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let layout = Layout::new(cfg.out_dir.clone());
        std::fs::create_dir_all(&layout.root).with_context(|| format!("creating {}", layout.root.display()))?;
        let hash = cfg.hash();
        let manifest = layout.open_manifest(&hash, &cfg.name, &cfg.seeds)?;
        if !layout.config().exists() {
            write_atomic(&layout.config(), cfg.to_toml()?.as_bytes())?;
        }
        let timing_path = layout.file("timing.json");
        let timing = if timing_path.exists() {
            read_json(&timing_path)?
        } else {
            BTreeMap::new()
        };
        let mode = if cfg.parallel {
            Parallelism::Rayon
        } else {
            Parallelism::Sequential
        };
        Ok(Self {
            cfg,
            layout,
            manifest,
            mode,
            timing,
        })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    /// Runs every stage up to and including `last`, skipping completed ones.
    /// A failure is recorded in the manifest before it is returned.
    pub fn run_through(&mut self, last: Stage) -> Result<()> {
        self.manifest.failed_stage = None;
        self.manifest.failure = None;
        for stage in Stage::ALL.into_iter().filter(|s| *s <= last) {
            let seeds: Vec<Option<u64>> = if stage.per_seed() {
                self.cfg.seeds.iter().map(|&s| Some(s)).collect()
            } else {
                vec![None]
            };
            for seed in seeds {
                let key = stage_key(stage, seed);
                if self.manifest.completed.contains(&key) {
                    continue;
                }
                let t0 = Instant::now();
                if let Err(e) = self.run_stage(stage, seed) {
                    self.manifest.failed_stage = Some(key.clone());
                    self.manifest.failure = Some(format!("{e:#}"));
                    write_json(&self.layout.manifest(), &self.manifest)?;
                    return Err(e.context(format!("stage {key} failed")));
                }
                self.timing.insert(key.clone(), t0.elapsed().as_secs_f64());
                self.manifest.completed.push(key);
                write_json(&self.layout.file("timing.json"), &self.timing)?;
                write_json(&self.layout.manifest(), &self.manifest)?;
            }
        }
        Ok(())
    }

    fn run_stage(&self, stage: Stage, seed: Option<u64>) -> Result<()> {
        let s = || seed.expect("per-seed stage");
        match stage {
            Stage::Doe => self.doe(),
            Stage::Pretrain => self.pretrain(s()),
            Stage::Preprocess => self.preprocess(s()),
            Stage::Cluster => self.cluster(s()),
            Stage::Train => self.train(s()),
            Stage::Transfer => self.transfer(s()),
            Stage::Baseline => self.baselines(s()),
            Stage::Ood => self.ood(s()),
            Stage::Affinity => self.affinity(s()),
            Stage::Stats => self.stats(),
            Stage::Plotdata => self.plotdata(),
        }
    }

    // ---- shared helpers

    fn inner_mode(&self) -> Parallelism {
        self.mode
    }

    fn objective(&self, task: &TaskConfig, seed: u64) -> Result<PinnObjective> {
        let colloc_seed = derive_seed(seed, &format!("colloc/{}", task.id));
        Ok(self.cfg.setup.objective(task, colloc_seed)?.with_parallelism(self.inner_mode()))
    }

    fn reference(&self, task: &TaskConfig) -> Result<ReferenceField> {
        Ok(self.cfg.setup.reference(task)?)
    }

    fn fan_out<T: Sync, R: Send>(&self, items: &[T], f: impl Fn(&T) -> Result<R> + Sync + Send) -> Result<Vec<R>> {
        map_ordered(items, self.mode, f).into_iter().collect()
    }

    fn fit_options(&self, mse_every: usize) -> FitOptions {
        let mut o = FitOptions::new(self.cfg.transfer.budget, self.cfg.transfer.lr).with_mse_every(mse_every);
        o.plateau = self.cfg.plateau();
        o
    }

    fn transfer_options(&self, mse_every: usize) -> TransferOptions {
        let t = &self.cfg.transfer;
        let mut o = TransferOptions::new(t.budget, t.lr);
        o.lambda_init = t.lambda_init;
        o.lambda_mode = t.lambda_mode;
        o.plateau = self.cfg.plateau();
        o.mse_every = mse_every;
        o
    }

    fn read_task_file(&self, name: &str) -> Result<Vec<TaskConfig>> {
        let path = self.layout.file(name);
        let f = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
        Ok(read_tasks(BufReader::new(f))?)
    }

    pub fn training_tasks(&self) -> Result<Vec<TaskConfig>> {
        self.read_task_file("tasks.jsonl")
    }

    pub fn unseen_tasks(&self) -> Result<Vec<TaskConfig>> {
        self.read_task_file("unseen.jsonl")
    }

    pub fn ood_sets(&self) -> Result<Vec<OodSet>> {
        read_json(&self.layout.file("ood_tasks.json"))
    }

    fn reference_task(&self) -> Result<TaskConfig> {
        let fam = self.cfg.family();
        Ok(match &self.cfg.reference_task {
            Some(v) => TaskConfig::new(fam, v.clone())?,
            None => TaskConfig::reference(fam),
        })
    }

    fn save_model(&self, seed: u64, name: &str, model: Model, assignments: Vec<usize>) -> Result<()> {
        let ck = Checkpoint {
            family: self.cfg.family(),
            model,
            seeds: vec![seed],
            assignments,
        };
        write_atomic(&self.layout.seed_file(seed, name), &ck.to_bytes())
    }

    fn load_plain(&self, seed: u64, name: &str) -> Result<DenseNet> {
        match Checkpoint::load(&self.layout.seed_file(seed, name))?.model {
            Model::Plain(n) => Ok(n),
            Model::Modular(_) => bail!("{name} holds a modular network"),
        }
    }

    fn load_modular(&self, seed: u64) -> Result<ModularNet> {
        match Checkpoint::load(&self.layout.seed_file(seed, "lam.ckpt"))?.model {
            Model::Modular(m) => Ok(m),
            Model::Plain(_) => bail!("lam.ckpt holds a plain network"),
        }
    }

    pub fn runs(&self, seed: u64, method: &str) -> Result<Vec<RunRecord>> {
        read_json(&self.layout.seed_file(seed, &method_file(method)))
    }

    pub fn metrics(&self, seed: u64) -> Result<MetricsArtifact> {
        read_json(&self.layout.seed_file(seed, "metrics.json"))
    }

    pub fn clusters(&self, seed: u64) -> Result<ClusterArtifact> {
        read_json(&self.layout.seed_file(seed, "clusters.json"))
    }

    /// Methods compared in this experiment, LAM first.
    pub fn methods(&self) -> Vec<String> {
        std::iter::once(LAM_METHOD.to_string())
            .chain(self.cfg.baselines.iter().map(|b| b.label().to_string()))
            .collect()
    }

    // ---- stages

    fn doe(&self) -> Result<()> {
        let fam = self.cfg.family();
        let train = training_design(fam, &self.cfg.doe.scheme, self.cfg.doe.seed)?;
        let box_factors = fam.factors([2, 2, 2])?;
        let unseen = sample_unseen(fam, &box_factors, self.cfg.unseen.count, self.cfg.unseen.seed, &train)?;
        let mut ood = Vec::new();
        for &scale in &self.cfg.ood.scales {
            ood.push(OodSet {
                scale,
                tasks: sample_ood(&self.cfg, scale)?,
            });
        }
        let mut buf = Vec::new();
        write_tasks(&mut buf, &train)?;
        write_atomic(&self.layout.file("tasks.jsonl"), &buf)?;
        buf.clear();
        write_tasks(&mut buf, &unseen)?;
        write_atomic(&self.layout.file("unseen.jsonl"), &buf)?;
        write_json(&self.layout.file("ood_tasks.json"), &ood)
    }

    fn pretrain(&self, seed: u64) -> Result<()> {
        let task = self.reference_task()?;
        let obj = self.objective(&task, seed)?;
        let a = &self.cfg.arch;
        let opts = FitOptions::new(self.cfg.pretrain.epochs, self.cfg.pretrain.lr).with_plateau(PlateauConfig::default());
        let (net, report) = train_scratch(&a.sizes, a.activation, &obj, &opts, derive_seed(seed, "pretrain"), None)?;
        if report.diverged {
            bail!("pre-training on the reference task diverged");
        }
        self.save_model(seed, "pretrained.ckpt", Model::Plain(net), Vec::new())
    }

    fn session_metrics(&self, pre: &DenseNet, tasks: &[TaskConfig], seed: u64) -> Result<Vec<MetricsRow>> {
        let p = &self.cfg.preprocess;
        self.fan_out(tasks, |t| {
            let obj = self.objective(t, seed)?;
            Ok(short_transfer_session(pre, &obj, p.budget, p.lr)?.into())
        })
    }

    fn preprocess(&self, seed: u64) -> Result<()> {
        let pre = self.load_plain(seed, "pretrained.ckpt")?;
        let art = MetricsArtifact {
            training: self.session_metrics(&pre, &self.training_tasks()?, seed)?,
            unseen: self.session_metrics(&pre, &self.unseen_tasks()?, seed)?,
        };
        write_json(&self.layout.seed_file(seed, "metrics.json"), &art)
    }

    fn cluster(&self, seed: u64) -> Result<()> {
        let tasks = self.training_tasks()?;
        let metrics: Vec<LossMetrics> = if self.cfg.preprocess.random_metrics {
            random_metrics(tasks.len(), derive_seed(seed, "random_metrics"))
        } else {
            self.metrics(seed)?.training.into_iter().map(Into::into).collect()
        };
        let pairs: Vec<(TaskConfig, LossMetrics)> = tasks.iter().cloned().zip(metrics).collect();
        let emb = build_embedding(&pairs, self.cfg.preprocess.features)?;
        let points = feature_matrix(&emb);
        let c = &self.cfg.cluster;
        let kseeds: Vec<u64> = (0..c.stability_seeds.max(1))
            .map(|i| derive_seed(seed, &format!("kmeans/{i}")))
            .collect();
        let (best, stability) = match c.k {
            KChoice::Auto(_) => {
                let hi = c.k_max.min(points.len() - 1);
                if hi < c.k_min {
                    bail!("{} tasks are too few for k >= {}", points.len(), c.k_min);
                }
                let range: Vec<usize> = (c.k_min..=hi).collect();
                let report = stability_report(&points, &range, &kseeds, self.mode)?;
                let k = select_k(&report)?;
                let best = report.iter().find(|r| r.k == k).expect("selected k is in the report").best.clone();
                (best, report)
            }
            KChoice::Fixed(k) => {
                if k > points.len() {
                    bail!("k = {k} exceeds the {} training tasks", points.len());
                }
                if k >= 2 && kseeds.len() >= 2 && k < points.len() {
                    let report = stability_report(&points, &[k], &kseeds, self.mode)?;
                    (report[0].best.clone(), report)
                } else {
                    let runs = kseeds
                        .iter()
                        .map(|&s| kmeans(&points, k, s, KMeansOptions::default()))
                        .collect::<lampinn::Result<Vec<Clustering>>>()?;
                    let best = runs
                        .into_iter()
                        .reduce(|a, b| if b.objective < a.objective { b } else { a })
                        .expect("at least one seed");
                    (best, Vec::new())
                }
            }
        };
        let art = ClusterArtifact {
            k: best.k,
            assignments: best.assignments.clone(),
            centroids: best.centroids.clone(),
            objective: best.objective,
            embedding: points,
            stability: stability
                .iter()
                .map(|r| StabilitySummary {
                    k: r.k,
                    silhouette_mean: r.silhouette_mean,
                    silhouette_sd: r.silhouette_sd,
                    ari_mean: r.ari_mean,
                })
                .collect(),
        };
        write_json(&self.layout.seed_file(seed, "clusters.json"), &art)
    }

    fn cluster_objectives(&self, seed: u64, tasks: &[TaskConfig], art: &ClusterArtifact) -> Result<Vec<Vec<PinnObjective>>> {
        (0..art.k)
            .map(|j| {
                tasks
                    .iter()
                    .zip(&art.assignments)
                    .filter(|(_, &a)| a == j)
                    .map(|(t, _)| self.objective(t, seed))
                    .collect()
            })
            .collect()
    }

    fn train(&self, seed: u64) -> Result<()> {
        let pre = self.load_plain(seed, "pretrained.ckpt")?;
        let art = self.clusters(seed)?;
        let tasks = self.training_tasks()?;
        let clusters = self.cluster_objectives(seed, &tasks, &art)?;
        let mut net = split_pretrained(&pre, self.cfg.arch.split_depth, art.k, derive_seed(seed, "split"))?;
        let mut trainer = LamTrainer::new(&net, &clusters, self.cfg.training_plan(derive_seed(seed, "lam")))?;
        trainer.train(&mut net, &clusters)?;
        let logs: Vec<PhaseRow> = trainer.logs.iter().map(PhaseRow::from).collect();
        write_json(&self.layout.seed_file(seed, "phase_logs.json"), &logs)?;
        self.save_model(seed, "lam.ckpt", Model::Modular(net), art.assignments)
    }

    fn lam_run(&self, net: &ModularNet, task: &TaskConfig, seed: u64, mse_every: usize) -> Result<RunRecord> {
        let obj = self.objective(task, seed)?;
        let r = self.reference(task)?;
        let s = transfer_adapt(net, &obj, &self.transfer_options(mse_every), Some(&r))?;
        Ok(RunRecord::from_session(&task.id, seed, &s, || {
            mse_on_grid(&s.net, &r).unwrap_or(f64::NAN)
        }))
    }

    fn transfer(&self, seed: u64) -> Result<()> {
        let net = self.load_modular(seed)?;
        let every = self.cfg.transfer.mse_every;
        let runs = self.fan_out(&self.unseen_tasks()?, |t| self.lam_run(&net, t, seed, every))?;
        write_json(&self.layout.seed_file(seed, &method_file(LAM_METHOD)), &runs)
    }

    fn maml_init(&self, seed: u64) -> Result<DenseNet> {
        let path = self.layout.seed_file(seed, "maml.ckpt");
        if path.exists() {
            return self.load_plain(seed, "maml.ckpt");
        }
        let a = &self.cfg.arch;
        let init = DenseNet::new(&a.sizes, a.activation, derive_seed(seed, "maml/init"))?;
        let tasks = self.training_tasks()?;
        let objs = tasks.iter().map(|t| self.objective(t, seed)).collect::<Result<Vec<_>>>()?;
        let opts = MamlOptions {
            meta_iters: self.cfg.maml.meta_iters,
            inner_steps: self.cfg.maml.inner_steps,
            lr: self.cfg.transfer.lr,
            seed: derive_seed(seed, "maml"),
        };
        let (meta, _) = maml_train(&init, &objs, &opts)?;
        self.save_model(seed, "maml.ckpt", Model::Plain(meta.clone()), Vec::new())?;
        Ok(meta)
    }

    fn baseline_run(
        &self,
        kind: BaselineKind,
        start: &DenseNet,
        task: &TaskConfig,
        seed: u64,
        mse_every: usize,
    ) -> Result<RunRecord> {
        let obj = self.objective(task, seed)?;
        let r = self.reference(task)?;
        let opts = self.fit_options(mse_every);
        let a = &self.cfg.arch;
        let (net, report) = match kind {
            BaselineKind::Scratch => {
                let s = derive_seed(seed, &format!("scratch/{}", task.id));
                train_scratch(&a.sizes, a.activation, &obj, &opts, s, Some(&r))?
            }
            BaselineKind::Transfer => train_transfer(start, &obj, &opts, Some(&r))?,
            BaselineKind::MamlFirstOrder => maml_adapt(start, &obj, &opts, Some(&r))?,
        };
        let mut rec = RunRecord::from_fit(kind.label(), &task.id, seed, &report, || {
            mse_on_grid(&net, &r).unwrap_or(f64::NAN)
        });
        if kind == BaselineKind::Transfer {
            rec.layer_change = start
                .layer_group_magnitudes()
                .iter()
                .zip(net.layer_group_magnitudes())
                .map(|(b, a)| (a - b) / b)
                .collect();
        }
        Ok(rec)
    }

    fn baseline_start(&self, kind: BaselineKind, seed: u64) -> Result<DenseNet> {
        match kind {
            BaselineKind::MamlFirstOrder => self.maml_init(seed),
            _ => self.load_plain(seed, "pretrained.ckpt"),
        }
    }

    fn baselines(&self, seed: u64) -> Result<()> {
        let unseen = self.unseen_tasks()?;
        let every = self.cfg.transfer.mse_every;
        for &kind in &self.cfg.baselines {
            let start = self.baseline_start(kind, seed)?;
            let runs = self.fan_out(&unseen, |t| self.baseline_run(kind, &start, t, seed, every))?;
            write_json(&self.layout.seed_file(seed, &method_file(kind.label())), &runs)?;
        }
        Ok(())
    }

    fn ood(&self, seed: u64) -> Result<()> {
        let sets = self.ood_sets()?;
        let mut out = Vec::new();
        if !sets.is_empty() {
            let net = self.load_modular(seed)?;
            let starts = self
                .cfg
                .baselines
                .iter()
                .map(|&k| self.baseline_start(k, seed).map(|n| (k, n)))
                .collect::<Result<Vec<_>>>()?;
            for set in &sets {
                let per_task = self.fan_out(&set.tasks, |t| {
                    let mut recs = vec![self.lam_run(&net, t, seed, 0)?];
                    for (k, start) in &starts {
                        recs.push(self.baseline_run(*k, start, t, seed, 0)?);
                    }
                    Ok(recs)
                })?;
                for rec in per_task.into_iter().flatten() {
                    out.push(OodRecord {
                        scale: set.scale,
                        method: rec.method,
                        task_id: rec.task_id,
                        final_mse: rec.final_mse,
                    });
                }
            }
        }
        write_json(&self.layout.seed_file(seed, "ood.json"), &out)
    }

    fn affinity(&self, seed: u64) -> Result<()> {
        let a = &self.cfg.affinity_transfer;
        let mut out: Vec<AffinityRecord> = Vec::new();
        if a.enabled {
            let tasks = self.training_tasks()?;
            let art = self.clusters(seed)?;
            let reps = representatives(&art);
            let arch = &self.cfg.arch;
            let opts = FitOptions::new(self.cfg.pretrain.epochs, self.cfg.pretrain.lr).with_plateau(PlateauConfig::default());
            let sources = self.fan_out(&reps, |&i| {
                let obj = self.objective(&tasks[i], seed)?;
                let s = derive_seed(seed, &format!("affinity/source/{}", tasks[i].id));
                Ok(train_scratch(&arch.sizes, arch.activation, &obj, &opts, s, None)?.0)
            })?;
            let mut jobs: Vec<(usize, usize, usize)> = Vec::new();
            for d in 0..art.k {
                let members: Vec<usize> = (0..tasks.len())
                    .filter(|&i| art.assignments[i] == d && !reps.contains(&i))
                    .collect();
                for &t in pick(&members, a.targets_per_cluster, derive_seed(seed, &format!("affinity/targets/{d}"))).iter() {
                    for c in 0..art.k {
                        jobs.push((c, d, t));
                    }
                }
            }
            out = self.fan_out(&jobs, |&(c, d, t)| {
                let task = &tasks[t];
                let obj = self.objective(task, seed)?;
                let r = self.reference(task)?;
                let (net, rep) = train_transfer(&sources[c], &obj, &self.fit_options(0), Some(&r))?;
                let final_mse = rep.final_mse().unwrap_or_else(|| mse_on_grid(&net, &r).unwrap_or(f64::NAN));
                Ok(AffinityRecord {
                    source_cluster: c,
                    target_cluster: d,
                    task_id: task.id.clone(),
                    within: c == d,
                    final_mse,
                })
            })?;
        }
        write_json(&self.layout.seed_file(seed, "affinity_transfer.json"), &out)
    }

    fn stats(&self) -> Result<()> {
        let bundle = export::collect(self)?;
        export::write_all(self, &bundle)
    }

    fn plotdata(&self) -> Result<()> {
        for kind in plotdata::KINDS {
            plotdata::emit(self, kind)?;
        }
        Ok(())
    }

    pub fn plots_dir(&self) -> PathBuf {
        self.layout.plots()
    }
}

/// Training task closest to each centroid (lowest index on ties).
pub fn representatives(art: &ClusterArtifact) -> Vec<usize> {
    (0..art.k)
        .map(|j| {
            let mut best = (usize::MAX, f64::INFINITY);
            for (i, p) in art.embedding.iter().enumerate() {
                if art.assignments[i] != j {
                    continue;
                }
                let d: f64 = p.iter().zip(&art.centroids[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best.1 {
                    best = (i, d);
                }
            }
            best.0
        })
        .filter(|&i| i != usize::MAX)
        .collect()
}

/// Up to `n` items in a seeded order.
fn pick(items: &[usize], n: usize, seed: u64) -> Vec<usize> {
    let mut keyed: Vec<(u64, usize)> = items.iter().map(|&i| (derive_seed(seed, &i.to_string()), i)).collect();
    keyed.sort_unstable();
    keyed.into_iter().take(n).map(|(_, i)| i).collect()
}

/// Tasks in the extended range that fall outside the design box.
fn sample_ood(cfg: &ExperimentConfig, scale: f64) -> Result<Vec<TaskConfig>> {
    if cfg.ood.count == 0 {
        return Ok(Vec::new());
    }
    let fam = cfg.family();
    let base = fam.factors([2, 2, 2])?;
    let ext = ood_extend(&base, scale)?;
    let seed = derive_seed(cfg.unseen.seed, &format!("ood/{scale}"));
    let pool = sample_unseen(fam, &ext, cfg.ood.count * 64, seed, &[])?;
    let outside: Vec<TaskConfig> = pool
        .into_iter()
        .filter(|t| t.values.iter().zip(&base).any(|(v, f)| *v > f.max))
        .take(cfg.ood.count)
        .collect();
    if outside.len() < cfg.ood.count {
        return Err(anyhow!("could not draw {} tasks beyond the design range at {scale}%", cfg.ood.count));
    }
    Ok(outside)
}
