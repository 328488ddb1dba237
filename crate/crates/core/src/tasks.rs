//! Task configurations and design-of-experiments generation.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// PDE family a task belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Helmholtz2d,
    Burgers1d,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Helmholtz2d => "helmholtz2d",
            Family::Burgers1d => "burgers1d",
        }
    }

    pub fn factor_names(self) -> [&'static str; 3] {
        match self {
            Family::Helmholtz2d => ["A", "B", "C"],
            Family::Burgers1d => ["alpha", "nu", "A"],
        }
    }

    pub fn code(self) -> u32 {
        match self {
            Family::Helmholtz2d => 1,
            Family::Burgers1d => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            1 => Some(Family::Helmholtz2d),
            2 => Some(Family::Burgers1d),
            _ => None,
        }
    }

    /// Factor ranges of the training design space.
    pub fn default_ranges(self) -> [(f64, f64); 3] {
        match self {
            Family::Helmholtz2d => [(1.0, 13.0), (2.0, 12.0), (3.0, 11.0)],
            Family::Burgers1d => [(0.1, 2.0), (0.005, 0.5), (0.5, 10.0)],
        }
    }

    /// Task the reference network is pre-trained on.
    pub fn reference_values(self) -> [f64; 3] {
        match self {
            Family::Helmholtz2d => [7.0, 7.0, 7.0],
            Family::Burgers1d => [1.0, 0.03, 5.0],
        }
    }

    /// Factors with `counts[p]` evenly spaced levels on each default range.
    pub fn factors(self, counts: [usize; 3]) -> Result<Vec<FactorSpec>> {
        self.default_ranges()
            .iter()
            .zip(self.factor_names())
            .zip(counts)
            .map(|((&(lo, hi), name), n)| FactorSpec::evenly_spaced(name, lo, hi, n))
            .collect()
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "helmholtz2d" | "helmholtz" => Ok(Family::Helmholtz2d),
            "burgers1d" | "burgers" => Ok(Family::Burgers1d),
            other => Err(Error::Config(format!("unknown PDE family `{other}`"))),
        }
    }
}

/// One design factor with its range and levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSpec {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub levels: Vec<f64>,
}

impl FactorSpec {
    pub fn new(name: &str, min: f64, max: f64, levels: Vec<f64>) -> Result<Self> {
        let spec = Self {
            name: name.to_string(),
            min,
            max,
            levels,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `n` levels from `min` to `max` inclusive (`n == 1` gives the midpoint).
    pub fn evenly_spaced(name: &str, min: f64, max: f64, n: usize) -> Result<Self> {
        let levels = match n {
            0 => Vec::new(),
            1 => vec![0.5 * (min + max)],
            _ => (0..n)
                .map(|i| {
                    if i == n - 1 {
                        max
                    } else {
                        min + (max - min) * i as f64 / (n - 1) as f64
                    }
                })
                .collect(),
        };
        Self::new(name, min, max, levels)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::Config(format!("factor `{}` has no levels", self.name)));
        }
        if !(self.min <= self.max) {
            return Err(Error::Config(format!("factor `{}` has min > max", self.name)));
        }
        if self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "factor `{}` levels must be strictly increasing",
                self.name
            )));
        }
        if self.levels.iter().any(|&l| l < self.min || l > self.max) {
            return Err(Error::Config(format!(
                "factor `{}` has levels outside [{}, {}]",
                self.name, self.min, self.max
            )));
        }
        Ok(())
    }
}

/// A single task: the configuration vector of one PDE instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub family: Family,
    pub values: Vec<f64>,
    pub id: String,
}

impl TaskConfig {
    pub fn new(family: Family, values: Vec<f64>) -> Result<Self> {
        if values.len() != 3 {
            return Err(Error::InvalidTask(format!(
                "{family} tasks have 3 factors, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidTask(format!("non-finite factor in {values:?}")));
        }
        let id = task_id(family, &values);
        Ok(Self { family, values, id })
    }

    pub fn reference(family: Family) -> Self {
        Self::new(family, family.reference_values().to_vec()).expect("reference task is valid")
    }

    pub fn value(&self, p: usize) -> f64 {
        self.values[p]
    }
}

/// Deterministic short hash of `(family, values)`.
pub fn task_id(family: Family, values: &[f64]) -> String {
    let mut h = Sha256::new();
    h.update(family.name().as_bytes());
    for v in values {
        h.update(v.to_bits().to_le_bytes());
    }
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Seed for a per-task stream, independent of scheduling order.
pub fn derive_seed(global: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(global.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    let mut b = [0u8; 8];
    b.copy_from_slice(&d[..8]);
    u64::from_le_bytes(b)
}

/// Cartesian product of factor levels, first factor varying slowest.
pub fn full_factorial(family: Family, factors: &[FactorSpec]) -> Result<Vec<TaskConfig>> {
    if factors.is_empty() {
        return Err(Error::Config("full factorial needs at least one factor".into()));
    }
    for f in factors {
        f.validate()?;
    }
    let mut combos: Vec<Vec<f64>> = vec![Vec::new()];
    for f in factors {
        combos = combos
            .into_iter()
            .flat_map(|prefix| {
                f.levels.iter().map(move |&l| {
                    let mut c = prefix.clone();
                    c.push(l);
                    c
                })
            })
            .collect();
    }
    combos
        .into_iter()
        .map(|values| build_task(family, values))
        .collect()
}

// Single-factor designs are allowed for experimentation; they bypass the
// three-factor check of `TaskConfig::new`.
fn build_task(family: Family, values: Vec<f64>) -> Result<TaskConfig> {
    if values.len() == 3 {
        return TaskConfig::new(family, values);
    }
    let id = task_id(family, &values);
    Ok(TaskConfig { family, values, id })
}

/// Extends each factor's upper bound to `min + (max - min) * scale / 100`,
/// appending the new bound as a level.
pub fn ood_extend(factors: &[FactorSpec], scale_percent: f64) -> Result<Vec<FactorSpec>> {
    if !(scale_percent >= 100.0) {
        return Err(Error::Config(format!(
            "OOD scale must be at least 100%, got {scale_percent}"
        )));
    }
    Ok(factors
        .iter()
        .map(|f| {
            let span = f.max - f.min;
            if span == 0.0 || scale_percent == 100.0 {
                return f.clone();
            }
            let new_max = f.min + span * scale_percent / 100.0;
            let mut levels = f.levels.clone();
            if new_max > *levels.last().unwrap() {
                levels.push(new_max);
            }
            FactorSpec {
                name: f.name.clone(),
                min: f.min,
                max: new_max,
                levels,
            }
        })
        .collect())
}

/// `n` tasks drawn uniformly from the factor box, none equal to an excluded task.
pub fn sample_unseen(
    family: Family,
    factors: &[FactorSpec],
    n: usize,
    seed: u64,
    exclude: &[TaskConfig],
) -> Result<Vec<TaskConfig>> {
    if n == 0 {
        return Err(Error::Config("unseen task count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<TaskConfig> = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while out.len() < n {
        attempts += 1;
        if attempts > 1000 * n {
            return Err(Error::Config("could not sample enough distinct unseen tasks".into()));
        }
        let values: Vec<f64> = factors
            .iter()
            .map(|f| if f.max > f.min { rng.gen_range(f.min..=f.max) } else { f.min })
            .collect();
        let clash = exclude.iter().chain(out.iter()).any(|t| t.values == values);
        if !clash {
            out.push(build_task(family, values)?);
        }
    }
    Ok(out)
}

/// How the training design is laid out.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelScheme {
    /// Full factorial with the given number of levels per factor.
    Factorial([usize; 3]),
    /// Uniform random tasks in the design box.
    Random { count: usize },
}

impl LevelScheme {
    pub fn paper_default() -> Self {
        LevelScheme::Factorial([3, 3, 3])
    }
}

/// Generates the training task set for `family` under `scheme`.
pub fn training_design(family: Family, scheme: &LevelScheme, seed: u64) -> Result<Vec<TaskConfig>> {
    match scheme {
        LevelScheme::Factorial(counts) => full_factorial(family, &family.factors(*counts)?),
        LevelScheme::Random { count } => {
            sample_unseen(family, &family.factors([2, 2, 2])?, *count, seed, &[])
        }
    }
}

#[derive(Serialize, Deserialize)]
struct TaskRecord {
    family: Family,
    factors: Vec<String>,
    values: Vec<f64>,
    id: String,
}

/// Writes one JSON record per line.
pub fn write_tasks<W: Write>(mut w: W, tasks: &[TaskConfig]) -> Result<()> {
    for t in tasks {
        let rec = TaskRecord {
            family: t.family,
            factors: t.family.factor_names().iter().map(|s| s.to_string()).collect(),
            values: t.values.clone(),
            id: t.id.clone(),
        };
        let line = serde_json::to_string(&rec).map_err(|e| Error::Config(e.to_string()))?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Reads tasks written by [`write_tasks`]; ids are re-derived and checked.
pub fn read_tasks<R: BufRead>(r: R) -> Result<Vec<TaskConfig>> {
    let mut out = Vec::new();
    let mut offset = 0usize;
    for line in r.lines() {
        let line = line?;
        let len = line.len() + 1;
        if !line.trim().is_empty() {
            let rec: TaskRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                offset,
                message: e.to_string(),
            })?;
            let task = build_task(rec.family, rec.values)?;
            if task.id != rec.id {
                return Err(Error::Parse {
                    offset,
                    message: format!("task id {} does not match its values", rec.id),
                });
            }
            out.push(task);
        }
        offset += len;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factorial_counts() {
        let h = Family::Helmholtz2d;
        assert_eq!(full_factorial(h, &h.factors([3, 3, 3]).unwrap()).unwrap().len(), 27);
        assert_eq!(full_factorial(h, &h.factors([2, 2, 2]).unwrap()).unwrap().len(), 8);
        assert_eq!(full_factorial(h, &h.factors([4, 4, 3]).unwrap()).unwrap().len(), 48);
        let one = FactorSpec::new("A", 2.0, 2.0, vec![2.0]).unwrap();
        let tasks = full_factorial(h, &[one]).unwrap();
        assert_eq!(tasks.len(), 1);
        assert_eq!(tasks[0].values, vec![2.0]);
    }

    #[test]
    fn factorial_order_first_factor_slowest() {
        let h = Family::Helmholtz2d;
        let tasks = full_factorial(h, &h.factors([3, 3, 3]).unwrap()).unwrap();
        assert_eq!(tasks[0].values, vec![1.0, 2.0, 3.0]);
        assert_eq!(tasks[1].values, vec![1.0, 2.0, 7.0]);
        assert_eq!(tasks[13].values, vec![7.0, 7.0, 7.0]);
        assert_eq!(tasks[26].values, vec![13.0, 12.0, 11.0]);
    }

    #[test]
    fn empty_levels_rejected() {
        let bad = FactorSpec {
            name: "A".into(),
            min: 0.0,
            max: 1.0,
            levels: vec![],
        };
        assert!(matches!(
            full_factorial(Family::Helmholtz2d, &[bad]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn ood_rule() {
        let f = vec![FactorSpec::evenly_spaced("A", 1.0, 13.0, 3).unwrap()];
        assert_eq!(ood_extend(&f, 100.0).unwrap(), f);
        let e = ood_extend(&f, 130.0).unwrap();
        assert!((e[0].max - 16.6).abs() < 1e-12);
        assert_eq!(e[0].levels.len(), 4);
        let flat = vec![FactorSpec::new("B", 5.0, 5.0, vec![5.0]).unwrap()];
        assert_eq!(ood_extend(&flat, 110.0).unwrap(), flat);
        assert!(ood_extend(&f, 90.0).is_err());
    }

    #[test]
    fn unseen_sampling() {
        let h = Family::Helmholtz2d;
        let factors = h.factors([3, 3, 3]).unwrap();
        let train = full_factorial(h, &factors).unwrap();
        let a = sample_unseen(h, &factors, 10, 42, &train).unwrap();
        let b = sample_unseen(h, &factors, 10, 42, &train).unwrap();
        let c = sample_unseen(h, &factors, 10, 43, &train).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 10);
        for t in &a {
            assert!(train.iter().all(|s| s.values != t.values));
            for (v, f) in t.values.iter().zip(&factors) {
                assert!(*v >= f.min && *v <= f.max);
            }
        }
    }

    #[test]
    fn ids_are_stable_and_distinct() {
        let a = TaskConfig::new(Family::Helmholtz2d, vec![7.0, 7.0, 7.0]).unwrap();
        let b = TaskConfig::new(Family::Burgers1d, vec![7.0, 7.0, 7.0]).unwrap();
        assert_eq!(a.id, task_id(Family::Helmholtz2d, &[7.0, 7.0, 7.0]));
        assert_ne!(a.id, b.id);
        assert_eq!(a.id.len(), 16);
    }

    #[test]
    fn task_file_round_trip() {
        let h = Family::Burgers1d;
        let tasks = full_factorial(h, &h.factors([2, 2, 2]).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_tasks(&mut buf, &tasks).unwrap();
        let back = read_tasks(buf.as_slice()).unwrap();
        assert_eq!(back, tasks);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().next().unwrap().contains("\"factors\":[\"alpha\",\"nu\",\"A\"]"));
    }
}
