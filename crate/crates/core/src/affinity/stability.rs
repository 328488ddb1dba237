use serde::{Deserialize, Serialize};

use super::kmeans::{kmeans, Clustering, KMeansOptions};
use super::metrics::{adjusted_rand_index, silhouette};
use crate::exec::{map_ordered, Parallelism};
use crate::{Error, Result};

/// Pairwise ARI at or above which a cluster count counts as stable.
pub const ARI_STABLE: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub k: usize,
    pub silhouette_mean: f64,
    /// Sample standard deviation over seeds.
    pub silhouette_sd: f64,
    /// Mean ARI over all unordered seed pairs.
    pub ari_mean: f64,
    pub ari_pairs: usize,
    /// The run with the lowest objective (first seed on ties).
    pub best: Clustering,
}

/// Runs k-means once per seed for every `k` and summarizes separation and
/// seed-level agreement.
pub fn stability_report(
    points: &[Vec<f64>],
    k_range: &[usize],
    seeds: &[u64],
    mode: Parallelism,
) -> Result<Vec<StabilityRow>> {
    if seeds.len() < 2 {
        return Err(Error::Config("stability report needs at least 2 seeds".into()));
    }
    k_range
        .iter()
        .map(|&k| {
            let runs = map_ordered(seeds, mode, |&s| kmeans(points, k, s, KMeansOptions::default()))
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            let sil = runs
                .iter()
                .map(|c| silhouette(points, &c.assignments, k))
                .collect::<Result<Vec<_>>>()?;
            let n = sil.len() as f64;
            let mean = sil.iter().sum::<f64>() / n;
            let sd = (sil.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            let mut ari_sum = 0.0;
            let mut pairs = 0;
            for i in 0..runs.len() {
                for j in i + 1..runs.len() {
                    ari_sum += adjusted_rand_index(&runs[i].assignments, &runs[j].assignments)?;
                    pairs += 1;
                }
            }
            let best = runs
                .iter()
                .fold(None::<&Clustering>, |b, c| match b {
                    Some(b) if b.objective <= c.objective => Some(b),
                    _ => Some(c),
                })
                .cloned()
                .expect("at least two runs");
            Ok(StabilityRow {
                k,
                silhouette_mean: mean,
                silhouette_sd: sd,
                ari_mean: ari_sum / pairs as f64,
                ari_pairs: pairs,
                best,
            })
        })
        .collect()
}

/// Highest mean silhouette among rows with ARI >= [`ARI_STABLE`]; otherwise
/// the highest ARI. Ties go to the smaller `k`.
pub fn select_k(report: &[StabilityRow]) -> Result<usize> {
    if report.is_empty() {
        return Err(Error::Config("empty stability report".into()));
    }
    let mut rows: Vec<&StabilityRow> = report.iter().collect();
    rows.sort_by_key(|r| r.k);
    let stable: Vec<&&StabilityRow> = rows.iter().filter(|r| r.ari_mean >= ARI_STABLE).collect();
    let pick = if stable.is_empty() {
        rows.iter()
            .fold(None::<&StabilityRow>, |b, r| match b {
                Some(b) if b.ari_mean >= r.ari_mean => Some(b),
                _ => Some(r),
            })
    } else {
        stable.iter().fold(None::<&StabilityRow>, |b, r| match b {
            Some(b) if b.silhouette_mean >= r.silhouette_mean => Some(b),
            _ => Some(r),
        })
    };
    Ok(pick.expect("nonempty").k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(k: usize, sil: f64, ari: f64) -> StabilityRow {
        StabilityRow {
            k,
            silhouette_mean: sil,
            silhouette_sd: 0.0,
            ari_mean: ari,
            ari_pairs: 1,
            best: Clustering {
                k,
                assignments: vec![],
                centroids: vec![],
                objective: 0.0,
                seed: 0,
                iterations: 0,
            },
        }
    }

    #[test]
    fn selection_rules() {
        let r = vec![row(2, 0.9, 0.8), row(3, 0.5, 1.0), row(4, 0.7, 0.9)];
        assert_eq!(select_k(&r).unwrap(), 3);
        let r = vec![row(2, 0.1, 0.9), row(3, 0.5, 0.8)];
        assert_eq!(select_k(&r).unwrap(), 2);
        let r = vec![row(4, 0.5, 1.0), row(3, 0.5, 1.0)];
        assert_eq!(select_k(&r).unwrap(), 3);
        assert!(select_k(&[]).is_err());
    }

    #[test]
    fn separated_blobs_are_stable() {
        let mut pts = Vec::new();
        for c in 0..3 {
            for i in 0..5 {
                pts.push(vec![c as f64 * 100.0 + i as f64 * 0.01, -(c as f64) * 50.0]);
            }
        }
        let seeds: Vec<u64> = (0..6).collect();
        let rep = stability_report(&pts, &[2, 3, 4], &seeds, Parallelism::Sequential).unwrap();
        assert_eq!(rep.len(), 3);
        assert_eq!(rep[1].ari_mean, 1.0);
        assert_eq!(rep[1].ari_pairs, 15);
        let two = stability_report(&pts, &[3], &seeds[..2], Parallelism::Sequential).unwrap();
        assert_eq!(two[0].ari_pairs, 1);
    }
}
