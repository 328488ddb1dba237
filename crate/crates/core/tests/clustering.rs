//! Clustering metrics against brute-force oracles, and the embedding contract.

use lampinn::affinity::{
    adjusted_rand_index, build_embedding, hungarian_disagreement, kmeans, silhouette, FeatureSet, KMeansOptions,
    LossMetrics,
};
use lampinn::tasks::{Family, TaskConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pts(v: &[f64]) -> Vec<Vec<f64>> {
    v.iter().map(|&x| vec![x]).collect()
}

fn sse(points: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let mut total = 0.0;
    for j in 0..k {
        let m: Vec<&Vec<f64>> = points.iter().zip(labels).filter(|(_, &l)| l == j).map(|(p, _)| p).collect();
        if m.is_empty() {
            continue;
        }
        let d = m[0].len();
        for c in 0..d {
            let mean = m.iter().map(|p| p[c]).sum::<f64>() / m.len() as f64;
            total += m.iter().map(|p| (p[c] - mean).powi(2)).sum::<f64>();
        }
    }
    total
}

/// All labelings of `n` points into `k` (possibly empty) groups.
fn labelings(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|l: Vec<usize>| {
                (0..k).map(move |c| {
                    let mut l = l.clone();
                    l.push(c);
                    l
                })
            })
            .collect();
    }
    out
}

#[test]
fn kmeans_finds_the_exhaustive_optimum_on_the_toy_set() {
    let p = pts(&[0.0, 1.0, 10.0, 11.0]);
    let best = labelings(4, 2).iter().map(|l| sse(&p, l, 2)).fold(f64::INFINITY, f64::min);
    assert_eq!(best, 1.0);
    let c = kmeans(&p, 2, 0, KMeansOptions::default()).unwrap();
    assert!((c.objective - best).abs() < 1e-12);
    assert_eq!(c.assignments[0], c.assignments[1]);
    assert_ne!(c.assignments[1], c.assignments[2]);
}

#[test]
fn kmeans_matches_exhaustive_search_on_small_random_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let p: Vec<Vec<f64>> = (0..7).map(|_| vec![rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)]).collect();
        let best = labelings(7, 3).iter().map(|l| sse(&p, l, 3)).fold(f64::INFINITY, f64::min);
        let found = (0..20)
            .map(|s| kmeans(&p, 3, s, KMeansOptions::default()).unwrap().objective)
            .fold(f64::INFINITY, f64::min);
        assert!((found - best).abs() < 1e-9, "{found} vs {best}");
    }
}

/// Mean silhouette straight from the definition.
fn silhouette_oracle(p: &[Vec<f64>], l: &[usize]) -> f64 {
    let dist = |a: &Vec<f64>, b: &Vec<f64>| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let k = l.iter().max().unwrap() + 1;
    let mut s = 0.0;
    for i in 0..p.len() {
        let mean_to = |c: usize| {
            let others: Vec<usize> = (0..p.len()).filter(|&j| j != i && l[j] == c).collect();
            others.iter().map(|&j| dist(&p[i], &p[j])).sum::<f64>() / others.len() as f64
        };
        if l.iter().filter(|&&c| c == l[i]).count() == 1 {
            continue;
        }
        let a = mean_to(l[i]);
        let b = (0..k).filter(|&c| c != l[i]).map(mean_to).fold(f64::INFINITY, f64::min);
        s += (b - a) / a.max(b);
    }
    s / p.len() as f64
}

#[test]
fn silhouette_matches_definition() {
    let p = pts(&[0.0, 1.0, 10.0, 11.0]);
    let s = silhouette(&p, &[0, 0, 1, 1], 2).unwrap();
    assert!((s - 0.8997).abs() < 1e-3, "{s}");
    assert!((s - silhouette_oracle(&p, &[0, 0, 1, 1])).abs() < 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let p: Vec<Vec<f64>> = (0..12).map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]).collect();
        let l: Vec<usize> = (0..12).map(|i| if i < 3 { i } else { rng.gen_range(0..3) }).collect();
        let s = silhouette(&p, &l, 3).unwrap();
        assert!((s - silhouette_oracle(&p, &l)).abs() < 1e-12);
    }
}

/// ARI by counting agreeing pairs directly.
fn ari_oracle(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let (mut both, mut in_a, mut in_b) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let sa = a[i] == a[j];
            let sb = b[i] == b[j];
            both += (sa && sb) as u8 as f64;
            in_a += sa as u8 as f64;
            in_b += sb as u8 as f64;
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    let expected = in_a * in_b / pairs;
    (both - expected) / (0.5 * (in_a + in_b) - expected)
}

#[test]
fn ari_matches_pair_counting() {
    let a = [0, 0, 1, 1];
    let b = [0, 1, 0, 1];
    let v = adjusted_rand_index(&a, &b).unwrap();
    assert!((v - ari_oracle(&a, &b)).abs() < 1e-12);
    assert!((v + 0.5).abs() < 1e-12);
    assert_eq!(adjusted_rand_index(&a, &[1, 1, 0, 0]).unwrap(), 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let a: Vec<usize> = (0..15).map(|_| rng.gen_range(0..3)).collect();
        let b: Vec<usize> = (0..15).map(|_| rng.gen_range(0..4)).collect();
        assert!((adjusted_rand_index(&a, &b).unwrap() - ari_oracle(&a, &b)).abs() < 1e-12);
    }
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    permutations(k - 1)
        .into_iter()
        .flat_map(|p| {
            (0..k).map(move |pos| {
                let mut q = p.clone();
                q.insert(pos, k - 1);
                q
            })
        })
        .collect()
}

fn disagreement_oracle(a: &[usize], b: &[usize], k: usize) -> f64 {
    let best = permutations(k)
        .iter()
        .map(|perm| a.iter().zip(b).filter(|(x, y)| perm[**x] == **y).count())
        .max()
        .unwrap();
    100.0 * (1.0 - best as f64 / a.len() as f64)
}

#[test]
fn hungarian_matches_brute_force_bijections() {
    let a = [0, 0, 1, 1];
    let b = [1, 1, 0, 1];
    assert!((hungarian_disagreement(&a, &b).unwrap() - 25.0).abs() < 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let a: Vec<usize> = (0..20).map(|_| rng.gen_range(0..5)).collect();
        let b: Vec<usize> = (0..20).map(|_| rng.gen_range(0..5)).collect();
        let got = hungarian_disagreement(&a, &b).unwrap();
        assert!((got - disagreement_oracle(&a, &b, 5)).abs() < 1e-9);
    }
}

fn metrics(l: f64) -> LossMetrics {
    LossMetrics {
        l1: l,
        l2: l / 2.0,
        l3: 0.75 * l,
        diverged: false,
    }
}

#[test]
fn embedding_is_log_then_population_zscore() {
    let tasks: Vec<(TaskConfig, LossMetrics)> = [(1.0, 0.5), (5.0, 2.0), (9.0, 7.0), (13.0, 1.0)]
        .iter()
        .map(|&(a, l)| (TaskConfig::new(Family::Helmholtz2d, vec![a, 4.0, 6.0]).unwrap(), metrics(l)))
        .collect();
    let emb = build_embedding(&tasks, FeatureSet::Full).unwrap();
    assert_eq!(emb[0].normalized.len(), 6);
    for f in 0..6 {
        let col: Vec<f64> = emb.iter().map(|e| e.normalized[f]).collect();
        let mean = col.iter().sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        let var = col.iter().map(|v| v * v).sum::<f64>() / 4.0;
        // B and C are constant across tasks
        if f == 1 || f == 2 {
            assert!(col.iter().all(|&v| v == 0.0));
        } else {
            assert!((var - 1.0).abs() < 1e-12);
        }
    }
    // oracle for the first column
    let logs: Vec<f64> = [1.0f64, 5.0, 9.0, 13.0].iter().map(|v| v.ln_1p()).collect();
    let m = logs.iter().sum::<f64>() / 4.0;
    let sd = (logs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 4.0).sqrt();
    for (e, l) in emb.iter().zip(&logs) {
        assert!((e.normalized[0] - (l - m) / sd).abs() < 1e-12);
    }
    let params_only = build_embedding(&tasks, FeatureSet::ParamsOnly).unwrap();
    assert_eq!(params_only[0].normalized.len(), 3);
}

#[test]
fn embedding_rejects_non_finite_metrics() {
    let mut tasks: Vec<(TaskConfig, LossMetrics)> = [1.0, 5.0]
        .iter()
        .map(|&a| (TaskConfig::new(Family::Helmholtz2d, vec![a, 4.0, 6.0]).unwrap(), metrics(1.0)))
        .collect();
    tasks[1].1.l2 = f64::NAN;
    assert!(build_embedding(&tasks, FeatureSet::Full).is_err());
    assert!(build_embedding(&tasks[..1], FeatureSet::Full).is_err());
}
