//! Paired comparisons: group splits, Wilcoxon signed-rank tests and
//! bootstrap intervals for the relative MSE reduction.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::{Error, Result};

/// Largest sample size for which the exact null distribution is used.
pub const WILCOXON_EXACT_MAX: usize = 25;

/// Splits items into the top and bottom halves by score (descending), ties
/// broken by ascending id. Returns indices into `items`.
pub fn group_split(items: &[(String, f64)]) -> Result<(Vec<usize>, Vec<usize>)> {
    if items.is_empty() || items.len() % 2 == 1 {
        return Err(Error::Config(format!(
            "group split needs an even, nonzero task count, got {}",
            items.len()
        )));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| {
        items[b]
            .1
            .total_cmp(&items[a].1)
            .then_with(|| items[a].0.cmp(&items[b].0))
    });
    let half = items.len() / 2;
    Ok((order[..half].to_vec(), order[half..].to_vec()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of ranks of positive differences `ours - base`.
    pub w_plus: f64,
    pub w_minus: f64,
    /// `min(w_plus, w_minus)`.
    pub statistic: f64,
    pub p_value: f64,
    /// Non-zero differences used.
    pub n: usize,
    pub exact: bool,
    /// All differences were zero.
    pub degenerate: bool,
}

/// Mid-ranks of `|d|` (1-based).
fn mid_ranks(abs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..abs.len()).collect();
    idx.sort_by(|&a, &b| abs[a].total_cmp(&abs[b]));
    let mut ranks = vec![0.0; abs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && abs[idx[j + 1]] == abs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// `P(W+ <= w)` under the null, by dynamic programming over doubled ranks.
fn exact_lower_tail(ranks: &[f64], w: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; total + 1];
    counts[0] = 1.0;
    for &r in &doubled {
        for s in (r..=total).rev() {
            counts[s] += counts[s - r];
        }
    }
    let limit = (2.0 * w).round() as usize;
    let hits: f64 = counts[..=limit.min(total)].iter().sum();
    hits / 2f64.powi(ranks.len() as i32)
}

/// Two-sided paired signed-rank test on `ours - base`.
pub fn wilcoxon_signed_rank(ours: &[f64], base: &[f64]) -> Result<WilcoxonResult> {
    if ours.len() != base.len() {
        return Err(Error::InputShape {
            expected: ours.len(),
            got: base.len(),
        });
    }
    let diffs: Vec<f64> = ours.iter().zip(base).map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    let n = diffs.len();
    if n == 0 {
        return Ok(WilcoxonResult {
            w_plus: 0.0,
            w_minus: 0.0,
            statistic: 0.0,
            p_value: 1.0,
            n: 0,
            exact: true,
            degenerate: true,
        });
    }
    if n < 5 {
        return Err(Error::Contract(format!(
            "signed-rank test needs at least 5 non-zero differences, got {n}"
        )));
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = mid_ranks(&abs);
    let w_plus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w_minus = total - w_plus;
    let statistic = w_plus.min(w_minus);
    let exact = n <= WILCOXON_EXACT_MAX;
    let p = if exact {
        2.0 * exact_lower_tail(&ranks, statistic)
    } else {
        let mean = total / 2.0;
        let mut ties = 0.0;
        let mut sorted = ranks.clone();
        sorted.sort_by(f64::total_cmp);
        let mut i = 0;
        while i < sorted.len() {
            let j = sorted[i..].iter().take_while(|&&r| r == sorted[i]).count();
            let t = j as f64;
            ties += t * t * t - t;
            i += j;
        }
        let var = (n * (n + 1) * (2 * n + 1)) as f64 / 24.0 - ties / 48.0;
        let z = (statistic - mean + 0.5) / var.sqrt();
        2.0 * Normal::standard().cdf(z.min(0.0))
    };
    Ok(WilcoxonResult {
        w_plus,
        w_minus,
        statistic,
        p_value: p.min(1.0),
        n,
        exact,
        degenerate: false,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `100 (1 - mean(ours) / mean(base))`.
pub fn reduction_percent(ours: &[f64], base: &[f64]) -> Result<f64> {
    if ours.len() != base.len() || ours.is_empty() {
        return Err(Error::InputShape {
            expected: ours.len(),
            got: base.len(),
        });
    }
    let mb = mean(base);
    if !(mb > 0.0) {
        return Err(Error::UndefinedReduction(format!("baseline mean is {mb}")));
    }
    Ok(100.0 * (1.0 - mean(ours) / mb))
}

/// Linear-interpolation quantile (type 7) of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReductionCi {
    pub reduction: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub resamples: usize,
}

/// Point estimate and percentile 95% interval over paired task resamples.
/// Resamples whose baseline mean is zero are skipped.
pub fn bootstrap_reduction_ci(ours: &[f64], base: &[f64], n_resamples: usize, seed: u64) -> Result<ReductionCi> {
    if ours.len() < 2 {
        return Err(Error::Config("bootstrap needs at least 2 pairs".into()));
    }
    let reduction = reduction_percent(ours, base)?;
    let n = ours.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = Vec::with_capacity(n_resamples);
    for _ in 0..n_resamples {
        let (mut so, mut sb) = (0.0, 0.0);
        for _ in 0..n {
            let i = rng.gen_range(0..n);
            so += ours[i];
            sb += base[i];
        }
        if sb > 0.0 {
            stats.push(100.0 * (1.0 - so / sb));
        }
    }
    if stats.is_empty() {
        return Err(Error::UndefinedReduction("no resample had a positive baseline mean".into()));
    }
    stats.sort_by(f64::total_cmp);
    Ok(ReductionCi {
        reduction,
        ci_low: quantile_sorted(&stats, 0.025),
        ci_high: quantile_sorted(&stats, 0.975),
        resamples: stats.len(),
    })
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = mean(v);
    if v.len() == 1 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64;
    (m, var.sqrt())
}

/// Median (mean of the middle pair for even counts).
pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}
