//! Collocation and labeled-point sampling.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::PdeProblem;
use crate::tasks::Family;
use crate::{Error, Result};

/// Interior collocation points and labeled boundary/initial points, all
/// flattened row-major (`count x dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationSet {
    pub dim: usize,
    pub interior: Vec<f64>,
    pub data_points: Vec<f64>,
    pub data_targets: Vec<f64>,
    pub seed: u64,
}

impl CollocationSet {
    pub fn n_interior(&self) -> usize {
        self.interior.len() / self.dim
    }

    pub fn n_data(&self) -> usize {
        self.data_targets.len()
    }

    pub fn interior_point(&self, i: usize) -> &[f64] {
        &self.interior[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data_point(&self, i: usize) -> &[f64] {
        &self.data_points[i * self.dim..(i + 1) * self.dim]
    }
}

fn perfect_square(m: usize) -> Option<usize> {
    let s = (m as f64).sqrt().round() as usize;
    (s * s == m).then_some(s)
}

// Walks the rectangle boundary counter-clockwise from the lower-left corner.
fn perimeter_point(lo: &[f64], hi: &[f64], mut s: f64) -> [f64; 2] {
    let (w, h) = (hi[0] - lo[0], hi[1] - lo[1]);
    if s < w {
        return [lo[0] + s, lo[1]];
    }
    s -= w;
    if s < h {
        return [hi[0], lo[1] + s];
    }
    s -= h;
    if s < w {
        return [hi[0] - s, hi[1]];
    }
    s -= w;
    [lo[0], (hi[1] - s).max(lo[1])]
}

/// Helmholtz: an `s x s` cell-centred grid when `m_interior = s^2` (seeded
/// uniform points otherwise) and `n_data` points evenly spaced around the
/// boundary. Burgers: uniform interior; half the data points on the initial
/// line, the rest alternating between `x = -1` and `x = 1`.
pub fn sample_collocation(
    problem: &PdeProblem,
    m_interior: usize,
    n_data: usize,
    seed: u64,
) -> Result<CollocationSet> {
    if m_interior == 0 && n_data == 0 {
        return Err(Error::Config("collocation set needs at least one point".into()));
    }
    let lo = &problem.domain.lo;
    let hi = &problem.domain.hi;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut interior = Vec::with_capacity(2 * m_interior);
    let mut data_points = Vec::with_capacity(2 * n_data);

    let grid = match problem.family() {
        Family::Helmholtz2d => perfect_square(m_interior),
        Family::Burgers1d => None,
    };
    match grid {
        Some(s) => {
            for i in 0..s {
                for j in 0..s {
                    interior.push(lo[0] + (hi[0] - lo[0]) * (i as f64 + 0.5) / s as f64);
                    interior.push(lo[1] + (hi[1] - lo[1]) * (j as f64 + 0.5) / s as f64);
                }
            }
        }
        None => {
            for _ in 0..m_interior {
                interior.push(rng.gen_range(lo[0]..hi[0]));
                interior.push(rng.gen_range(lo[1]..hi[1]));
            }
        }
    }

    match problem.family() {
        Family::Helmholtz2d => {
            let perimeter = 2.0 * ((hi[0] - lo[0]) + (hi[1] - lo[1]));
            for k in 0..n_data {
                let p = perimeter_point(lo, hi, perimeter * k as f64 / n_data as f64);
                data_points.extend_from_slice(&p);
            }
        }
        Family::Burgers1d => {
            let n_ic = n_data.div_ceil(2);
            for _ in 0..n_ic {
                data_points.push(rng.gen_range(lo[0]..=hi[0]));
                data_points.push(lo[1]);
            }
            for k in 0..n_data - n_ic {
                data_points.push(if k % 2 == 0 { lo[0] } else { hi[0] });
                data_points.push(rng.gen_range(lo[1]..=hi[1]));
            }
        }
    }
    let data_targets = data_points
        .chunks(2)
        .map(|p| problem.boundary_value(p))
        .collect();
    Ok(CollocationSet {
        dim: 2,
        interior,
        data_points,
        data_targets,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::TaskConfig;

    fn helm() -> PdeProblem {
        let t = TaskConfig::new(Family::Helmholtz2d, vec![7.0, 7.0, 7.0]).unwrap();
        PdeProblem::new(&t, 1.0).unwrap()
    }

    #[test]
    fn square_request_gives_grid() {
        let c = sample_collocation(&helm(), 10_000, 400, 1).unwrap();
        assert_eq!(c.n_interior(), 10_000);
        let mut xs: Vec<f64> = (0..c.n_interior()).map(|i| c.interior_point(i)[0]).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        assert_eq!(xs.len(), 100);
    }

    #[test]
    fn points_respect_domain() {
        let p = helm();
        let c = sample_collocation(&p, 37, 101, 3).unwrap();
        for i in 0..c.n_interior() {
            assert!(p.domain.contains(c.interior_point(i)));
        }
        for i in 0..c.n_data() {
            let x = c.data_point(i);
            assert!(p.domain.contains(x));
            let on_edge = (0..2).any(|k| x[k] == p.domain.lo[k] || x[k] == p.domain.hi[k]);
            assert!(on_edge, "{x:?}");
        }
        let b = TaskConfig::new(Family::Burgers1d, vec![1.0, 0.1, 2.0]).unwrap();
        let p = PdeProblem::new(&b, 1.0).unwrap();
        let c = sample_collocation(&p, 50, 9, 3).unwrap();
        for i in 0..c.n_data() {
            let x = c.data_point(i);
            assert!(x[1] == 0.0 || x[0].abs() == 1.0);
            assert!(p.domain.contains(x));
        }
    }

    #[test]
    fn deterministic_and_empty_data() {
        let a = sample_collocation(&helm(), 50, 0, 9).unwrap();
        let b = sample_collocation(&helm(), 50, 0, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_data(), 0);
        assert!(sample_collocation(&helm(), 0, 0, 9).is_err());
    }
}
