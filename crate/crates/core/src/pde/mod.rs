//! PDE problem definitions, reference solutions, collocation and the PINN loss.

pub mod burgers;
pub mod colloc;
pub mod loss;
pub mod reference;

use serde::{Deserialize, Serialize};

use crate::net::EvalJet;
use crate::tasks::{Family, TaskConfig};
use crate::{Error, Result};

pub use burgers::{burgers_reference_solve, burgers_stable_steps};
pub use colloc::{sample_collocation, CollocationSet};
pub use loss::{mse_on_grid, mse_on_grid_par, mse_on_grid_with, BoundLoss, LossBreakdown, PinnObjective};
pub use reference::{helmholtz_reference, Provenance, ReferenceField};

/// Half-width of the Helmholtz square domain before scaling.
pub const HELMHOLTZ_HALF_WIDTH: f64 = 30.0;

/// Jet components for two input coordinates: `[u, u_0, u_1, u_00, u_01, u_11]`.
pub const COMPONENTS_2D: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Domain {
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Operator {
    /// `u_xx + u_yy + k u`, `k = 1/B^2 + 1/C^2`.
    Helmholtz { k: f64 },
    /// `u_t + 2 alpha u u_x - nu u_xx`, coordinates `(x, t)`.
    Burgers { alpha: f64, nu: f64 },
}

/// One PDE instance: family, domain and the residual operator of a task.
#[derive(Debug, Clone, PartialEq)]
pub struct PdeProblem {
    pub task: TaskConfig,
    pub domain: Domain,
    op: Operator,
}

impl PdeProblem {
    /// `domain_scale` shrinks the Helmholtz square; Burgers always uses
    /// `x in [-1, 1], t in [0, 1]`.
    pub fn new(task: &TaskConfig, domain_scale: f64) -> Result<Self> {
        if !(domain_scale > 0.0 && domain_scale.is_finite()) {
            return Err(Error::Config(format!("domain scale must be positive, got {domain_scale}")));
        }
        let (domain, op) = match task.family {
            Family::Helmholtz2d => {
                let (b, c) = (task.value(1), task.value(2));
                if b == 0.0 || c == 0.0 {
                    return Err(Error::InvalidTask(format!("B and C must be nonzero: {:?}", task.values)));
                }
                let h = HELMHOLTZ_HALF_WIDTH * domain_scale;
                (
                    Domain {
                        lo: vec![-h, -h],
                        hi: vec![h, h],
                    },
                    Operator::Helmholtz {
                        k: 1.0 / (b * b) + 1.0 / (c * c),
                    },
                )
            }
            Family::Burgers1d => (
                Domain {
                    lo: vec![-1.0, 0.0],
                    hi: vec![1.0, 1.0],
                },
                Operator::Burgers {
                    alpha: task.value(0),
                    nu: task.value(1),
                },
            ),
        };
        Ok(Self {
            task: task.clone(),
            domain,
            op,
        })
    }

    pub fn family(&self) -> Family {
        self.task.family
    }

    /// Residual and its partials with respect to the jet components
    /// `[u, u_0, u_1, u_00, u_01, u_11]`.
    #[inline]
    pub fn residual_terms(&self, c: &[f64; COMPONENTS_2D]) -> (f64, [f64; COMPONENTS_2D]) {
        match self.op {
            Operator::Helmholtz { k } => (c[3] + c[5] + k * c[0], [k, 0.0, 0.0, 1.0, 0.0, 1.0]),
            Operator::Burgers { alpha, nu } => {
                let (u, ux, ut, uxx) = (c[0], c[1], c[2], c[3]);
                (
                    ut + 2.0 * alpha * u * ux - nu * uxx,
                    [2.0 * alpha * ux, 2.0 * alpha * u, 1.0, -nu, 0.0, 0.0],
                )
            }
        }
    }

    /// Residual evaluated on a single jet.
    pub fn residual(&self, jet: &EvalJet) -> Result<f64> {
        match self.task.family {
            Family::Helmholtz2d => helmholtz_residual(jet, &self.task),
            Family::Burgers1d => burgers_residual(jet, &self.task),
        }
    }

    /// Exact boundary/initial values used as data targets.
    pub fn boundary_value(&self, x: &[f64]) -> f64 {
        match self.task.family {
            Family::Helmholtz2d => helmholtz_exact_unchecked(&self.task, x[0], x[1]),
            Family::Burgers1d => {
                if x[1] == 0.0 {
                    -self.task.value(2) * (std::f64::consts::PI * x[0]).sin()
                } else {
                    0.0
                }
            }
        }
    }
}

fn helmholtz_exact_unchecked(task: &TaskConfig, x: f64, y: f64) -> f64 {
    let (a, b, c) = (task.value(0), task.value(1), task.value(2));
    a * (x / b).sin() * (y / c).sin()
}

fn check_helmholtz(task: &TaskConfig) -> Result<()> {
    if task.family != Family::Helmholtz2d {
        return Err(Error::InvalidTask(format!("{} task passed to Helmholtz", task.family)));
    }
    if task.value(1) == 0.0 || task.value(2) == 0.0 {
        return Err(Error::InvalidTask(format!("B and C must be nonzero: {:?}", task.values)));
    }
    Ok(())
}

/// `A sin(x/B) sin(y/C)`.
pub fn helmholtz_exact(task: &TaskConfig, x: f64, y: f64) -> Result<f64> {
    check_helmholtz(task)?;
    Ok(helmholtz_exact_unchecked(task, x, y))
}

/// Closed-form jet of the exact Helmholtz field.
pub fn helmholtz_exact_jet(task: &TaskConfig, x: f64, y: f64) -> Result<EvalJet> {
    check_helmholtz(task)?;
    let (a, b, c) = (task.value(0), task.value(1), task.value(2));
    let (sx, cx) = (x / b).sin_cos();
    let (sy, cy) = (y / c).sin_cos();
    let u = a * sx * sy;
    let uxy = a * cx * cy / (b * c);
    Ok(EvalJet {
        value: u,
        d_input: vec![a * cx * sy / b, a * sx * cy / c],
        d2_input: vec![vec![-u / (b * b), uxy], vec![uxy, -u / (c * c)]],
    })
}

fn require_second(jet: &EvalJet) -> Result<()> {
    if jet.d_input.len() != 2 || jet.d2_input.len() != 2 || jet.d2_input.iter().any(|r| r.len() != 2) {
        return Err(Error::Contract(
            "residual needs first and second derivatives in both coordinates".into(),
        ));
    }
    Ok(())
}

/// `u_xx + u_yy + u/B^2 + u/C^2`.
pub fn helmholtz_residual(jet: &EvalJet, task: &TaskConfig) -> Result<f64> {
    check_helmholtz(task)?;
    require_second(jet)?;
    let (b, c) = (task.value(1), task.value(2));
    Ok(jet.d2_input[0][0] + jet.d2_input[1][1] + jet.value / (b * b) + jet.value / (c * c))
}

/// `u_t + 2 alpha u u_x - nu u_xx`, with the jet taken in `(x, t)`.
pub fn burgers_residual(jet: &EvalJet, task: &TaskConfig) -> Result<f64> {
    if task.family != Family::Burgers1d {
        return Err(Error::InvalidTask(format!("{} task passed to Burgers", task.family)));
    }
    require_second(jet)?;
    let (alpha, nu) = (task.value(0), task.value(1));
    Ok(jet.d_input[1] + 2.0 * alpha * jet.value * jet.d_input[0] - nu * jet.d2_input[0][0])
}

/// Everything needed to turn a task into a trainable problem: domain scale,
/// collocation budget and evaluation grid resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSetup {
    pub family: Family,
    pub domain_scale: f64,
    pub m_interior: usize,
    pub n_data: usize,
    /// Nodes per axis of the evaluation grid (Helmholtz) or spatial
    /// intervals of the reference solve (Burgers).
    pub eval_resolution: usize,
    /// Time snapshots kept by the Burgers reference solve.
    pub eval_snapshots: usize,
}

impl BenchSetup {
    pub fn problem(&self, task: &TaskConfig) -> Result<PdeProblem> {
        if task.family != self.family {
            return Err(Error::InvalidTask(format!(
                "{} task in a {} setup",
                task.family, self.family
            )));
        }
        PdeProblem::new(task, self.domain_scale)
    }

    pub fn objective(&self, task: &TaskConfig, seed: u64) -> Result<PinnObjective> {
        let problem = self.problem(task)?;
        let colloc = sample_collocation(&problem, self.m_interior, self.n_data, seed)?;
        PinnObjective::new(problem, colloc)
    }

    pub fn reference(&self, task: &TaskConfig) -> Result<ReferenceField> {
        let problem = self.problem(task)?;
        match self.family {
            Family::Helmholtz2d => helmholtz_reference(task, &problem.domain, self.eval_resolution),
            Family::Burgers1d => {
                let nt = burgers_stable_steps(task, self.eval_resolution, self.eval_snapshots)?;
                burgers_reference_solve(task, self.eval_resolution, nt, self.eval_snapshots)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn helm(a: f64, b: f64, c: f64) -> TaskConfig {
        TaskConfig::new(Family::Helmholtz2d, vec![a, b, c]).unwrap()
    }

    #[test]
    fn exact_values() {
        let t = helm(7.0, 7.0, 7.0);
        assert_eq!(helmholtz_exact(&t, 0.0, 3.3).unwrap(), 0.0);
        let p = 7.0 * std::f64::consts::FRAC_PI_2;
        assert!((helmholtz_exact(&t, p, p).unwrap() - 7.0).abs() < 1e-12);
        let h = std::f64::consts::FRAC_PI_2;
        assert!((helmholtz_exact(&helm(1.0, 1.0, 1.0), h, h).unwrap() - 1.0).abs() < 1e-15);
        let bad = helm(1.0, 0.0, 2.0);
        assert!(matches!(helmholtz_exact(&bad, 1.0, 1.0), Err(Error::InvalidTask(_))));
    }

    #[test]
    fn residual_of_constant_and_zero_fields() {
        let t = helm(3.0, 2.0, 4.0);
        let jet = |v: f64| EvalJet {
            value: v,
            d_input: vec![0.0, 0.0],
            d2_input: vec![vec![0.0; 2]; 2],
        };
        assert_eq!(helmholtz_residual(&jet(0.0), &t).unwrap(), 0.0);
        let r = helmholtz_residual(&jet(2.5), &t).unwrap();
        assert!((r - 2.5 * (0.25 + 1.0 / 16.0)).abs() < 1e-15);
        let b = TaskConfig::new(Family::Burgers1d, vec![1.0, 0.1, 2.0]).unwrap();
        assert_eq!(burgers_residual(&jet(0.0), &b).unwrap(), 0.0);
        assert_eq!(burgers_residual(&jet(3.0), &b).unwrap(), 0.0);
    }

    #[test]
    fn missing_second_derivatives_rejected() {
        let t = helm(3.0, 2.0, 4.0);
        let jet = EvalJet {
            value: 1.0,
            d_input: vec![0.0, 0.0],
            d2_input: vec![],
        };
        assert!(matches!(helmholtz_residual(&jet, &t), Err(Error::Contract(_))));
    }

    #[test]
    fn residual_terms_match_jet_residual() {
        let t = helm(5.0, 3.0, 9.0);
        let p = PdeProblem::new(&t, 1.0).unwrap();
        let j = helmholtz_exact_jet(&t, 1.3, -2.2).unwrap();
        let c = [j.value, j.d_input[0], j.d_input[1], j.d2_input[0][0], j.d2_input[0][1], j.d2_input[1][1]];
        assert!((p.residual_terms(&c).0 - p.residual(&j).unwrap()).abs() < 1e-15);

        let b = TaskConfig::new(Family::Burgers1d, vec![1.5, 0.05, 2.0]).unwrap();
        let p = PdeProblem::new(&b, 1.0).unwrap();
        let j = EvalJet {
            value: 0.7,
            d_input: vec![-1.1, 0.4],
            d2_input: vec![vec![2.0, 0.3], vec![0.3, -0.5]],
        };
        let c = [0.7, -1.1, 0.4, 2.0, 0.3, -0.5];
        let (r, d) = p.residual_terms(&c);
        assert!((r - p.residual(&j).unwrap()).abs() < 1e-15);
        // partials by central differences on the (polynomial) residual
        for k in 0..COMPONENTS_2D {
            let (mut up, mut dn) = (c, c);
            up[k] += 1e-6;
            dn[k] -= 1e-6;
            let fd = (p.residual_terms(&up).0 - p.residual_terms(&dn).0) / 2e-6;
            assert!((fd - d[k]).abs() < 1e-8, "component {k}");
        }
    }

    #[test]
    fn domains() {
        let p = PdeProblem::new(&helm(1.0, 2.0, 3.0), 0.1).unwrap();
        assert_eq!(p.domain.lo, vec![-3.0, -3.0]);
        assert_eq!(p.domain.hi, vec![3.0, 3.0]);
        let b = TaskConfig::new(Family::Burgers1d, vec![1.0, 0.1, 2.0]).unwrap();
        let p = PdeProblem::new(&b, 0.1).unwrap();
        assert_eq!(p.domain.lo, vec![-1.0, 0.0]);
        assert!(p.domain.contains(&[0.0, 0.5]));
    }
}
