//! The composite PINN objective: mean squared data mismatch plus mean squared
//! PDE residual, with unit weights, and the grid MSE used for evaluation.

use super::colloc::CollocationSet;
use super::reference::ReferenceField;
use super::{PdeProblem, COMPONENTS_2D};
use crate::exec::{map_ordered, Parallelism};
use crate::net::jet::{JetBatch, JetOrder};
use crate::net::{DifferentiableLoss, Surrogate};
use crate::{Error, Result};

/// Points per work item. Fixed so that reductions are schedule-independent.
pub const CHUNK: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub data: f64,
    pub physics: f64,
}

#[derive(Debug, Clone)]
enum Kind {
    Physics,
    Data { targets: Vec<f64> },
}

#[derive(Debug, Clone)]
struct Chunk {
    kind: Kind,
    jets: JetBatch,
    points: Vec<f64>,
}

struct Partial {
    physics: f64,
    data: f64,
    grad: Vec<f64>,
}

/// A task's loss over a fixed collocation set, with pre-seeded input jets.
#[derive(Debug, Clone)]
pub struct PinnObjective {
    pub problem: PdeProblem,
    pub colloc: CollocationSet,
    chunks: Vec<Chunk>,
    parallelism: Parallelism,
}

impl PinnObjective {
    pub fn new(problem: PdeProblem, colloc: CollocationSet) -> Result<Self> {
        if colloc.n_interior() == 0 && colloc.n_data() == 0 {
            return Err(Error::Config("loss needs interior or data points".into()));
        }
        let dim = colloc.dim;
        let mut chunks = Vec::new();
        for pts in colloc.interior.chunks(CHUNK * dim) {
            chunks.push(Chunk {
                kind: Kind::Physics,
                jets: JetBatch::seed(pts, dim, JetOrder::Second),
                points: pts.to_vec(),
            });
        }
        for (pts, targets) in colloc
            .data_points
            .chunks(CHUNK * dim)
            .zip(colloc.data_targets.chunks(CHUNK))
        {
            chunks.push(Chunk {
                kind: Kind::Data {
                    targets: targets.to_vec(),
                },
                jets: JetBatch::seed(pts, dim, JetOrder::Value),
                points: pts.to_vec(),
            });
        }
        Ok(Self {
            problem,
            colloc,
            chunks,
            parallelism: Parallelism::default(),
        })
    }

    pub fn with_parallelism(mut self, mode: Parallelism) -> Self {
        self.parallelism = mode;
        self
    }

    pub fn set_parallelism(&mut self, mode: Parallelism) {
        self.parallelism = mode;
    }

    pub fn parallelism(&self) -> Parallelism {
        self.parallelism
    }

    fn scales(&self) -> (f64, f64) {
        let m = self.colloc.n_interior();
        let n = self.colloc.n_data();
        (
            if m > 0 { 1.0 / m as f64 } else { 0.0 },
            if n > 0 { 1.0 / n as f64 } else { 0.0 },
        )
    }

    fn components(out: &JetBatch, p: usize) -> [f64; COMPONENTS_2D] {
        let mut c = [0.0; COMPONENTS_2D];
        for (k, v) in c.iter_mut().enumerate() {
            *v = out.get(0, k, p);
        }
        c
    }

    fn chunk_eval<S: Surrogate>(&self, model: &S, chunk: &Chunk, want_grad: bool) -> Result<Partial> {
        let (inv_m, inv_n) = self.scales();
        let dim = self.colloc.dim;
        let npts = chunk.jets.npts();
        let (out, tape) = if want_grad {
            let (o, t) = model.forward(&chunk.jets)?;
            (o, Some(t))
        } else {
            (model.eval(&chunk.jets)?, None)
        };
        let mut adj = tape
            .as_ref()
            .map(|_| JetBatch::zeros(out.order(), out.dim(), npts, out.width()));
        let mut part = Partial {
            physics: 0.0,
            data: 0.0,
            grad: Vec::new(),
        };
        match &chunk.kind {
            Kind::Physics => {
                for p in 0..npts {
                    let (r, dr) = self.problem.residual_terms(&Self::components(&out, p));
                    if !r.is_finite() {
                        return Err(Error::NonFiniteLoss {
                            term: "physics",
                            point: chunk.points[p * dim..(p + 1) * dim].to_vec(),
                        });
                    }
                    part.physics += r * r;
                    if let Some(adj) = adj.as_mut() {
                        let s = 2.0 * r * inv_m;
                        for (k, d) in dr.iter().enumerate() {
                            if *d != 0.0 {
                                adj.set(0, k, p, s * d);
                            }
                        }
                    }
                }
            }
            Kind::Data { targets } => {
                for p in 0..npts {
                    let e = out.get(0, 0, p) - targets[p];
                    if !e.is_finite() {
                        return Err(Error::NonFiniteLoss {
                            term: "data",
                            point: chunk.points[p * dim..(p + 1) * dim].to_vec(),
                        });
                    }
                    part.data += e * e;
                    if let Some(adj) = adj.as_mut() {
                        adj.set(0, 0, p, 2.0 * e * inv_n);
                    }
                }
            }
        }
        if let (Some(tape), Some(adj)) = (tape, adj) {
            part.grad = vec![0.0; model.num_params()];
            model.backward(&tape, &adj, &mut part.grad);
        }
        Ok(part)
    }

    fn run<S: Surrogate>(&self, model: &S, want_grad: bool) -> Result<(LossBreakdown, Vec<f64>)> {
        if model.input_dim() != self.colloc.dim {
            return Err(Error::InputShape {
                expected: self.colloc.dim,
                got: model.input_dim(),
            });
        }
        let parts = map_ordered(&self.chunks, self.parallelism, |c| self.chunk_eval(model, c, want_grad));
        let (inv_m, inv_n) = self.scales();
        let mut physics = 0.0;
        let mut data = 0.0;
        let mut grad = if want_grad { vec![0.0; model.num_params()] } else { Vec::new() };
        for part in parts {
            let part = part?;
            physics += part.physics;
            data += part.data;
            for (g, v) in grad.iter_mut().zip(&part.grad) {
                *g += v;
            }
        }
        let physics = physics * inv_m;
        let data = data * inv_n;
        Ok((
            LossBreakdown {
                total: data + physics,
                data,
                physics,
            },
            grad,
        ))
    }

    pub fn loss<S: Surrogate>(&self, model: &S) -> Result<LossBreakdown> {
        Ok(self.run(model, false)?.0)
    }

    /// Loss and its exact gradient in the model's flat parameter layout.
    pub fn loss_and_grad<S: Surrogate>(&self, model: &S) -> Result<(LossBreakdown, Vec<f64>)> {
        self.run(model, true)
    }

    /// Binds a model template so the objective can be probed as a function of
    /// its flat parameters.
    pub fn bind<'a, S: Surrogate + Clone>(&'a self, template: &'a S) -> BoundLoss<'a, S> {
        BoundLoss {
            objective: self,
            template,
        }
    }
}

/// [`PinnObjective`] viewed as a function of a model's parameters.
pub struct BoundLoss<'a, S> {
    objective: &'a PinnObjective,
    template: &'a S,
}

impl<S: Surrogate + Clone> DifferentiableLoss for BoundLoss<'_, S> {
    fn value_and_gradient(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut model = self.template.clone();
        model.set_param_values(params)?;
        let (l, g) = self.objective.loss_and_grad(&model)?;
        Ok((l.total, g))
    }
}

/// Mean squared difference between `model` output 0 and the reference on all
/// grid nodes.
pub fn mse_on_grid<S: Surrogate>(model: &S, reference: &ReferenceField) -> Result<f64> {
    mse_on_grid_par(model, reference, Parallelism::default())
}

pub fn mse_on_grid_par<S: Surrogate>(
    model: &S,
    reference: &ReferenceField,
    mode: Parallelism,
) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::Contract("empty reference field".into()));
    }
    let dim = reference.dim();
    if model.input_dim() != dim {
        return Err(Error::InputShape {
            expected: dim,
            got: model.input_dim(),
        });
    }
    let nodes = reference.nodes();
    let blocks: Vec<(usize, &[f64])> = nodes.chunks(CHUNK * dim).enumerate().collect();
    let sums = map_ordered(&blocks, mode, |&(b, pts)| -> Result<f64> {
        let out = model.eval(&JetBatch::seed(pts, dim, JetOrder::Value))?;
        let base = b * CHUNK;
        Ok((0..out.npts())
            .map(|p| {
                let e = out.get(0, 0, p) - reference.values[base + p];
                e * e
            })
            .sum())
    });
    let mut total = 0.0;
    for s in sums {
        total += s?;
    }
    let mse = total / reference.len() as f64;
    if !mse.is_finite() {
        return Err(Error::NumericOverflow {
            context: "grid MSE".into(),
        });
    }
    Ok(mse)
}

/// Grid MSE of an arbitrary pointwise predictor.
pub fn mse_on_grid_with<F: Fn(&[f64]) -> f64>(predict: F, reference: &ReferenceField) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::Contract("empty reference field".into()));
    }
    let nodes = reference.nodes();
    let dim = reference.dim();
    let total: f64 = nodes
        .chunks(dim)
        .zip(&reference.values)
        .map(|(x, v)| {
            let e = predict(x) - v;
            e * e
        })
        .sum();
    Ok(total / reference.len() as f64)
}
