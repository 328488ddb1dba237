//! Batched input jets: values plus first and second derivatives with respect
//! to the network inputs, carried through affine layers and elementwise
//! activations, with an exact reverse pass for parameter gradients.
//!
//! A [`JetBatch`] holds `width` units for `npts` points. Each unit row is laid
//! out component-major: `[value | d/dx_0 | .. | d/dx_{d-1} | d2/dx_i dx_j (i <= j)]`,
//! each block `npts` long. Affine maps act on every component identically
//! (the bias only touches the value block), which is what keeps the whole
//! propagation a handful of axpy/dot loops.

use super::Activation;

/// How many derivative levels a jet carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum JetOrder {
    Value,
    First,
    Second,
}

/// Number of jet components for `dim` input coordinates.
pub fn component_count(order: JetOrder, dim: usize) -> usize {
    match order {
        JetOrder::Value => 1,
        JetOrder::First => 1 + dim,
        JetOrder::Second => 1 + dim + dim * (dim + 1) / 2,
    }
}

/// Component index of the mixed second derivative `d2/dx_i dx_j`.
pub fn pair_component(dim: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    // Row i of the packed upper triangle starts at i*dim - i(i-1)/2.
    1 + dim + i * dim - i * i.saturating_sub(1) / 2 + (j - i)
}

#[derive(Debug, Clone, PartialEq)]
pub struct JetBatch {
    order: JetOrder,
    dim: usize,
    npts: usize,
    width: usize,
    data: Vec<f64>,
}

impl JetBatch {
    pub fn zeros(order: JetOrder, dim: usize, npts: usize, width: usize) -> Self {
        let ncomp = component_count(order, dim);
        Self {
            order,
            dim,
            npts,
            width,
            data: vec![0.0; width * ncomp * npts],
        }
    }

    /// Seeds input coordinates: `points` is row-major `npts x dim`.
    pub fn seed(points: &[f64], dim: usize, order: JetOrder) -> Self {
        assert!(dim > 0 && points.len() % dim == 0, "points not a multiple of dim");
        let npts = points.len() / dim;
        let mut jet = Self::zeros(order, dim, npts, dim);
        for unit in 0..dim {
            let row = jet.row_mut(unit);
            for p in 0..npts {
                row[p] = points[p * dim + unit];
            }
            if order >= JetOrder::First {
                let start = (1 + unit) * npts;
                row[start..start + npts].fill(1.0);
            }
        }
        jet
    }

    pub fn order(&self) -> JetOrder {
        self.order
    }

    /// Number of input coordinates derivatives are taken with respect to.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn npts(&self) -> usize {
        self.npts
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn ncomp(&self) -> usize {
        component_count(self.order, self.dim)
    }

    pub fn cols(&self) -> usize {
        self.ncomp() * self.npts
    }

    pub fn row(&self, unit: usize) -> &[f64] {
        let cols = self.cols();
        &self.data[unit * cols..(unit + 1) * cols]
    }

    pub fn row_mut(&mut self, unit: usize) -> &mut [f64] {
        let cols = self.cols();
        &mut self.data[unit * cols..(unit + 1) * cols]
    }

    #[inline]
    pub fn get(&self, unit: usize, comp: usize, p: usize) -> f64 {
        self.data[unit * self.cols() + comp * self.npts + p]
    }

    #[inline]
    pub fn set(&mut self, unit: usize, comp: usize, p: usize, v: f64) {
        let cols = self.cols();
        self.data[unit * cols + comp * self.npts + p] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &JetBatch) -> bool {
        self.order == other.order
            && self.dim == other.dim
            && self.npts == other.npts
            && self.width == other.width
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &JetBatch) {
        debug_assert!(self.same_shape(other));
        for (s, o) in self.data.iter_mut().zip(&other.data) {
            *s += a * o;
        }
    }

    pub fn scaled(&self, a: f64) -> JetBatch {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= a);
        out
    }

    pub fn dot(&self, other: &JetBatch) -> f64 {
        debug_assert!(self.same_shape(other));
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// `z = W a + b`, with `W` row-major `(outputs x inputs)`.
pub(crate) fn linear_forward(weights: &[f64], biases: &[f64], a: &JetBatch) -> JetBatch {
    let inputs = a.width;
    let outputs = biases.len();
    debug_assert_eq!(weights.len(), inputs * outputs);
    let mut z = JetBatch::zeros(a.order, a.dim, a.npts, outputs);
    let npts = a.npts;
    for o in 0..outputs {
        let w_row = &weights[o * inputs..(o + 1) * inputs];
        let zr = z.row_mut(o);
        for (i, &w) in w_row.iter().enumerate() {
            axpy(zr, w, a.row(i));
        }
        let b = biases[o];
        zr[..npts].iter_mut().for_each(|v| *v += b);
    }
    z
}

/// Accumulates `dW`, `db` and optionally returns the input adjoint.
pub(crate) fn linear_backward(
    weights: &[f64],
    a: &JetBatch,
    z_adj: &JetBatch,
    grad_w: &mut [f64],
    grad_b: &mut [f64],
    want_input: bool,
) -> Option<JetBatch> {
    let inputs = a.width;
    let outputs = z_adj.width;
    let npts = a.npts;
    for o in 0..outputs {
        let zr = z_adj.row(o);
        grad_b[o] += zr[..npts].iter().sum::<f64>();
        let gw = &mut grad_w[o * inputs..(o + 1) * inputs];
        for (i, g) in gw.iter_mut().enumerate() {
            *g += dot(zr, a.row(i));
        }
    }
    if !want_input {
        return None;
    }
    let mut a_adj = JetBatch::zeros(a.order, a.dim, npts, inputs);
    for o in 0..outputs {
        let zr = z_adj.row(o);
        let w_row = &weights[o * inputs..(o + 1) * inputs];
        for (i, &w) in w_row.iter().enumerate() {
            axpy(a_adj.row_mut(i), w, zr);
        }
    }
    Some(a_adj)
}

/// Elementwise activation applied to a pre-activation jet.
pub(crate) fn activation_forward(act: Activation, z: &JetBatch) -> JetBatch {
    let mut h = JetBatch::zeros(z.order, z.dim, z.npts, z.width);
    let (npts, dim) = (z.npts, z.dim);
    let pairs = pair_list(dim);
    for u in 0..z.width {
        let zr = z.row(u);
        let hr = h.row_mut(u);
        for p in 0..npts {
            let [s0, s1, s2, _] = act.derivatives(zr[p]);
            hr[p] = s0;
            if z.order >= JetOrder::First {
                for i in 0..dim {
                    hr[(1 + i) * npts + p] = s1 * zr[(1 + i) * npts + p];
                }
            }
            if z.order == JetOrder::Second {
                for &(i, j, c) in &pairs {
                    let zi = zr[(1 + i) * npts + p];
                    let zj = zr[(1 + j) * npts + p];
                    hr[c * npts + p] = s2 * zi * zj + s1 * zr[c * npts + p];
                }
            }
        }
    }
    h
}

/// Reverse pass of [`activation_forward`]: maps the output adjoint to the
/// pre-activation adjoint.
pub(crate) fn activation_backward(act: Activation, z: &JetBatch, h_adj: &JetBatch) -> JetBatch {
    let mut z_adj = JetBatch::zeros(z.order, z.dim, z.npts, z.width);
    let (npts, dim) = (z.npts, z.dim);
    let pairs = pair_list(dim);
    for u in 0..z.width {
        let zr = z.row(u);
        let hr = h_adj.row(u);
        let ar = z_adj.row_mut(u);
        for p in 0..npts {
            let [_, s1, s2, s3] = act.derivatives(zr[p]);
            let mut a0 = hr[p] * s1;
            if z.order >= JetOrder::First {
                for i in 0..dim {
                    let k = (1 + i) * npts + p;
                    a0 += hr[k] * s2 * zr[k];
                    ar[k] = hr[k] * s1;
                }
            }
            if z.order == JetOrder::Second {
                for &(i, j, c) in &pairs {
                    let k = c * npts + p;
                    let hij = hr[k];
                    let ki = (1 + i) * npts + p;
                    let kj = (1 + j) * npts + p;
                    let (zi, zj) = (zr[ki], zr[kj]);
                    a0 += hij * (s3 * zi * zj + s2 * zr[k]);
                    ar[ki] += hij * s2 * zj;
                    ar[kj] += hij * s2 * zi;
                    ar[k] = hij * s1;
                }
            }
            ar[p] = a0;
        }
    }
    z_adj
}

/// `(i, j, component)` for every `i <= j`.
pub fn pair_list(dim: usize) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::with_capacity(dim * (dim + 1) / 2);
    let mut c = 1 + dim;
    for i in 0..dim {
        for j in i..dim {
            out.push((i, j, c));
            c += 1;
        }
    }
    out
}
