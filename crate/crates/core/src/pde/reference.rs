//! Reference solution fields on tensor-product grids.
//!
//! Binary layout (little-endian), version 1:
//!
//! ```text
//! magic      8 bytes  "LAMREF\0\0"
//! version    u32      1
//! provenance u32      0 = analytic, 1 = finite difference
//! nx, nt     u32 x2   solver parameters (0 for analytic)
//! naxes      u32
//! axis[k]    u64 length, then length x f64
//! values     u64 length, then length x f64 (row-major, first axis slowest)
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Domain;
use crate::binio::{ByteReader, ByteWriter};
use crate::tasks::TaskConfig;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"LAMREF\0\0";
pub const REFERENCE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Analytic,
    FiniteDifference { nx: u32, nt: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceField {
    pub axes: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub provenance: Provenance,
}

impl ReferenceField {
    pub fn new(axes: Vec<Vec<f64>>, values: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if axes.is_empty() || axes.iter().any(|a| a.is_empty()) {
            return Err(Error::Contract("reference grid needs nonempty axes".into()));
        }
        for a in &axes {
            if a.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Contract("reference axes must be strictly increasing".into()));
            }
        }
        let n: usize = axes.iter().map(Vec::len).product();
        if values.len() != n {
            return Err(Error::InputShape {
                expected: n,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericOverflow {
                context: "reference field values".into(),
            });
        }
        Ok(Self {
            axes,
            values,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    /// Grid nodes in value order, flattened row-major (`len x dim`).
    pub fn nodes(&self) -> Vec<f64> {
        let dim = self.dim();
        let mut out = Vec::with_capacity(self.len() * dim);
        let mut idx = vec![0usize; dim];
        for _ in 0..self.len() {
            for (k, &i) in idx.iter().enumerate() {
                out.push(self.axes[k][i]);
            }
            for k in (0..dim).rev() {
                idx[k] += 1;
                if idx[k] < self.axes[k].len() {
                    break;
                }
                idx[k] = 0;
            }
        }
        out
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1usize; self.dim()];
        for k in (0..self.dim().saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.axes[k + 1].len();
        }
        s
    }

    /// Value at a grid index tuple.
    pub fn at(&self, idx: &[usize]) -> f64 {
        let off: usize = idx.iter().zip(self.strides()).map(|(i, s)| i * s).sum();
        self.values[off]
    }

    /// Multilinear interpolation, clamped to the grid box.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let dim = self.dim();
        let strides = self.strides();
        let mut base = vec![0usize; dim];
        let mut frac = vec![0.0; dim];
        for k in 0..dim {
            let a = &self.axes[k];
            if a.len() == 1 {
                continue;
            }
            let v = x[k].clamp(a[0], a[a.len() - 1]);
            let i = match a.partition_point(|&g| g <= v) {
                0 => 0,
                p => (p - 1).min(a.len() - 2),
            };
            base[k] = i;
            frac[k] = (v - a[i]) / (a[i + 1] - a[i]);
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << dim) {
            let mut w = 1.0;
            let mut off = 0;
            for k in 0..dim {
                let up = (corner >> k) & 1 == 1;
                if self.axes[k].len() == 1 {
                    if up {
                        w = 0.0;
                    }
                    continue;
                }
                w *= if up { frac[k] } else { 1.0 - frac[k] };
                off += (base[k] + up as usize) * strides[k];
            }
            if w != 0.0 {
                acc += w * self.values[off];
            }
        }
        acc
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::default();
        w.bytes(MAGIC);
        w.u32(REFERENCE_FORMAT_VERSION);
        match self.provenance {
            Provenance::Analytic => {
                w.u32(0);
                w.u32(0);
                w.u32(0);
            }
            Provenance::FiniteDifference { nx, nt } => {
                w.u32(1);
                w.u32(nx);
                w.u32(nt);
            }
        }
        w.u32(self.axes.len() as u32);
        for a in &self.axes {
            w.f64s(a);
        }
        w.f64s(&self.values);
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(MAGIC)?;
        let version = r.u32()?;
        if version != REFERENCE_FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: REFERENCE_FORMAT_VERSION,
            });
        }
        let tag_at = r.offset();
        let tag = r.u32()?;
        let (nx, nt) = (r.u32()?, r.u32()?);
        let provenance = match tag {
            0 => Provenance::Analytic,
            1 => Provenance::FiniteDifference { nx, nt },
            t => {
                return Err(Error::Parse {
                    offset: tag_at,
                    message: format!("unknown provenance tag {t}"),
                })
            }
        };
        let naxes = r.u32()? as usize;
        let axes = (0..naxes).map(|_| r.f64s()).collect::<Result<Vec<_>>>()?;
        let values_at = r.offset();
        let values = r.f64s()?;
        r.finish()?;
        ReferenceField::new(axes, values, provenance).map_err(|e| Error::Parse {
            offset: values_at,
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// `n` evenly spaced nodes from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n)
            .map(|i| if i == n - 1 { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
            .collect(),
    }
}

/// Exact Helmholtz field on an `n x n` grid spanning the domain.
pub fn helmholtz_reference(task: &TaskConfig, domain: &Domain, n: usize) -> Result<ReferenceField> {
    if n < 2 {
        return Err(Error::Config("reference grid needs at least 2 nodes per axis".into()));
    }
    let xs = linspace(domain.lo[0], domain.hi[0], n);
    let ys = linspace(domain.lo[1], domain.hi[1], n);
    let mut values = Vec::with_capacity(n * n);
    for &x in &xs {
        for &y in &ys {
            values.push(super::helmholtz_exact(task, x, y)?);
        }
    }
    ReferenceField::new(vec![xs, ys], values, Provenance::Analytic)
}
