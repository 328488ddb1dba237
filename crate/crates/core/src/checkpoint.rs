//! Versioned binary checkpoints for plain and modular networks.
//!
//! Layout (little-endian), version 1:
//!
//! ```text
//! magic        8 bytes  "LAMCKPT\0"
//! version      u32
//! family       u32      1 = helmholtz2d, 2 = burgers1d
//! k            u32      cluster networks; 0 marks a plain network
//! split_depth  u32      0 for a plain network
//! activation   u8       0 = tanh, 1 = sin
//! nets         u32      count, then per net: u32 size count, u32 sizes, u8 activated output
//! params       per net: u64 length, then f64 values (layer by layer, weights then biases)
//! lambdas      u64 length, then f64 values
//! seeds        u64 length, then u64 values
//! clusters     u64 length, then u32 cluster index per training task
//! ```
//!
//! Modular nets store `in0`, the `k` cluster networks and the meta network in
//! that order.

use std::path::Path;

use crate::binio::{ByteReader, ByteWriter};
use crate::lam::ModularNet;
use crate::net::{Activation, Dense, DenseNet};
use crate::tasks::Family;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"LAMCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Plain(DenseNet),
    Modular(ModularNet),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub family: Family,
    pub model: Model,
    pub seeds: Vec<u64>,
    pub assignments: Vec<usize>,
}

fn write_shape(w: &mut ByteWriter, net: &DenseNet) {
    w.u32(net.sizes().len() as u32);
    for &s in net.sizes() {
        w.u32(s as u32);
    }
    w.u8(net.activates_output() as u8);
}

struct Shape {
    sizes: Vec<usize>,
    activated: bool,
}

fn read_shape(r: &mut ByteReader) -> Result<Shape> {
    let n = r.u32()? as usize;
    if n < 2 || n > 1024 {
        return Err(r.error(format!("implausible layer count {n}")));
    }
    let sizes = (0..n).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    let at = r.offset();
    let activated = match r.u8()? {
        0 => false,
        1 => true,
        b => {
            return Err(Error::Parse {
                offset: at,
                message: format!("bad output-activation flag {b}"),
            })
        }
    };
    Ok(Shape { sizes, activated })
}

fn build(shape: &Shape, act: Activation, values: &[f64], at: usize) -> Result<DenseNet> {
    let mut layers = Vec::with_capacity(shape.sizes.len() - 1);
    let mut off = 0;
    for w in shape.sizes.windows(2) {
        let (i, o) = (w[0], w[1]);
        let need = i * o + o;
        if values.len() < off + need {
            return Err(Error::Parse {
                offset: at,
                message: "parameter block shorter than its layer sizes".into(),
            });
        }
        layers.push(Dense {
            inputs: i,
            outputs: o,
            weights: values[off..off + i * o].to_vec(),
            biases: values[off + i * o..off + need].to_vec(),
        });
        off += need;
    }
    if off != values.len() {
        return Err(Error::Parse {
            offset: at,
            message: "parameter block longer than its layer sizes".into(),
        });
    }
    DenseNet::from_layers(layers, act, shape.activated).map_err(|e| Error::Parse {
        offset: at,
        message: e.to_string(),
    })
}

impl Checkpoint {
    fn nets(&self) -> Vec<&DenseNet> {
        match &self.model {
            Model::Plain(n) => vec![n],
            Model::Modular(m) => {
                let mut v = vec![&m.in0];
                v.extend(m.in_cluster.iter());
                v.push(&m.meta);
                v
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::default();
        w.bytes(MAGIC);
        w.u32(CHECKPOINT_VERSION);
        w.u32(self.family.code());
        let (k, depth, lambdas) = match &self.model {
            Model::Plain(_) => (0, 0, Vec::new()),
            Model::Modular(m) => (m.k(), m.split_depth, m.lambdas.clone()),
        };
        w.u32(k as u32);
        w.u32(depth as u32);
        let nets = self.nets();
        w.u8(nets[0].activation().code());
        w.u32(nets.len() as u32);
        for n in &nets {
            write_shape(&mut w, n);
        }
        for n in &nets {
            w.f64s(&n.params().values);
        }
        w.f64s(&lambdas);
        w.u64(self.seeds.len() as u64);
        for &s in &self.seeds {
            w.u64(s);
        }
        w.u64(self.assignments.len() as u64);
        for &a in &self.assignments {
            w.u32(a as u32);
        }
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(MAGIC)?;
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let at = r.offset();
        let family = Family::from_code(r.u32()?).ok_or_else(|| Error::Parse {
            offset: at,
            message: "unknown family code".into(),
        })?;
        let k = r.u32()? as usize;
        let depth = r.u32()? as usize;
        let at = r.offset();
        let act = Activation::from_code(r.u8()?).ok_or_else(|| Error::Parse {
            offset: at,
            message: "unknown activation code".into(),
        })?;
        let at = r.offset();
        let count = r.u32()? as usize;
        let expected = if k == 0 { 1 } else { k + 2 };
        if count != expected {
            return Err(Error::Parse {
                offset: at,
                message: format!("{count} networks recorded, header implies {expected}"),
            });
        }
        let shapes = (0..count).map(|_| read_shape(&mut r)).collect::<Result<Vec<_>>>()?;
        let mut nets = Vec::with_capacity(count);
        for s in &shapes {
            let at = r.offset();
            let values = r.f64s()?;
            nets.push(build(s, act, &values, at)?);
        }
        let at = r.offset();
        let lambdas = r.f64s()?;
        let n_seeds = r.u64()? as usize;
        if n_seeds > bytes.len() / 8 {
            return Err(r.error("seed count exceeds file size"));
        }
        let seeds = (0..n_seeds).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        let n_assign = r.u64()? as usize;
        if n_assign > bytes.len() / 4 {
            return Err(r.error("cluster table exceeds file size"));
        }
        let assignments = (0..n_assign)
            .map(|_| r.u32().map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        r.finish()?;
        let model = if k == 0 {
            Model::Plain(nets.pop().expect("one network"))
        } else {
            let meta = nets.pop().expect("meta network");
            let in0 = nets.remove(0);
            Model::Modular(
                ModularNet::from_parts(in0, nets, meta, lambdas, depth).map_err(|e| Error::Parse {
                    offset: at,
                    message: e.to_string(),
                })?,
            )
        };
        Ok(Self {
            family,
            model,
            seeds,
            assignments,
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lam::split_pretrained;

    fn modular() -> Checkpoint {
        let p = DenseNet::new(&[2, 10, 10, 10, 1], Activation::Tanh, 1).unwrap();
        let mut m = split_pretrained(&p, 2, 3, 5).unwrap();
        m.lambdas = vec![0.25, 0.5, 1.0];
        Checkpoint {
            family: Family::Helmholtz2d,
            model: Model::Modular(m),
            seeds: vec![42, 7],
            assignments: vec![0, 2, 1, 1, 0],
        }
    }

    #[test]
    fn round_trips() {
        let c = modular();
        assert_eq!(Checkpoint::from_bytes(&c.to_bytes()).unwrap(), c);
        let plain = Checkpoint {
            family: Family::Burgers1d,
            model: Model::Plain(DenseNet::new(&[2, 4, 1], Activation::Sin, 3).unwrap()),
            seeds: vec![],
            assignments: vec![],
        };
        assert_eq!(Checkpoint::from_bytes(&plain.to_bytes()).unwrap(), plain);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let bytes = modular().to_bytes();
        for cut in [3, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(Error::Parse { .. })), "cut {cut}");
        }
        let mut v = bytes.clone();
        v[8] = 9;
        assert!(matches!(
            Checkpoint::from_bytes(&v),
            Err(Error::VersionMismatch { found: 9, .. })
        ));
    }
}
