//! Learning-affinity modular PINNs for parameterized PDE families.
//!
//! Tasks are grouped by how a pre-trained network reacts to a short transfer
//! session on them; each group gets its own input sub-network in front of a
//! shared meta network, and new tasks are solved by mixing the groups through
//! learnable routing weights.

pub mod affinity;
pub mod baselines;
pub(crate) mod binio;
pub mod checkpoint;
pub mod error;
pub mod exec;
pub mod lam;
pub mod net;
pub mod pde;
pub mod stats;
pub mod tasks;
pub mod train;

pub use error::{Error, Result};
pub use exec::Parallelism;
