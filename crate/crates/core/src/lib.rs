//! Knowledge-graph-guided synthetic tabular data.
//!
//! The pipeline discovers relationships between the columns of a table
//! ([`proposer`]), checks them against the data ([`validator`]), keeps only
//! the independent columns ([`compressor`]), learns and samples those with a
//! diffusion model ([`generator`]), and rebuilds the dependent columns
//! deterministically. [`evaluator`] scores the result; [`fixtures`] produces
//! tables with known ground truth.

pub mod compressor;
pub mod error;
pub mod evaluator;
pub mod expr;
pub mod fixtures;
pub mod generator;
pub mod graph;
pub mod proposer;
pub mod table;
pub mod validator;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use error::Error;
pub use expr::{Condition, Expr};
pub use graph::{Edge, EdgeKind, Graph, Rule, TemporalRelation, ValidatedGraph};
pub use table::{Column, ColumnKind, ColumnMeta, Table, Value};

/// The RNG used everywhere randomness is seeded.
pub type Rng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream seed from a base seed and a label.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}
