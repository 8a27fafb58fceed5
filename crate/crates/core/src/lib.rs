//! Exact likelihood machinery, conditional composite likelihoods and
//! posterior calibration for Ising and autologistic lattice models.

pub mod calibrate;
pub mod composite;
pub mod error;
pub mod exact;
pub mod experiment;
pub mod lattice;
pub mod math;
pub mod model;
pub mod posterior;
pub mod rng;

pub use composite::{enumerate_blocks, Block, BlockSet, CompositeLikelihood};
pub use error::{Error, Result};
pub use lattice::Lattice;
pub use model::ModelSpec;
