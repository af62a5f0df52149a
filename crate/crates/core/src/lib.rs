//! Workbench for homogeneous coupled cell networks: monoid completion and the
//! fundamental network, robust synchrony, the regular representation,
//! parameter-augmented center manifold reduction and the classification of
//! synchrony-breaking steady-state branches.

pub mod bifurcation;
pub mod error;
pub mod linalg;
pub mod network;
pub mod poly;
pub mod random;
pub mod reduce;
pub mod report;
pub mod simulate;
pub mod representation;
pub mod spectral;
pub mod synchrony;

pub use error::{Error, ErrorClass, Result};
