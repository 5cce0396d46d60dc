//! Numerical tools for emergent objectivity in many-body quantum systems:
//! approximate redundant records of POVMs, covering predicates on site
//! partitions, joint-measurability certification and Markov-blanket search
//! for channels, all on dense desk-scale state spaces.

pub mod compat;
pub mod covering;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod measurement;
pub mod random;
pub mod scenarios;
pub mod tensor;

pub use error::{Error, Result};
