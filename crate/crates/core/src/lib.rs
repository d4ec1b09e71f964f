//! Topology optimization with Moving Morphable Components, solved by an
//! iterative reanalysis approximation: a two-grid V-cycle whose coarse
//! problem reuses a stored Cholesky factor through exact reanalysis.

pub mod banded;
pub mod cli;
pub mod error;
pub mod fe;
pub mod ira;
pub mod mmc;
pub mod optimizer;
pub mod problems;
pub mod sensitivity;
pub mod sparse;

pub use error::{Error, Result};
