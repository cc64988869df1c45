//! Multilinear pseudo-differential operators with `S^m_{0,0}` symbols,
//! Besov / local Hardy / Wiener amalgam quasi-norms on a periodic grid, and
//! the lattice constructions used to measure the sharpness of the critical
//! order.

pub mod error;
pub mod experiments;
pub mod exponents;
pub mod extremal;
pub mod grid;
pub mod operator;
pub mod partitions;
pub mod spaces;
pub mod symbols;

pub use error::{Error, Result};
pub use grid::{Direction, Domain, GridFunction, GridSpec, SpectrumSampler};
