#![no_std]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod elasticity;
pub mod error;
pub mod fem;
pub mod inversion;
pub mod mesh;
pub mod phasefield;
pub mod sparse;
pub mod synth;

pub use error::{Error, MeshError, PdasError, Result, SolveError};
