//! Pseudo-spectral kernels for the incompressible Navier-Stokes equation on
//! periodic boxes, the spatial plane-wave construction and its stability
//! experiments, and the complex Ginzburg-Landau analog.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
// `!(x > 0.0)` is how parameter checks reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod cgl;
pub mod error;
pub mod fft;

pub use error::{Error, Result};
pub mod duhamel;
pub mod experiments;
pub mod field;
pub mod grid;
pub mod ops;
pub mod picard;
pub mod planewave;
pub mod solver;

pub use field::SpectralField;
pub use grid::{Grid, GridSpec};
