//! Numerical toolkit for sphere-valued ε-harmonic maps on conformal polar
//! charts: energies, a constrained minimizer, stress-energy diagnostics and a
//! bubbling/neck analyzer together with closed-form glued test sequences.

// `!(x > 0.0)` also rejects NaN, which is the point
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod banded;
pub mod bubbling;
pub mod calculus;
pub mod energy;
pub mod error;
pub mod geometry;
pub mod io;
pub mod solver;
pub mod synth;
pub mod serde_ext;
pub mod sparse;
pub mod tensors;

pub use error::{Error, Result};
