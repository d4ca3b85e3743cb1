//! Optimizing compiler for finite element variational forms on affine
//! simplices.
//!
//! The pipeline: exact reference tensors ([`form_tensors`]) are analysed for
//! complexity-reducing relations between their rows ([`relations`]), the
//! resulting minimum spanning forest is lowered to an unrolled straight-line
//! program ([`progir`]), and both the naive and optimized kernels are run
//! through sparse global assembly and a timing harness ([`assembly`]).

pub mod assembly;
pub mod cli;
pub mod error;
pub mod form_tensors;
pub mod numfmt;
pub mod progir;
pub mod relations;
pub mod simplex_poly;

pub use error::{Error, Result};
