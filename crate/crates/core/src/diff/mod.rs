//! Dense matrix math with a small reverse-mode differentiation tape.
//!
//! Every operation on a [`Tape`] computes its forward value eagerly and records
//! the operands it needs for the adjoint pass. Values are `f64` throughout.
//! Sparse matrices only ever enter as constants (the propagation operator and
//! feature matrices), so there is no gradient with respect to graph structure.

mod matrix;
mod sparse;
mod tape;

pub use matrix::Matrix;
pub use sparse::CsrMatrix;
pub use tape::{Tape, Var};

