//! Dense matrix arithmetic, reverse-mode differentiation, and the
//! finite-difference gradient oracle.
//!
//! All operations are pure; [`Matrix`] values are immutable once built and
//! safe to share across threads. One [`Tape`] is single-threaded.

mod fd;
mod matrix;
mod tape;

pub use fd::{finite_diff, max_rel_error};
pub use matrix::{cosine, dot, l2_norm, softmax_row, Matrix};
pub use tape::{Gradients, NodeId, Tape};
