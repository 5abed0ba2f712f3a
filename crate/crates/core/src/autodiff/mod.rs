//! Dense tensors and a tape-based reverse-mode differentiator.
//!
//! Every primitive records its inputs on a [`Tape`]; [`Tape::backward`]
//! replays the tape once in reverse and returns a [`Gradients`] table.
//! Block-structured primitives (`block_pairwise_sum`, `block_matmul`,
//! `neighborhood_softmax`) operate on stacks of `B` graphs of `n` nodes so a
//! whole mini-batch of hours is evaluated on one tape.

mod tape;
mod tensor;

pub use tape::{pearson_value, Gradients, Tape, Var, PEARSON_VARIANCE_FLOOR};
pub use tensor::Tensor;
