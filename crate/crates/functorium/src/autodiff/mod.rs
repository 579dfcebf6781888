//! Tensors and the reverse-mode tape.

mod tape;
mod tensor;

pub use tape::{finite_diff_check, NodeId, Tape};
pub use tensor::Tensor;
