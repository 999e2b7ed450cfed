//! Dense tensors, reverse-mode differentiation, LSTM cells and Adam.

pub mod adam;
pub mod gradcheck;
pub mod lstm;
pub mod tape;
pub mod tensor;

pub use adam::{adam_step, clip_global_norm, AdamState};
pub use gradcheck::{compare_with_central_differences, grad_check};
pub use lstm::{lstm_cell, lstm_cell_on_tape, lstm_step, LstmVars, LstmWeights};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
