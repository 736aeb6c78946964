//! Reverse-mode differentiation over [`Tensor`](crate::tensor::Tensor) values.
//!
//! Forward values are computed eagerly while a [`Tape`] records each
//! primitive; [`Tape::backward`] replays the record in reverse and returns
//! gradients for every leaf created with [`Tape::param`].

mod gradcheck;
mod nn;
mod tape;

pub use gradcheck::{finite_diff_grad, relative_error};
pub use nn::{conv1d_k1, dense, lstm_seq, reduce_mean_std, LstmParams};
pub use tape::{Gradients, Tape, Var};
