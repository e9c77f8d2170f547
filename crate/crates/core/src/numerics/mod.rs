//! Dense-tensor numerics for the fixed architectures used here: fully
//! connected networks, an LSTM cell, reverse-mode gradients for both, Adam and
//! a plateau learning-rate schedule. Everything is `f64`.

pub mod adam;
pub mod gradcheck;
pub mod lstm;
pub mod mlp;
pub mod params;
pub mod schedule;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use lstm::{LstmCache, LstmCell, RecurrentCellSpec};
pub use mlp::{Activation, Dense, Mlp, MlpCache, MlpSpec};
pub use params::{glorot_uniform, Parameters};
pub use schedule::decay_on_plateau;
pub use tensor::Tensor2;
