//! Minimal CPU tensor engine: dense tensors, a reverse-mode tape, AdamW and
//! a linear warmup/decay schedule.

pub mod attention;
pub mod gradcheck;
mod optim;
mod params;
mod scalar;
mod tape;
mod tensor;

pub use attention::AttentionMask;
pub use optim::{AdamWConfig, LrSchedule, OptimizerState};
pub use params::{Gradients, ParamId, ParamStore, Parameter};
pub use scalar::Scalar;
pub use tape::{Tape, Var};
pub use tensor::Tensor;
