//! Minimal CPU training substrate: per-sample tapes, convolutions via GEMM, Adam.

mod adam;
mod layers;
mod params;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use layers::{Conv2d, Linear};
pub use params::{Grads, ParamId, Params};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
