//! Tensor arithmetic, seeded randomness, parallel helpers and gradient checking.

pub mod gradcheck;
pub mod par;
mod rng;
mod tensor;

pub use gradcheck::{grad_check, grad_check_coords, Differentiable, FnObjective, GradCheck};
pub use par::Exec;
pub use rng::{derive_seed, Rng, DEFAULT_SEED};
pub use tensor::Tensor;

pub(crate) use tensor::{argmax, gemm, MatRef};
