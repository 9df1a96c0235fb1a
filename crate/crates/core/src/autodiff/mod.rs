//! Reverse-mode automatic differentiation over dense tensors.
//!
//! Values are recorded on a [`Tape`] in execution order; [`Var::backward`]
//! sweeps it in reverse. Elements are generic over [`Real`] so the same
//! ops run in `f64` for gradient checks and `f32` for training.

mod adam;
mod checkpoint;
mod conv;
mod gradcheck;
mod norm;
mod ops;
mod param;
mod real;
mod spectral;
mod tape;
mod tensor;

pub use adam::Adam;
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, param_digest, save_checkpoint};
pub use gradcheck::{gradient_check, GradCheckOptions, GradCheckReport};
pub use norm::NORM_EPS;
pub use param::{AdamState, Module, Parameter, SpectralState};
pub use real::Real;
pub use spectral::{spectral_normalize, SIGMA_MIN};
pub use tape::{GradSink, Gradients, Tape, Var};
pub use tensor::Tensor;
