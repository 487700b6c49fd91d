//! Dense matrices, a recording tape for reverse-mode gradients, MLP layers,
//! the Adam optimizer, finite-difference verification and seeded RNG streams.

mod adam;
mod digest;
mod gradcheck;
mod matrix;
mod mlp;
pub mod rng;
mod tape;

pub use adam::Adam;
pub use digest::parameter_digest;
pub use gradcheck::{finite_difference_check, GradCheckConfig, GradCheckReport};
pub use matrix::{dot, squared_distance, Matrix};
pub use mlp::{
    Activation, BatchNormState, Layer, Mlp, MlpSpec, BATCH_NORM_EPS, BATCH_NORM_MOMENTUM,
};
pub use tape::{sigmoid, Parameter, Tape, Var};
