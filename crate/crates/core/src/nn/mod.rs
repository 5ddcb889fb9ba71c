//! Tensor operations, reverse-mode differentiation and training utilities.

pub mod gradcheck;
pub mod kernels;
pub mod ops;
pub mod optim;
pub mod params;
pub mod tape;

pub use gradcheck::{finite_diff_check, GradCheckReport, DEFAULT_EPSILON};
pub use kernels::ConvGeom;
pub use optim::{sgd_l2_step, SgdL2};
pub use params::{seeded_rng, ParamId, ParamStore};
pub use tape::{Activation, Grads, NumericWarnings, Tape, Var};

/// Train mode enables dropout and batch statistics; infer mode is pure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Mode {
    Train,
    Infer,
}
