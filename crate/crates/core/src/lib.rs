//! Emotion-appraisal circuitry: crossmodal convolutional perception with
//! feedback modulation, growing self-organizing memories and a modulated mood.

pub mod affect;
pub mod appraisal;
pub mod cccnn;
pub mod error;
pub mod eval;
pub mod frontend;
pub mod gwr;
pub mod nn;
pub mod pipeline;
pub mod session;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
