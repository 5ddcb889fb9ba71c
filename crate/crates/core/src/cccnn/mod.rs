//! Cross-channel convolutional network: visual and auditory channels whose
//! last layers receive multiplicatively scaled feedback from a shared
//! cross-channel, fused into one expression representation.

mod channel;
mod model;
mod spec;
mod train;

pub use channel::{BatchNormParams, Channel, LayerParams, StatUpdates};
pub use model::{
    auditory_batch, visual_batch, Batch, Cccnn, ClassifierHead, CrossChannel, CrossOutput, ExpressionRepresentation,
    Fc, PassMode, PassStats, RegressionHead, Trace, TrainedFlags, DEFAULT_GAMMA_AUDITORY, DEFAULT_GAMMA_VISUAL,
};
pub use spec::{ChannelSpec, CrossSpec, LayerSpec, ModelSpec, Shape4, DEFAULT_DROPOUT, SHUNTING_DECAY};
pub use train::{augment_clip, batches, split_indices, TrainParams, TrainReport};
