//! Session media to channel input tensors: 300 ms face clips and one-second
//! MFCC maps, plus the synthetic stimulus generator.

pub mod audio;
pub mod synth;
pub mod visual;

pub use audio::{mfcc_extract, AudioClip, MfccMap};
pub use synth::{synth_stream, SegmentSpec, SynthConfig, SyntheticEvent};
pub use visual::{assemble_visual_clip, VisualClip, WindowChoice};
