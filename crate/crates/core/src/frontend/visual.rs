use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Frames per visual clip: 300 ms at 30 fps.
pub const CLIP_FRAMES: usize = 9;
pub const FPS: usize = 30;
/// Frame side of the full-size visual channel.
pub const FULL_SIDE: usize = 128;

/// Nine grayscale frames, `[9, side, side]`, intensities in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct VisualClip(Tensor);

impl VisualClip {
    pub fn new(t: Tensor) -> Result<Self> {
        match t.shape() {
            [f, h, w] if *f == CLIP_FRAMES && h == w => {}
            s => {
                return Err(Error::Validation(format!(
                    "visual clip must be {CLIP_FRAMES}xSxS, got {s:?}"
                )))
            }
        }
        if t.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Validation("visual clip intensities must lie in [0, 1]".into()));
        }
        Ok(Self(t))
    }

    pub fn side(&self) -> usize {
        self.0.shape()[1]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    /// Reads the raw blob layout: frames × side × side bytes, row-major, 0-255.
    pub fn from_bytes(bytes: &[u8], side: usize) -> Result<Self> {
        let need = CLIP_FRAMES * side * side;
        if bytes.len() != need {
            return Err(Error::Validation(format!(
                "frame blob has {} bytes, expected {need} ({CLIP_FRAMES}x{side}x{side})",
                bytes.len()
            )));
        }
        let t = Tensor::new(&[CLIP_FRAMES, side, side], bytes.iter().map(|&b| b as f64 / 255.0).collect())?;
        Self::new(t)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.0.data().iter().map(|v| (v * 255.0).round() as u8).collect()
    }

    /// Side length implied by a blob of `len` bytes, if it is a valid clip.
    pub fn side_for_blob(len: usize) -> Option<usize> {
        let per = len / CLIP_FRAMES;
        let side = (per as f64).sqrt().round() as usize;
        (per * CLIP_FRAMES == len && side * side == per && side > 0).then_some(side)
    }
}

/// How the 300 ms window is placed within the stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowChoice {
    /// Uniformly random start, deterministic under the seed (training).
    Random(u64),
    /// Centered window (inference).
    Center,
}

pub fn window_start(frames: usize, choice: WindowChoice) -> Result<usize> {
    if frames < CLIP_FRAMES {
        return Err(Error::Validation(format!(
            "need at least {CLIP_FRAMES} frames for a clip, got {frames}"
        )));
    }
    let starts = frames - CLIP_FRAMES + 1;
    Ok(match choice {
        WindowChoice::Random(seed) => ChaCha8Rng::seed_from_u64(seed).gen_range(0..starts),
        WindowChoice::Center => (frames - CLIP_FRAMES) / 2,
    })
}

/// Cuts a contiguous 9-frame window from a stream of equally sized square
/// grayscale frames.
pub fn assemble_visual_clip(frames: &[Tensor], choice: WindowChoice) -> Result<VisualClip> {
    let start = window_start(frames.len(), choice)?;
    let window = &frames[start..start + CLIP_FRAMES];
    let stacked = Tensor::stack(window)?;
    VisualClip::new(stacked)
}
