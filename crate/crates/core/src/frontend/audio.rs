//! One-second audio clips and their MFCC maps.
//!
//! Per frame: Hann window (25 ms), zero-padded 1024-point magnitude
//! spectrum, 26 triangular Mel filters over 0-8000 Hz, natural log with an
//! energy floor, then a DCT-II keeping 26 coefficients. The 98 frames of a
//! 10 ms hop are subsampled uniformly to 35.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const SAMPLE_RATE: u32 = 16_000;
pub const CLIP_SAMPLES: usize = SAMPLE_RATE as usize;
pub const FRAME_LEN: usize = 400; // 25 ms
pub const HOP: usize = 160; // 10 ms
pub const FFT_SIZE: usize = 1024;
pub const MEL_BANDS: usize = 26;
pub const MFCC_COEFFS: usize = 26;
pub const MFCC_FRAMES: usize = 35;
pub const MEL_FMAX: f64 = 8000.0;
pub const LOG_FLOOR: f64 = 1e-10;

/// Number of analysis frames in one clip.
pub const fn full_frame_count() -> usize {
    (CLIP_SAMPLES - FRAME_LEN) / HOP + 1
}

/// Exactly one second of mono audio at 16 kHz.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate != SAMPLE_RATE {
            return Err(Error::Validation(format!(
                "audio clip must be sampled at {SAMPLE_RATE} Hz, got {sample_rate}"
            )));
        }
        if samples.len() != CLIP_SAMPLES {
            return Err(Error::Validation(format!(
                "audio clip must hold {CLIP_SAMPLES} samples, got {}",
                samples.len()
            )));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::Validation("audio samples must be finite".into()));
        }
        Ok(Self { samples })
    }

    /// Resamples arbitrary-rate PCM to 16 kHz by linear interpolation, then
    /// truncates or zero-pads to one second.
    pub fn from_pcm(pcm: &[i16], rate: u32) -> Result<Self> {
        if rate == 0 {
            return Err(Error::Validation("sample rate must be positive".into()));
        }
        let x: Vec<f64> = pcm.iter().map(|&s| s as f64 / 32768.0).collect();
        let mut y = resample_linear(&x, rate, SAMPLE_RATE);
        y.resize(CLIP_SAMPLES, 0.0);
        Self::new(y, SAMPLE_RATE)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn to_pcm16(&self) -> Vec<u8> {
        self.samples
            .iter()
            .flat_map(|s| ((s.clamp(-1.0, 1.0) * 32767.0).round() as i16).to_le_bytes())
            .collect()
    }

    pub fn from_pcm16_bytes(bytes: &[u8], rate: u32) -> Result<Self> {
        if bytes.len() % 2 != 0 {
            return Err(Error::Validation("16-bit PCM blob has an odd byte count".into()));
        }
        let pcm: Vec<i16> = bytes.chunks_exact(2).map(|c| i16::from_le_bytes([c[0], c[1]])).collect();
        Self::from_pcm(&pcm, rate)
    }
}

pub fn resample_linear(x: &[f64], from: u32, to: u32) -> Vec<f64> {
    if x.is_empty() || from == to {
        return x.to_vec();
    }
    let out_len = ((x.len() as u64 * to as u64) / from as u64) as usize;
    let ratio = from as f64 / to as f64;
    (0..out_len)
        .map(|i| {
            let pos = i as f64 * ratio;
            let j = pos.floor() as usize;
            let frac = pos - j as f64;
            let a = x[j.min(x.len() - 1)];
            let b = x[(j + 1).min(x.len() - 1)];
            a + (b - a) * frac
        })
        .collect()
}

/// 26 time-pooled cepstral descriptors over 35 frames, `[26, 35]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MfccMap(Tensor);

impl MfccMap {
    pub fn new(t: Tensor) -> Result<Self> {
        if t.shape() != [MFCC_COEFFS, MFCC_FRAMES] {
            return Err(Error::Validation(format!(
                "MFCC map must be {MFCC_COEFFS}x{MFCC_FRAMES}, got {:?}",
                t.shape()
            )));
        }
        if !t.all_finite() {
            return Err(Error::Validation("MFCC map has non-finite values".into()));
        }
        Ok(Self(t))
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular Mel weights, `MEL_BANDS` rows of `FFT_SIZE / 2 + 1` bins.
pub fn mel_filterbank() -> &'static [Vec<f64>] {
    static BANK: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    BANK.get_or_init(|| {
        let bins = FFT_SIZE / 2 + 1;
        let top = hz_to_mel(MEL_FMAX);
        let edges: Vec<f64> = (0..MEL_BANDS + 2)
            .map(|i| mel_to_hz(top * i as f64 / (MEL_BANDS + 1) as f64))
            .collect();
        (0..MEL_BANDS)
            .map(|m| {
                let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                (0..bins)
                    .map(|k| {
                        let f = k as f64 * SAMPLE_RATE as f64 / FFT_SIZE as f64;
                        if f <= lo || f >= hi {
                            0.0
                        } else if f <= mid {
                            (f - lo) / (mid - lo)
                        } else {
                            (hi - f) / (hi - mid)
                        }
                    })
                    .collect()
            })
            .collect()
    })
}

fn hann() -> &'static [f64] {
    static WIN: OnceLock<Vec<f64>> = OnceLock::new();
    WIN.get_or_init(|| {
        (0..FRAME_LEN)
            .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / (FRAME_LEN - 1) as f64).cos())
            .collect()
    })
}

/// DCT-II scaled so coefficient 0 is the mean of the input and the others
/// are cosine-series amplitudes: `X_0 = (1/N) sum x`, `X_k = (2/N) sum x cos(pi k (n + 1/2) / N)`.
pub fn dct2(x: &[f64], keep: usize) -> Vec<f64> {
    let n = x.len() as f64;
    (0..keep)
        .map(|k| {
            let s: f64 = x
                .iter()
                .enumerate()
                .map(|(i, v)| v * (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / n).cos())
                .sum();
            if k == 0 {
                s / n
            } else {
                2.0 * s / n
            }
        })
        .collect()
}

/// MFCC vectors for every 25 ms / 10 ms frame of the clip (98 frames).
pub fn mfcc_frames(audio: &AudioClip) -> Vec<[f64; MFCC_COEFFS]> {
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(FFT_SIZE);
    let bank = mel_filterbank();
    let win = hann();
    let mut buf = vec![Complex::new(0.0, 0.0); FFT_SIZE];
    (0..full_frame_count())
        .map(|f| {
            let frame = &audio.samples[f * HOP..f * HOP + FRAME_LEN];
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for (i, (s, w)) in frame.iter().zip(win).enumerate() {
                buf[i].re = s * w;
            }
            fft.process(&mut buf);
            let mag: Vec<f64> = buf[..FFT_SIZE / 2 + 1].iter().map(|c| c.norm()).collect();
            let log_mel: Vec<f64> = bank
                .iter()
                .map(|row| {
                    let e: f64 = row.iter().zip(&mag).map(|(w, m)| w * m).sum();
                    e.max(LOG_FLOOR).ln()
                })
                .collect();
            let c = dct2(&log_mel, MFCC_COEFFS);
            let mut out = [0.0; MFCC_COEFFS];
            out.copy_from_slice(&c);
            out
        })
        .collect()
}

/// Indices of the frames kept when thinning `from` frames to `to`.
pub fn subsample_indices(from: usize, to: usize) -> Vec<usize> {
    if to == 1 {
        return vec![0];
    }
    (0..to)
        .map(|i| ((i * (from - 1)) as f64 / (to - 1) as f64).round() as usize)
        .collect()
}

pub fn mfcc_extract(audio: &AudioClip) -> MfccMap {
    let frames = mfcc_frames(audio);
    let idx = subsample_indices(frames.len(), MFCC_FRAMES);
    let mut data = vec![0.0; MFCC_COEFFS * MFCC_FRAMES];
    for (t, &fi) in idx.iter().enumerate() {
        for c in 0..MFCC_COEFFS {
            data[c * MFCC_FRAMES + t] = frames[fi][c];
        }
    }
    MfccMap(Tensor::new(&[MFCC_COEFFS, MFCC_FRAMES], data).expect("fixed shape"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_arithmetic() {
        assert_eq!(full_frame_count(), 98);
        let idx = subsample_indices(98, 35);
        assert_eq!(idx.len(), 35);
        assert_eq!((idx[0], idx[34]), (0, 97));
        assert!(idx.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn silence_gives_floor_cepstrum() {
        let clip = AudioClip::new(vec![0.0; CLIP_SAMPLES], SAMPLE_RATE).unwrap();
        let m = mfcc_extract(&clip);
        let t = m.tensor();
        assert_eq!(t.shape(), &[26, 35]);
        for f in 0..35 {
            // c0 is a 26-term mean, exact up to summation rounding
            assert!((t.data()[f] - LOG_FLOOR.ln()).abs() < 1e-12);
            for c in 1..26 {
                assert!(t.data()[c * 35 + f].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn wrong_rate_is_rejected() {
        assert!(AudioClip::new(vec![0.0; CLIP_SAMPLES], 8000).is_err());
        assert!(AudioClip::new(vec![0.0; 100], SAMPLE_RATE).is_err());
    }

    #[test]
    fn every_filter_has_support() {
        for row in mel_filterbank() {
            assert!(row.iter().any(|&w| w > 0.0));
        }
    }

    #[test]
    fn resampling_doubles_length() {
        let pcm: Vec<i16> = (0..8000).map(|i| (i % 100) as i16).collect();
        let clip = AudioClip::from_pcm(&pcm, 8000).unwrap();
        assert_eq!(clip.samples().len(), CLIP_SAMPLES);
        // odd output samples interpolate halfway between neighbours
        let s = clip.samples();
        assert!((s[3] - (pcm[1] as f64 + pcm[2] as f64) / 2.0 / 32768.0).abs() < 1e-12);
    }
}
