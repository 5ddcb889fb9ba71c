//! wasm-bindgen exports behind `www/index.html`.

use emocircuit::appraisal::mood_modulator;
use emocircuit::frontend::{mfcc_extract, AudioClip};
use emocircuit::gwr::{GwrNetwork, GwrParams};
use std::f64::consts::PI;
use wasm_bindgen::prelude::*;

fn js(e: emocircuit::Error) -> JsValue {
    JsValue::from(e.to_string())
}

/// A growing network on 2-D points.
#[wasm_bindgen]
pub struct GwrDemo {
    net: GwrNetwork,
}

#[wasm_bindgen]
impl GwrDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(a_t: f64, max_edge_age: u32) -> Result<GwrDemo, JsValue> {
        let net = GwrNetwork::new(2, GwrParams::with_threshold(a_t, max_edge_age)).map_err(js)?;
        Ok(GwrDemo { net })
    }

    /// One adaptation step; returns true when a neuron was inserted.
    pub fn step(&mut self, x: f64, y: f64) -> Result<bool, JsValue> {
        let before = self.net.len();
        self.net.step(&[x, y], None).map_err(js)?;
        Ok(self.net.len() > before)
    }

    /// `epochs` passes over interleaved `x, y` coordinates.
    pub fn fit(&mut self, xy: &[f64], epochs: u32) -> Result<(), JsValue> {
        for _ in 0..epochs {
            for p in xy.chunks_exact(2) {
                self.net.step(p, None).map_err(js)?;
            }
        }
        Ok(())
    }

    /// Neuron weights as interleaved `x, y`.
    pub fn weights(&self) -> Vec<f64> {
        self.net.neurons().iter().flat_map(|n| n.weight.iter().copied()).collect()
    }

    /// Edges as interleaved neuron index pairs.
    pub fn edges(&self) -> Vec<u32> {
        self.net.edges().iter().flat_map(|e| [e.a as u32, e.b as u32]).collect()
    }

    pub fn neuron_count(&self) -> usize {
        self.net.len()
    }
}

/// Modulator over `n` evenly spaced perceived valences in [0, 1], as
/// interleaved `M, reps`.
#[wasm_bindgen]
pub fn modulator_curve(v_m: f64, strength: f64, n: usize) -> Result<Vec<f64>, JsValue> {
    let mut out = Vec::with_capacity(2 * n);
    for i in 0..n {
        let v_p = i as f64 / (n.max(2) - 1) as f64;
        let (m, reps) = mood_modulator(v_p, v_m, strength).map_err(js)?;
        out.extend([m, reps as f64]);
    }
    Ok(out)
}

/// 26 x 35 cepstral map of a one-second tone, coefficient-major.
#[wasm_bindgen]
pub fn tone_mfcc(freq: f64, amplitude: f64) -> Result<Vec<f64>, JsValue> {
    let samples = (0..16_000).map(|n| amplitude * (2.0 * PI * freq * n as f64 / 16_000.0).sin()).collect();
    let clip = AudioClip::new(samples, 16_000).map_err(js)?;
    Ok(mfcc_extract(&clip).tensor().data().to_vec())
}
