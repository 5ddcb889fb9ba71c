use serde::{Deserialize, Serialize};

use super::memory::{mean_memory_valence, AffectiveMemory};
use super::Percept;
use crate::affect::valence_to_unit;
use crate::error::{Error, Result};
use crate::gwr::{AnnotationSample, GwrNetwork, GwrParams};

pub const MOOD_A_T: f64 = 0.001;
pub const MOOD_MAX_EDGE_AGE: u32 = 200;

/// Which valence scale feeds the exponent of the modulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExponentScale {
    /// `(v + 1) / 2`, in [0, 1].
    Mapped,
    /// Canonical valence in [-1, 1].
    Raw,
}

impl std::str::FromStr for ExponentScale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mapped" => Ok(Self::Mapped),
            "raw" => Ok(Self::Raw),
            o => Err(Error::Validation(format!("exponent scale must be mapped or raw, got '{o}'"))),
        }
    }
}

/// Arousal-valence mood network with modulator strength `e`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoodState {
    pub network: GwrNetwork,
    pub strength: f64,
    pub exponent_scale: ExponentScale,
    /// Also step the mood once with the memory winner's appraisal whenever
    /// the percept is repeated at least once.
    pub inject_memory: bool,
    /// Total mood steps taken.
    pub updates: u64,
}

impl MoodState {
    pub fn new(strength: f64) -> Result<Self> {
        Self::with_params(strength, GwrParams::with_threshold(MOOD_A_T, MOOD_MAX_EDGE_AGE))
    }

    pub fn with_params(strength: f64, params: GwrParams) -> Result<Self> {
        if !(strength > 0.0 && strength.is_finite()) {
            return Err(Error::Invalid(format!("modulator strength must be positive, got {strength}")));
        }
        Ok(Self {
            network: GwrNetwork::new(2, params)?,
            strength,
            exponent_scale: ExponentScale::Mapped,
            inject_memory: false,
            updates: 0,
        })
    }

    /// Mean (arousal, valence) of the mood neurons' weights; neutral before
    /// the first update.
    pub fn mean_av(&self) -> (f64, f64) {
        let n = self.network.neurons();
        if n.is_empty() {
            return (0.5, 0.0);
        }
        let k = n.len() as f64;
        (
            n.iter().map(|x| x.weight[0]).sum::<f64>() / k,
            n.iter().map(|x| x.weight[1]).sum::<f64>() / k,
        )
    }
}

/// Modulation of one percept: `M = e(1 + exp(v_m))` above 0.5, `e` at 0.5,
/// `e(1 - exp(v_m))` below; `reps = max(0, round(M))`.
pub fn mood_modulator(v_p: f64, v_m: f64, e: f64) -> Result<(f64, u32)> {
    if !(e > 0.0) {
        return Err(Error::Invalid(format!("modulator strength must be positive, got {e}")));
    }
    if !(v_p.is_finite() && v_m.is_finite()) {
        return Err(Error::Numeric("modulator inputs must be finite".into()));
    }
    let m = if v_p > 0.5 {
        e * (1.0 + v_m.exp())
    } else if v_p == 0.5 {
        e
    } else {
        e * (1.0 - v_m.exp())
    };
    Ok((m, m.round().max(0.0) as u32))
}

/// Applies one percept to the mood; returns the repetition count used.
pub fn mood_update(mood: &mut MoodState, percept: &Percept, memory: Option<&AffectiveMemory>) -> Result<u32> {
    percept.validate()?;
    let v_p = valence_to_unit(percept.valence);
    let raw = memory.map(mean_memory_valence).unwrap_or(0.0);
    let v_m = match mood.exponent_scale {
        ExponentScale::Mapped => valence_to_unit(raw),
        ExponentScale::Raw => raw,
    };
    let (_, reps) = mood_modulator(v_p, v_m, mood.strength)?;
    let point = [percept.arousal, percept.valence];
    let ann = AnnotationSample { arousal: percept.arousal, valence: percept.valence, concepts: percept.concepts };
    for _ in 0..reps {
        mood.network.step(&point, Some(&ann))?;
    }
    mood.updates += reps as u64;
    if reps > 0 && mood.inject_memory {
        if let Some(m) = memory {
            let b = m.network.find_bmu(&percept.bmu_prototype)?;
            let acc = &m.network.neurons()[b.index].annotation;
            if let (Some(a), Some(v)) = (acc.mean_arousal(), acc.mean_valence()) {
                let s = AnnotationSample { arousal: a, valence: v, concepts: acc.concept_mass.map(|c| c / acc.count as f64) };
                mood.network.step(&[a, v], Some(&s))?;
                mood.updates += 1;
            }
        }
    }
    Ok(reps)
}
