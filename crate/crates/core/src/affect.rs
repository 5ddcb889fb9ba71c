//! Shared affect vocabulary: the seven emotion concepts and annotations.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::Error;

pub const NUM_CONCEPTS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Concept {
    Anger,
    Disgust,
    Fear,
    Happiness,
    Neutral,
    Sadness,
    Surprise,
}

impl Concept {
    pub const ALL: [Concept; NUM_CONCEPTS] = [
        Concept::Anger,
        Concept::Disgust,
        Concept::Fear,
        Concept::Happiness,
        Concept::Neutral,
        Concept::Sadness,
        Concept::Surprise,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Concept> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Concept::Anger => "anger",
            Concept::Disgust => "disgust",
            Concept::Fear => "fear",
            Concept::Happiness => "happiness",
            Concept::Neutral => "neutral",
            Concept::Sadness => "sadness",
            Concept::Surprise => "surprise",
        }
    }

    /// Typical (arousal, valence) of the concept on the circumplex.
    pub fn prototype_av(self) -> (f64, f64) {
        match self {
            Concept::Anger => (0.80, -0.60),
            Concept::Disgust => (0.55, -0.70),
            Concept::Fear => (0.85, -0.45),
            Concept::Happiness => (0.70, 0.80),
            Concept::Neutral => (0.30, 0.05),
            Concept::Sadness => (0.20, -0.75),
            Concept::Surprise => (0.85, 0.40),
        }
    }

    pub fn one_hot(self) -> [f64; NUM_CONCEPTS] {
        let mut v = [0.0; NUM_CONCEPTS];
        v[self.index()] = 1.0;
        v
    }
}

impl fmt::Display for Concept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Concept {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Concept::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                Error::Validation(format!(
                    "unknown concept '{s}' (expected one of {})",
                    Concept::ALL.map(|c| c.name()).join(", ")
                ))
            })
    }
}

/// Ground-truth or appraised affect of one event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub arousal: f64,
    pub valence: f64,
    #[serde(default = "default_dominance")]
    pub dominance: f64,
    pub concept: Concept,
}

fn default_dominance() -> f64 {
    0.5
}

impl Annotation {
    pub fn validate(&self) -> Result<(), Error> {
        let check = |name: &str, v: f64, lo: f64, hi: f64| {
            if v.is_finite() && (lo..=hi).contains(&v) {
                Ok(())
            } else {
                Err(Error::Validation(format!("annotation.{name} = {v} outside [{lo}, {hi}]")))
            }
        };
        check("arousal", self.arousal, 0.0, 1.0)?;
        check("valence", self.valence, -1.0, 1.0)?;
        check("dominance", self.dominance, 0.0, 1.0)
    }
}

/// Maps canonical valence in [-1, 1] onto [0, 1].
pub fn valence_to_unit(v: f64) -> f64 {
    (v + 1.0) / 2.0
}
