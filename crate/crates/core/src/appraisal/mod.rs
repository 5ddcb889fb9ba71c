//! Perception, per-subject affective memory and mood.

pub mod heads;
pub mod memory;
pub mod mood;

use serde::{Deserialize, Serialize};

pub use heads::{AppraisalHeads, HeadParams};
pub use memory::{
    mean_memory_valence, memory_params, memory_trajectory, memory_update, trajectory_csv, AffectiveMemory,
    MemoryRegistry, TrajectoryPoint, TRAJECTORY_CSV_HEADER,
};
pub use mood::{mood_modulator, mood_update, ExponentScale, MoodState};

use crate::affect::{Concept, NUM_CONCEPTS};
use crate::error::{Error, Result};
use crate::gwr::{AnnotationSample, GwrNetwork, GwrParams};

/// Insertion threshold of the perception network.
pub const PERCEPTION_A_T: f64 = 0.35;
pub const PERCEPTION_MAX_EDGE_AGE: u32 = 100;

pub fn perception_params() -> GwrParams {
    GwrParams::with_threshold(PERCEPTION_A_T, PERCEPTION_MAX_EDGE_AGE)
}

/// Appraisal of one expression: the perception winner and its read-outs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Percept {
    pub bmu_index: usize,
    pub bmu_prototype: Vec<f64>,
    pub arousal: f64,
    pub valence: f64,
    pub concepts: [f64; NUM_CONCEPTS],
}

impl Percept {
    pub fn validate(&self) -> Result<()> {
        if self.bmu_prototype.is_empty() || self.bmu_prototype.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("percept prototype must be non-empty and finite".into()));
        }
        if !(0.0..=1.0).contains(&self.arousal) || !(-1.0..=1.0).contains(&self.valence) {
            return Err(Error::Numeric(format!(
                "percept affect out of range: arousal {} valence {}",
                self.arousal, self.valence
            )));
        }
        let total: f64 = self.concepts.iter().sum();
        if self.concepts.iter().any(|p| !(0.0..=1.0).contains(p)) || (total - 1.0).abs() > 1e-6 {
            return Err(Error::Numeric("percept concept distribution must sum to 1".into()));
        }
        Ok(())
    }

    pub fn concept(&self) -> Concept {
        let mut best = 0;
        for (i, p) in self.concepts.iter().enumerate() {
            if *p > self.concepts[best] {
                best = i;
            }
        }
        Concept::from_index(best).expect("index below NUM_CONCEPTS")
    }

    pub fn annotation_sample(&self) -> AnnotationSample {
        AnnotationSample { arousal: self.arousal, valence: self.valence, concepts: self.concepts }
    }
}

/// Whether perceiving a new expression also trains the perception network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerceptionMode {
    Online,
    Frozen,
}

impl std::str::FromStr for PerceptionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "online" => Ok(Self::Online),
            "frozen" => Ok(Self::Frozen),
            o => Err(Error::Validation(format!("perception mode must be online or frozen, got '{o}'"))),
        }
    }
}

/// Maps an expression representation to a percept. In online mode the
/// perception network takes one step on `x` first.
pub fn perceive(
    perception: &mut GwrNetwork,
    heads: &AppraisalHeads,
    x: &[f64],
    mode: PerceptionMode,
) -> Result<Percept> {
    if x.len() != perception.dim() {
        return Err(Error::Shape(format!(
            "perception expects {}-dimensional representations, got {}",
            perception.dim(),
            x.len()
        )));
    }
    let bmu_index = match mode {
        PerceptionMode::Online => perception.step(x, None)?.bmu,
        PerceptionMode::Frozen => {
            if perception.is_empty() {
                return Err(Error::Invalid("frozen perception network is empty".into()));
            }
            perception.find_bmu(x)?.index
        }
    };
    let bmu_prototype = perception.neurons()[bmu_index].weight.clone();
    let (arousal, valence) = heads.predict_av(&bmu_prototype)?;
    let concepts = heads.predict_concept(&bmu_prototype)?;
    let p = Percept { bmu_index, bmu_prototype, arousal, valence, concepts };
    p.validate()?;
    Ok(p)
}
