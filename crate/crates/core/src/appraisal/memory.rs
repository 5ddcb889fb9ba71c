use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::Percept;
use crate::error::{Error, Result};
use crate::gwr::{GwrNetwork, GwrParams};

/// Insertion threshold of the per-subject memories.
pub const MEMORY_A_T: f64 = 0.01;
pub const MEMORY_MAX_EDGE_AGE: u32 = 600;

pub fn memory_params() -> GwrParams {
    GwrParams::with_threshold(MEMORY_A_T, MEMORY_MAX_EDGE_AGE)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffectiveMemory {
    pub subject: String,
    pub network: GwrNetwork,
}

/// Per-subject memories, created on first sight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryRegistry {
    pub params: GwrParams,
    pub memories: BTreeMap<String, AffectiveMemory>,
}

impl Default for MemoryRegistry {
    fn default() -> Self {
        Self::new(memory_params())
    }
}

impl MemoryRegistry {
    pub fn new(params: GwrParams) -> Self {
        Self { params, memories: BTreeMap::new() }
    }

    pub fn get(&self, subject: &str) -> Option<&AffectiveMemory> {
        self.memories.get(subject)
    }
}

/// Steps the subject's memory with the percept's prototype and folds the
/// appraisal into the winner.
pub fn memory_update<'a>(registry: &'a mut MemoryRegistry, subject: &str, percept: &Percept) -> Result<&'a AffectiveMemory> {
    percept.validate()?;
    if !registry.memories.contains_key(subject) {
        let net = GwrNetwork::new(percept.bmu_prototype.len(), registry.params.clone())?;
        registry
            .memories
            .insert(subject.to_string(), AffectiveMemory { subject: subject.to_string(), network: net });
    }
    let mem = registry.memories.get_mut(subject).expect("inserted above");
    if mem.network.dim() != percept.bmu_prototype.len() {
        return Err(Error::Shape(format!(
            "memory of '{subject}' holds {}-dimensional prototypes, percept has {}",
            mem.network.dim(),
            percept.bmu_prototype.len()
        )));
    }
    mem.network.step(&percept.bmu_prototype, Some(&percept.annotation_sample()))?;
    Ok(mem)
}

/// Mean valence annotation over the memory's neurons; 0 when no neuron has
/// an annotation yet.
pub fn mean_memory_valence(memory: &AffectiveMemory) -> f64 {
    memory.network.mean_valence().unwrap_or(0.0)
}

/// One point of a memory trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t_ms: u64,
    pub arousal: f64,
    pub valence: f64,
    pub neuron_count: usize,
}

impl TrajectoryPoint {
    pub fn of(t_ms: u64, net: &GwrNetwork) -> Self {
        Self {
            t_ms,
            arousal: net.mean_arousal().unwrap_or(0.5),
            valence: net.mean_valence().unwrap_or(0.0),
            neuron_count: net.len(),
        }
    }
}

/// Per-snapshot neuron-annotation means, in snapshot order.
pub fn memory_trajectory(snapshots: &[(u64, &AffectiveMemory)]) -> Result<Vec<TrajectoryPoint>> {
    if snapshots.is_empty() {
        return Err(Error::Invalid("memory trajectory needs at least one snapshot".into()));
    }
    Ok(snapshots.iter().map(|(t, m)| TrajectoryPoint::of(*t, &m.network)).collect())
}

pub const TRAJECTORY_CSV_HEADER: &str = "t_ms,arousal,valence,neuron_count";

pub fn trajectory_csv(points: &[TrajectoryPoint]) -> String {
    let mut s = format!("{TRAJECTORY_CSV_HEADER}\n");
    for p in points {
        s.push_str(&format!("{},{},{},{}\n", p.t_ms, p.arousal, p.valence, p.neuron_count));
    }
    s
}
