use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Owns every trainable tensor of a model, addressed by [`ParamId`].
/// Serializes each tensor as a base64 little-endian blob.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(into = "StoreRecord", try_from = "StoreRecord")]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    /// He-normal initialization scaled by `fan_in`.
    pub fn add_he(&mut self, name: impl Into<String>, shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> ParamId {
        let std = (2.0 / fan_in.max(1) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        let t = Tensor::from_fn(shape, |_| normal.sample(rng));
        self.add(name, t)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn total_elements(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }
}

#[derive(Serialize, Deserialize)]
struct StoreRecord {
    names: Vec<String>,
    blobs: Vec<String>,
}

impl From<ParamStore> for StoreRecord {
    fn from(p: ParamStore) -> Self {
        Self { names: p.names, blobs: p.tensors.iter().map(|t| BASE64.encode(t.to_le_bytes())).collect() }
    }
}

impl TryFrom<StoreRecord> for ParamStore {
    type Error = Error;

    fn try_from(r: StoreRecord) -> Result<Self> {
        if r.names.len() != r.blobs.len() {
            return Err(Error::Format(format!("{} parameter names for {} blobs", r.names.len(), r.blobs.len())));
        }
        let tensors = r
            .blobs
            .iter()
            .map(|b| {
                let bytes = BASE64.decode(b).map_err(|e| Error::Format(format!("bad base64 parameter blob: {e}")))?;
                Tensor::from_le_bytes(&bytes)
            })
            .collect::<Result<_>>()?;
        Ok(Self { names: r.names, tensors })
    }
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
