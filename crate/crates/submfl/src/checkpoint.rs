//! Model checkpoints: versioned, human-inspectable JSON holding the
//! architecture, the flat parameter array at full decimal precision, an
//! optional pruning mask as a bit string, and provenance.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio;
use crate::nn::{NetworkSpec, ParamSet};
use crate::pruning::Mask;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub stage: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub layer_sizes: Vec<usize>,
    pub activation: String,
    /// Flat parameter values: layer by layer, row-major weights then biases.
    pub params: Vec<f64>,
    /// '0'/'1' per weight coordinate in flat order; biases carry no bit.
    pub mask: Option<String>,
    pub provenance: Provenance,
}

impl Checkpoint {
    pub fn from_params(
        params: &ParamSet,
        mask: Option<&Mask>,
        provenance: Provenance,
    ) -> Result<Self> {
        if !params.all_finite() {
            return Err(Error::NonFinite("checkpoint parameters"));
        }
        Ok(Checkpoint {
            version: CHECKPOINT_VERSION,
            layer_sizes: params.spec().layer_sizes.clone(),
            activation: params.spec().activation.name().to_string(),
            params: params.flatten(),
            mask: mask.map(Mask::to_bit_string),
            provenance,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {}",
                self.version
            )));
        }
        if self.activation != "relu" {
            return Err(Error::Checkpoint(format!(
                "unknown activation {:?}",
                self.activation
            )));
        }
        let spec = self.network_spec()?;
        if self.params.len() != spec.total_params() {
            return Err(Error::Checkpoint(format!(
                "parameter count {} does not match architecture ({} expected)",
                self.params.len(),
                spec.total_params()
            )));
        }
        if let Some(bits) = &self.mask {
            if bits.len() != spec.weight_count() {
                return Err(Error::Checkpoint(format!(
                    "mask length {} does not match prunable count {}",
                    bits.len(),
                    spec.weight_count()
                )));
            }
        }
        if self.params.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("checkpoint parameters"));
        }
        Ok(())
    }

    pub fn network_spec(&self) -> Result<NetworkSpec> {
        NetworkSpec::new(self.layer_sizes.clone())
            .map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn to_params(&self) -> Result<ParamSet> {
        self.validate()?;
        ParamSet::from_flat(&self.network_spec()?, &self.params)
    }

    pub fn to_mask(&self) -> Result<Option<Mask>> {
        self.validate()?;
        self.mask
            .as_deref()
            .map(|bits| Mask::from_bit_string(&self.layer_sizes, bits))
            .transpose()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Checkpoint(format!("serialize: {e}")))?;
        fsio::write_atomic(path, json.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fsio::read_to_string(path)?;
        let ck: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        ck.validate()?;
        Ok(ck)
    }
}
