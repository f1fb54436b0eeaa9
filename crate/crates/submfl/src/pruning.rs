//! Server-side, dataless submodel generation: magnitude masks over the
//! weight matrices of a trained model, applied at nine increasing
//! thresholds to produce a cascade of progressively sparser submodels.
//!
//! Biases are never pruned. Masks computed at increasing thresholds on the
//! same parameters are nested (every zero stays zero), which makes
//! cumulative in-place pruning and independent per-threshold pruning
//! produce identical cascades.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ParamSet;

/// How a threshold in (0, 1) selects weights to prune.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PruneMode {
    /// Prune the `floor(threshold * P)` weights of smallest magnitude,
    /// ties broken by flat parameter index.
    Quantile,
    /// Prune weights with `|w| < threshold * max|w|`.
    MaxNormalized,
}

impl PruneMode {
    pub fn name(&self) -> &'static str {
        match self {
            PruneMode::Quantile => "quantile",
            PruneMode::MaxNormalized => "maxnorm",
        }
    }
}

impl FromStr for PruneMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quantile" => Ok(PruneMode::Quantile),
            "maxnorm" | "max-normalized" => Ok(PruneMode::MaxNormalized),
            other => Err(Error::InvalidArgument(format!(
                "unknown prune mode {other:?} (expected quantile or maxnorm)"
            ))),
        }
    }
}

/// Binary keep/drop marks for every weight-matrix entry of a network.
/// Bias coordinates are always kept and carry no explicit mark.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    layer_sizes: Vec<usize>,
    layers: Vec<Vec<u8>>,
}

impl Mask {
    /// All-ones mask congruent to `params` (nothing pruned).
    pub fn all_ones(params: &ParamSet) -> Self {
        Mask {
            layer_sizes: params.spec().layer_sizes.clone(),
            layers: params
                .layers()
                .iter()
                .map(|l| vec![1u8; l.weights.len()])
                .collect(),
        }
    }

    pub fn layers(&self) -> &[Vec<u8>] {
        &self.layers
    }

    /// Number of masked-out (zero) weight coordinates.
    pub fn zero_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.iter().filter(|&&b| b == 0).count())
            .sum()
    }

    /// Number of weight coordinates covered by the mask.
    pub fn weight_count(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    /// Trainable parameter count of a model carrying this mask: all kept
    /// weights plus every bias.
    pub fn trainable_count(&self, total_params: usize) -> usize {
        total_params - self.zero_count()
    }

    /// True when every zero of `self` is also zero in `other`.
    pub fn zeros_subset_of(&self, other: &Mask) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.iter().zip(b).all(|(&x, &y)| x != 0 || y == 0))
    }

    /// Flat '0'/'1' string over weight coordinates, in flat parameter order.
    pub fn to_bit_string(&self) -> String {
        let mut s = String::with_capacity(self.weight_count());
        for layer in &self.layers {
            for &b in layer {
                s.push(if b == 0 { '0' } else { '1' });
            }
        }
        s
    }

    /// Parse the output of [`Mask::to_bit_string`] for a given architecture.
    pub fn from_bit_string(layer_sizes: &[usize], bits: &str) -> Result<Self> {
        let dims: Vec<usize> = layer_sizes.windows(2).map(|w| w[0] * w[1]).collect();
        let expected: usize = dims.iter().sum();
        if bits.len() != expected {
            return Err(Error::ShapeMismatch {
                context: "mask bit string",
                expected,
                found: bits.len(),
            });
        }
        let mut chars = bits.chars();
        let mut layers = Vec::with_capacity(dims.len());
        for d in dims {
            let mut layer = Vec::with_capacity(d);
            for _ in 0..d {
                match chars.next() {
                    Some('0') => layer.push(0),
                    Some('1') => layer.push(1),
                    other => {
                        return Err(Error::InvalidArgument(format!(
                            "mask bit string holds {other:?}, expected '0' or '1'"
                        )))
                    }
                }
            }
            layers.push(layer);
        }
        Ok(Mask {
            layer_sizes: layer_sizes.to_vec(),
            layers,
        })
    }

    fn check_congruent(&self, params: &ParamSet) -> Result<()> {
        if self.layer_sizes != params.spec().layer_sizes {
            return Err(Error::ShapeMismatch {
                context: "mask shape",
                expected: params.weight_count(),
                found: self.weight_count(),
            });
        }
        Ok(())
    }
}

/// One pruned copy of a trained model.
#[derive(Debug, Clone)]
pub struct SubModel {
    pub threshold: f64,
    pub params: ParamSet,
    pub mask: Mask,
    pub global_sparsity: f64,
}

impl SubModel {
    /// Trainable parameter count: kept weights plus all biases.
    pub fn trainable_params(&self) -> usize {
        self.mask.trainable_count(self.params.total_params())
    }
}

/// The ordered list of nine submodels for thresholds 0.1 .. 0.9.
#[derive(Debug, Clone)]
pub struct SubModelCascade {
    submodels: Vec<SubModel>,
}

impl SubModelCascade {
    pub fn submodels(&self) -> &[SubModel] {
        &self.submodels
    }

    pub fn len(&self) -> usize {
        self.submodels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.submodels.is_empty()
    }

    pub fn get(&self, i: usize) -> &SubModel {
        &self.submodels[i]
    }
}

/// Compute the keep/drop mask for one threshold. Prunable coordinates are
/// all weight-matrix entries; biases are excluded.
pub fn threshold_mask(params: &ParamSet, threshold: f64, mode: PruneMode) -> Result<Mask> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "prune threshold must be in (0, 1), got {threshold}"
        )));
    }
    let mut mask = Mask::all_ones(params);
    match mode {
        PruneMode::Quantile => {
            let prunable: usize = params.weight_count();
            let k = ((threshold * prunable as f64).floor() as usize).min(prunable);
            // Order by (|w|, flat index); the flat index makes ties stable.
            let mut order: Vec<(f64, usize, usize, usize)> = Vec::with_capacity(prunable);
            let mut flat = 0usize;
            for (l, layer) in params.layers().iter().enumerate() {
                for (i, w) in layer.weights.iter().enumerate() {
                    order.push((w.abs(), flat, l, i));
                    flat += 1;
                }
                flat += layer.biases.len();
            }
            order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for &(_, _, l, i) in order.iter().take(k) {
                mask.layers[l][i] = 0;
            }
        }
        PruneMode::MaxNormalized => {
            let max = params
                .layers()
                .iter()
                .flat_map(|l| l.weights.iter())
                .fold(0.0f64, |m, w| m.max(w.abs()));
            if max == 0.0 {
                return Err(Error::AllZeroWeights);
            }
            let cut = threshold * max;
            for (l, layer) in params.layers().iter().enumerate() {
                for (i, w) in layer.weights.iter().enumerate() {
                    if w.abs() < cut {
                        mask.layers[l][i] = 0;
                    }
                }
            }
        }
    }
    Ok(mask)
}

/// Elementwise product: masked weight coordinates become exactly 0.0,
/// everything else (biases included) carries over unchanged.
pub fn apply_mask(params: &ParamSet, mask: &Mask) -> Result<ParamSet> {
    let mut out = params.clone();
    apply_mask_in_place(&mut out, mask)?;
    Ok(out)
}

/// In-place variant of [`apply_mask`].
pub fn apply_mask_in_place(params: &mut ParamSet, mask: &Mask) -> Result<()> {
    mask.check_congruent(params)?;
    for (layer, mlayer) in params.layers_mut().iter_mut().zip(&mask.layers) {
        for (w, &m) in layer.weights.iter_mut().zip(mlayer) {
            if m == 0 {
                *w = 0.0;
            }
        }
    }
    Ok(())
}

/// Count of coordinates that the mask zeroes but which are nonzero in
/// `params`. Zero everywhere training respected the mask.
pub fn mask_violations(params: &ParamSet, mask: &Mask) -> usize {
    params
        .layers()
        .iter()
        .zip(&mask.layers)
        .map(|(layer, mlayer)| {
            layer
                .weights
                .iter()
                .zip(mlayer)
                .filter(|(&w, &m)| m == 0 && w != 0.0)
                .count()
        })
        .sum()
}

/// Percentage of exactly-zero parameters over all parameters, biases
/// included.
pub fn global_sparsity(params: &ParamSet) -> f64 {
    100.0 * params.count_zeros() as f64 / params.total_params() as f64
}

/// Generate the nine-submodel cascade from a trained model. Every mask is
/// computed on the original `params`; no data sample is touched.
pub fn generate_submodels(params: &ParamSet, mode: PruneMode) -> Result<SubModelCascade> {
    let mut submodels = Vec::with_capacity(9);
    for i in 1..=9u32 {
        let threshold = f64::from(i) / 10.0;
        let mask = threshold_mask(params, threshold, mode)?;
        let pruned = apply_mask(params, &mask)?;
        let gs = global_sparsity(&pruned);
        submodels.push(SubModel {
            threshold,
            params: pruned,
            mask,
            global_sparsity: gs,
        });
    }
    Ok(SubModelCascade { submodels })
}
