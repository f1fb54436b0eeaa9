//! Flat `key = value` experiment configuration files.
//!
//! Every key has a default; unknown keys are rejected. `#` starts a
//! comment. The full schema:
//!
//! ```text
//! layers = 784,128,10            # network layer sizes
//! dataset = synthetic            # synthetic | idx
//! idx_images = path/to/images    # required when dataset = idx
//! idx_labels = path/to/labels
//! synthetic_samples = 10000
//! synthetic_classes = 10
//! synthetic_dim = 784
//! synthetic_separation = 3.0     # center distance over noise std
//! synthetic_label_noise = 0.0    # fraction of labels flipped
//! devices = 100
//! dense_capable_fraction = 0.1
//! availability = 0.3
//! rounds = 30
//! local_epochs = 3
//! batch_size = 64
//! learning_rate = 0.001
//! beta1 = 0.9
//! beta2 = 0.999
//! epsilon = 1e-8
//! weight_decay = 0.0
//! holdout_fraction = 0.1
//! prune_mode = quantile          # quantile | maxnorm
//! capacity_min = auto            # auto or an integer
//! capacity_max = auto
//! target_acc_min = 0.70
//! target_acc_max = 0.99
//! min_fit_clients = 3
//! seed = 42
//! out_dir = out
//! workers = 0                    # 0 = all cores
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fsio;
use crate::nn::Hyperparams;
use crate::orchestrator::{DatasetSource, ExperimentConfig};
use crate::pruning::PruneMode;

const KNOWN_KEYS: &[&str] = &[
    "layers",
    "dataset",
    "idx_images",
    "idx_labels",
    "synthetic_samples",
    "synthetic_classes",
    "synthetic_dim",
    "synthetic_separation",
    "synthetic_label_noise",
    "devices",
    "dense_capable_fraction",
    "availability",
    "rounds",
    "local_epochs",
    "batch_size",
    "learning_rate",
    "beta1",
    "beta2",
    "epsilon",
    "weight_decay",
    "holdout_fraction",
    "prune_mode",
    "capacity_min",
    "capacity_max",
    "target_acc_min",
    "target_acc_max",
    "min_fit_clients",
    "seed",
    "out_dir",
    "workers",
];

/// CLI-level overrides; every field beats the config file when set.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub mode: Option<PruneMode>,
    pub devices: Option<usize>,
    pub rounds: Option<usize>,
    pub availability: Option<f64>,
    pub workers: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, config: &mut ExperimentConfig) {
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(dir) = &self.out_dir {
            config.out_dir = dir.clone();
        }
        if let Some(mode) = self.mode {
            config.prune_mode = mode;
        }
        if let Some(devices) = self.devices {
            config.n_devices = devices;
        }
        if let Some(rounds) = self.rounds {
            config.rounds = rounds;
        }
        if let Some(availability) = self.availability {
            config.availability = availability;
        }
        if let Some(workers) = self.workers {
            config.workers = workers;
        }
    }
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "line {}: expected `key = value`, got {raw:?}",
                lineno + 1
            )));
        };
        let key = key.trim();
        let value = value.trim();
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::Config(format!("line {}: unknown key {key:?}", lineno + 1)));
        }
        if map.insert(key.to_string(), value.to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key {key:?}", lineno + 1)));
        }
    }
    build_config(&map)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config_str(&fsio::read_to_string(path)?)
}

fn get_parsed<T: std::str::FromStr>(
    map: &BTreeMap<String, String>,
    key: &str,
    default: T,
) -> Result<T> {
    match map.get(key) {
        None => Ok(default),
        Some(raw) => raw
            .parse()
            .map_err(|_| Error::Config(format!("bad value for {key}: {raw:?}"))),
    }
}

fn get_optional_usize(map: &BTreeMap<String, String>, key: &str) -> Result<Option<usize>> {
    match map.get(key).map(String::as_str) {
        None | Some("auto") => Ok(None),
        Some(raw) => raw
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("bad value for {key}: {raw:?}"))),
    }
}

fn build_config(map: &BTreeMap<String, String>) -> Result<ExperimentConfig> {
    let layers: Vec<usize> = match map.get("layers") {
        None => vec![784, 128, 10],
        Some(raw) => raw
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("bad layer size {s:?}")))
            })
            .collect::<Result<_>>()?,
    };

    let dataset_kind = map.get("dataset").map(String::as_str).unwrap_or("synthetic");
    let dataset = match dataset_kind {
        "synthetic" => DatasetSource::Synthetic {
            samples: get_parsed(map, "synthetic_samples", 10_000)?,
            classes: get_parsed(map, "synthetic_classes", 10)?,
            dim: get_parsed(map, "synthetic_dim", 784)?,
            separation: get_parsed(map, "synthetic_separation", 3.0)?,
            label_noise: get_parsed(map, "synthetic_label_noise", 0.0)?,
        },
        "idx" => {
            let images = map
                .get("idx_images")
                .ok_or_else(|| Error::Config("dataset = idx requires idx_images".into()))?;
            let labels = map
                .get("idx_labels")
                .ok_or_else(|| Error::Config("dataset = idx requires idx_labels".into()))?;
            DatasetSource::Idx {
                images: PathBuf::from(images),
                labels: PathBuf::from(labels),
            }
        }
        other => {
            return Err(Error::Config(format!(
                "dataset must be synthetic or idx, got {other:?}"
            )))
        }
    };

    let capacity_range = match (
        get_optional_usize(map, "capacity_min")?,
        get_optional_usize(map, "capacity_max")?,
    ) {
        (None, None) => None,
        (Some(lo), Some(hi)) => Some((lo, hi)),
        _ => {
            return Err(Error::Config(
                "capacity_min and capacity_max must both be set or both be auto".into(),
            ))
        }
    };

    let mode_raw = map.get("prune_mode").map(String::as_str).unwrap_or("quantile");
    let prune_mode: PruneMode = mode_raw
        .parse()
        .map_err(|e: Error| Error::Config(e.to_string()))?;

    let config = ExperimentConfig {
        layers,
        dataset,
        n_devices: get_parsed(map, "devices", 100)?,
        dense_capable_fraction: get_parsed(map, "dense_capable_fraction", 0.1)?,
        availability: get_parsed(map, "availability", 0.3)?,
        rounds: get_parsed(map, "rounds", 30)?,
        hyper: Hyperparams {
            learning_rate: get_parsed(map, "learning_rate", 0.001)?,
            beta1: get_parsed(map, "beta1", 0.9)?,
            beta2: get_parsed(map, "beta2", 0.999)?,
            epsilon: get_parsed(map, "epsilon", 1e-8)?,
            weight_decay: get_parsed(map, "weight_decay", 0.0)?,
            batch_size: get_parsed(map, "batch_size", 64)?,
            local_epochs: get_parsed(map, "local_epochs", 3)?,
        },
        prune_mode,
        capacity_range,
        target_acc_range: (
            get_parsed(map, "target_acc_min", 0.70)?,
            get_parsed(map, "target_acc_max", 0.99)?,
        ),
        min_fit_clients: get_parsed(map, "min_fit_clients", 3)?,
        holdout_fraction: get_parsed(map, "holdout_fraction", 0.1)?,
        seed: get_parsed(map, "seed", 42)?,
        out_dir: PathBuf::from(map.get("out_dir").map(String::as_str).unwrap_or("out")),
        workers: get_parsed(map, "workers", 0)?,
    };
    config.validate()?;
    Ok(config)
}

/// Render the configuration with every key explicit, in schema order.
/// Parsing it back yields an equal configuration; its hash identifies the
/// experiment in checkpoints.
pub fn render_canonical(config: &ExperimentConfig) -> String {
    let mut out = String::new();
    let layers: Vec<String> = config.layers.iter().map(usize::to_string).collect();
    out.push_str(&format!("layers = {}\n", layers.join(",")));
    match &config.dataset {
        DatasetSource::Synthetic {
            samples,
            classes,
            dim,
            separation,
            label_noise,
        } => {
            out.push_str("dataset = synthetic\n");
            out.push_str(&format!("synthetic_samples = {samples}\n"));
            out.push_str(&format!("synthetic_classes = {classes}\n"));
            out.push_str(&format!("synthetic_dim = {dim}\n"));
            out.push_str(&format!("synthetic_separation = {separation}\n"));
            out.push_str(&format!("synthetic_label_noise = {label_noise}\n"));
        }
        DatasetSource::Idx { images, labels } => {
            out.push_str("dataset = idx\n");
            out.push_str(&format!("idx_images = {}\n", images.display()));
            out.push_str(&format!("idx_labels = {}\n", labels.display()));
        }
    }
    out.push_str(&format!("devices = {}\n", config.n_devices));
    out.push_str(&format!(
        "dense_capable_fraction = {}\n",
        config.dense_capable_fraction
    ));
    out.push_str(&format!("availability = {}\n", config.availability));
    out.push_str(&format!("rounds = {}\n", config.rounds));
    out.push_str(&format!("local_epochs = {}\n", config.hyper.local_epochs));
    out.push_str(&format!("batch_size = {}\n", config.hyper.batch_size));
    out.push_str(&format!("learning_rate = {}\n", config.hyper.learning_rate));
    out.push_str(&format!("beta1 = {}\n", config.hyper.beta1));
    out.push_str(&format!("beta2 = {}\n", config.hyper.beta2));
    out.push_str(&format!("epsilon = {}\n", config.hyper.epsilon));
    out.push_str(&format!("weight_decay = {}\n", config.hyper.weight_decay));
    out.push_str(&format!("holdout_fraction = {}\n", config.holdout_fraction));
    out.push_str(&format!("prune_mode = {}\n", config.prune_mode.name()));
    match config.capacity_range {
        None => out.push_str("capacity_min = auto\ncapacity_max = auto\n"),
        Some((lo, hi)) => {
            out.push_str(&format!("capacity_min = {lo}\ncapacity_max = {hi}\n"));
        }
    }
    out.push_str(&format!("target_acc_min = {}\n", config.target_acc_range.0));
    out.push_str(&format!("target_acc_max = {}\n", config.target_acc_range.1));
    out.push_str(&format!("min_fit_clients = {}\n", config.min_fit_clients));
    out.push_str(&format!("seed = {}\n", config.seed));
    out.push_str(&format!("out_dir = {}\n", config.out_dir.display()));
    out.push_str(&format!("workers = {}\n", config.workers));
    out
}

/// Hex SHA-256 over the canonical rendering, minus the keys that place the
/// run on a machine without affecting its results (`out_dir`, `workers`).
/// Two runs with equal hashes produce identical metrics.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let identity: String = render_canonical(config)
        .lines()
        .filter(|l| !l.starts_with("out_dir =") && !l.starts_with("workers ="))
        .collect::<Vec<_>>()
        .join("\n");
    let digest = Sha256::digest(identity.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
