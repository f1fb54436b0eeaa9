//! Deterministic simulator for federated training over heterogeneous
//! devices with a server-side submodel cascade.
//!
//! The flow: a dense global model is trained with FedAvg over the devices
//! whose capacity fits it, then pruned on the server (no data involved)
//! into nine progressively sparser submodels. Each submodel, carrying the
//! transferred trained weights, is handed to the lower-capacity devices
//! that its size admits; devices whose accuracy target is already met drop
//! out along the way. A standard-FL baseline prunes fresh random models at
//! the same thresholds for comparison.
//!
//! Everything is seeded: identical configurations produce byte-identical
//! metrics regardless of worker count.

pub mod artifacts;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod federation;
pub mod fsio;
pub mod metrics;
pub mod nn;
pub mod orchestrator;
pub mod pruning;
pub mod rng;

pub use error::{Error, Result};
pub use nn::{
    adam_step, evaluate, forward, init_network, loss_and_grads, AdamState, Hyperparams,
    NetworkSpec, ParamSet,
};
pub use orchestrator::{
    compare_reports, run_experiment, run_sfl_baseline, run_submfl, CascadeReport, CascadeRow,
    ComparisonRow, DatasetSource, ExperimentConfig, ExperimentOutput,
};
pub use pruning::{
    apply_mask, generate_submodels, global_sparsity, threshold_mask, Mask, PruneMode, SubModel,
    SubModelCascade,
};
