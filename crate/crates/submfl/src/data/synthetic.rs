//! Synthetic Gaussian-blob datasets for fast deterministic experiments.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::seeded_rng;

use super::Dataset;

/// Class-balanced Gaussian clusters around `classes` seeded centers in
/// `[0.2, 0.8]^dim`, clipped to `[0, 1]`.
///
/// `separation` is the ratio of the minimum pairwise center distance to the
/// per-coordinate noise standard deviation, so it directly controls how
/// discriminable the classes are: values >= 10 give essentially
/// non-overlapping clusters, values around 2-4 give an overlapping,
/// MNIST-like difficulty.
pub fn synthetic_blobs(
    n: usize,
    classes: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if dim == 0 {
        return Err(Error::InvalidArgument("dim must be >= 1".into()));
    }
    if classes == 0 || n < classes {
        return Err(Error::InvalidArgument(format!(
            "need at least one sample per class: n={n}, classes={classes}"
        )));
    }
    if separation <= 0.0 || separation.is_nan() {
        return Err(Error::InvalidArgument("separation must be > 0".into()));
    }

    let mut rng = seeded_rng(seed);
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..dim).map(|_| rng.gen_range(0.2..0.8)).collect())
        .collect();

    let min_dist = min_pairwise_distance(&centers)
        // A single class has no pairwise distance; use the box span.
        .unwrap_or(0.6 * (dim as f64).sqrt());
    let sigma = min_dist / separation;

    // Balanced counts; the first n % classes classes absorb the remainder.
    let base = n / classes;
    let extra = n % classes;

    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for (c, center) in centers.iter().enumerate() {
        let count = base + usize::from(c < extra);
        for _ in 0..count {
            for &mu in center {
                let noise: f64 = rng.sample(StandardNormal);
                features.push((mu + sigma * noise).clamp(0.0, 1.0));
            }
            labels.push(c);
        }
    }

    // Shuffle sample order so shards and splits are class-mixed.
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut shuffled_features = Vec::with_capacity(n * dim);
    let mut shuffled_labels = Vec::with_capacity(n);
    for &i in &order {
        shuffled_features.extend_from_slice(&features[i * dim..(i + 1) * dim]);
        shuffled_labels.push(labels[i]);
    }

    Dataset::new(shuffled_features, shuffled_labels, dim, classes)
}

fn min_pairwise_distance(centers: &[Vec<f64>]) -> Option<f64> {
    let mut min: Option<f64> = None;
    for i in 0..centers.len() {
        for j in i + 1..centers.len() {
            let d: f64 = centers[i]
                .iter()
                .zip(&centers[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            min = Some(min.map_or(d, |m: f64| m.min(d)));
        }
    }
    min
}

/// Relabel `round(fraction * n)` randomly chosen samples to a uniformly
/// random *other* class. Caps the reachable accuracy of any classifier,
/// which keeps desk-scale runs in a realistic band.
pub fn with_label_noise(dataset: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!(
            "label-noise fraction must be in [0, 1), got {fraction}"
        )));
    }
    if fraction == 0.0 {
        return Ok(dataset.clone());
    }
    if dataset.classes() < 2 {
        return Err(Error::InvalidArgument(
            "label noise needs at least 2 classes".into(),
        ));
    }
    let n = dataset.len();
    let k = (fraction * n as f64).round() as usize;
    let mut rng = seeded_rng(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let mut labels: Vec<usize> = dataset.labels().to_vec();
    for &i in order.iter().take(k) {
        let shift = rng.gen_range(1..dataset.classes());
        labels[i] = (labels[i] + shift) % dataset.classes();
    }
    let features = (0..n).flat_map(|i| dataset.feature_row(i).to_vec()).collect();
    Dataset::new(features, labels, dataset.dim(), dataset.classes())
}
