use super::*;
use crate::data::synthetic_blobs;

fn spec(sizes: &[usize]) -> NetworkSpec {
    NetworkSpec::new(sizes.to_vec()).unwrap()
}

fn loss_only(params: &ParamSet, inputs: &[f64], labels: &[usize]) -> f64 {
    loss_and_grads(params, inputs, labels).unwrap().0
}

/// Central finite differences of the loss, one probe per coordinate.
fn numeric_grads(params: &ParamSet, inputs: &[f64], labels: &[usize], h: f64) -> Vec<f64> {
    let flat = params.flatten();
    let spec = params.spec().clone();
    (0..flat.len())
        .map(|i| {
            let mut plus = flat.clone();
            plus[i] += h;
            let mut minus = flat.clone();
            minus[i] -= h;
            let lp = loss_only(&ParamSet::from_flat(&spec, &plus).unwrap(), inputs, labels);
            let lm = loss_only(&ParamSet::from_flat(&spec, &minus).unwrap(), inputs, labels);
            (lp - lm) / (2.0 * h)
        })
        .collect()
}

fn assert_grads_close(analytic: &[f64], numeric: &[f64], rel_tol: f64) {
    for (i, (&a, &n)) in analytic.iter().zip(numeric.iter()).enumerate() {
        let denom = a.abs().max(n.abs()).max(1e-3);
        assert!(
            (a - n).abs() / denom <= rel_tol,
            "coordinate {i}: analytic {a} vs numeric {n}"
        );
    }
}

#[test]
fn init_rejects_zero_layer_size() {
    assert!(NetworkSpec::new(vec![4, 0, 2]).is_err());
    assert!(NetworkSpec::new(vec![4]).is_err());
}

#[test]
fn init_biases_are_zero() {
    let params = init_network(&spec(&[2, 1]), 99).unwrap();
    assert_eq!(params.layers()[0].biases, vec![0.0]);
}

#[test]
fn init_is_deterministic() {
    let a = init_network(&spec(&[784, 128, 10]), 7).unwrap();
    let b = init_network(&spec(&[784, 128, 10]), 7).unwrap();
    assert_eq!(a, b);
    let c = init_network(&spec(&[784, 128, 10]), 8).unwrap();
    assert_ne!(a, c);
}

#[test]
fn init_respects_glorot_bound() {
    let params = init_network(&spec(&[100, 100]), 3).unwrap();
    let limit = (6.0f64 / 200.0).sqrt();
    for w in &params.layers()[0].weights {
        assert!(w.abs() <= limit, "weight {w} outside ±{limit}");
    }
    // Sanity: the draw actually spreads over the interval.
    let max = params.layers()[0]
        .weights
        .iter()
        .fold(0.0f64, |m, w| m.max(w.abs()));
    assert!(max > 0.5 * limit);
}

#[test]
fn forward_zero_params_is_zero_map() {
    let params = ParamSet::zeros(&spec(&[3, 4, 2]));
    let out = forward(&params, &[0.3, -1.0, 2.0]).unwrap();
    assert_eq!(out, vec![0.0, 0.0]);
}

#[test]
fn forward_identity_single_layer() {
    let mut params = ParamSet::zeros(&spec(&[2, 2]));
    params.layers_mut()[0].weights = vec![1.0, 0.0, 0.0, 1.0];
    let out = forward(&params, &[3.0, -2.0]).unwrap();
    // Single affine layer: no hidden activation applies.
    assert_eq!(out, vec![3.0, -2.0]);
}

#[test]
fn forward_matches_hand_computed_pass() {
    let mut params = ParamSet::zeros(&spec(&[2, 2, 2]));
    params.layers_mut()[0].weights = vec![1.0, -2.0, 0.5, 1.0];
    params.layers_mut()[0].biases = vec![0.5, -0.25];
    params.layers_mut()[1].weights = vec![2.0, 1.0, -1.0, 3.0];
    params.layers_mut()[1].biases = vec![0.1, -0.2];
    // x=[1,1]: z1=[-0.5,1.25], relu=[0,1.25], logits=[1.35,3.55].
    let out = forward(&params, &[1.0, 1.0]).unwrap();
    assert!((out[0] - 1.35).abs() < 1e-12);
    assert!((out[1] - 3.55).abs() < 1e-12);
}

#[test]
fn forward_rejects_dimension_mismatch() {
    let params = ParamSet::zeros(&spec(&[3, 2]));
    assert!(forward(&params, &[1.0, 2.0]).is_err());
    assert!(forward(&params, &[]).is_err());
}

#[test]
fn uniform_logits_loss_is_ln_classes() {
    for classes in [2usize, 5, 10] {
        let params = ParamSet::zeros(&spec(&[4, classes]));
        let inputs = vec![0.2; 4 * 3];
        let labels = vec![0usize, classes - 1, classes / 2];
        let (loss, _) = loss_and_grads(&params, &inputs, &labels).unwrap();
        assert!((loss - (classes as f64).ln()).abs() < 1e-12);
    }
}

#[test]
fn grads_match_finite_differences() {
    let net = spec(&[4, 5, 3]);
    let params = init_network(&net, 11).unwrap();
    let data = synthetic_blobs(6, 3, 4, 4.0, 21).unwrap();
    let inputs: Vec<f64> = (0..data.len()).flat_map(|i| data.feature_row(i).to_vec()).collect();
    let labels: Vec<usize> = (0..data.len()).map(|i| data.label(i)).collect();
    let (_, analytic) = loss_and_grads(&params, &inputs, &labels).unwrap();
    let numeric = numeric_grads(&params, &inputs, &labels, 1e-5);
    assert_grads_close(&analytic.flatten(), &numeric, 1e-4);
}

#[test]
fn duplicated_batch_leaves_loss_and_grads_unchanged() {
    let net = spec(&[3, 4, 2]);
    let params = init_network(&net, 5).unwrap();
    let inputs = vec![0.1, 0.9, 0.4, 0.8, 0.2, 0.6];
    let labels = vec![0usize, 1];
    let mut dup_inputs = Vec::new();
    let mut dup_labels = Vec::new();
    for s in 0..2 {
        for _ in 0..2 {
            dup_inputs.extend_from_slice(&inputs[s * 3..(s + 1) * 3]);
            dup_labels.push(labels[s]);
        }
    }
    let (loss_a, grads_a) = loss_and_grads(&params, &inputs, &labels).unwrap();
    let (loss_b, grads_b) = loss_and_grads(&params, &dup_inputs, &dup_labels).unwrap();
    assert!((loss_a - loss_b).abs() <= 1e-12 * loss_a.abs().max(1.0));
    for (a, b) in grads_a.flatten().iter().zip(grads_b.flatten().iter()) {
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }
}

#[test]
fn loss_rejects_label_out_of_range() {
    let params = ParamSet::zeros(&spec(&[2, 3]));
    let err = loss_and_grads(&params, &[0.1, 0.2], &[3]).unwrap_err();
    assert!(matches!(err, crate::Error::LabelOutOfRange { label: 3, classes: 3 }));
}

#[test]
fn softmax_is_stable_for_huge_logits() {
    let mut params = ParamSet::zeros(&spec(&[1, 3]));
    params.layers_mut()[0].weights = vec![1e4, -1e4, 5e3];
    let (loss, grads) = loss_and_grads(&params, &[1.0], &[1]).unwrap();
    assert!(loss.is_finite());
    assert!(grads.all_finite());
}

#[test]
fn adam_zero_gradient_leaves_params_unchanged() {
    let net = spec(&[3, 2]);
    let mut params = init_network(&net, 2).unwrap();
    let before = params.clone();
    let grads = ParamSet::zeros(&net);
    let mut state = AdamState::new(&params);
    adam_step(&mut params, &grads, &mut state, &Hyperparams::default()).unwrap();
    assert_eq!(params, before);
    assert_eq!(state.t, 1);
}

#[test]
fn adam_first_step_matches_closed_form() {
    let net = spec(&[1, 1]);
    let mut params = ParamSet::zeros(&net);
    let mut grads = ParamSet::zeros(&net);
    grads.layers_mut()[0].weights[0] = 1.0;
    let mut state = AdamState::new(&params);
    let hyper = Hyperparams::default();
    adam_step(&mut params, &grads, &mut state, &hyper).unwrap();
    // First step: m_hat = g, v_hat = g^2, so the update is lr*g/(|g|+eps).
    let expected = -hyper.learning_rate * 1.0 / (1.0 + hyper.epsilon);
    let got = params.layers()[0].weights[0];
    assert!((got - expected).abs() < 1e-15, "got {got}, expected {expected}");
    assert!((got + 0.001).abs() < 1e-10);
}

#[test]
fn adam_two_steps_match_scalar_recurrence() {
    let net = spec(&[1, 1]);
    let mut params = ParamSet::from_flat(&net, &[0.3, -0.1]).unwrap();
    let grads = ParamSet::from_flat(&net, &[0.7, -0.2]).unwrap();
    let mut state = AdamState::new(&params);
    let hyper = Hyperparams::default();
    adam_step(&mut params, &grads, &mut state, &hyper).unwrap();
    adam_step(&mut params, &grads, &mut state, &hyper).unwrap();
    assert_eq!(state.t, 2);

    // Scalar oracle for the same recurrences.
    let oracle = |mut p: f64, g: f64| {
        let (mut m, mut v) = (0.0f64, 0.0f64);
        for t in 1..=2 {
            m = hyper.beta1 * m + (1.0 - hyper.beta1) * g;
            v = hyper.beta2 * v + (1.0 - hyper.beta2) * g * g;
            let m_hat = m / (1.0 - hyper.beta1.powi(t));
            let v_hat = v / (1.0 - hyper.beta2.powi(t));
            p -= hyper.learning_rate * m_hat / (v_hat.sqrt() + hyper.epsilon);
        }
        p
    };
    let flat = params.flatten();
    assert!((flat[0] - oracle(0.3, 0.7)).abs() < 1e-15);
    assert!((flat[1] - oracle(-0.1, -0.2)).abs() < 1e-15);
}

#[test]
fn adam_rejects_non_finite_grads() {
    let net = spec(&[2, 2]);
    let mut params = ParamSet::zeros(&net);
    let mut grads = ParamSet::zeros(&net);
    grads.layers_mut()[0].weights[1] = f64::NAN;
    let mut state = AdamState::new(&params);
    let err = adam_step(&mut params, &grads, &mut state, &Hyperparams::default());
    assert!(matches!(err, Err(crate::Error::NonFinite(_))));
    assert_eq!(state.t, 0);
}

#[test]
fn evaluate_perfect_classifier_scores_one() {
    // Identity-ish map on 3-dim one-hot-like blobs: logits reveal the label.
    let data = synthetic_blobs(60, 3, 3, 20.0, 4).unwrap();
    // Train a tiny net quickly to separate the blobs.
    let net = spec(&[3, 8, 3]);
    let mut params = init_network(&net, 9).unwrap();
    let mut state = AdamState::new(&params);
    let hyper = Hyperparams {
        learning_rate: 0.05,
        ..Hyperparams::default()
    };
    let inputs: Vec<f64> = (0..data.len()).flat_map(|i| data.feature_row(i).to_vec()).collect();
    let labels: Vec<usize> = (0..data.len()).map(|i| data.label(i)).collect();
    for _ in 0..120 {
        let (_, grads) = loss_and_grads(&params, &inputs, &labels).unwrap();
        adam_step(&mut params, &grads, &mut state, &hyper).unwrap();
    }
    let (_, acc) = evaluate(&params, &data).unwrap();
    assert_eq!(acc, 1.0);
}

#[test]
fn evaluate_matches_per_sample_argmax_count() {
    let data = synthetic_blobs(50, 4, 6, 2.0, 17).unwrap();
    let params = init_network(&spec(&[6, 7, 4]), 23).unwrap();
    let (_, acc) = evaluate(&params, &data).unwrap();

    let mut correct = 0usize;
    for i in 0..data.len() {
        let logits = forward(&params, data.feature_row(i)).unwrap();
        let mut best = 0;
        for (c, &v) in logits.iter().enumerate() {
            if v > logits[best] {
                best = c;
            }
        }
        if best == data.label(i) {
            correct += 1;
        }
    }
    assert_eq!(acc, correct as f64 / data.len() as f64);
}

#[test]
fn evaluate_breaks_ties_toward_lowest_class() {
    // All-zero params give identical logits; argmax must pick class 0.
    let params = ParamSet::zeros(&spec(&[2, 3]));
    let data = crate::data::Dataset::new(vec![0.5, 0.5, 0.1, 0.9], vec![0, 1], 2, 3).unwrap();
    let (_, acc) = evaluate(&params, &data).unwrap();
    assert_eq!(acc, 0.5);
}

#[test]
fn flatten_round_trip_is_exact() {
    let net = spec(&[5, 4, 3]);
    let params = init_network(&net, 31).unwrap();
    let flat = params.flatten();
    assert_eq!(flat.len(), net.total_params());
    let rebuilt = ParamSet::from_flat(&net, &flat).unwrap();
    assert_eq!(params, rebuilt);
    assert!(ParamSet::from_flat(&net, &flat[1..]).is_err());
}

#[test]
fn flat_order_is_layer_major_weights_before_biases() {
    let net = spec(&[2, 2, 1]);
    let mut params = ParamSet::zeros(&net);
    params.layers_mut()[0].weights = vec![1.0, 2.0, 3.0, 4.0];
    params.layers_mut()[0].biases = vec![5.0, 6.0];
    params.layers_mut()[1].weights = vec![7.0, 8.0];
    params.layers_mut()[1].biases = vec![9.0];
    assert_eq!(
        params.flatten(),
        vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]
    );
}

/// Fixed seeds keep the finite-difference comparison away from ReLU kinks;
/// random draws occasionally land a pre-activation within h of zero, where
/// central differences are meaningless.
#[test]
fn small_net_grads_match_finite_differences_across_seeds() {
    let net = spec(&[3, 4, 3]);
    for seed in 200..232u64 {
        let params = init_network(&net, seed).unwrap();
        let data = synthetic_blobs(5, 3, 3, 3.0, seed ^ 0xabc).unwrap();
        let inputs: Vec<f64> = (0..data.len()).flat_map(|i| data.feature_row(i).to_vec()).collect();
        let labels: Vec<usize> = (0..data.len()).map(|i| data.label(i)).collect();
        let (_, analytic) = loss_and_grads(&params, &inputs, &labels).unwrap();
        let numeric = numeric_grads(&params, &inputs, &labels, 1e-5);
        assert_grads_close(&analytic.flatten(), &numeric, 1e-4);
    }
}

mod properties {
    use super::*;
    use proptest::prelude::*;

    fn arb_sizes() -> impl Strategy<Value = Vec<usize>> {
        proptest::collection::vec(1usize..6, 2..5)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn flatten_unflatten_round_trip(sizes in arb_sizes(), seed in 0u64..1000) {
            let net = NetworkSpec::new(sizes).unwrap();
            let params = init_network(&net, seed).unwrap();
            let rebuilt = ParamSet::from_flat(&net, &params.flatten()).unwrap();
            prop_assert_eq!(params, rebuilt);
        }
    }
}
