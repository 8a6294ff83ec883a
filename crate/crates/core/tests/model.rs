mod common;

use crystalnet::elementdata::default_table;
use crystalnet::{
    build_graph, conv_forward, featurize, load_model, loss_and_gradients, mse, normalized_laplacian, pool_forward,
    save_model, Activation, AtomicStructure, ConvLayer, FeaturizedAtoms, GraphNodeFeaturization, GraphOptions, Model,
    ModelError, ModelShape, Pooling,
};
use nalgebra::{DMatrix, DVector, Vector3};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SYMBOLS: [&str; 5] = ["H", "C", "N", "O", "Na"];

fn random_featurized(rng: &mut ChaCha8Rng, atoms: usize) -> FeaturizedAtoms {
    let species = (0..atoms).map(|_| SYMBOLS[rng.random_range(0..SYMBOLS.len())].to_string()).collect();
    let positions = (0..atoms)
        .map(|_| Vector3::new(rng.random_range(0.0..2.5), rng.random_range(0.0..2.5), rng.random_range(0.0..2.5)))
        .collect();
    let s = AtomicStructure::molecule(species, positions).unwrap();
    let g = build_graph(&s, &GraphOptions::with_cutoff(2.0)).unwrap();
    let scheme = GraphNodeFeaturization::with_defaults(&["block", "group", "mass"], default_table()).unwrap();
    featurize(&g, &scheme, default_table()).unwrap()
}

fn two_conv_model(input_dim: usize, seed: u64, pooling: Pooling) -> Model {
    let shape = ModelShape {
        conv_dims: vec![6, 5],
        hidden_dims: vec![4],
        activation: Activation::Softplus,
        pooling,
        ..ModelShape::new(input_dim)
    };
    Model::init(&shape, seed).unwrap()
}

/// Largest `|analytic − numeric| / (|analytic| + 1e-8)` over all parameters,
/// with the numeric side from double-double central differences.
fn worst_relative_error(model: &Model, batch: &[(FeaturizedAtoms, f64)], h: f64) -> f64 {
    let (_, grads) = loss_and_gradients(model, batch).unwrap();
    let numeric = common::dd::central_differences(model, batch, h);
    grads.flatten().iter().zip(&numeric).map(|(a, n)| (a - n).abs() / (a.abs() + 1e-8)).fold(0.0, f64::max)
}

#[test]
fn gradients_match_finite_differences() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let fa = random_featurized(&mut rng, 5);
        let target = rng.random_range(-2.0..2.0);
        let model = two_conv_model(fa.matrix().nrows(), seed, Pooling::Mean);
        let worst = worst_relative_error(&model, &[(fa, target)], 1e-5);
        assert!(worst < 1e-5, "seed {seed}: relative error {worst:e}");
    }
}

#[test]
fn max_pool_gradients_match() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let batch: Vec<_> = (0..3).map(|_| (random_featurized(&mut rng, 5), rng.random_range(-1.0..1.0))).collect();
    let model = two_conv_model(batch[0].0.matrix().nrows(), 3, Pooling::Max);
    let worst = worst_relative_error(&model, &batch, 1e-5);
    assert!(worst < 1e-5, "relative error {worst:e}");
}

#[test]
fn double_double_oracle_agrees_with_float_forward() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let fa = random_featurized(&mut rng, 5);
    let model = two_conv_model(fa.matrix().nrows(), 1, Pooling::Mean);
    let params: Vec<_> = model.parameters().into_iter().map(common::dd::DD::from).collect();
    let oracle = common::dd::predict(&model, &params, &fa).to_f64();
    assert!((oracle - model.predict(&fa).unwrap()).abs() < 1e-13);
}

#[test]
fn sgd_step_decreases_loss() {
    let data = common::synthetic_dataset();
    let mut model = two_conv_model(data[0].0.matrix().nrows(), 11, Pooling::Mean);
    let (before, grads) = loss_and_gradients(&model, &data).unwrap();
    let stepped: Vec<f64> = model.parameters().iter().zip(grads.flatten()).map(|(p, g)| p - 1e-4 * g).collect();
    model.set_parameters(&stepped).unwrap();
    assert!(mse(&model, &data).unwrap() < before);
}

#[test]
fn permutation_leaves_prediction_bitwise_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for pooling in [Pooling::Mean, Pooling::Max] {
        let fa = random_featurized(&mut rng, 7);
        let model = two_conv_model(fa.matrix().nrows(), 5, pooling);
        let base = model.predict(&fa).unwrap();
        for _ in 0..50 {
            let mut perm: Vec<usize> = (0..7).collect();
            perm.shuffle(&mut rng);
            assert_eq!(model.predict(&fa.permuted(&perm)).unwrap().to_bits(), base.to_bits());
        }
    }
}

#[test]
fn checkpoint_roundtrip_preserves_predictions() {
    let data = common::synthetic_dataset();
    let model =
        two_conv_model(data[0].0.matrix().nrows(), 2, Pooling::Mean).with_featurization(data[0].0.scheme().to_config());
    let back = load_model(&save_model(&model)).unwrap();
    for (fa, _) in &data {
        assert_eq!(back.predict(fa).unwrap().to_bits(), model.predict(fa).unwrap().to_bits());
    }
}

#[test]
fn wrong_input_width_names_both_dimensions() {
    let data = common::synthetic_dataset();
    let rows = data[0].0.matrix().nrows();
    let model = two_conv_model(rows + 3, 2, Pooling::Mean);
    let err = model.predict(&data[0].0).unwrap_err();
    assert!(
        matches!(err, ModelError::DimensionMismatch { expected, found, .. } if expected == rows + 3 && found == rows)
    );
    let msg = err.to_string();
    assert!(msg.contains(&(rows + 3).to_string()) && msg.contains(&rows.to_string()), "{msg}");
}

#[test]
fn empty_batch_is_rejected() {
    let model = two_conv_model(3, 0, Pooling::Mean);
    assert!(matches!(loss_and_gradients(&model, &[]), Err(ModelError::EmptyBatch)));
}

fn random_laplacian(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let fa = random_featurized(rng, n);
    normalized_laplacian(fa.graph())
}

fn arb_layer(din: usize, dout: usize) -> impl Strategy<Value = ConvLayer> {
    (prop::collection::vec(-1.0f64..1.0, din * dout), prop::collection::vec(-1.0f64..1.0, din * dout)).prop_map(
        move |(a, b)| {
            ConvLayer::new(
                DMatrix::from_vec(dout, din, a),
                DMatrix::from_vec(dout, din, b),
                DVector::zeros(dout),
                Activation::Identity,
            )
            .unwrap()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// With identity activation and zero bias the layer is linear in X.
    #[test]
    fn conv_is_linear(
        layer in arb_layer(4, 3),
        x1 in prop::collection::vec(-2.0f64..2.0, 4 * 5),
        x2 in prop::collection::vec(-2.0f64..2.0, 4 * 5),
        alpha in -3.0f64..3.0,
        seed in any::<u64>(),
    ) {
        let l = random_laplacian(&mut ChaCha8Rng::seed_from_u64(seed), 5);
        let (x1, x2) = (DMatrix::from_vec(4, 5, x1), DMatrix::from_vec(4, 5, x2));
        let lhs = conv_forward(&layer, &(&x1 * alpha + &x2), &l).unwrap();
        let rhs = conv_forward(&layer, &x1, &l).unwrap() * alpha + conv_forward(&layer, &x2, &l).unwrap();
        prop_assert!((lhs - rhs).abs().max() <= 1e-12);
    }

    #[test]
    fn pooling_is_bounded_by_row_extremes(x in prop::collection::vec(-5.0f64..5.0, 3 * 6)) {
        let x = DMatrix::from_vec(3, 6, x);
        let mean = pool_forward(Pooling::Mean, &x).unwrap();
        let max = pool_forward(Pooling::Max, &x).unwrap();
        for r in 0..3 {
            let row = x.row(r);
            prop_assert!(row.min() - 1e-12 <= mean[r] && mean[r] <= row.max() + 1e-12);
            prop_assert_eq!(max[r], row.max());
        }
    }
}

#[test]
fn double_double_transcendentals() {
    use common::dd::DD;
    let e = DD::ONE.exp();
    assert!((e.hi - std::f64::consts::E).abs() <= f64::EPSILON * 3.0);
    let back = DD::from(3.7).exp().ln();
    assert!((back - DD::from(3.7)).abs().hi < 1e-29, "{back:?}");
    // e^-20 to 17 digits
    let small = DD::from(-20.0).exp();
    let want = 2.061_153_622_438_558e-9;
    assert!(((small.hi - want) / want).abs() < 2.0 * f64::EPSILON);
    let third = DD::ONE / DD::from(3.0);
    assert!((third * DD::from(3.0) - DD::ONE).abs().hi < 1e-31);
}
