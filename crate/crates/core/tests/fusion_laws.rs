mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sslse::encoder::LayerStack;
use sslse::fusion::{self, align_duplicate, concat_cross_domain, softmax, weighted_sum, Composition};
use sslse::matrix::Matrix;
use sslse::Error;

fn random_stack(rng: &mut ChaCha8Rng, layers: usize, frames: usize, dim: usize) -> LayerStack {
    let ls = (0..layers)
        .map(|_| Matrix::from_fn(frames, dim, |_, _| rng.gen_range(-2.0..2.0)))
        .collect();
    LayerStack::new(ls, 320, 16_000).unwrap()
}

#[test]
fn one_hot_weights_reproduce_each_layer_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let stack = random_stack(&mut rng, 5, 7, 3);
    for j in 0..5 {
        let mut w = vec![0.0; 5];
        w[j] = 1.0;
        let out = weighted_sum(&stack, &w).unwrap();
        assert_eq!(out.as_slice(), stack.layer(j).as_slice());
    }
}

#[test]
fn hand_value_and_uniform_over_identical_layers() {
    let s = LayerStack::new(vec![Matrix::filled(3, 2, 1.0), Matrix::filled(3, 2, 3.0)], 320, 16_000).unwrap();
    let out = weighted_sum(&s, &[0.25, 0.75]).unwrap();
    assert!(out.as_slice().iter().all(|&v| v == 2.5));

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let layer = Matrix::from_fn(4, 3, |_, _| rng.gen_range(-1.0..1.0));
    let same = LayerStack::new(vec![layer.clone(); 4], 320, 16_000).unwrap();
    let out = weighted_sum(&same, &softmax(&[0.0; 4])).unwrap();
    for (a, b) in out.as_slice().iter().zip(layer.as_slice()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn simplex_holds_through_1000_adam_steps() {
    let trace = common::simplex_trace(1000);
    for w in &trace {
        assert!(w.iter().all(|&x| x >= 0.0));
        assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }
    assert_ne!(trace.last().unwrap(), &softmax(&[0.0; 6]));
}

#[test]
fn duplication_examples() {
    assert_eq!(fusion::duplication_indices(64, 128), (0..128).map(|f| f / 2).collect::<Vec<_>>());
    assert_eq!(fusion::duplication_indices(1, 2), vec![0, 0]);
    let idx = fusion::duplication_indices(64, 127);
    assert_eq!(idx.len(), 127);
    assert_eq!(idx[126], 63);
    assert_eq!(fusion::duplication_indices(3, 8), vec![0, 0, 1, 1, 2, 2, 2, 2]);
}

#[test]
fn stride_mismatch_is_rejected() {
    let z = Matrix::zeros(4, 2);
    assert!(matches!(
        align_duplicate(&z, 8, 480, 160),
        Err(Error::UnsupportedStride { latent: 480, hop: 160 })
    ));
}

#[test]
fn cross_domain_width_and_order() {
    assert_eq!(Composition::WsLog1p.feature_dim(64, 201), 265);
    assert_eq!(Composition::Ws.feature_dim(64, 201), 64);
    let latent = Matrix::zeros(5, 64);
    let spec = Matrix::filled(5, 201, 0.7);
    let f = concat_cross_domain(&latent, &spec).unwrap();
    assert_eq!(f.shape(), (5, 265));
    for r in 0..5 {
        assert!(f.row(r)[..64].iter().all(|&v| v == 0.0));
        assert!(f.row(r)[64..].iter().all(|&v| v == 0.7));
    }
}

proptest! {
    #[test]
    fn weighted_sum_is_linear(seed in any::<u64>(), a in -5.0f64..5.0, logits in prop::collection::vec(-3.0f64..3.0, 3)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_stack(&mut rng, 3, 4, 2);
        let scaled = LayerStack::new(s.layers().iter().map(|m| m.map(|v| a * v)).collect(), 320, 16_000).unwrap();
        let w = softmax(&logits);
        let lhs = weighted_sum(&scaled, &w).unwrap();
        let rhs = weighted_sum(&s, &w).unwrap();
        for (x, y) in lhs.as_slice().iter().zip(rhs.as_slice()) {
            prop_assert!((x - a * y).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_is_shift_invariant(logits in prop::collection::vec(-20.0f64..20.0, 1..10), c in -50.0f64..50.0) {
        let w = softmax(&logits);
        let shifted: Vec<f64> = logits.iter().map(|l| l + c).collect();
        for (x, y) in w.iter().zip(softmax(&shifted)) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn alignment_matches_spectrogram_frames(latent in 1usize..80, spec in 1usize..170) {
        let z = Matrix::from_fn(latent, 2, |r, c| (r * 2 + c) as f64);
        let out = align_duplicate(&z, spec, 320, 160).unwrap();
        prop_assert_eq!(out.rows(), spec);
    }
}
