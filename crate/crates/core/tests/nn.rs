use horizon_core::nn::*;
use horizon_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn relative_error_of_identical_vectors_is_zero() {
    let a = [1.0, -2.0, 0.0, 3e-9];
    assert_eq!(max_rel_error(&a, &a), 0.0);
    assert!(max_rel_error(&[1.0], &[1.1]) > 0.09);
}

#[test]
fn loss_names_round_trip() {
    for desc in LossDescriptor::ALL {
        assert_eq!(LossDescriptor::parse(desc.name()), Some(desc));
    }
    assert_eq!(LossDescriptor::parse("nope"), None);
}

/// Sum of squares of outputs, checked by finite differences on random nets.
fn sum_of_squares_check(cfg: &MlpConfig, seed: u64) -> f64 {
    let mut p: MlpParams<f64> = MlpParams::<f32>::init(cfg, seed).unwrap().cast();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in p.as_mut_slice() {
        *v += 0.05 * (rng.random::<f64>() - 0.5);
    }
    let x = Matrix::from_vec(3, cfg.input_dim(), (0..3 * cfg.input_dim()).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect());
    let loss = |p: &MlpParams<f64>| -> f64 {
        let y = p.predict(&x).unwrap();
        y.as_slice().iter().map(|v| v * v).sum()
    };
    let mut cache = MlpCache::default();
    let y = p.forward(&x, &mut cache).unwrap().clone();
    let dy = y.map(|v| 2.0 * v);
    let mut grads = vec![0.0; p.len()];
    p.backward(&mut cache, &dy, &mut grads, None).unwrap();
    let mut numeric = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        let x0 = p.as_slice()[i];
        p.as_mut_slice()[i] = x0 + FD_STEP;
        let up = loss(&p);
        p.as_mut_slice()[i] = x0 - FD_STEP;
        let down = loss(&p);
        p.as_mut_slice()[i] = x0;
        numeric.push((up - down) / (2.0 * FD_STEP));
    }
    max_rel_error(&grads, &numeric)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn random_small_nets_have_exact_gradients(
        input in 1usize..5,
        hidden in proptest::collection::vec(1usize..7, 0..3),
        output in 1usize..4,
        ln in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let mut cfg = MlpConfig::new(input, &hidden, output);
        cfg.use_layer_norm = ln;
        let err = sum_of_squares_check(&cfg, seed);
        prop_assert!(err < 1e-4, "max relative error {}", err);
    }

    #[test]
    fn polyak_moves_target_toward_online(tau in 0.001f64..1.0, a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let mut t = [a];
        polyak(&mut t, &[b], tau);
        let want = (1.0 - tau) * a + tau * b;
        prop_assert!((t[0] - want).abs() < 1e-12);
    }
}

#[test]
fn repeated_polyak_converges_to_online() {
    let mut t = [0.0f64];
    for _ in 0..5000 {
        polyak(&mut t, &[1.0], 0.005);
    }
    assert!((t[0] - 1.0).abs() < 1e-10);
    let mut one = [3.0f32];
    polyak(&mut one, &[7.0], 1.0);
    assert_eq!(one[0], 7.0);
}

#[test]
fn checkpoint_round_trip_preserves_order_and_values() {
    let a = MlpParams::<f32>::init(&MlpConfig::new(3, &[5], 2), 1).unwrap();
    let mut cb = MlpConfig::new(4, &[6, 6], 1);
    cb.use_layer_norm = false;
    let b = MlpParams::<f32>::init(&cb, 2).unwrap();
    let echo = serde_json::json!({"kind": "test", "lr": 0.0003});
    let bytes = encode_checkpoint(&echo, &[("q".into(), &a), ("v".into(), &b)]);
    assert_eq!(&bytes[..4], CHECKPOINT_MAGIC);
    let ck = decode_checkpoint(&bytes).unwrap();
    assert_eq!(ck.config, echo);
    assert_eq!(ck.tensors.len(), 2);
    assert_eq!(ck.tensors[0].0, "q");
    assert_eq!(ck.tensors[0].1, a);
    assert_eq!(ck.tensors[1].0, "v");
    assert_eq!(ck.tensors[1].1, b);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.hrlw");
    save_checkpoint(&path, &echo, &[("q".into(), &a)]).unwrap();
    assert_eq!(load_checkpoint(&path).unwrap().tensors[0].1, a);
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let a = MlpParams::<f32>::init(&MlpConfig::new(2, &[3], 1), 0).unwrap();
    let bytes = encode_checkpoint(&serde_json::Value::Null, &[("a".into(), &a)]);
    assert!(matches!(decode_checkpoint(&bytes[..bytes.len() - 2]), Err(Error::Format(_))));
    let mut bad = bytes.clone();
    bad[4] = 7;
    assert!(matches!(decode_checkpoint(&bad), Err(Error::Version { found: 7, .. })));
    let mut bad = bytes;
    bad[1] = b'X';
    assert!(matches!(decode_checkpoint(&bad), Err(Error::Format(_))));
}
