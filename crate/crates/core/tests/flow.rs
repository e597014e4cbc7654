use horizon_core::flow::*;
use horizon_core::nn::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Adam with a cosine-decayed step size.
fn train(net: &mut FlowNet, steps: usize, batch: usize, lr: f64, rng: &mut ChaCha8Rng, draw: impl Fn(&mut ChaCha8Rng) -> (Vec<f32>, Vec<f32>)) {
    let (cd, sd) = (net.cond_dim(), net.sample_dim());
    let mut cond = Matrix::zeros(batch, cd);
    let mut target = Matrix::zeros(batch, sd);
    for step in 0..steps {
        let lr = lr * 0.5 * (1.0 + (std::f64::consts::PI * step as f64 / steps as f64).cos());
        for r in 0..batch {
            let (c, x) = draw(rng);
            cond.row_mut(r).copy_from_slice(&c);
            target.row_mut(r).copy_from_slice(&x);
        }
        net.train_step(&cond, &target, lr, rng).unwrap();
    }
}

#[test]
fn conditioning_selects_the_target() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut net = FlowNet::new(1, 1, &[64, 64], true, 3).unwrap();
    train(&mut net, 3000, 128, 1e-3, &mut rng, |r| {
        let c: f32 = if r.random::<bool>() { 1.0 } else { -1.0 };
        (vec![c], vec![2.0 * c])
    });
    for c in [-1.0f32, 1.0] {
        let s = net.sample_n(&[c], 1000, &FlowSampleConfig::default(), &mut rng).unwrap();
        let right = s.as_slice().iter().filter(|&&x| (x - 2.0 * c).abs() < (x + 2.0 * c).abs()).count();
        assert!(right >= 990, "condition {c}: {right} of 1000 on the right side");
        let mean = s.as_slice().iter().sum::<f32>() / 1000.0;
        assert!((mean - 2.0 * c).abs() < 0.05, "condition {c}: mean {mean}");
    }
}

#[test]
fn clip_box_bounds_samples_and_steps_are_validated() {
    let net = FlowNet::new(0, 2, &[8], true, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = FlowSampleConfig {
        steps: 10,
        clip_box: Some(vec![(-0.1, 0.1), (0.0, 0.5)]),
    };
    let s = net.sample_n(&[], 200, &cfg, &mut rng).unwrap();
    for r in 0..s.rows() {
        assert!(s.row(r)[0].abs() <= 0.1);
        assert!((0.0..=0.5).contains(&s.row(r)[1]));
    }
    let bad = FlowSampleConfig { steps: 0, clip_box: None };
    assert!(net.sample_n(&[], 1, &bad, &mut rng).is_err());
}

#[test]
fn euler_integration_is_deterministic_given_noise() {
    let net = FlowNet::new(1, 2, &[8, 8], true, 5).unwrap();
    let cond = Matrix::from_vec(3, 1, vec![0.1, 0.2, 0.3]);
    let z = Matrix::from_vec(3, 2, vec![0.5, -0.5, 1.0, 0.0, -1.0, 2.0]);
    let cfg = FlowSampleConfig::default();
    let a = net.integrate(&cond, z.clone(), &cfg).unwrap();
    let b = net.integrate(&cond, z, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn single_euler_step_with_the_optimal_field_lands_on_the_point() {
    // The optimal one-point field at t = 0 is a - x; build it exactly with a
    // single affine layer: v = W [t, x] + b with W = [0, -1], b = a.
    let a = 0.7f32;
    let cfg = horizon_core::nn::MlpConfig::new(2, &[], 1);
    let params = horizon_core::nn::MlpParams::from_flat(&cfg, vec![0.0, -1.0, a]).unwrap();
    let net = FlowNet::from_params(params, 0, 1);
    let z = Matrix::from_vec(4, 1, vec![-2.0, -0.1, 0.4, 3.0]);
    let one = FlowSampleConfig { steps: 1, clip_box: None };
    let x = net.integrate(&Matrix::zeros(4, 0), z.clone(), &one).unwrap();
    assert!(x.as_slice().iter().all(|&v| (v - a).abs() < 1e-6));
    // A zero field returns the initial noise.
    let zero = horizon_core::nn::MlpParams::from_flat(&cfg, vec![0.0; 3]).unwrap();
    let net = FlowNet::from_params(zero, 0, 1);
    assert_eq!(net.integrate(&Matrix::zeros(4, 0), z.clone(), &FlowSampleConfig::default()).unwrap(), z);
}

#[test]
fn loss_matches_hand_computed_target() {
    // With t = 1 the path point is the target itself and u = x1 - z.
    let mut net = FlowNet::new(0, 1, &[4], false, 0).unwrap();
    let cond = Matrix::zeros(1, 0);
    let target = Matrix::from_vec(1, 1, vec![2.0]);
    let z = Matrix::from_vec(1, 1, vec![0.5]);
    let loss = net.loss_with(&cond, &target, &z, &[1.0]).unwrap();
    let inp = flow_inputs(&[1.0], &cond, &target);
    let v = net.params().predict(&inp).unwrap().get(0, 0) as f64;
    assert!((loss - (v - 1.5).powi(2)).abs() < 1e-5);
}
