use horizon_core::data::*;
use horizon_core::envs::{LockSpec, MazeSpec};
use horizon_core::eval::{eval_lock_success, q_error, td_error};
use horizon_core::learners::*;
use horizon_core::oracle::lock_oracle_q;
use horizon_core::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tabular(n: usize, double_q: DoubleQ) -> DqnConfig {
    DqnConfig {
        n,
        lr: 0.5,
        tau: 1.0,
        double_q,
        backend: QBackend::Tabular,
        ..Default::default()
    }
}

fn train(spec: &LockSpec, ds: &Dataset, cfg: DqnConfig, steps: usize) -> DqnLearner {
    let idx = LockIndex::new(ds, spec).unwrap();
    let n = cfg.n;
    let mut l = DqnLearner::new(spec, cfg, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..steps {
        let b = sample_lock_batch(ds, &idx, 256, n, 1.0, &mut rng).unwrap();
        l.update(&b).unwrap();
    }
    l
}

#[test]
fn one_step_tabular_dqn_reaches_the_optimal_values() {
    let spec = LockSpec::new(8, 3).unwrap();
    let ds = gen_lock_1step(&spec, 400, 0).unwrap();
    let oracle = lock_oracle_q(&spec);
    for dq in [DoubleQ::Hasselt, DoubleQ::CrossHead, DoubleQ::ClippedMin] {
        let mut l = train(&spec, &ds, tabular(1, dq), 3000);
        let t = l.q_table().unwrap();
        assert!(t.max_abs_diff(&oracle) < 1e-6, "{dq:?}: {}", t.max_abs_diff(&oracle));
        assert_eq!(eval_lock_success(&mut l, 1).unwrap(), 1.0);
    }
}

#[test]
fn n_step_tabular_dqn_is_exact_on_optimal_actions_and_biased_elsewhere() {
    let (h, n) = (8, 4);
    let spec = LockSpec::new(h, 5).unwrap();
    let ds = gen_lock_nstep(&spec, n, n * 60 * h, 0).unwrap();
    let oracle = lock_oracle_q(&spec);
    let mut l = train(&spec, &ds, tabular(n, DoubleQ::Hasselt), 3000);
    let t = l.q_table().unwrap();
    for i in 0..h - 1 {
        let good = spec.answer(i);
        assert!((t.q(i, good) - oracle.q(i, good)).abs() < 1e-6, "state {i}");
        if i > 0 {
            // Wrong-action segments continue with wrong actions, so the
            // bootstrap lands on the start state after n steps.
            let want = -(n as f64) - (h as f64 - 1.0);
            assert!((t.q(i, 1 - good) - want).abs() < 1e-6, "state {i}: {}", t.q(i, 1 - good));
        }
    }
    assert_eq!(eval_lock_success(&mut l, 1).unwrap(), 1.0);
}

#[test]
fn mlp_dqn_fits_a_short_lock() {
    let spec = LockSpec::new(4, 0).unwrap();
    let ds = gen_lock_1step(&spec, 512, 0).unwrap();
    let cfg = DqnConfig {
        hidden: vec![32, 32],
        lr: 1e-3,
        tau: 0.05,
        ..Default::default()
    };
    let mut l = train(&spec, &ds, cfg, 1500);
    let oracle = lock_oracle_q(&spec);
    assert!(q_error(&mut l, &oracle).unwrap() < 0.2);
    assert_eq!(eval_lock_success(&mut l, 1).unwrap(), 1.0);
}

#[test]
fn evaluation_leaves_parameters_untouched() {
    let spec = LockSpec::new(16, 0).unwrap();
    let ds = gen_lock_1step(&spec, 1024, 0).unwrap();
    let idx = LockIndex::new(&ds, &spec).unwrap();
    let mut l = train(&spec, &ds, DqnConfig { hidden: vec![16], ..Default::default() }, 50);
    let before = l.checksum();
    let oracle = lock_oracle_q(&spec);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    eval_lock_success(&mut l, 3).unwrap();
    q_error(&mut l, &oracle).unwrap();
    td_error(&mut l, &ds, &idx, 4, 32, &mut rng).unwrap();
    assert_eq!(l.checksum(), before);
    let b = sample_lock_batch(&ds, &idx, 8, 1, 1.0, &mut rng).unwrap();
    l.update(&b).unwrap();
    assert_ne!(l.checksum(), before);
}

#[test]
fn invalid_dqn_configs_are_rejected() {
    let spec = LockSpec::new(4, 0).unwrap();
    for cfg in [
        DqnConfig { n: 0, ..Default::default() },
        DqnConfig { gamma: 0.0, ..Default::default() },
        DqnConfig { tau: 0.0, ..Default::default() },
        DqnConfig { lr: f64::NAN, ..Default::default() },
        DqnConfig { hidden: vec![0], ..Default::default() },
    ] {
        assert!(matches!(DqnLearner::new(&spec, cfg, 0), Err(Error::Config { .. })));
    }
}

fn sarsa_cfg(loss_kind: LossKind) -> SarsaConfig {
    SarsaConfig {
        hidden: vec![32, 32],
        layer_norm: true,
        lr: 1e-3,
        tau: 0.005,
        gamma: 0.99,
        n: 8,
        loss_kind,
        q_heads: 2,
        aggregation: Aggregation::Mean,
    }
}

#[test]
fn bce_values_refuse_minus_one_rewards() {
    assert!(check_reward_kind(LossKind::Bce, RewardKind::MinusOneZero).is_err());
    assert!(check_reward_kind(LossKind::Bce, RewardKind::ZeroOne).is_ok());
    assert!(check_reward_kind(LossKind::Regression, RewardKind::MinusOneZero).is_ok());
    let spec = MazeSpec::new("corridor-s", 0).unwrap();
    let ds = gen_maze_play(&spec, 4, 50, 0.1, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let goals = GoalSampleConfig::value(0.99);
    let b = sample_batch(&ds, 16, 8, 0.99, &goals, RewardKind::MinusOneZero, &mut rng).unwrap();
    let mut high = SarsaHigh::new(2, 2, sarsa_cfg(LossKind::Bce), 0).unwrap();
    assert!(matches!(high.update(&b, RewardKind::MinusOneZero), Err(Error::Config { .. })));
}

#[test]
fn sarsa_losses_decrease_on_maze_data() {
    let spec = MazeSpec::new("corridor-s", 0).unwrap();
    let ds = gen_maze_play(&spec, 20, 200, 0.1, 0).unwrap();
    let goals = GoalSampleConfig::value(0.99);
    for kind in [LossKind::Bce, LossKind::Regression] {
        let cfg = sarsa_cfg(kind);
        let rk = cfg.reward_kind();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let probe = sample_batch(&ds, 512, 8, 0.99, &goals, rk, &mut rng).unwrap();
        let mut high = SarsaHigh::new(2, 2, cfg.clone(), 1).unwrap();
        let mut low = SarsaLow::new(2, 2, 2, cfg, 2).unwrap();
        let (hv0, hq0) = high.losses(&probe).unwrap();
        let (lv0, lq0) = low.losses(&probe).unwrap();
        for _ in 0..400 {
            let b = sample_batch(&ds, 64, 8, 0.99, &goals, rk, &mut rng).unwrap();
            high.update(&b, rk).unwrap();
            low.update(&b).unwrap();
        }
        let (hv1, hq1) = high.losses(&probe).unwrap();
        let (lv1, lq1) = low.losses(&probe).unwrap();
        assert!(hv1 < hv0 && hq1 < hq0, "{kind:?} high: {hv0}->{hv1}, {hq0}->{hq1}");
        assert!(lv1 < lv0 && lq1 < lq0, "{kind:?} low: {lv0}->{lv1}, {lq0}->{lq1}");
    }
}

#[test]
fn low_level_discount_matches_segment_length() {
    assert_eq!(low_level_discount(1), 0.0);
    assert_eq!(low_level_discount(4), 0.75);
    assert!((low_level_discount(25) - 0.96).abs() < 1e-15);
}

#[test]
fn aggregation_rules() {
    assert_eq!(Aggregation::Mean.apply(&[1.0, 3.0]), 2.0);
    assert_eq!(Aggregation::Min.apply(&[1.0, 3.0]), 1.0);
    assert_eq!(bce_loss(0.0, 1.0), std::f64::consts::LN_2);
    assert!(bce_loss(40.0, 1.0) < 1e-15);
    assert!((bce_loss(-40.0, 0.0)).abs() < 1e-15);
}
