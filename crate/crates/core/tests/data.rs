use horizon_core::data::*;
use horizon_core::envs::{LockSpec, MazeSpec};
use horizon_core::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn lock_index(spec: &LockSpec, s: &[f32]) -> usize {
    spec.decode(s).unwrap()
}

#[test]
fn one_step_lock_tuples_are_uniform() {
    let spec = LockSpec::new(4, 3).unwrap();
    let ds = gen_lock_1step(&spec, 60_000, 11).unwrap();
    assert_eq!(ds.num_transitions(), 60_000);
    assert_eq!(ds.num_trajectories(), 60_000);
    let mut counts = [[0usize; 2]; 4];
    for t in ds.trajectories() {
        let s = lock_index(&spec, t.state(0));
        assert_ne!(s, spec.goal_index(), "terminal state used as s_h");
        counts[s][t.action(0)[0] as usize] += 1;
    }
    for (s, row) in counts.iter().enumerate().take(3) {
        for &c in row {
            let f = c as f64 / 60_000.0;
            assert!((f - 1.0 / 6.0).abs() < 0.01, "state {s}: frequency {f}");
        }
    }
}

#[test]
fn one_step_lock_transitions_follow_dynamics() {
    let spec = LockSpec::new(2, 0).unwrap();
    let ds = gen_lock_1step(&spec, 10, 1).unwrap();
    for t in ds.trajectories() {
        let a = t.action(0)[0] as usize;
        let next = lock_index(&spec, t.state(1));
        if a == spec.answer(0) {
            assert_eq!(next, 1);
        } else {
            assert_eq!(next, 0);
        }
    }
}

#[test]
fn zero_size_is_rejected() {
    let spec = LockSpec::new(8, 0).unwrap();
    assert!(matches!(gen_lock_1step(&spec, 0, 0), Err(Error::InvalidSize(_))));
    assert!(matches!(gen_lock_nstep(&spec, 4, 0, 0), Err(Error::InvalidSize(_))));
    assert!(matches!(gen_lock_nstep(&spec, 4, 10, 0), Err(Error::InvalidSize(_))));
    assert!(gen_lock_nstep(&spec, 0, 10, 0).is_err());
}

#[test]
fn nstep_segments_follow_branches() {
    let spec = LockSpec::new(512, 7).unwrap();
    let mut correct = 0usize;
    let mut segments = 0usize;
    let mut saw_truncation = false;
    for seed in 0..40 {
        let ds = gen_lock_nstep(&spec, 64, 64 * 64, seed).unwrap();
        assert_eq!(ds.num_trajectories(), 64);
        for t in ds.trajectories() {
            segments += 1;
            let start = lock_index(&spec, t.state(0));
            assert_ne!(start, spec.goal_index());
            let first_a = t.action(0)[0] as usize;
            if first_a == spec.answer(start) {
                correct += 1;
                let want = 64.min(511 - start);
                assert_eq!(t.transitions(), want, "start {start}");
                saw_truncation |= want < 64;
                for i in 0..t.transitions() {
                    assert_eq!(lock_index(&spec, t.state(i + 1)), start + i + 1);
                }
            } else {
                assert_eq!(t.transitions(), 64);
                for i in 1..t.len() {
                    assert_eq!(lock_index(&spec, t.state(i)), 0);
                }
            }
        }
    }
    assert!(saw_truncation);
    let frac = correct as f64 / segments as f64;
    assert!((frac - 0.5).abs() < 0.02, "correct fraction {frac}");
}

#[test]
fn nstep_correct_branch_from_500_stops_after_11_steps() {
    let spec = LockSpec::new(512, 7).unwrap();
    let mut found = false;
    for seed in 0..100_000u64 {
        let ds = gen_lock_nstep(&spec, 64, 64, seed).unwrap();
        let t = ds.trajectory(0);
        if lock_index(&spec, t.state(0)) == 500 && t.action(0)[0] as usize == spec.answer(500) {
            assert_eq!(t.transitions(), 11);
            assert_eq!(lock_index(&spec, t.state(11)), 511);
            found = true;
            break;
        }
    }
    assert!(found);
}

#[test]
fn maze_play_shapes_and_coverage() {
    let spec = MazeSpec::new("corridor-s", 0).unwrap();
    let ds = gen_maze_play(&spec, 20, 200, 0.1, 5).unwrap();
    assert_eq!(ds.num_trajectories(), 20);
    assert_eq!(ds.num_transitions(), 20 * 199);
    let free = spec.free_cells();
    let mut visits = vec![0usize; spec.rows() * spec.cols()];
    for t in ds.trajectories() {
        assert_eq!(t.len(), 200);
        for i in 0..t.len() {
            let p = [t.state(i)[0] as f64, t.state(i)[1] as f64];
            assert!(spec.is_free(p));
            visits[spec.cell_index(spec.cell_of(p))] += 1;
        }
        for i in 0..t.transitions() {
            assert!(t.action(i).iter().all(|a| a.abs() <= spec.action_bound as f32 + 1e-6));
        }
    }
    for c in free {
        assert!(visits[spec.cell_index(c)] > 0, "cell {c:?} never visited");
    }
    let short = gen_maze_play(&spec, 3, 2, 0.0, 1).unwrap();
    assert!(short.trajectories().all(|t| t.transitions() == 1));
    assert!(gen_maze_play(&spec, 3, 1, 0.0, 1).is_err());
}

#[test]
fn noiseless_play_moves_along_shortest_paths() {
    let spec = MazeSpec::new("rooms-4", 0).unwrap();
    let ds = gen_maze_play(&spec, 10, 300, 0.0, 9).unwrap();
    let bfs = BfsTables::new(&spec);
    // Each step either stays in its cell or enters a cell that is one BFS
    // step closer to some waypoint; in particular it never enters a wall and
    // never jumps more than one cell.
    for t in ds.trajectories() {
        for i in 0..t.transitions() {
            let a = [t.state(i)[0] as f64, t.state(i)[1] as f64];
            let b = [t.state(i + 1)[0] as f64, t.state(i + 1)[1] as f64];
            let (ca, cb) = (spec.cell_of(a), spec.cell_of(b));
            let d = bfs.distance(&spec, ca, cb).unwrap();
            assert!(d <= 1, "jumped {d} cells");
            let step = (b[0] - a[0]).abs().max((b[1] - a[1]).abs());
            assert!(step <= spec.action_bound + 1e-5);
        }
    }
}

fn small_lock_dataset() -> (LockSpec, Dataset) {
    let spec = LockSpec::new(16, 2).unwrap();
    let ds = gen_lock_nstep(&spec, 8, 8 * 200, 3).unwrap();
    (spec, ds)
}

#[test]
fn current_goal_is_reached_immediately() {
    let (_, ds) = small_lock_dataset();
    let cfg = GoalSampleConfig::new(1.0, 0.0, 0.0, 0.0, 0.9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let b = sample_batch(&ds, 256, 8, 0.99, &cfg, RewardKind::ZeroOne, &mut rng).unwrap();
    for r in 0..b.len() {
        assert_eq!(b.g.row(r), b.s_h.row(r));
        assert_eq!(b.reward_sums[r], 1.0);
        assert_eq!(b.effective_n[r], 1);
        assert_eq!(b.done_mask[r], 1.0);
    }
}

#[test]
fn random_goals_are_uniform_over_dataset_states() {
    let (_, ds) = small_lock_dataset();
    let cfg = GoalSampleConfig::new(0.0, 0.0, 0.0, 1.0, 0.9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut counts = vec![0usize; ds.num_states()];
    let draws = 200;
    for _ in 0..draws {
        let b = sample_batch(&ds, 512, 4, 1.0, &cfg, RewardKind::ZeroOne, &mut rng).unwrap();
        for src in &b.goal_sources {
            match *src {
                GoalSource::Random { state } => counts[state] += 1,
                other => panic!("unexpected goal source {other:?}"),
            }
        }
    }
    let total = (draws * 512) as f64;
    let expect = total / ds.num_states() as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
    let dof = (ds.num_states() - 1) as f64;
    // Normal approximation to the chi-square upper tail, about 5 sigma.
    assert!(chi2 < dof + 5.0 * (2.0 * dof).sqrt(), "chi2 {chi2} with {dof} dof");
}

#[test]
fn minus_one_rewards_sum_to_minus_n_without_hits() {
    let spec = MazeSpec::new("rooms-4", 0).unwrap();
    let ds = gen_maze_play(&spec, 4, 100, 0.1, 0).unwrap();
    let cfg = GoalSampleConfig::new(0.0, 0.0, 0.0, 1.0, 0.9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let b = sample_batch(&ds, 512, 5, 1.0, &cfg, RewardKind::MinusOneZero, &mut rng).unwrap();
    let mut checked = 0;
    for r in 0..b.len() {
        if b.done_mask[r] == 0.0 && b.effective_n[r] == 5 {
            assert_eq!(b.reward_sums[r], -5.0);
            checked += 1;
        }
    }
    assert!(checked > 100);
}

/// Survival function of `1 + Geometric(1 - gamma)` truncated at `cap`.
fn truncated_geometric_cdf(gamma: f64, cap: usize, d: usize) -> f64 {
    if d >= cap {
        1.0
    } else {
        1.0 - gamma.powi(d as i32)
    }
}

#[test]
fn geometric_offsets_match_truncated_distribution() {
    let spec = MazeSpec::new("corridor-s", 0).unwrap();
    let ds = gen_maze_play(&spec, 1, 12, 0.1, 4).unwrap();
    let gamma = 0.8;
    let cfg = GoalSampleConfig::new(0.0, 1.0, 0.0, 0.0, gamma).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // Condition on anchor h = 2, so the cap is 9 steps.
    let mut deltas = Vec::new();
    while deltas.len() < 20_000 {
        let b = sample_batch(&ds, 256, 1, 1.0, &cfg, RewardKind::ZeroOne, &mut rng).unwrap();
        for (&(_, h), src) in b.anchors.iter().zip(&b.goal_sources) {
            if h == 2 {
                if let GoalSource::Trajectory { step, kind } = *src {
                    assert_eq!(kind, GoalKind::Geometric);
                    deltas.push(step - h);
                }
            }
        }
    }
    let cap = 11 - 2;
    let n = deltas.len() as f64;
    let mut ks: f64 = 0.0;
    for d in 1..=cap {
        let emp = deltas.iter().filter(|&&x| x <= d).count() as f64 / n;
        ks = ks.max((emp - truncated_geometric_cdf(gamma, cap, d)).abs());
    }
    // 1.63 / sqrt(n) is the 1% critical value of the KS statistic.
    assert!(ks < 1.63 / n.sqrt(), "KS distance {ks}");
}

fn rewalk(ds: &Dataset, b: &Batch, row: usize, n: usize, gamma: f64, kind: RewardKind) -> (f64, usize, bool) {
    let test = GoalTest::for_dataset(ds);
    let (k, h) = b.anchors[row];
    let t = ds.trajectory(k);
    let g = b.g.row(row);
    let mut sum = 0.0;
    let mut steps = 0;
    let mut i = h;
    while i < t.len() - 1 && steps < n {
        let hit = test.hit(t.state(i), g);
        sum += gamma.powi(steps as i32) * kind.reward(hit);
        steps += 1;
        if hit {
            return (sum, steps, true);
        }
        i += 1;
    }
    (sum, steps, false)
}

#[test]
fn reward_sums_match_brute_force_rewalk() {
    let spec = MazeSpec::new("rooms-4", 0).unwrap();
    let ds = gen_maze_play(&spec, 8, 120, 0.2, 6).unwrap();
    let (lspec, lds) = small_lock_dataset();
    let _ = lspec;
    for (data, n) in [(&ds, 10usize), (&lds, 4)] {
        for kind in [RewardKind::ZeroOne, RewardKind::MinusOneZero] {
            let cfg = GoalSampleConfig::value(0.95);
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let b = sample_batch(data, 400, n, 0.95, &cfg, kind, &mut rng).unwrap();
            for r in 0..b.len() {
                let (sum, eff, done) = rewalk(data, &b, r, n, 0.95, kind);
                assert!((sum - b.reward_sums[r]).abs() < 1e-12);
                assert_eq!(eff, b.effective_n[r]);
                assert_eq!(done, b.done_mask[r] == 1.0);
                assert!(b.effective_n[r] >= 1 && b.effective_n[r] <= n);
                let (k, h) = b.anchors[r];
                let t = data.trajectory(k);
                let end = (h + n).min(t.len() - 1);
                assert_eq!(b.s_hn.row(r), t.state(end));
                assert_eq!(b.s_next.row(r), t.state(h + 1));
            }
        }
    }
}

#[test]
fn batches_are_reproducible() {
    let (_, ds) = small_lock_dataset();
    let cfg = GoalSampleConfig::value(0.9);
    let draw = || {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        sample_batch(&ds, 64, 4, 0.9, &cfg, RewardKind::ZeroOne, &mut rng).unwrap()
    };
    assert_eq!(draw(), draw());
}

#[test]
fn sampling_preconditions() {
    let (_, ds) = small_lock_dataset();
    let cfg = GoalSampleConfig::value(0.9);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(sample_batch(&ds, 8, 0, 0.9, &cfg, RewardKind::ZeroOne, &mut rng).is_err());
    assert!(GoalSampleConfig::new(0.5, 0.5, 0.5, 0.0, 0.9).is_err());
    assert!(GoalSampleConfig::new(-0.1, 0.6, 0.5, 0.0, 0.9).is_err());
}

#[test]
fn lock_batches_count_steps_to_goal() {
    let spec = LockSpec::new(32, 1).unwrap();
    let ds = gen_lock_nstep(&spec, 8, 8 * 500, 1).unwrap();
    let index = LockIndex::new(&ds, &spec).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let b = sample_lock_batch(&ds, &index, 2000, 8, 1.0, &mut rng).unwrap();
    for r in 0..b.len() {
        assert_eq!(b.reward_sums[r], -(b.effective_n[r] as f64));
        if b.terminal[r] {
            assert_eq!(b.next[r], spec.goal_index());
        }
        assert!((1..=8).contains(&b.effective_n[r]));
    }
}

#[test]
fn save_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spec = MazeSpec::new("corridor-s", 0).unwrap();
    let ds = gen_maze_play(&spec, 3, 17, 0.1, 2).unwrap();
    let path = dir.path().join("d.hrld");
    save(&ds, &path).unwrap();
    assert_eq!(load(&path).unwrap(), ds);

    let lspec = LockSpec::new(64, 0).unwrap();
    let lds = gen_lock_nstep(&lspec, 4, 400, 2).unwrap();
    save(&lds, &path).unwrap();
    assert_eq!(load(&path).unwrap(), lds);
}

#[test]
fn truncated_and_corrupt_files_are_rejected() {
    let spec = LockSpec::new(8, 0).unwrap();
    let ds = gen_lock_1step(&spec, 50, 0).unwrap();
    let mut bytes = Vec::new();
    write_dataset(&ds, &mut bytes).unwrap();
    for cut in [0, 3, 10, bytes.len() / 2, bytes.len() - 1] {
        assert!(matches!(read_dataset(&bytes[..cut]), Err(Error::Format(_))), "cut {cut}");
    }
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    assert!(matches!(read_dataset(&bad_magic[..]), Err(Error::Format(_))));
    let mut bad_version = bytes.clone();
    bad_version[4] = 9;
    assert!(matches!(read_dataset(&bad_version[..]), Err(Error::Version { found: 9, expected: 1 })));
    let mut trailing = bytes;
    trailing.push(0);
    assert!(matches!(read_dataset(&trailing[..]), Err(Error::Format(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn locate_transition_inverts_offsets(lens in proptest::collection::vec(2usize..9, 1..12)) {
        let meta = DatasetMeta {
            generator: "test".into(),
            seed: 0,
            horizon: None,
            env_seed: None,
            goal_tol: None,
            params: serde_json::Value::Null,
        };
        let mut b = DatasetBuilder::new(EnvKind::Maze, 2, 2, meta);
        for &l in &lens {
            b.push(&vec![0.0; 2 * l], &vec![0.0; 2 * (l - 1)]).unwrap();
        }
        let ds = b.finish();
        let mut t = 0;
        for (k, &l) in lens.iter().enumerate() {
            for h in 0..l - 1 {
                prop_assert_eq!(ds.locate_transition(t), (k, h));
                t += 1;
            }
        }
        prop_assert_eq!(t, ds.num_transitions());
    }

    #[test]
    fn batch_invariants_hold(seed in 0u64..1000, n in 1usize..12) {
        let spec = MazeSpec::new("corridor-s", 0).unwrap();
        let ds = gen_maze_play(&spec, 2, 30, 0.1, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = sample_batch(&ds, 32, n, 0.9, &GoalSampleConfig::value(0.9), RewardKind::ZeroOne, &mut rng).unwrap();
        for r in 0..b.len() {
            prop_assert!(b.effective_n[r] >= 1 && b.effective_n[r] <= n);
            prop_assert!(b.reward_sums[r] >= 0.0 && b.reward_sums[r] <= 1.0);
            prop_assert_eq!(b.done_mask[r] == 1.0, b.reward_sums[r] > 0.0);
        }
    }
}
