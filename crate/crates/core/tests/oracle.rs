use horizon_core::data::gen_lock_1step;
use horizon_core::envs::{LockSpec, MazeSpec};
use horizon_core::oracle::*;
use horizon_core::Error;
use proptest::prelude::*;

/// Value of state `i` obtained by simulating the answer chain.
fn simulate_steps_to_goal(spec: &LockSpec, mut i: usize) -> usize {
    let mut steps = 0;
    loop {
        let s = spec.state(i).unwrap();
        let tr = spec.step(s, spec.answer(i)).unwrap();
        steps += 1;
        if tr.done {
            return steps;
        }
        i = tr.state.index;
    }
}

#[test]
fn oracle_matches_simulation_for_small_horizon() {
    let spec = LockSpec::new(6, 4).unwrap();
    let q = lock_oracle_q(&spec);
    for i in 0..5 {
        let steps = simulate_steps_to_goal(&spec, i) as f64;
        assert_eq!(q.q(i, spec.answer(i)), -steps);
        assert_eq!(q.q(i, 1 - spec.answer(i)), -1.0 - simulate_steps_to_goal(&spec, 0) as f64);
    }
    assert_eq!(q.v(5), 0.0);
}

#[test]
fn oracle_h4_values() {
    let spec = LockSpec::new(4, 0).unwrap();
    let q = lock_oracle_q(&spec);
    let mut got: Vec<f64> = (0..3)
        .flat_map(|i| [q.q(i, spec.answer(i)), q.q(i, 1 - spec.answer(i))])
        .collect();
    got.sort_by(f64::total_cmp);
    assert_eq!(got, vec![-4.0, -4.0, -4.0, -3.0, -2.0, -1.0]);
}

#[test]
fn infinite_tolerance_returns_the_zero_start() {
    let spec = LockSpec::new(8, 0).unwrap();
    let ds = gen_lock_1step(&spec, 400, 0).unwrap();
    let q = tabular_q_iteration(&spec, &ds, 1, 1.0, f64::INFINITY).unwrap();
    assert_eq!(q, LockQTable::zeros(8));
}

#[test]
fn missing_tuples_are_reported() {
    let spec = LockSpec::new(64, 0).unwrap();
    let ds = gen_lock_1step(&spec, 10, 0).unwrap();
    match tabular_q_iteration(&spec, &ds, 1, 1.0, 1e-12) {
        Err(Error::Coverage { missing }) => {
            assert!(missing.len() >= 2 * 63 - 10);
            assert!(missing.iter().all(|&(s, a)| s < 63 && a < 2));
        }
        other => panic!("expected coverage error, got {other:?}"),
    }
}

#[test]
fn maze_distances_are_symmetric_and_bfs_consistent() {
    for id in ["corridor-s", "rooms-4", "spiral"] {
        let spec = MazeSpec::new(id, 0).unwrap();
        let d = maze_bfs(&spec);
        let free = d.free_cells().to_vec();
        for &a in &free {
            let direct = spec.bfs_from(a);
            for &b in &free {
                assert_eq!(d.distance(a, b), direct[spec.cell_index(b)]);
                assert_eq!(d.distance(a, b), d.distance(b, a));
            }
        }
        let (a, b, dist) = d.farthest_pair();
        assert_eq!(d.distance(a, b), Some(dist));
        assert_eq!(dist, d.diameter());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn oracle_closed_form_for_sampled_horizons(h in 2usize..=4096, seed in any::<u64>()) {
        let spec = LockSpec::new(h, seed).unwrap();
        let q = lock_oracle_q(&spec);
        for i in 0..h - 1 {
            prop_assert_eq!(q.q(i, spec.answer(i)), -((h - 1 - i) as f64));
            prop_assert_eq!(q.q(i, 1 - spec.answer(i)), -(h as f64));
        }
    }
}
