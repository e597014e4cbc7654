//! Offline dataset generators for the lock and the maze.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::json;

use super::dataset::{Dataset, DatasetBuilder, DatasetMeta, EnvKind};
use crate::envs::maze::CONTACT_MARGIN;
use crate::envs::{Cell, LockSpec, MazeSpec, MazeState};
use crate::error::{Error, Result};

fn lock_meta(spec: &LockSpec, generator: &str, seed: u64, params: serde_json::Value) -> DatasetMeta {
    DatasetMeta {
        generator: generator.into(),
        seed,
        horizon: Some(spec.horizon()),
        env_seed: Some(spec.seed()),
        goal_tol: None,
        params,
    }
}

/// `size` single-transition trajectories, uniform over the non-terminal
/// `(state, action)` tuples.
pub fn gen_lock_1step(spec: &LockSpec, size: usize, seed: u64) -> Result<Dataset> {
    if size == 0 {
        return Err(Error::InvalidSize("lock dataset size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = spec.state_dim();
    let meta = lock_meta(spec, "lock-1step", seed, json!({ "size": size }));
    let mut b = DatasetBuilder::new(EnvKind::Lock, d, 1, meta);
    b.reserve(2 * size, size);
    let mut states = vec![0.0f32; 2 * d];
    let non_terminal = spec.horizon() - 1;
    for _ in 0..size {
        let i = rng.random_range(0..non_terminal);
        let a = rng.random_range(0..2usize);
        let next = spec.step(spec.state(i)?, a)?.state.index;
        spec.encode_into(i, &mut states[..d]);
        spec.encode_into(next, &mut states[d..]);
        b.push(&states, &[a as f32])?;
    }
    Ok(b.finish())
}

/// `size / n` segments from uniform non-terminal start states; each segment
/// plays `n` correct actions (stopping at the goal) or `n` wrong actions with
/// equal probability.
pub fn gen_lock_nstep(spec: &LockSpec, n: usize, size: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidSize("segment length n must be at least 1".into()));
    }
    if size == 0 || size % n != 0 {
        return Err(Error::InvalidSize(format!(
            "dataset size {size} is not a positive multiple of n = {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = spec.state_dim();
    let meta = lock_meta(spec, "lock-nstep", seed, json!({ "n": n, "size": size }));
    let mut b = DatasetBuilder::new(EnvKind::Lock, d, 1, meta);
    b.reserve(size + size / n, size);
    let mut states = Vec::with_capacity((n + 1) * d);
    let mut actions = Vec::with_capacity(n);
    let mut code = vec![0.0f32; d];
    for _ in 0..size / n {
        states.clear();
        actions.clear();
        let start = rng.random_range(0..spec.horizon() - 1);
        let correct = rng.random_bool(0.5);
        let mut s = spec.state(start)?;
        spec.encode_into(s.index, &mut code);
        states.extend_from_slice(&code);
        for _ in 0..n {
            let ans = spec.answer(s.index);
            let a = if correct { ans } else { 1 - ans };
            let tr = spec.step(s, a)?;
            actions.push(a as f32);
            spec.encode_into(tr.state.index, &mut code);
            states.extend_from_slice(&code);
            s = tr.state;
            if tr.done {
                break;
            }
        }
        b.push(&states, &actions)?;
    }
    Ok(b.finish())
}

/// Uniform random point strictly inside a uniformly chosen free cell.
pub fn random_free_point(spec: &MazeSpec, free: &[Cell], rng: &mut impl Rng) -> [f64; 2] {
    let c = free[rng.random_range(0..free.len())];
    let cs = spec.cell_size;
    let lo = CONTACT_MARGIN;
    let hi = cs - CONTACT_MARGIN;
    [
        c.col as f64 * cs + rng.random_range(lo..hi),
        c.row as f64 * cs + rng.random_range(lo..hi),
    ]
}

/// BFS distance tables toward every free cell, indexed by `cell_index`.
#[derive(Debug, Clone)]
pub struct BfsTables {
    tables: Vec<Option<Vec<Option<u32>>>>,
}

impl BfsTables {
    pub fn new(spec: &MazeSpec) -> Self {
        let mut tables = vec![None; spec.rows() * spec.cols()];
        for c in spec.free_cells() {
            tables[spec.cell_index(c)] = Some(spec.bfs_from(c));
        }
        Self { tables }
    }

    pub fn distance(&self, spec: &MazeSpec, from: Cell, to: Cell) -> Option<u32> {
        self.tables[spec.cell_index(to)]
            .as_ref()
            .and_then(|t| t.get(spec.cell_index(from)).copied().flatten())
    }

    /// Noise-free controller step toward `target`: head for the centre of the
    /// first neighbour on a shortest path, or the target itself once in its cell.
    pub fn greedy_action(&self, spec: &MazeSpec, pos: [f64; 2], target: [f64; 2]) -> [f64; 2] {
        let here = spec.cell_of(pos);
        let goal = spec.cell_of(target);
        let aim = if here == goal {
            target
        } else {
            match self.next_cell(spec, here, goal) {
                Some(c) => spec.cell_center(c),
                None => target,
            }
        };
        spec.clip_action([aim[0] - pos[0], aim[1] - pos[1]])
    }

    /// First neighbour of `from` on a shortest path to `to` (fixed neighbour order).
    pub fn next_cell(&self, spec: &MazeSpec, from: Cell, to: Cell) -> Option<Cell> {
        let table = self.tables[spec.cell_index(to)].as_ref()?;
        let d = table[spec.cell_index(from)]?;
        if d == 0 {
            return None;
        }
        spec.neighbors(from)
            .find(|&nb| table[spec.cell_index(nb)] == Some(d - 1))
    }
}

/// Play-style data: a waypoint controller follows BFS corridors toward random
/// free cells with Gaussian action noise and resamples the waypoint on arrival.
pub fn gen_maze_play(
    spec: &MazeSpec,
    num_traj: usize,
    traj_len: usize,
    noise_std: f64,
    seed: u64,
) -> Result<Dataset> {
    if traj_len < 2 {
        return Err(Error::InvalidSize(format!("traj_len must be at least 2, got {traj_len}")));
    }
    if num_traj == 0 {
        return Err(Error::InvalidSize("num_traj must be at least 1".into()));
    }
    if !(noise_std.is_finite() && noise_std >= 0.0) {
        return Err(Error::InvalidSize(format!("noise_std must be finite and >= 0, got {noise_std}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_std.max(f64::MIN_POSITIVE)).expect("valid normal");
    let free = spec.free_cells();
    let bfs = BfsTables::new(spec);
    let meta = DatasetMeta {
        generator: "maze-play".into(),
        seed,
        horizon: None,
        env_seed: Some(spec.seed),
        goal_tol: Some(spec.goal_tol),
        params: json!({
            "layout": spec.name,
            "num_traj": num_traj,
            "traj_len": traj_len,
            "noise_std": noise_std,
        }),
    };
    let mut b = DatasetBuilder::new(EnvKind::Maze, 2, 2, meta);
    b.reserve(num_traj * traj_len, num_traj * (traj_len - 1));
    let mut states = Vec::with_capacity(traj_len * 2);
    let mut actions = Vec::with_capacity((traj_len - 1) * 2);
    for _ in 0..num_traj {
        states.clear();
        actions.clear();
        let mut s = MazeState {
            pos: random_free_point(spec, &free, &mut rng),
        };
        let mut waypoint = spec.cell_center(free[rng.random_range(0..free.len())]);
        states.extend(s.pos.iter().map(|&v| v as f32));
        for _ in 0..traj_len - 1 {
            while arrived(spec, s.pos, waypoint) {
                waypoint = spec.cell_center(free[rng.random_range(0..free.len())]);
            }
            let mut a = bfs.greedy_action(spec, s.pos, waypoint);
            if noise_std > 0.0 {
                a[0] += noise.sample(&mut rng);
                a[1] += noise.sample(&mut rng);
            }
            let a = spec.clip_action(a);
            s = spec.step(s, a);
            actions.extend(a.iter().map(|&v| v as f32));
            states.extend(s.pos.iter().map(|&v| v as f32));
        }
        b.push(&states, &actions)?;
    }
    Ok(b.finish())
}

fn arrived(spec: &MazeSpec, pos: [f64; 2], waypoint: [f64; 2]) -> bool {
    let d = spec.action_bound * 0.5;
    (pos[0] - waypoint[0]).abs() <= d && (pos[1] - waypoint[1]).abs() <= d
}

