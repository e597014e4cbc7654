//! Exact references: lock Q* by backward induction, tabular Q-iteration on an
//! empirical model, and all-pairs BFS distances for the maze.

use serde::Serialize;

use crate::data::Dataset;
use crate::envs::{Cell, LockSpec, MazeSpec};
use crate::error::{Error, Result};

/// Lock action values indexed by `[state][action]`; the goal row is zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LockQTable {
    pub horizon: usize,
    pub values: Vec<[f64; 2]>,
}

impl LockQTable {
    pub fn zeros(horizon: usize) -> Self {
        Self {
            horizon,
            values: vec![[0.0; 2]; horizon],
        }
    }

    pub fn q(&self, state: usize, action: usize) -> f64 {
        self.values[state][action]
    }

    /// `max_a Q(state, a)`, or 0 at the goal.
    pub fn v(&self, state: usize) -> f64 {
        if state + 1 == self.horizon {
            0.0
        } else {
            self.values[state][0].max(self.values[state][1])
        }
    }

    pub fn max_abs_diff(&self, other: &LockQTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .flat_map(|(a, b)| [(a[0] - b[0]).abs(), (a[1] - b[1]).abs()])
            .fold(0.0, f64::max)
    }
}

/// Optimal undiscounted action values of the lock.
///
/// Computed backwards from the goal along the answer chain; the wrong action
/// then costs one step plus the start-state value. Checked against the
/// closed form `-(H-1-i)` / `-H` before returning.
pub fn lock_oracle_q(spec: &LockSpec) -> LockQTable {
    let h = spec.horizon();
    let goal = spec.goal_index();
    let mut v = vec![0.0f64; h];
    for i in (0..goal).rev() {
        v[i] = -1.0 + v[i + 1];
    }
    let mut table = LockQTable::zeros(h);
    for i in 0..goal {
        let ans = spec.answer(i);
        table.values[i][ans] = -1.0 + v[i + 1];
        table.values[i][1 - ans] = -1.0 + v[0];
    }
    for i in 0..goal {
        let ans = spec.answer(i);
        // the chain value is optimal only if it satisfies the Bellman equation
        assert_eq!(v[i], table.v(i), "Bellman residual at state {i}");
        assert_eq!(table.values[i][ans], -((h - 1 - i) as f64));
        assert_eq!(table.values[i][1 - ans], -(h as f64));
    }
    table
}

/// Empirical one-step model of the lock built from dataset transitions.
#[derive(Debug, Clone)]
pub struct LockModel {
    horizon: usize,
    next: Vec<[Option<usize>; 2]>,
}

impl LockModel {
    pub fn from_dataset(spec: &LockSpec, ds: &Dataset) -> Result<Self> {
        if ds.state_dim() != spec.state_dim() {
            return Err(Error::Shape("dataset does not match the lock spec".into()));
        }
        let mut next = vec![[None; 2]; spec.horizon()];
        for traj in ds.trajectories() {
            for t in 0..traj.transitions() {
                let s = spec.decode(traj.state(t))?;
                let s2 = spec.decode(traj.state(t + 1))?;
                let a = (traj.action(t)[0] > 0.5) as usize;
                next[s][a] = Some(s2);
            }
        }
        Ok(Self {
            horizon: spec.horizon(),
            next,
        })
    }

    /// Non-terminal `(state, action)` pairs never observed.
    pub fn missing(&self) -> Vec<(usize, usize)> {
        (0..self.horizon - 1)
            .flat_map(|s| (0..2).map(move |a| (s, a)))
            .filter(|&(s, a)| self.next[s][a].is_none())
            .collect()
    }

    fn backup(&self, q: &LockQTable, gamma: f64) -> LockQTable {
        let mut out = LockQTable::zeros(self.horizon);
        for s in 0..self.horizon - 1 {
            for a in 0..2 {
                let s2 = self.next[s][a].expect("coverage checked");
                out.values[s][a] = -1.0 + gamma * q.v(s2);
            }
        }
        out
    }
}

/// Iterate the `n`-fold empirical Bellman optimality backup from a zero table
/// until an iteration changes no entry by `tol` or more.
pub fn tabular_q_iteration(
    spec: &LockSpec,
    ds: &Dataset,
    n: usize,
    gamma: f64,
    tol: f64,
) -> Result<LockQTable> {
    if n == 0 {
        return Err(Error::InvalidSampling("n must be at least 1".into()));
    }
    let model = LockModel::from_dataset(spec, ds)?;
    let missing = model.missing();
    if !missing.is_empty() {
        return Err(Error::Coverage { missing });
    }
    let mut q = LockQTable::zeros(spec.horizon());
    // each backup propagates values by one step, so H backups reach the fixed point
    let max_iters = spec.horizon() * 4 / n + 16;
    for _ in 0..max_iters {
        let mut next = q.clone();
        for _ in 0..n {
            next = model.backup(&next, gamma);
        }
        if q.max_abs_diff(&next) < tol {
            return Ok(q);
        }
        q = next;
    }
    Ok(q)
}

/// All-pairs shortest-path step counts between free maze cells.
#[derive(Debug, Clone, PartialEq)]
pub struct MazeDistances {
    cols: usize,
    free: Vec<Cell>,
    slot: Vec<Option<usize>>,
    dist: Vec<u32>,
}

pub fn maze_bfs(spec: &MazeSpec) -> MazeDistances {
    let free = spec.free_cells();
    let mut slot = vec![None; spec.rows() * spec.cols()];
    for (k, c) in free.iter().enumerate() {
        slot[spec.cell_index(*c)] = Some(k);
    }
    let f = free.len();
    let mut dist = vec![u32::MAX; f * f];
    for (k, c) in free.iter().enumerate() {
        let table = spec.bfs_from(*c);
        for (j, c2) in free.iter().enumerate() {
            if let Some(d) = table[spec.cell_index(*c2)] {
                dist[k * f + j] = d;
            }
        }
    }
    MazeDistances {
        cols: spec.cols(),
        free,
        slot,
        dist,
    }
}

impl MazeDistances {
    pub fn free_cells(&self) -> &[Cell] {
        &self.free
    }

    pub fn len(&self) -> usize {
        self.free.len()
    }

    pub fn is_empty(&self) -> bool {
        self.free.is_empty()
    }

    fn slot_of(&self, c: Cell) -> Option<usize> {
        if c.col >= self.cols {
            return None;
        }
        self.slot.get(c.row * self.cols + c.col).copied().flatten()
    }

    /// Step count between free cells, `None` if either is a wall.
    pub fn distance(&self, a: Cell, b: Cell) -> Option<u32> {
        let (i, j) = (self.slot_of(a)?, self.slot_of(b)?);
        Some(self.dist[i * self.free.len() + j])
    }

    /// Distance between the cells containing two world positions.
    pub fn distance_pos(&self, spec: &MazeSpec, a: [f64; 2], b: [f64; 2]) -> Option<u32> {
        self.distance(spec.cell_of(a), spec.cell_of(b))
    }

    /// The farthest pair of free cells (first in enumeration order).
    pub fn farthest_pair(&self) -> (Cell, Cell, u32) {
        let f = self.free.len();
        let mut best = (0, 0, 0);
        for i in 0..f {
            for j in 0..f {
                let d = self.dist[i * f + j];
                if d > best.2 {
                    best = (i, j, d);
                }
            }
        }
        (self.free[best.0], self.free[best.1], best.2)
    }

    pub fn diameter(&self) -> u32 {
        self.farthest_pair().2
    }
}
