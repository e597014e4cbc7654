use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    Lock,
    Maze,
}

impl EnvKind {
    pub fn code(self) -> u8 {
        match self {
            EnvKind::Lock => 0,
            EnvKind::Maze => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(EnvKind::Lock),
            1 => Ok(EnvKind::Maze),
            other => Err(Error::Format(format!("unknown env kind {other}"))),
        }
    }
}

/// Generation parameters carried alongside the trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub generator: String,
    pub seed: u64,
    /// Lock horizon `H` (lock datasets only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    /// Seed of the environment instance the data was collected in.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_seed: Option<u64>,
    /// Goal-reach radius (maze datasets only); lock goals need exact equality.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal_tol: Option<f64>,
    #[serde(default)]
    pub params: serde_json::Value,
}

/// Offline trajectories stored contiguously.
///
/// Trajectory `k` owns states `state_offsets[k] .. state_offsets[k+1]` and the
/// matching actions (one fewer per trajectory).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    env_kind: EnvKind,
    state_dim: usize,
    action_dim: usize,
    states: Vec<f32>,
    actions: Vec<f32>,
    /// Cumulative state counts, length `traj_count + 1`.
    state_offsets: Vec<usize>,
    pub meta: DatasetMeta,
}

/// Borrowed view of one trajectory.
#[derive(Debug, Clone, Copy)]
pub struct TrajectoryView<'a> {
    state_dim: usize,
    action_dim: usize,
    states: &'a [f32],
    actions: &'a [f32],
}

impl<'a> TrajectoryView<'a> {
    /// Number of states (`actions + 1`).
    pub fn len(&self) -> usize {
        self.states.len() / self.state_dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn transitions(&self) -> usize {
        self.len() - 1
    }

    pub fn state(&self, t: usize) -> &'a [f32] {
        &self.states[t * self.state_dim..(t + 1) * self.state_dim]
    }

    pub fn action(&self, t: usize) -> &'a [f32] {
        &self.actions[t * self.action_dim..(t + 1) * self.action_dim]
    }
}

/// Incremental builder that enforces the per-trajectory invariants.
#[derive(Debug)]
pub struct DatasetBuilder {
    ds: Dataset,
}

impl DatasetBuilder {
    pub fn new(env_kind: EnvKind, state_dim: usize, action_dim: usize, meta: DatasetMeta) -> Self {
        Self {
            ds: Dataset {
                env_kind,
                state_dim,
                action_dim,
                states: Vec::new(),
                actions: Vec::new(),
                state_offsets: vec![0],
                meta,
            },
        }
    }

    pub fn reserve(&mut self, states: usize, actions: usize) {
        self.ds.states.reserve(states * self.ds.state_dim);
        self.ds.actions.reserve(actions * self.ds.action_dim);
    }

    /// Append one trajectory given flat row-major states and actions.
    pub fn push(&mut self, states: &[f32], actions: &[f32]) -> Result<()> {
        let (sd, ad) = (self.ds.state_dim, self.ds.action_dim);
        if states.len() % sd != 0 || actions.len() % ad != 0 {
            return Err(Error::Shape("trajectory rows do not match dataset dims".into()));
        }
        let n_states = states.len() / sd;
        let n_actions = actions.len() / ad;
        if n_states != n_actions + 1 || n_actions == 0 {
            return Err(Error::Shape(format!(
                "trajectory needs states = actions + 1 >= 2, got {n_states} states and {n_actions} actions"
            )));
        }
        self.ds.states.extend_from_slice(states);
        self.ds.actions.extend_from_slice(actions);
        let last = *self.ds.state_offsets.last().expect("offsets start with 0");
        self.ds.state_offsets.push(last + n_states);
        Ok(())
    }

    pub fn finish(self) -> Dataset {
        self.ds
    }
}

impl Dataset {
    pub fn env_kind(&self) -> EnvKind {
        self.env_kind
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn num_trajectories(&self) -> usize {
        self.state_offsets.len() - 1
    }

    pub fn num_states(&self) -> usize {
        self.states.len() / self.state_dim
    }

    pub fn num_transitions(&self) -> usize {
        self.num_states() - self.num_trajectories()
    }

    pub fn trajectory(&self, k: usize) -> TrajectoryView<'_> {
        let (s0, s1) = (self.state_offsets[k], self.state_offsets[k + 1]);
        let (a0, a1) = (s0 - k, s1 - k - 1);
        TrajectoryView {
            state_dim: self.state_dim,
            action_dim: self.action_dim,
            states: &self.states[s0 * self.state_dim..s1 * self.state_dim],
            actions: &self.actions[a0 * self.action_dim..a1 * self.action_dim],
        }
    }

    pub fn trajectories(&self) -> impl Iterator<Item = TrajectoryView<'_>> {
        (0..self.num_trajectories()).map(move |k| self.trajectory(k))
    }

    /// State by global index over all stored states.
    pub fn global_state(&self, idx: usize) -> &[f32] {
        &self.states[idx * self.state_dim..(idx + 1) * self.state_dim]
    }

    /// Index of the first state of trajectory `k` in the global state array.
    pub fn state_offset(&self, k: usize) -> usize {
        self.state_offsets[k]
    }

    /// Map a global transition index to `(trajectory, step)`.
    pub fn locate_transition(&self, t: usize) -> (usize, usize) {
        // transitions before trajectory k = state_offsets[k] - k
        let mut lo = 0usize;
        let mut hi = self.num_trajectories();
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.state_offsets[mid] - mid <= t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo, t - (self.state_offsets[lo] - lo))
    }
}
