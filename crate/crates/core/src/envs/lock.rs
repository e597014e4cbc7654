//! The combination-lock chain: `H` linearly ordered states, two actions.
//! The answer action advances one state, any other action resets to state 0.
//! Every transition costs -1; state `H - 1` is the absorbing goal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_HORIZON: usize = 1 << 24;
pub const NUM_LOCK_ACTIONS: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LockSpec {
    horizon: usize,
    answers: Vec<u8>,
    seed: u64,
    state_dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LockState {
    pub index: usize,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LockTransition {
    pub state: LockState,
    pub reward: f64,
    pub done: bool,
}

impl LockState {
    pub fn start() -> Self {
        Self {
            index: 0,
            done: false,
        }
    }
}

/// `ceil(log2 h)` for `h >= 2`.
fn bits_for(h: usize) -> usize {
    (usize::BITS - (h - 1).leading_zeros()) as usize
}

impl LockSpec {
    /// Draw the answer actions from a seeded stream; identical `(h, seed)` give identical specs.
    pub fn new(h: usize, seed: u64) -> Result<Self> {
        if !(2..=MAX_HORIZON).contains(&h) {
            return Err(Error::InvalidHorizon(h));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let answers = (0..h - 1).map(|_| rng.random_range(0..2u8)).collect();
        Ok(Self {
            horizon: h,
            answers,
            seed,
            state_dim: bits_for(h),
        })
    }

    /// Spec with explicit answers (used by tests and hand-built examples).
    pub fn with_answers(answers: Vec<u8>, seed: u64) -> Result<Self> {
        let h = answers.len() + 1;
        if !(2..=MAX_HORIZON).contains(&h) {
            return Err(Error::InvalidHorizon(h));
        }
        if answers.iter().any(|&a| a > 1) {
            return Err(Error::InvalidSize("lock answers must be 0 or 1".into()));
        }
        Ok(Self {
            horizon: h,
            answers,
            seed,
            state_dim: bits_for(h),
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn answers(&self) -> &[u8] {
        &self.answers
    }

    pub fn answer(&self, index: usize) -> usize {
        self.answers[index] as usize
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn goal_index(&self) -> usize {
        self.horizon - 1
    }

    pub fn state(&self, index: usize) -> Result<LockState> {
        if index >= self.horizon {
            return Err(Error::InvalidState {
                index,
                horizon: self.horizon,
            });
        }
        Ok(LockState {
            index,
            done: index == self.goal_index(),
        })
    }

    /// Deterministic transition. Stepping the goal state is an error.
    pub fn step(&self, state: LockState, action: usize) -> Result<LockTransition> {
        if state.done || state.index >= self.goal_index() {
            return Err(Error::EpisodeFinished);
        }
        let next = if action == self.answer(state.index) {
            state.index + 1
        } else {
            0
        };
        let done = next == self.goal_index();
        Ok(LockTransition {
            state: LockState { index: next, done },
            reward: -1.0,
            done,
        })
    }

    /// Little-endian binary expansion of `index` as `{0.0, 1.0}` floats.
    pub fn encode(&self, index: usize) -> Result<Vec<f32>> {
        if index >= self.horizon {
            return Err(Error::InvalidState {
                index,
                horizon: self.horizon,
            });
        }
        let mut out = vec![0.0; self.state_dim];
        self.encode_into(index, &mut out);
        Ok(out)
    }

    pub(crate) fn encode_into(&self, index: usize, out: &mut [f32]) {
        for (bit, slot) in out.iter_mut().enumerate().take(self.state_dim) {
            *slot = ((index >> bit) & 1) as f32;
        }
    }

    /// Inverse of [`LockSpec::encode`]; entries are thresholded at 0.5.
    pub fn decode(&self, code: &[f32]) -> Result<usize> {
        let index = code
            .iter()
            .take(self.state_dim)
            .enumerate()
            .fold(0usize, |acc, (bit, &v)| acc | (((v > 0.5) as usize) << bit));
        if index >= self.horizon {
            return Err(Error::InvalidState {
                index,
                horizon: self.horizon,
            });
        }
        Ok(index)
    }
}
