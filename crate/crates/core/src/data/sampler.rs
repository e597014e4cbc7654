//! Segment and goal sampling over a [`Dataset`].

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, EnvKind};
use crate::envs::maze::DEFAULT_GOAL_TOL;
use crate::envs::LockSpec;
use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Mixture over the four goal sources, plus the geometric parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalSampleConfig {
    pub p_cur: f64,
    pub p_geom: f64,
    pub p_traj: f64,
    pub p_rand: f64,
    pub geom_discount: f64,
}

impl GoalSampleConfig {
    pub fn new(p_cur: f64, p_geom: f64, p_traj: f64, p_rand: f64, geom_discount: f64) -> Result<Self> {
        let cfg = Self {
            p_cur,
            p_geom,
            p_traj,
            p_rand,
            geom_discount,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Default value-learning mixture.
    pub fn value(geom_discount: f64) -> Self {
        Self {
            p_cur: 0.2,
            p_geom: 0.0,
            p_traj: 0.5,
            p_rand: 0.3,
            geom_discount,
        }
    }

    /// Default actor mixture: geometric future states only.
    pub fn actor(geom_discount: f64) -> Self {
        Self {
            p_cur: 0.0,
            p_geom: 1.0,
            p_traj: 0.0,
            p_rand: 0.0,
            geom_discount,
        }
    }

    pub fn weights(&self) -> [f64; 4] {
        [self.p_cur, self.p_geom, self.p_traj, self.p_rand]
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.weights();
        if w.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidGoalConfig(format!("weights must be non-negative, got {w:?}")));
        }
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidGoalConfig(format!("weights sum to {total}, expected 1")));
        }
        if self.p_geom > 0.0 && !(self.geom_discount > 0.0 && self.geom_discount < 1.0) {
            return Err(Error::InvalidGoalConfig(format!(
                "geom_discount must lie in (0, 1), got {}",
                self.geom_discount
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardKind {
    /// 1 on goal attainment, 0 otherwise.
    ZeroOne,
    /// 0 on goal attainment, -1 otherwise.
    MinusOneZero,
}

impl RewardKind {
    pub fn reward(self, hit: bool) -> f64 {
        match (self, hit) {
            (RewardKind::ZeroOne, true) => 1.0,
            (RewardKind::ZeroOne, false) => 0.0,
            (RewardKind::MinusOneZero, true) => 0.0,
            (RewardKind::MinusOneZero, false) => -1.0,
        }
    }
}

/// Goal attainment predicate on goal-space vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GoalTest {
    Exact,
    Within(f64),
}

impl GoalTest {
    pub fn for_dataset(ds: &Dataset) -> Self {
        match ds.env_kind() {
            EnvKind::Lock => GoalTest::Exact,
            EnvKind::Maze => GoalTest::Within(ds.meta.goal_tol.unwrap_or(DEFAULT_GOAL_TOL)),
        }
    }

    #[inline]
    pub fn hit(&self, s: &[f32], g: &[f32]) -> bool {
        match *self {
            GoalTest::Exact => s == g,
            GoalTest::Within(tol) => {
                let d2: f64 = s
                    .iter()
                    .zip(g)
                    .map(|(&a, &b)| {
                        let d = a as f64 - b as f64;
                        d * d
                    })
                    .sum();
                d2.sqrt() <= tol
            }
        }
    }
}

/// Where a batch row's goal came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GoalSource {
    /// A state of the anchor trajectory at the given step.
    Trajectory { step: usize, kind: GoalKind },
    /// Uniform over all dataset states (global state index).
    Random { state: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GoalKind {
    Current,
    Geometric,
    Future,
}

/// Goal-conditioned segment batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub s_h: Matrix<f32>,
    pub a_h: Matrix<f32>,
    /// State at `h + 1`.
    pub s_next: Matrix<f32>,
    /// State at `h + min(n, steps to trajectory end)`.
    pub s_hn: Matrix<f32>,
    pub g: Matrix<f32>,
    pub reward_sums: Vec<f64>,
    pub effective_n: Vec<usize>,
    /// 1 when the goal was attained inside the segment.
    pub done_mask: Vec<f32>,
    /// 1 when `s_h` already attains the subgoal `s_hn`.
    pub subgoal_reached: Vec<f32>,
    pub anchors: Vec<(usize, usize)>,
    pub goal_sources: Vec<GoalSource>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.reward_sums.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reward_sums.is_empty()
    }
}

fn check_sampling(ds: &Dataset, batch: usize, n: usize) -> Result<()> {
    if n < 1 {
        return Err(Error::InvalidSampling("n must be at least 1".into()));
    }
    if batch == 0 {
        return Err(Error::InvalidSampling("batch size must be at least 1".into()));
    }
    if ds.num_transitions() == 0 {
        return Err(Error::InvalidSampling("dataset has no transitions".into()));
    }
    Ok(())
}

/// Uniform anchor over all transitions.
pub fn sample_anchor(ds: &Dataset, rng: &mut impl Rng) -> (usize, usize) {
    ds.locate_transition(rng.random_range(0..ds.num_transitions()))
}

/// Draw a batch of length-`n` segments with relabelled goals.
#[allow(clippy::too_many_arguments)]
pub fn sample_batch(
    ds: &Dataset,
    batch: usize,
    n: usize,
    gamma: f64,
    cfg: &GoalSampleConfig,
    reward_kind: RewardKind,
    rng: &mut impl Rng,
) -> Result<Batch> {
    check_sampling(ds, batch, n)?;
    cfg.validate()?;
    let test = GoalTest::for_dataset(ds);
    let (sd, ad) = (ds.state_dim(), ds.action_dim());
    let geom = if cfg.p_geom > 0.0 {
        Some(Geometric::new(1.0 - cfg.geom_discount).map_err(|e| Error::InvalidGoalConfig(e.to_string()))?)
    } else {
        None
    };
    let cum = {
        let w = cfg.weights();
        [w[0], w[0] + w[1], w[0] + w[1] + w[2]]
    };

    let mut out = Batch {
        s_h: Matrix::zeros(batch, sd),
        a_h: Matrix::zeros(batch, ad),
        s_next: Matrix::zeros(batch, sd),
        s_hn: Matrix::zeros(batch, sd),
        g: Matrix::zeros(batch, sd),
        reward_sums: Vec::with_capacity(batch),
        effective_n: Vec::with_capacity(batch),
        done_mask: Vec::with_capacity(batch),
        subgoal_reached: Vec::with_capacity(batch),
        anchors: Vec::with_capacity(batch),
        goal_sources: Vec::with_capacity(batch),
    };

    for row in 0..batch {
        let (k, h) = sample_anchor(ds, rng);
        let traj = ds.trajectory(k);
        let last = traj.len() - 1;

        let u: f64 = rng.random();
        let source = if u < cum[0] {
            GoalSource::Trajectory {
                step: h,
                kind: GoalKind::Current,
            }
        } else if u < cum[1] {
            let delta = 1 + geom.as_ref().expect("geometric configured").sample(rng) as usize;
            GoalSource::Trajectory {
                step: h.saturating_add(delta).min(last),
                kind: GoalKind::Geometric,
            }
        } else if u < cum[2] {
            GoalSource::Trajectory {
                step: rng.random_range(h + 1..=last),
                kind: GoalKind::Future,
            }
        } else {
            GoalSource::Random {
                state: rng.random_range(0..ds.num_states()),
            }
        };
        let goal = match source {
            GoalSource::Trajectory { step, .. } => traj.state(step),
            GoalSource::Random { state } => ds.global_state(state),
        };

        let horizon = n.min(last - h);
        let mut sum = 0.0;
        let mut disc = 1.0;
        let mut eff = horizon;
        let mut done = false;
        for i in 0..horizon {
            let hit = test.hit(traj.state(h + i), goal);
            sum += disc * reward_kind.reward(hit);
            disc *= gamma;
            if hit {
                eff = i + 1;
                done = true;
                break;
            }
        }

        out.s_h.row_mut(row).copy_from_slice(traj.state(h));
        out.a_h.row_mut(row).copy_from_slice(traj.action(h));
        out.s_next.row_mut(row).copy_from_slice(traj.state(h + 1));
        out.s_hn.row_mut(row).copy_from_slice(traj.state(h + horizon));
        out.g.row_mut(row).copy_from_slice(goal);
        out.reward_sums.push(sum);
        out.effective_n.push(eff);
        out.done_mask.push(if done { 1.0 } else { 0.0 });
        let sub_hit = test.hit(traj.state(h), traj.state(h + horizon));
        out.subgoal_reached.push(if sub_hit { 1.0 } else { 0.0 });
        out.anchors.push((k, h));
        out.goal_sources.push(source);
    }
    Ok(out)
}

/// Lock state indices for every stored state, for fast segment sampling.
#[derive(Debug, Clone)]
pub struct LockIndex {
    indices: Vec<u32>,
    goal: usize,
}

impl LockIndex {
    pub fn new(ds: &Dataset, spec: &LockSpec) -> Result<Self> {
        if ds.env_kind() != EnvKind::Lock || ds.state_dim() != spec.state_dim() {
            return Err(Error::Shape("dataset does not match the lock spec".into()));
        }
        let indices = (0..ds.num_states())
            .map(|i| spec.decode(ds.global_state(i)).map(|v| v as u32))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            indices,
            goal: spec.goal_index(),
        })
    }

    pub fn index(&self, global_state: usize) -> usize {
        self.indices[global_state] as usize
    }
}

/// Environment-reward segment batch for the lock learners (state indices).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LockBatch {
    pub s: Vec<usize>,
    pub a: Vec<usize>,
    pub reward_sums: Vec<f64>,
    /// State at `h + effective_n`.
    pub next: Vec<usize>,
    pub effective_n: Vec<usize>,
    pub terminal: Vec<bool>,
}

impl LockBatch {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }
}

/// Segments of up to `n` environment rewards (-1 per step), stopping at the
/// trajectory end or on entering the goal.
pub fn sample_lock_batch(
    ds: &Dataset,
    index: &LockIndex,
    batch: usize,
    n: usize,
    gamma: f64,
    rng: &mut impl Rng,
) -> Result<LockBatch> {
    check_sampling(ds, batch, n)?;
    let mut out = LockBatch {
        s: Vec::with_capacity(batch),
        a: Vec::with_capacity(batch),
        reward_sums: Vec::with_capacity(batch),
        next: Vec::with_capacity(batch),
        effective_n: Vec::with_capacity(batch),
        terminal: Vec::with_capacity(batch),
    };
    for _ in 0..batch {
        let (k, h) = sample_anchor(ds, rng);
        let traj = ds.trajectory(k);
        let base = ds.state_offset(k);
        let horizon = n.min(traj.transitions() - h);
        let mut sum = 0.0;
        let mut disc = 1.0;
        let mut eff = 0;
        let mut terminal = false;
        while eff < horizon {
            sum -= disc;
            disc *= gamma;
            eff += 1;
            if index.index(base + h + eff) == index.goal {
                terminal = true;
                break;
            }
        }
        out.s.push(index.index(base + h));
        out.a.push((traj.action(h)[0] > 0.5) as usize);
        out.reward_sums.push(sum);
        out.next.push(index.index(base + h + eff));
        out.effective_n.push(eff);
        out.terminal.push(terminal);
    }
    Ok(out)
}
