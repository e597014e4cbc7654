//! Behavioral (SARSA) value learning for goal-conditioned hierarchies.
//!
//! The high level learns `V(s, g)` and `Q(s, w, g)` over length-`n` segments
//! whose endpoint `w` plays the role of the action. The low level learns
//! `V(s, w)` and `Q(s, a, w)` with the segment endpoint as goal.

use serde::{Deserialize, Serialize};

use super::losses::{sigmoid, value_loss, Aggregation, LossKind};
use crate::data::{Batch, RewardKind};
use crate::error::{Error, Result};
use crate::nn::{Matrix, MlpConfig, TrainNet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SarsaConfig {
    pub hidden: Vec<usize>,
    #[serde(default = "yes")]
    pub layer_norm: bool,
    pub lr: f64,
    pub tau: f64,
    pub gamma: f64,
    pub n: usize,
    pub loss_kind: LossKind,
    pub q_heads: usize,
    pub aggregation: Aggregation,
}

fn yes() -> bool {
    true
}

impl SarsaConfig {
    /// The reward convention each loss is trained with.
    pub fn reward_kind(&self) -> RewardKind {
        match self.loss_kind {
            LossKind::Bce => RewardKind::ZeroOne,
            LossKind::Regression => RewardKind::MinusOneZero,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::config("agent.n", "must be at least 1"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config("agent.gamma", "must lie in (0, 1]"));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::config("agent.tau", "must lie in (0, 1]"));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::config("agent.lr", "must be finite and non-negative"));
        }
        if self.q_heads < 1 {
            return Err(Error::config("agent.q_heads", "must be at least 1"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::config("agent.hidden", "widths must be positive"));
        }
        Ok(())
    }
}

/// Check that a batch's reward convention suits the loss.
pub fn check_reward_kind(loss: LossKind, reward: RewardKind) -> Result<()> {
    if loss == LossKind::Bce && reward == RewardKind::MinusOneZero {
        return Err(Error::config(
            "agent.reward_kind",
            "the BCE value loss needs 0-1 rewards",
        ));
    }
    Ok(())
}

/// A state-value network and an ensemble of action-value networks with targets.
#[derive(Debug, Clone)]
pub struct ValuePair {
    pub v: TrainNet,
    pub q: Vec<TrainNet>,
    loss_kind: LossKind,
    aggregation: Aggregation,
    lr: f64,
    tau: f64,
    dy: Matrix<f32>,
}

fn column(m: &Matrix<f32>) -> Vec<f64> {
    m.as_slice().iter().map(|&v| v as f64).collect()
}

impl ValuePair {
    fn new(v_in: usize, q_in: usize, cfg: &SarsaConfig, seed: u64) -> Result<Self> {
        let mut vc = MlpConfig::new(v_in, &cfg.hidden, 1);
        vc.use_layer_norm = cfg.layer_norm;
        let mut qc = MlpConfig::new(q_in, &cfg.hidden, 1);
        qc.use_layer_norm = cfg.layer_norm;
        let v = TrainNet::new(&vc, seed, false)?;
        let q = (0..cfg.q_heads)
            .map(|k| TrainNet::new(&qc, seed.wrapping_add(1 + k as u64), true))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            v,
            q,
            loss_kind: cfg.loss_kind,
            aggregation: cfg.aggregation,
            lr: cfg.lr,
            tau: cfg.tau,
            dy: Matrix::zeros(0, 0),
        })
    }

    /// Map a raw network output to the value scale.
    pub fn value_of(&self, raw: f64) -> f64 {
        match self.loss_kind {
            LossKind::Bce => sigmoid(raw),
            LossKind::Regression => raw,
        }
    }

    fn aggregate(&self, per_head: &[Vec<f64>], rows: usize) -> Vec<f64> {
        (0..rows)
            .map(|r| {
                let xs: Vec<f64> = per_head.iter().map(|h| h[r]).collect();
                self.aggregation.apply(&xs)
            })
            .collect()
    }

    /// Aggregated raw target-network outputs.
    fn target_q(&mut self, x: &Matrix<f32>) -> Result<Vec<f64>> {
        let per_head: Vec<Vec<f64>> = self
            .q
            .iter_mut()
            .map(|net| net.forward_target(x).map(column))
            .collect::<Result<_>>()?;
        Ok(self.aggregate(&per_head, x.rows()))
    }

    /// Aggregated raw online outputs (used for scoring candidates).
    pub fn online_q(&self, x: &Matrix<f32>) -> Result<Vec<f64>> {
        let per_head: Vec<Vec<f64>> = self
            .q
            .iter()
            .map(|net| net.eval(x).map(|m| column(&m)))
            .collect::<Result<_>>()?;
        Ok(self.aggregate(&per_head, x.rows()))
    }

    /// Online state values on the value scale.
    pub fn online_v(&self, x: &Matrix<f32>) -> Result<Vec<f64>> {
        Ok(column(&self.v.eval(x)?)
            .into_iter()
            .map(|r| self.value_of(r))
            .collect())
    }

    /// Labels for V: the aggregated target Q on the value scale.
    fn v_labels(&mut self, x_q: &Matrix<f32>) -> Result<Vec<f64>> {
        let raw = self.target_q(x_q)?;
        Ok(raw.into_iter().map(|r| self.value_of(r)).collect())
    }

    fn clamp_labels(&self, labels: &mut [f64]) {
        if self.loss_kind == LossKind::Bce {
            labels.iter_mut().for_each(|y| *y = y.clamp(0.0, 1.0));
        }
    }

    fn losses(&mut self, x_v: &Matrix<f32>, v_labels: &[f64], x_q: &Matrix<f32>, q_labels: &[f64]) -> Result<(f64, f64)> {
        let v_out = self.v.eval(x_v)?;
        let v_loss = value_loss(self.loss_kind, &v_out, v_labels, &mut self.dy);
        let mut q_loss = 0.0;
        for k in 0..self.q.len() {
            let out = self.q[k].eval(x_q)?;
            q_loss += value_loss(self.loss_kind, &out, q_labels, &mut self.dy);
        }
        Ok((v_loss, q_loss / self.q.len() as f64))
    }

    fn step(&mut self, x_v: &Matrix<f32>, v_labels: &[f64], x_q: &Matrix<f32>, q_labels: &[f64]) -> Result<(f64, f64)> {
        let out = self.v.forward(x_v)?;
        let v_loss = value_loss(self.loss_kind, out, v_labels, &mut self.dy);
        self.v.step(&self.dy, self.lr)?;
        let mut q_loss = 0.0;
        for net in &mut self.q {
            let out = net.forward(x_q)?;
            q_loss += value_loss(self.loss_kind, out, q_labels, &mut self.dy);
            net.step(&self.dy, self.lr)?;
            net.update_target(self.tau);
        }
        let q_loss = q_loss / self.q.len() as f64;
        if !(v_loss.is_finite() && q_loss.is_finite()) {
            return Err(Error::NonFinite("value loss"));
        }
        Ok((v_loss, q_loss))
    }
}

/// High-level n-step SARSA over `(s, w = s_{h+n}, g)`.
#[derive(Debug, Clone)]
pub struct SarsaHigh {
    pub cfg: SarsaConfig,
    pub nets: ValuePair,
    state_dim: usize,
    goal_dim: usize,
}

impl SarsaHigh {
    pub fn new(state_dim: usize, goal_dim: usize, cfg: SarsaConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let nets = ValuePair::new(state_dim + goal_dim, state_dim + 2 * goal_dim, &cfg, seed)?;
        Ok(Self {
            cfg,
            nets,
            state_dim,
            goal_dim,
        })
    }

    fn inputs(b: &Batch) -> (Matrix<f32>, Matrix<f32>, Matrix<f32>) {
        let x_v = Matrix::hcat(&[&b.s_h, &b.g]);
        let x_q = Matrix::hcat(&[&b.s_h, &b.s_hn, &b.g]);
        let x_boot = Matrix::hcat(&[&b.s_hn, &b.g]);
        (x_v, x_q, x_boot)
    }

    fn labels(&mut self, b: &Batch) -> Result<(Matrix<f32>, Vec<f64>, Matrix<f32>, Vec<f64>)> {
        let (x_v, x_q, x_boot) = Self::inputs(b);
        let v_labels = self.nets.v_labels(&x_q)?;
        let boot = self.nets.online_v(&x_boot)?;
        let gamma = self.cfg.gamma;
        let mut q_labels: Vec<f64> = (0..b.len())
            .map(|r| {
                let keep = 1.0 - b.done_mask[r] as f64;
                b.reward_sums[r] + gamma.powi(b.effective_n[r] as i32) * keep * boot[r]
            })
            .collect();
        self.nets.clamp_labels(&mut q_labels);
        Ok((x_v, v_labels, x_q, q_labels))
    }

    /// One V step and one step per Q head, then the target update.
    pub fn update(&mut self, b: &Batch, reward_kind: RewardKind) -> Result<(f64, f64)> {
        check_reward_kind(self.cfg.loss_kind, reward_kind)?;
        let (x_v, v_labels, x_q, q_labels) = self.labels(b)?;
        self.nets.step(&x_v, &v_labels, &x_q, &q_labels)
    }

    /// Losses on a batch without updating.
    pub fn losses(&mut self, b: &Batch) -> Result<(f64, f64)> {
        let (x_v, v_labels, x_q, q_labels) = self.labels(b)?;
        self.nets.losses(&x_v, &v_labels, &x_q, &q_labels)
    }

    /// Aggregated raw Q scores of subgoal candidates (rows of `w`) at one `(s, g)`.
    pub fn score(&self, s: &[f32], w: &Matrix<f32>, g: &[f32]) -> Result<Vec<f64>> {
        let x = stack_rows(s, w, g, self.state_dim, self.goal_dim);
        self.nets.online_q(&x)
    }
}

/// Low-level one-step SARSA toward the segment endpoint with discount `1 - 1/n`.
#[derive(Debug, Clone)]
pub struct SarsaLow {
    pub cfg: SarsaConfig,
    pub nets: ValuePair,
    pub gamma_tilde: f64,
    state_dim: usize,
    action_dim: usize,
    goal_dim: usize,
}

impl SarsaLow {
    pub fn new(state_dim: usize, action_dim: usize, goal_dim: usize, cfg: SarsaConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if cfg.n < 2 {
            return Err(Error::config("agent.n", "the low-level discount 1 - 1/n needs n >= 2"));
        }
        let gamma_tilde = low_level_discount(cfg.n);
        let nets = ValuePair::new(state_dim + goal_dim, state_dim + action_dim + goal_dim, &cfg, seed)?;
        Ok(Self {
            cfg,
            nets,
            gamma_tilde,
            state_dim,
            action_dim,
            goal_dim,
        })
    }

    fn labels(&mut self, b: &Batch) -> Result<(Matrix<f32>, Vec<f64>, Matrix<f32>, Vec<f64>)> {
        let x_v = Matrix::hcat(&[&b.s_h, &b.s_hn]);
        let x_q = Matrix::hcat(&[&b.s_h, &b.a_h, &b.s_hn]);
        let x_boot = Matrix::hcat(&[&b.s_next, &b.s_hn]);
        let v_labels = self.nets.v_labels(&x_q)?;
        let boot = self.nets.online_v(&x_boot)?;
        let rk = self.cfg.reward_kind();
        let mut q_labels: Vec<f64> = (0..b.len())
            .map(|r| {
                if b.subgoal_reached[r] > 0.5 {
                    rk.reward(true)
                } else {
                    rk.reward(false) + self.gamma_tilde * boot[r]
                }
            })
            .collect();
        self.nets.clamp_labels(&mut q_labels);
        Ok((x_v, v_labels, x_q, q_labels))
    }

    pub fn update(&mut self, b: &Batch) -> Result<(f64, f64)> {
        let (x_v, v_labels, x_q, q_labels) = self.labels(b)?;
        self.nets.step(&x_v, &v_labels, &x_q, &q_labels)
    }

    pub fn losses(&mut self, b: &Batch) -> Result<(f64, f64)> {
        let (x_v, v_labels, x_q, q_labels) = self.labels(b)?;
        self.nets.losses(&x_v, &v_labels, &x_q, &q_labels)
    }

    /// Aggregated raw Q scores of action candidates (rows of `a`) at one `(s, w)`.
    pub fn score(&self, s: &[f32], a: &Matrix<f32>, w: &[f32]) -> Result<Vec<f64>> {
        debug_assert_eq!(a.cols(), self.action_dim);
        let x = stack_rows(s, a, w, self.state_dim, self.goal_dim);
        self.nets.online_q(&x)
    }
}

pub fn low_level_discount(n: usize) -> f64 {
    1.0 - 1.0 / n as f64
}

/// Rows `[s, mid_r, tail]` for every row of `mid`.
fn stack_rows(s: &[f32], mid: &Matrix<f32>, tail: &[f32], sd: usize, td: usize) -> Matrix<f32> {
    debug_assert_eq!((s.len(), tail.len()), (sd, td));
    let width = sd + mid.cols() + td;
    let mut x = Matrix::zeros(mid.rows(), width);
    for r in 0..mid.rows() {
        let row = x.row_mut(r);
        row[..sd].copy_from_slice(s);
        row[sd..sd + mid.cols()].copy_from_slice(mid.row(r));
        row[sd + mid.cols()..].copy_from_slice(tail);
    }
    x
}
