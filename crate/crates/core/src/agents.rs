//! Goal-conditioned maze agents: flat flow BC, hierarchical flow BC, SHARSA
//! and double SHARSA.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{sample_batch, Dataset, GoalSampleConfig, RewardKind};
use crate::envs::MazeSpec;
use crate::error::{Error, Result};
use crate::flow::{FlowNet, FlowSampleConfig, DEFAULT_FLOW_STEPS};
use crate::learners::{Aggregation, LossKind, SarsaConfig, SarsaHigh, SarsaLow};
use crate::nn::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Fbc,
    Hfbc,
    Sharsa,
    DoubleSharsa,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Fbc => "fbc",
            Method::Hfbc => "hfbc",
            Method::Sharsa => "sharsa",
            Method::DoubleSharsa => "double-sharsa",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub policy_hidden: Vec<usize>,
    pub value_hidden: Vec<usize>,
    pub layer_norm: bool,
    pub lr: f64,
    pub tau: f64,
    pub gamma: f64,
    /// Segment length of the high-level value and subgoal target.
    pub n: usize,
    pub batch_size: usize,
    pub loss_kind: LossKind,
    pub q_heads: usize,
    pub aggregation: Aggregation,
    /// Candidate count for rejection sampling.
    pub rs_n: usize,
    /// Environment steps between subgoal refreshes; defaults to `n`.
    pub subgoal_period: Option<usize>,
    pub flow_steps: usize,
    pub actor_goals: GoalSampleConfig,
    pub value_goals: GoalSampleConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        let gamma = 0.99;
        Self {
            policy_hidden: vec![256, 256],
            value_hidden: vec![256, 256],
            layer_norm: true,
            lr: 3e-4,
            tau: 0.005,
            gamma,
            n: 25,
            batch_size: 256,
            loss_kind: LossKind::Bce,
            q_heads: 2,
            aggregation: Aggregation::Mean,
            rs_n: 32,
            subgoal_period: None,
            flow_steps: DEFAULT_FLOW_STEPS,
            actor_goals: GoalSampleConfig::actor(gamma),
            value_goals: GoalSampleConfig::value(gamma),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rs_n < 1 {
            return Err(Error::config("agent.rs_n", "must be at least 1"));
        }
        if self.subgoal_period == Some(0) {
            return Err(Error::config("agent.subgoal_period", "must be at least 1"));
        }
        if self.batch_size < 1 {
            return Err(Error::config("agent.batch_size", "must be at least 1"));
        }
        if self.flow_steps < 1 {
            return Err(Error::config("agent.flow_steps", "must be at least 1"));
        }
        if self.policy_hidden.contains(&0) {
            return Err(Error::config("agent.policy_hidden", "widths must be positive"));
        }
        self.actor_goals
            .validate()
            .map_err(|e| Error::config("agent.actor_goals", e.to_string()))?;
        self.value_goals
            .validate()
            .map_err(|e| Error::config("agent.value_goals", e.to_string()))?;
        self.sarsa().validate()
    }

    pub fn sarsa(&self) -> SarsaConfig {
        SarsaConfig {
            hidden: self.value_hidden.clone(),
            layer_norm: self.layer_norm,
            lr: self.lr,
            tau: self.tau,
            gamma: self.gamma,
            n: self.n,
            loss_kind: self.loss_kind,
            q_heads: self.q_heads,
            aggregation: self.aggregation,
        }
    }

    pub fn reward_kind(&self) -> RewardKind {
        self.sarsa().reward_kind()
    }

    pub fn period(&self) -> usize {
        self.subgoal_period.unwrap_or(self.n)
    }
}

/// Per-episode acting state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Controller {
    pub step: usize,
    pub subgoal: Option<Vec<f32>>,
    pub refreshes: usize,
}

impl Controller {
    pub fn reset(&mut self) {
        *self = Self::default();
    }
}

/// Index of the first maximal score.
pub fn argmax_first(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// One rejection-sampling decision.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub candidates: Matrix<f32>,
    pub scores: Vec<f64>,
    pub chosen: usize,
}

impl Decision {
    pub fn chosen_row(&self) -> &[f32] {
        self.candidates.row(self.chosen)
    }
}

fn concat(a: &[f32], b: &[f32]) -> Vec<f32> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

fn world_box(spec: &MazeSpec) -> Vec<(f32, f32)> {
    let [w, h] = spec.world_size();
    vec![(0.0, w as f32), (0.0, h as f32)]
}

fn action_box(spec: &MazeSpec) -> Vec<(f32, f32)> {
    let d = spec.action_bound as f32;
    vec![(-d, d), (-d, d)]
}

/// Goal-conditioned flow policy over `[s, g] -> a`.
#[derive(Debug, Clone)]
pub struct FlatAgent {
    pub pi: FlowNet,
    pub sample_cfg: FlowSampleConfig,
    pub cfg: AgentConfig,
}

impl FlatAgent {
    pub fn new(spec: &MazeSpec, cfg: AgentConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            pi: FlowNet::new(4, 2, &cfg.policy_hidden, cfg.layer_norm, seed)?,
            sample_cfg: FlowSampleConfig {
                steps: cfg.flow_steps,
                clip_box: Some(action_box(spec)),
            },
            cfg,
        })
    }

    pub fn train_step(&mut self, ds: &Dataset, rng: &mut impl Rng) -> Result<Vec<(&'static str, f64)>> {
        let c = &self.cfg;
        let b = sample_batch(ds, c.batch_size, 1, c.gamma, &c.actor_goals, c.reward_kind(), rng)?;
        let cond = Matrix::hcat(&[&b.s_h, &b.g]);
        let loss = self.pi.train_step(&cond, &b.a_h, c.lr, rng)?;
        Ok(vec![("bc_loss", loss)])
    }

    pub fn act(&self, s: &[f32], g: &[f32], rng: &mut impl Rng) -> Result<Vec<f32>> {
        let a = self.pi.sample_n(&concat(s, g), 1, &self.sample_cfg, rng)?;
        Ok(a.row(0).to_vec())
    }
}

/// Hierarchical flow policies with optional high- and low-level values.
#[derive(Debug, Clone)]
pub struct SharsaAgent {
    pub pi_high: FlowNet,
    pub pi_low: FlowNet,
    pub high: Option<SarsaHigh>,
    pub low: Option<SarsaLow>,
    pub high_sample: FlowSampleConfig,
    pub low_sample: FlowSampleConfig,
    pub cfg: AgentConfig,
}

impl SharsaAgent {
    /// `Hfbc` builds no value functions, `Sharsa` the high level, `DoubleSharsa` both.
    pub fn new(spec: &MazeSpec, method: Method, cfg: AgentConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let ph = &cfg.policy_hidden;
        let pi_high = FlowNet::new(4, 2, ph, cfg.layer_norm, seed)?;
        let pi_low = FlowNet::new(4, 2, ph, cfg.layer_norm, seed.wrapping_add(101))?;
        let (high, low) = match method {
            Method::Fbc => return Err(Error::config("agent.method", "fbc is a flat agent")),
            Method::Hfbc => (None, None),
            Method::Sharsa => (Some(SarsaHigh::new(2, 2, cfg.sarsa(), seed.wrapping_add(202))?), None),
            Method::DoubleSharsa => (
                Some(SarsaHigh::new(2, 2, cfg.sarsa(), seed.wrapping_add(202))?),
                Some(SarsaLow::new(2, 2, 2, cfg.sarsa(), seed.wrapping_add(303))?),
            ),
        };
        Ok(Self {
            pi_high,
            pi_low,
            high,
            low,
            high_sample: FlowSampleConfig {
                steps: cfg.flow_steps,
                clip_box: Some(world_box(spec)),
            },
            low_sample: FlowSampleConfig {
                steps: cfg.flow_steps,
                clip_box: Some(action_box(spec)),
            },
            cfg,
        })
    }

    /// One update of every component; returns the loss of each.
    pub fn train_step(&mut self, ds: &Dataset, rng: &mut impl Rng) -> Result<Vec<(&'static str, f64)>> {
        let c = self.cfg.clone();
        let rk = c.reward_kind();
        let mut out = Vec::with_capacity(6);
        let ab = sample_batch(ds, c.batch_size, c.n, c.gamma, &c.actor_goals, rk, rng)?;
        let cond_h = Matrix::hcat(&[&ab.s_h, &ab.g]);
        out.push(("high_bc_loss", self.pi_high.train_step(&cond_h, &ab.s_hn, c.lr, rng)?));
        let cond_l = Matrix::hcat(&[&ab.s_h, &ab.s_hn]);
        out.push(("low_bc_loss", self.pi_low.train_step(&cond_l, &ab.a_h, c.lr, rng)?));
        if self.high.is_some() || self.low.is_some() {
            let vb = sample_batch(ds, c.batch_size, c.n, c.gamma, &c.value_goals, rk, rng)?;
            if let Some(h) = self.high.as_mut() {
                let (v, q) = h.update(&vb, rk)?;
                out.push(("high_v_loss", v));
                out.push(("high_q_loss", q));
            }
            if let Some(l) = self.low.as_mut() {
                let (v, q) = l.update(&vb)?;
                out.push(("low_v_loss", v));
                out.push(("low_q_loss", q));
            }
        }
        Ok(out)
    }

    /// Draw `count` subgoals and keep the best under `score`.
    pub fn decide_subgoal_with(
        &self,
        s: &[f32],
        g: &[f32],
        count: usize,
        score: &dyn Fn(&Matrix<f32>) -> Result<Vec<f64>>,
        rng: &mut impl Rng,
    ) -> Result<Decision> {
        let candidates = self.pi_high.sample_n(&concat(s, g), count, &self.high_sample, rng)?;
        let scores = if count == 1 { vec![0.0] } else { score(&candidates)? };
        let chosen = argmax_first(&scores);
        Ok(Decision {
            candidates,
            scores,
            chosen,
        })
    }

    /// Subgoal decision scored by the high-level Q (raw outputs).
    pub fn decide_subgoal(&self, s: &[f32], g: &[f32], count: usize, rng: &mut impl Rng) -> Result<Decision> {
        match &self.high {
            Some(h) => self.decide_subgoal_with(s, g, count, &|w| h.score(s, w, g), rng),
            None if count == 1 => self.decide_subgoal_with(s, g, 1, &|_| Ok(vec![0.0]), rng),
            None => Err(Error::config("agent.rs_n", "subgoal rejection sampling needs a high-level value")),
        }
    }

    /// Action candidates for subgoal `w`, scored by the low-level Q when `count > 1`.
    pub fn decide_action(&self, s: &[f32], w: &[f32], count: usize, rng: &mut impl Rng) -> Result<Decision> {
        let candidates = self.pi_low.sample_n(&concat(s, w), count, &self.low_sample, rng)?;
        let scores = if count == 1 {
            vec![0.0]
        } else {
            match &self.low {
                Some(l) => l.score(s, &candidates, w)?,
                None => return Err(Error::config("agent.method", "action rejection sampling needs a low-level value")),
            }
        };
        let chosen = argmax_first(&scores);
        Ok(Decision {
            candidates,
            scores,
            chosen,
        })
    }

    fn refresh(&self, ctrl: &mut Controller, period: usize) -> bool {
        ctrl.subgoal.is_none() || ctrl.step % period == 0
    }

    /// Hierarchical acting with `subgoal_count` high-level and `action_count`
    /// low-level candidates.
    pub fn act_with(
        &self,
        ctrl: &mut Controller,
        s: &[f32],
        g: &[f32],
        subgoal_count: usize,
        action_count: usize,
        rng: &mut impl Rng,
    ) -> Result<Vec<f32>> {
        if self.refresh(ctrl, self.cfg.period()) {
            let d = self.decide_subgoal(s, g, subgoal_count, rng)?;
            ctrl.subgoal = Some(d.chosen_row().to_vec());
            ctrl.refreshes += 1;
        }
        let w = ctrl.subgoal.clone().expect("subgoal set above");
        let a = self.decide_action(s, &w, action_count, rng)?;
        ctrl.step += 1;
        Ok(a.chosen_row().to_vec())
    }

    /// Hierarchical flow BC: one subgoal, one action.
    pub fn hfbc_act(&self, ctrl: &mut Controller, s: &[f32], g: &[f32], rng: &mut impl Rng) -> Result<Vec<f32>> {
        self.act_with(ctrl, s, g, 1, 1, rng)
    }

    /// SHARSA: rejection-sampled subgoal, one action.
    pub fn sharsa_act(&self, ctrl: &mut Controller, s: &[f32], g: &[f32], rng: &mut impl Rng) -> Result<Vec<f32>> {
        self.act_with(ctrl, s, g, self.cfg.rs_n, 1, rng)
    }

    /// Double SHARSA: rejection sampling at both levels.
    pub fn dsharsa_act(&self, ctrl: &mut Controller, s: &[f32], g: &[f32], rng: &mut impl Rng) -> Result<Vec<f32>> {
        if self.low.is_none() {
            return Err(Error::config("agent.method", "double SHARSA needs a low-level value"));
        }
        self.act_with(ctrl, s, g, self.cfg.rs_n, self.cfg.rs_n, rng)
    }
}

/// Any trained maze agent.
#[derive(Debug, Clone)]
pub enum MazeAgent {
    Flat(FlatAgent),
    Hier(Method, SharsaAgent),
}

impl MazeAgent {
    pub fn new(spec: &MazeSpec, method: Method, cfg: AgentConfig, seed: u64) -> Result<Self> {
        Ok(match method {
            Method::Fbc => MazeAgent::Flat(FlatAgent::new(spec, cfg, seed)?),
            m => MazeAgent::Hier(m, SharsaAgent::new(spec, m, cfg, seed)?),
        })
    }

    pub fn method(&self) -> Method {
        match self {
            MazeAgent::Flat(_) => Method::Fbc,
            MazeAgent::Hier(m, _) => *m,
        }
    }

    pub fn train_step(&mut self, ds: &Dataset, rng: &mut impl Rng) -> Result<Vec<(&'static str, f64)>> {
        match self {
            MazeAgent::Flat(a) => a.train_step(ds, rng),
            MazeAgent::Hier(_, a) => a.train_step(ds, rng),
        }
    }

    /// Act with the method's own rule.
    pub fn act(&self, ctrl: &mut Controller, s: &[f32], g: &[f32], rng: &mut impl Rng) -> Result<Vec<f32>> {
        match self {
            MazeAgent::Flat(a) => {
                ctrl.step += 1;
                a.act(s, g, rng)
            }
            MazeAgent::Hier(Method::Hfbc, a) => a.hfbc_act(ctrl, s, g, rng),
            MazeAgent::Hier(Method::Sharsa, a) => a.sharsa_act(ctrl, s, g, rng),
            MazeAgent::Hier(_, a) => a.dsharsa_act(ctrl, s, g, rng),
        }
    }

    /// Every parameter buffer, in a fixed order, for checkpoints.
    pub fn tensors(&self) -> Vec<(String, &crate::nn::MlpParams<f32>)> {
        let mut out = Vec::new();
        match self {
            MazeAgent::Flat(a) => out.push(("pi".to_string(), &a.pi.net.params)),
            MazeAgent::Hier(_, a) => {
                out.push(("pi_high".into(), &a.pi_high.net.params));
                out.push(("pi_low".into(), &a.pi_low.net.params));
                for (prefix, vp) in [("high", a.high.as_ref().map(|h| &h.nets)), ("low", a.low.as_ref().map(|l| &l.nets))] {
                    if let Some(vp) = vp {
                        out.push((format!("{prefix}_v"), &vp.v.params));
                        for (k, q) in vp.q.iter().enumerate() {
                            out.push((format!("{prefix}_q{k}"), &q.params));
                        }
                    }
                }
            }
        }
        out
    }
}
