//! Double DQN on the combination lock, with n-step targets.

use serde::{Deserialize, Serialize};

use super::losses::dqn_loss;
use crate::data::LockBatch;
use crate::envs::LockSpec;
use crate::error::{Error, Result};
use crate::nn::{polyak, Matrix, MlpConfig, TrainNet};
use crate::oracle::LockQTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DoubleQ {
    /// One network: online argmax, target evaluation.
    Hasselt,
    /// Two heads: each head's online argmax is evaluated by the other head's target.
    CrossHead,
    /// Two heads: online argmax of head 0, evaluated by the minimum of both targets.
    ClippedMin,
}

impl DoubleQ {
    pub fn heads(self) -> usize {
        match self {
            DoubleQ::Hasselt => 1,
            DoubleQ::CrossHead | DoubleQ::ClippedMin => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QBackend {
    Mlp,
    /// Exact lookup tables updated by averaged TD steps; used as a fixed-point reference.
    Tabular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DqnConfig {
    pub n: usize,
    pub gamma: f64,
    pub lr: f64,
    pub tau: f64,
    pub hidden: Vec<usize>,
    #[serde(default = "yes")]
    pub layer_norm: bool,
    pub double_q: DoubleQ,
    pub backend: QBackend,
}

fn yes() -> bool {
    true
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            n: 1,
            gamma: 1.0,
            lr: 3e-4,
            tau: 0.005,
            hidden: vec![128, 128],
            layer_norm: true,
            double_q: DoubleQ::Hasselt,
            backend: QBackend::Mlp,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::config("dqn.n", "must be at least 1"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config("dqn.gamma", "must lie in (0, 1]"));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::config("dqn.lr", "must be finite and non-negative"));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::config("dqn.tau", "must lie in (0, 1]"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::config("dqn.hidden", "widths must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Heads {
    Mlp(Vec<TrainNet>),
    Table {
        online: Vec<LockQTable>,
        target: Vec<LockQTable>,
    },
}

#[derive(Debug, Clone)]
pub struct DqnLearner {
    spec: LockSpec,
    cfg: DqnConfig,
    heads: Heads,
    enc: Matrix<f32>,
    enc_next: Matrix<f32>,
    dq: Matrix<f32>,
}

impl DqnLearner {
    pub fn new(spec: &LockSpec, cfg: DqnConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let heads = match cfg.backend {
            QBackend::Mlp => {
                let mut mc = MlpConfig::new(spec.state_dim(), &cfg.hidden, 2);
                mc.use_layer_norm = cfg.layer_norm;
                let nets = (0..cfg.double_q.heads())
                    .map(|k| TrainNet::new(&mc, seed.wrapping_add(k as u64 * 7919), true))
                    .collect::<Result<Vec<_>>>()?;
                Heads::Mlp(nets)
            }
            QBackend::Tabular => {
                let t = vec![LockQTable::zeros(spec.horizon()); cfg.double_q.heads()];
                Heads::Table {
                    online: t.clone(),
                    target: t,
                }
            }
        };
        Ok(Self {
            spec: spec.clone(),
            cfg,
            heads,
            enc: Matrix::zeros(0, 0),
            enc_next: Matrix::zeros(0, 0),
            dq: Matrix::zeros(0, 0),
        })
    }

    pub fn config(&self) -> &DqnConfig {
        &self.cfg
    }

    pub fn spec(&self) -> &LockSpec {
        &self.spec
    }

    /// Online networks (MLP backend only).
    pub fn networks(&self) -> Option<&[TrainNet]> {
        match &self.heads {
            Heads::Mlp(n) => Some(n),
            Heads::Table { .. } => None,
        }
    }

    pub fn networks_mut(&mut self) -> Option<&mut [TrainNet]> {
        match &mut self.heads {
            Heads::Mlp(n) => Some(n),
            Heads::Table { .. } => None,
        }
    }

    /// Overwrite every tabular head (online and target) with `table`.
    pub fn load_table(&mut self, table: &LockQTable) -> Result<()> {
        match &mut self.heads {
            Heads::Table { online, target } => {
                online.iter_mut().chain(target.iter_mut()).for_each(|t| *t = table.clone());
                Ok(())
            }
            Heads::Mlp(_) => Err(Error::config("dqn.backend", "table injection needs the tabular backend")),
        }
    }

    /// Hash of all online parameters, for no-mutation checks.
    pub fn checksum(&self) -> u64 {
        match &self.heads {
            Heads::Mlp(nets) => nets
                .iter()
                .fold(0u64, |h, n| h.rotate_left(17) ^ n.params.checksum()),
            Heads::Table { online, .. } => online
                .iter()
                .flat_map(|t| t.values.iter().flatten())
                .fold(0xcbf2_9ce4_8422_2325u64, |h, v| {
                    (h ^ v.to_bits()).wrapping_mul(0x0000_0100_0000_01b3)
                }),
        }
    }

    fn encode(&mut self, states: &[usize]) {
        let d = self.spec.state_dim();
        self.enc.reshape_for(states.len(), d);
        for (r, &s) in states.iter().enumerate() {
            self.spec.encode_into(s, self.enc.row_mut(r));
        }
    }

    fn head_values(&mut self, head: usize, target: bool, states: &[usize]) -> Result<Vec<[f64; 2]>> {
        match &self.heads {
            Heads::Table { online, target: tg } => {
                let t = if target { &tg[head] } else { &online[head] };
                return Ok(states.iter().map(|&s| t.values[s]).collect());
            }
            Heads::Mlp(_) => {}
        }
        self.encode(states);
        let Heads::Mlp(nets) = &mut self.heads else { unreachable!() };
        let out = if target {
            nets[head].forward_target(&self.enc)?
        } else {
            nets[head].eval_buffered(&self.enc)?
        };
        Ok((0..out.rows())
            .map(|r| [out.get(r, 0) as f64, out.get(r, 1) as f64])
            .collect())
    }

    /// Online action values, averaged over heads.
    pub fn q_values(&mut self, states: &[usize]) -> Result<Vec<[f64; 2]>> {
        let heads = self.cfg.double_q.heads();
        let mut acc = self.head_values(0, false, states)?;
        for k in 1..heads {
            let other = self.head_values(k, false, states)?;
            for (a, o) in acc.iter_mut().zip(other) {
                a[0] += o[0];
                a[1] += o[1];
            }
        }
        if heads > 1 {
            let inv = 1.0 / heads as f64;
            acc.iter_mut().for_each(|a| {
                a[0] *= inv;
                a[1] *= inv;
            });
        }
        Ok(acc)
    }

    /// Full table of online values for all states (goal row zeroed).
    pub fn q_table(&mut self) -> Result<LockQTable> {
        let states: Vec<usize> = (0..self.spec.horizon()).collect();
        let mut values = self.q_values(&states)?;
        values[self.spec.goal_index()] = [0.0; 2];
        Ok(LockQTable {
            horizon: self.spec.horizon(),
            values,
        })
    }

    /// Greedy action; ties go to action 0.
    pub fn greedy(&mut self, state: usize) -> Result<usize> {
        let q = self.q_values(&[state])?[0];
        Ok(if q[1] > q[0] { 1 } else { 0 })
    }

    /// Bootstrapped targets for every head.
    fn targets(&mut self, b: &LockBatch) -> Result<Vec<Vec<f64>>> {
        let heads = self.cfg.double_q.heads();
        let online: Vec<Vec<[f64; 2]>> = (0..heads)
            .map(|k| self.head_values(k, false, &b.next))
            .collect::<Result<_>>()?;
        let target: Vec<Vec<[f64; 2]>> = (0..heads)
            .map(|k| self.head_values(k, true, &b.next))
            .collect::<Result<_>>()?;
        Ok(self.combine_targets(b, &online, &target))
    }

    /// Targets from online and target values at the bootstrap states.
    fn combine_targets(&self, b: &LockBatch, online: &[Vec<[f64; 2]>], target: &[Vec<[f64; 2]>]) -> Vec<Vec<f64>> {
        let heads = self.cfg.double_q.heads();
        let argmax = |q: [f64; 2]| if q[1] > q[0] { 1 } else { 0 };
        let gamma = self.cfg.gamma;
        let mut out = vec![Vec::with_capacity(b.len()); heads];
        for r in 0..b.len() {
            let disc = if b.terminal[r] {
                0.0
            } else {
                gamma.powi(b.effective_n[r] as i32)
            };
            match self.cfg.double_q {
                DoubleQ::Hasselt => {
                    let a = argmax(online[0][r]);
                    out[0].push(b.reward_sums[r] + disc * target[0][r][a]);
                }
                DoubleQ::CrossHead => {
                    for (k, o) in out.iter_mut().enumerate() {
                        let a = argmax(online[k][r]);
                        o.push(b.reward_sums[r] + disc * target[1 - k][r][a]);
                    }
                }
                DoubleQ::ClippedMin => {
                    let a = argmax(online[0][r]);
                    let y = b.reward_sums[r] + disc * target[0][r][a].min(target[1][r][a]);
                    out.iter_mut().for_each(|o| o.push(y));
                }
            }
        }
        out
    }

    /// Mean TD loss over heads without changing any parameter.
    pub fn td_loss(&mut self, b: &LockBatch) -> Result<f64> {
        let ys = self.targets(b)?;
        let mut total = 0.0;
        for (k, y) in ys.iter().enumerate() {
            let q = self.head_values(k, false, &b.s)?;
            total += b
                .a
                .iter()
                .zip(&q)
                .zip(y)
                .map(|((&a, q), &y)| (q[a] - y) * (q[a] - y))
                .sum::<f64>()
                / b.len() as f64;
        }
        Ok(total / ys.len() as f64)
    }

    /// One TD step on every head followed by the target update; returns the
    /// pre-update TD loss averaged over heads.
    pub fn update(&mut self, b: &LockBatch) -> Result<f64> {
        if b.is_empty() {
            return Err(Error::InvalidSampling("empty batch".into()));
        }
        let (lr, tau) = (self.cfg.lr, self.cfg.tau);
        if matches!(self.heads, Heads::Table { .. }) {
            let ys = self.targets(b)?;
            let Heads::Table { online, target } = &mut self.heads else { unreachable!() };
            let mut total = 0.0;
            for ((on, tg), y) in online.iter_mut().zip(target.iter_mut()).zip(&ys) {
                total += table_step(on, &b.s, &b.a, y, lr);
                for (t, o) in tg.values.iter_mut().zip(&on.values) {
                    polyak(t, o, tau);
                }
            }
            return Ok(total / ys.len() as f64);
        }

        // One online pass over [s; next] serves both the loss and the argmax.
        let n = b.len();
        let both: Vec<usize> = b.s.iter().chain(&b.next).copied().collect();
        self.encode(&both);
        let d = self.spec.state_dim();
        let mut enc_next = std::mem::take(&mut self.enc_next);
        enc_next.reshape_for(n, d);
        enc_next.as_mut_slice().copy_from_slice(&self.enc.as_slice()[n * d..]);
        let Heads::Mlp(nets) = &mut self.heads else { unreachable!() };
        let mut q_s = Vec::with_capacity(nets.len());
        let mut online = Vec::with_capacity(nets.len());
        let mut target = Vec::with_capacity(nets.len());
        for net in nets.iter_mut() {
            let out = net.forward(&self.enc)?;
            q_s.push(Matrix::from_vec(n, 2, out.as_slice()[..2 * n].to_vec()));
            online.push(rows_f64(&out.as_slice()[2 * n..]));
            target.push(rows_f64(net.forward_target(&enc_next)?.as_slice()));
        }
        self.enc_next = enc_next;
        let ys = self.combine_targets(b, &online, &target);
        let Heads::Mlp(nets) = &mut self.heads else { unreachable!() };
        let mut total = 0.0;
        for ((net, y), q) in nets.iter_mut().zip(&ys).zip(&q_s) {
            total += dqn_loss(q, &b.a, y, &mut self.dq);
            if !total.is_finite() {
                return Err(Error::NonFinite("dqn loss"));
            }
            net.step(&self.dq, lr)?;
            net.update_target(tau);
        }
        Ok(total / ys.len() as f64)
    }
}

fn rows_f64(flat: &[f32]) -> Vec<[f64; 2]> {
    flat.chunks_exact(2).map(|r| [r[0] as f64, r[1] as f64]).collect()
}

/// Move each visited entry a fraction `alpha` toward the mean of its targets in the batch.
fn table_step(t: &mut LockQTable, s: &[usize], a: &[usize], y: &[f64], alpha: f64) -> f64 {
    use std::collections::BTreeMap;
    let mut sums: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
    let mut loss = 0.0;
    for r in 0..s.len() {
        let d = t.values[s[r]][a[r]] - y[r];
        loss += d * d;
        let e = sums.entry((s[r], a[r])).or_insert((0.0, 0));
        e.0 += y[r];
        e.1 += 1;
    }
    for ((si, ai), (sum, count)) in sums {
        let q = &mut t.values[si][ai];
        *q += alpha * (sum / count as f64 - *q);
    }
    loss / s.len() as f64
}
