//! Central finite-difference check of the analytic gradients of each
//! training loss, in f64 on a small network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Matrix, MlpCache, MlpConfig, MlpParams};
use crate::error::Result;
use crate::learners::{dqn_loss, flow_matching_loss, value_loss, LossKind};

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor so that near-zero gradients compare absolutely.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossDescriptor {
    Dqn,
    SarsaRegression,
    SarsaBce,
    FlowMatching,
}

impl LossDescriptor {
    pub const ALL: [LossDescriptor; 4] = [
        LossDescriptor::Dqn,
        LossDescriptor::SarsaRegression,
        LossDescriptor::SarsaBce,
        LossDescriptor::FlowMatching,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossDescriptor::Dqn => "dqn",
            LossDescriptor::SarsaRegression => "sarsa-regression",
            LossDescriptor::SarsaBce => "sarsa-bce",
            LossDescriptor::FlowMatching => "flow-matching",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.name() == s)
    }
}

/// `max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)`.
pub fn max_rel_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(REL_ERROR_FLOOR))
        .fold(0.0, f64::max)
}

/// A loss instance: fixed network input plus a closure from network output
/// to `(loss, dloss/doutput)`.
struct Instance {
    params: MlpParams<f64>,
    input: Matrix<f64>,
    head: Box<dyn Fn(&Matrix<f64>, &mut Matrix<f64>) -> f64>,
}

impl Instance {
    fn loss(&self, params: &MlpParams<f64>, cache: &mut MlpCache<f64>) -> Result<f64> {
        let y = params.forward(&self.input, cache)?;
        let mut scratch = Matrix::zeros(0, 0);
        Ok((self.head)(y, &mut scratch))
    }

    fn analytic(&self) -> Result<Vec<f64>> {
        let mut cache = MlpCache::default();
        let mut dy = Matrix::zeros(0, 0);
        let y = self.params.forward(&self.input, &mut cache)?;
        (self.head)(y, &mut dy);
        let mut grads = vec![0.0; self.params.len()];
        self.params.backward(&mut cache, &dy, &mut grads, None)?;
        Ok(grads)
    }

    fn numeric(&self) -> Result<Vec<f64>> {
        let mut p = self.params.clone();
        let mut cache = MlpCache::default();
        let mut out = Vec::with_capacity(p.len());
        for i in 0..p.len() {
            let x0 = p.as_slice()[i];
            p.as_mut_slice()[i] = x0 + FD_STEP;
            let up = self.loss(&p, &mut cache)?;
            p.as_mut_slice()[i] = x0 - FD_STEP;
            let down = self.loss(&p, &mut cache)?;
            p.as_mut_slice()[i] = x0;
            out.push((up - down) / (2.0 * FD_STEP));
        }
        Ok(out)
    }
}

fn normal_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Matrix::from_vec(rows, cols, data)
}

const BATCH: usize = 6;
const HIDDEN: [usize; 2] = [8, 8];

fn instance(desc: LossDescriptor, seed: u64) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Jitter every entry so biases and layer-norm affines are not at their
    // trivial initial values.
    let build = |input: usize, output: usize| -> Result<MlpParams<f64>> {
        let mut p: MlpParams<f64> = MlpParams::<f32>::init(&MlpConfig::new(input, &HIDDEN, output), seed)?.cast();
        let mut jitter = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for v in p.as_mut_slice() {
            *v += 0.1 * jitter.sample::<f64, _>(StandardNormal);
        }
        Ok(p)
    };
    let inst = match desc {
        LossDescriptor::Dqn => {
            let actions: Vec<usize> = (0..BATCH).map(|_| rng.random_range(0..2)).collect();
            let targets: Vec<f64> = (0..BATCH).map(|_| rng.sample(StandardNormal)).collect();
            Instance {
                params: build(4, 2)?,
                input: normal_matrix(BATCH, 4, &mut rng),
                head: Box::new(move |q, dq| dqn_loss(q, &actions, &targets, dq)),
            }
        }
        LossDescriptor::SarsaRegression | LossDescriptor::SarsaBce => {
            let kind = if desc == LossDescriptor::SarsaBce {
                LossKind::Bce
            } else {
                LossKind::Regression
            };
            let labels: Vec<f64> = (0..BATCH)
                .map(|_| match kind {
                    LossKind::Bce => rng.random::<f64>(),
                    LossKind::Regression => rng.sample(StandardNormal),
                })
                .collect();
            Instance {
                params: build(6, 1)?,
                input: normal_matrix(BATCH, 6, &mut rng),
                head: Box::new(move |v, dv| value_loss(kind, v, &labels, dv)),
            }
        }
        LossDescriptor::FlowMatching => {
            let (cond_dim, dim) = (2, 2);
            let cond = normal_matrix(BATCH, cond_dim, &mut rng);
            let x1 = normal_matrix(BATCH, dim, &mut rng);
            let z = normal_matrix(BATCH, dim, &mut rng);
            let mut input = Matrix::zeros(BATCH, 1 + cond_dim + dim);
            let mut u = Matrix::zeros(BATCH, dim);
            for r in 0..BATCH {
                let t: f64 = rng.random();
                input.set(r, 0, t);
                for c in 0..cond_dim {
                    input.set(r, 1 + c, cond.get(r, c));
                }
                for c in 0..dim {
                    let (z0, x) = (z.get(r, c), x1.get(r, c));
                    input.set(r, 1 + cond_dim + c, (1.0 - t) * z0 + t * x);
                    u.set(r, c, x - z0);
                }
            }
            Instance {
                params: build(1 + cond_dim + dim, dim)?,
                input,
                head: Box::new(move |v, dv| flow_matching_loss(v, &u, dv)),
            }
        }
    };
    Ok(inst)
}

/// Number of parameters in the network used for `desc`.
pub fn grad_check_param_count(desc: LossDescriptor) -> usize {
    instance(desc, 0).map(|i| i.params.len()).unwrap_or(0)
}

/// Max relative error between analytic and central-difference gradients.
pub fn grad_check(desc: LossDescriptor, seed: u64) -> Result<f64> {
    let inst = instance(desc, seed)?;
    Ok(max_rel_error(&inst.analytic()?, &inst.numeric()?))
}
