//! Conditional flow-matching policies.
//!
//! A velocity field `v(t, c, x)` is regressed onto `x1 - z` along the straight
//! path `x_t = (1 - t) z + t x1` with `z ~ N(0, I)`. Sampling integrates the
//! field from noise with forward Euler.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::flow_matching_loss;
use crate::nn::{Matrix, MlpConfig, MlpParams, TrainNet};

pub const DEFAULT_FLOW_STEPS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSampleConfig {
    pub steps: usize,
    /// Per-dimension `(low, high)` bounds applied to the final sample.
    pub clip_box: Option<Vec<(f32, f32)>>,
}

impl Default for FlowSampleConfig {
    fn default() -> Self {
        Self {
            steps: DEFAULT_FLOW_STEPS,
            clip_box: None,
        }
    }
}

impl FlowSampleConfig {
    pub fn validate(&self, sample_dim: usize) -> Result<()> {
        if self.steps < 1 {
            return Err(Error::config("flow.steps", "must be at least 1"));
        }
        if let Some(b) = &self.clip_box {
            if b.len() != sample_dim || b.iter().any(|(lo, hi)| !(lo <= hi)) {
                return Err(Error::config("flow.clip_box", "needs one ordered bound per sample dimension"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FlowNet {
    pub net: TrainNet,
    cond_dim: usize,
    sample_dim: usize,
    dv: Matrix<f32>,
}

/// Rows `[t, cond, x]`.
pub fn flow_inputs(t: &[f32], cond: &Matrix<f32>, x: &Matrix<f32>) -> Matrix<f32> {
    let (cd, sd) = (cond.cols(), x.cols());
    let mut inp = Matrix::zeros(cond.rows(), 1 + cd + sd);
    for r in 0..cond.rows() {
        let row = inp.row_mut(r);
        row[0] = t[r];
        row[1..1 + cd].copy_from_slice(cond.row(r));
        row[1 + cd..].copy_from_slice(x.row(r));
    }
    inp
}

impl FlowNet {
    pub fn new(cond_dim: usize, sample_dim: usize, hidden: &[usize], layer_norm: bool, seed: u64) -> Result<Self> {
        let mut cfg = MlpConfig::new(1 + cond_dim + sample_dim, hidden, sample_dim);
        cfg.use_layer_norm = layer_norm;
        Ok(Self::from_params(MlpParams::init(&cfg, seed)?, cond_dim, sample_dim))
    }

    pub fn from_params(params: MlpParams<f32>, cond_dim: usize, sample_dim: usize) -> Self {
        assert_eq!(params.config().input_dim(), 1 + cond_dim + sample_dim);
        assert_eq!(params.config().output_dim(), sample_dim);
        Self {
            net: TrainNet::from_params(params, false),
            cond_dim,
            sample_dim,
            dv: Matrix::zeros(0, 0),
        }
    }

    pub fn cond_dim(&self) -> usize {
        self.cond_dim
    }

    pub fn sample_dim(&self) -> usize {
        self.sample_dim
    }

    pub fn params(&self) -> &MlpParams<f32> {
        &self.net.params
    }

    fn check(&self, cond: &Matrix<f32>, target: &Matrix<f32>) -> Result<()> {
        if cond.cols() != self.cond_dim || target.cols() != self.sample_dim || cond.rows() != target.rows() {
            return Err(Error::Shape(format!(
                "flow batch is cond {}x{}, target {}x{}; expected widths {} and {}",
                cond.rows(),
                cond.cols(),
                target.rows(),
                target.cols(),
                self.cond_dim,
                self.sample_dim
            )));
        }
        Ok(())
    }

    /// Loss with explicit noise `z` and times `t`; leaves the gradient
    /// activations in place for [`FlowNet::apply`].
    pub fn loss_with(&mut self, cond: &Matrix<f32>, target: &Matrix<f32>, z: &Matrix<f32>, t: &[f32]) -> Result<f64> {
        self.check(cond, target)?;
        let rows = cond.rows();
        let mut xt = Matrix::zeros(rows, self.sample_dim);
        let mut u = Matrix::zeros(rows, self.sample_dim);
        for r in 0..rows {
            for c in 0..self.sample_dim {
                let (z0, x1) = (z.get(r, c), target.get(r, c));
                xt.set(r, c, (1.0 - t[r]) * z0 + t[r] * x1);
                u.set(r, c, x1 - z0);
            }
        }
        let inp = flow_inputs(t, cond, &xt);
        let v = self.net.forward(&inp)?;
        let loss = flow_matching_loss(v, &u, &mut self.dv);
        if !loss.is_finite() {
            return Err(Error::NonFinite("flow loss"));
        }
        Ok(loss)
    }

    /// Draw `z` and `t` per row, then compute the loss.
    pub fn loss(&mut self, cond: &Matrix<f32>, target: &Matrix<f32>, rng: &mut impl Rng) -> Result<f64> {
        let rows = cond.rows();
        let mut z = Matrix::zeros(rows, self.sample_dim);
        let mut t = vec![0.0f32; rows];
        for r in 0..rows {
            for c in 0..self.sample_dim {
                z.set(r, c, rng.sample(StandardNormal));
            }
            t[r] = rng.random::<f32>();
        }
        self.loss_with(cond, target, &z, &t)
    }

    /// Adam step on the gradient of the last loss evaluation.
    pub fn apply(&mut self, lr: f64) -> Result<()> {
        self.net.step(&self.dv, lr)
    }

    pub fn train_step(&mut self, cond: &Matrix<f32>, target: &Matrix<f32>, lr: f64, rng: &mut impl Rng) -> Result<f64> {
        let loss = self.loss(cond, target, rng)?;
        self.apply(lr)?;
        Ok(loss)
    }

    /// Euler integration from the given initial noise, one row per condition.
    pub fn integrate(&self, cond: &Matrix<f32>, z: Matrix<f32>, cfg: &FlowSampleConfig) -> Result<Matrix<f32>> {
        cfg.validate(self.sample_dim)?;
        let rows = cond.rows();
        let mut x = z;
        let dt = 1.0 / cfg.steps as f32;
        let mut t = vec![0.0f32; rows];
        let mut cache = Default::default();
        for k in 0..cfg.steps {
            t.iter_mut().for_each(|v| *v = k as f32 * dt);
            let inp = flow_inputs(&t, cond, &x);
            let v = self.net.params.forward(&inp, &mut cache)?;
            for (xi, vi) in x.as_mut_slice().iter_mut().zip(v.as_slice()) {
                *xi += dt * vi;
            }
        }
        if let Some(b) = &cfg.clip_box {
            for r in 0..rows {
                for (xi, &(lo, hi)) in x.row_mut(r).iter_mut().zip(b) {
                    *xi = xi.clamp(lo, hi);
                }
            }
        }
        Ok(x)
    }

    /// Sample one output per condition row.
    pub fn sample(&self, cond: &Matrix<f32>, cfg: &FlowSampleConfig, rng: &mut impl Rng) -> Result<Matrix<f32>> {
        if cond.cols() != self.cond_dim {
            return Err(Error::Shape(format!("condition width {} != {}", cond.cols(), self.cond_dim)));
        }
        let mut z = Matrix::zeros(cond.rows(), self.sample_dim);
        z.as_mut_slice().iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        self.integrate(cond, z, cfg)
    }

    /// `n` samples for a single condition vector.
    pub fn sample_n(&self, cond: &[f32], n: usize, cfg: &FlowSampleConfig, rng: &mut impl Rng) -> Result<Matrix<f32>> {
        let mut c = Matrix::zeros(n, cond.len());
        for r in 0..n {
            c.row_mut(r).copy_from_slice(cond);
        }
        self.sample(&c, cfg, rng)
    }
}
