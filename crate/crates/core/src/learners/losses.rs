use serde::{Deserialize, Serialize};

use crate::nn::{Matrix, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Regression,
    Bce,
}

/// Aggregation over an ensemble of Q heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    Min,
    Mean,
}

impl Aggregation {
    pub fn apply(self, xs: &[f64]) -> f64 {
        match self {
            Aggregation::Min => xs.iter().copied().fold(f64::INFINITY, f64::min),
            Aggregation::Mean => xs.iter().sum::<f64>() / xs.len() as f64,
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of `sigmoid(logit)` against a soft label `y`, in
/// logit form: `softplus(logit) - y * logit`.
pub fn bce_loss(logit: f64, y: f64) -> f64 {
    logit.max(0.0) - y * logit + (-logit.abs()).exp().ln_1p()
}

pub fn reg_loss(x: f64, y: f64) -> f64 {
    (x - y) * (x - y)
}

/// Mean value loss over a single-output column; writes `dL/dpred` into `dpred`.
///
/// For [`LossKind::Bce`] the predictions are logits and labels lie in `[0, 1]`.
pub fn value_loss<T: Scalar>(kind: LossKind, pred: &Matrix<T>, labels: &[f64], dpred: &mut Matrix<T>) -> f64 {
    let b = pred.rows();
    assert_eq!(pred.cols(), 1, "value heads have one output");
    assert_eq!(labels.len(), b, "one label per row");
    dpred.reshape_for(b, 1);
    let inv = 1.0 / b as f64;
    let mut total = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        let x = pred.get(r, 0).to_f64();
        let (l, g) = match kind {
            LossKind::Regression => (reg_loss(x, y), 2.0 * (x - y)),
            LossKind::Bce => (bce_loss(x, y), sigmoid(x) - y),
        };
        total += l;
        dpred.set(r, 0, T::from_f64(g * inv));
    }
    total * inv
}

/// Mean squared error of the chosen action values against fixed targets.
pub fn dqn_loss<T: Scalar>(q: &Matrix<T>, actions: &[usize], targets: &[f64], dq: &mut Matrix<T>) -> f64 {
    let b = q.rows();
    assert_eq!(actions.len(), b);
    assert_eq!(targets.len(), b);
    dq.reshape_for(b, q.cols());
    dq.fill(T::ZERO);
    let inv = 1.0 / b as f64;
    let mut total = 0.0;
    for r in 0..b {
        let d = q.get(r, actions[r]).to_f64() - targets[r];
        total += d * d;
        dq.set(r, actions[r], T::from_f64(2.0 * d * inv));
    }
    total * inv
}

/// Flow-matching regression: batch mean of `||v - u||^2`.
pub fn flow_matching_loss<T: Scalar>(v: &Matrix<T>, u: &Matrix<T>, dv: &mut Matrix<T>) -> f64 {
    assert_eq!((v.rows(), v.cols()), (u.rows(), u.cols()));
    dv.reshape_for(v.rows(), v.cols());
    let inv = 1.0 / v.rows() as f64;
    let mut total = 0.0;
    for ((d, &a), &b) in dv.as_mut_slice().iter_mut().zip(v.as_slice()).zip(u.as_slice()) {
        let diff = a.to_f64() - b.to_f64();
        total += diff * diff;
        *d = T::from_f64(2.0 * diff * inv);
    }
    total * inv
}
