use serde::{Deserialize, Serialize};

use super::{MlpParams, Scalar};
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam moments for one parameter buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![T::ZERO; len],
            v: vec![T::ZERO; len],
            t: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
        }
    }

    pub fn for_params(p: &MlpParams<T>) -> Self {
        Self::new(p.len())
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [T], grads: &[T], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "adam state has {} slots, params {}, grads {}",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if !grads.iter().all(|g| g.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        self.t += 1;
        let b1 = T::from_f64(self.beta1);
        let b2 = T::from_f64(self.beta2);
        let one_b1 = T::from_f64(1.0 - self.beta1);
        let one_b2 = T::from_f64(1.0 - self.beta2);
        let bc1 = 1.0 - self.beta1.powf(self.t as f64);
        let bc2 = 1.0 - self.beta2.powf(self.t as f64);
        // step = lr * m_hat / (sqrt(v_hat) + eps)
        let step_size = T::from_f64(lr / bc1);
        let inv_sqrt_bc2 = T::from_f64(1.0 / bc2.sqrt());
        let eps = T::from_f64(self.eps);
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = b1 * *m + one_b1 * g;
            *v = b2 * *v + one_b2 * g * g;
            *p -= step_size * *m / ((*v).sqrt() * inv_sqrt_bc2 + eps);
        }
        Ok(())
    }
}

/// Polyak averaging: `target <- (1 - tau) target + tau online`.
pub fn target_update<T: Scalar>(target: &mut MlpParams<T>, online: &MlpParams<T>, tau: f64) {
    polyak(target.as_mut_slice(), online.as_slice(), tau);
}

pub fn polyak<T: Scalar>(target: &mut [T], online: &[T], tau: f64) {
    assert_eq!(target.len(), online.len(), "target/online shape mismatch");
    if tau >= 1.0 {
        target.copy_from_slice(online);
        return;
    }
    let keep = T::from_f64(1.0 - tau);
    let mix = T::from_f64(tau);
    for (t, &o) in target.iter_mut().zip(online) {
        *t = keep * *t + mix * o;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut st = AdamState::<f64>::new(3);
        let mut p = vec![1.0, -2.0, 0.5];
        for _ in 0..10 {
            st.step(&mut p, &[0.0; 3], 1e-3).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(st.t, 10);
    }

    #[test]
    fn first_step_closed_form() {
        // m_hat = g, v_hat = g^2 => update = -lr * g / (|g| + eps)
        let mut st = AdamState::<f64>::new(1);
        let mut p = vec![0.0];
        let lr = 3e-4;
        st.step(&mut p, &[1.0], lr).unwrap();
        let expect = -lr * 1.0 / (1.0 + ADAM_EPS);
        assert!((p[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut st = AdamState::<f32>::new(2);
        let mut p = vec![0.25f32, -4.0];
        st.step(&mut p, &[3.0, -1.0], 0.0).unwrap();
        assert_eq!(p, vec![0.25, -4.0]);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut st = AdamState::<f32>::new(1);
        let mut p = vec![0.0f32];
        assert!(matches!(
            st.step(&mut p, &[f32::INFINITY], 1e-3),
            Err(Error::NonFinite(_))
        ));
        assert_eq!(st.t, 0);
    }

    #[test]
    fn polyak_arithmetic() {
        let mut t = vec![0.0f64];
        polyak(&mut t, &[1.0], 0.005);
        assert!((t[0] - 0.005).abs() < 1e-15);
        polyak(&mut t, &[1.0], 1.0);
        assert_eq!(t[0], 1.0);
        let mut t = vec![0.0f64];
        for k in 1..=100 {
            polyak(&mut t, &[1.0], 0.1);
            let expect = 1.0 - 0.9f64.powi(k);
            assert!((t[0] - expect).abs() < 1e-12);
        }
    }
}
