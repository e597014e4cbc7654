use super::{target_update, AdamState, Matrix, MlpCache, MlpConfig, MlpParams};
use crate::error::Result;

/// Online network with its optimizer state, an optional lagged target copy
/// and reusable forward/backward buffers.
#[derive(Debug, Clone)]
pub struct TrainNet {
    pub params: MlpParams<f32>,
    pub target: Option<MlpParams<f32>>,
    pub adam: AdamState<f32>,
    cache: MlpCache<f32>,
    target_cache: MlpCache<f32>,
    eval_cache: MlpCache<f32>,
    grads: Vec<f32>,
}

impl TrainNet {
    pub fn new(cfg: &MlpConfig, seed: u64, with_target: bool) -> Result<Self> {
        let params = MlpParams::init(cfg, seed)?;
        Ok(Self::from_params(params, with_target))
    }

    pub fn from_params(params: MlpParams<f32>, with_target: bool) -> Self {
        let target = with_target.then(|| params.clone());
        Self {
            adam: AdamState::for_params(&params),
            grads: vec![0.0; params.len()],
            params,
            target,
            cache: MlpCache::default(),
            target_cache: MlpCache::default(),
            eval_cache: MlpCache::default(),
        }
    }

    /// Online forward pass; keeps activations for [`TrainNet::step`].
    pub fn forward(&mut self, x: &Matrix<f32>) -> Result<&Matrix<f32>> {
        self.params.forward(x, &mut self.cache)
    }

    /// Online forward that does not disturb the training cache.
    pub fn eval(&self, x: &Matrix<f32>) -> Result<Matrix<f32>> {
        self.params.predict(x)
    }

    /// Online forward into a buffer of its own, leaving the training cache intact.
    pub fn eval_buffered(&mut self, x: &Matrix<f32>) -> Result<&Matrix<f32>> {
        self.params.forward(x, &mut self.eval_cache)
    }

    /// Target-network forward (online network when there is no target).
    pub fn forward_target(&mut self, x: &Matrix<f32>) -> Result<&Matrix<f32>> {
        let p = self.target.as_ref().unwrap_or(&self.params);
        p.forward(x, &mut self.target_cache)
    }

    /// Backpropagate `dy` through the last [`TrainNet::forward`] and take one Adam step.
    pub fn step(&mut self, dy: &Matrix<f32>, lr: f64) -> Result<()> {
        self.params.backward(&mut self.cache, dy, &mut self.grads, None)?;
        self.adam.step(self.params.as_mut_slice(), &self.grads, lr)
    }

    pub fn update_target(&mut self, tau: f64) {
        if let Some(t) = self.target.as_mut() {
            target_update(t, &self.params, tau);
        }
    }
}
