//! Multilayer perceptron with layer normalization and exact GELU.
//!
//! All parameters live in one flat buffer so that the optimizer, Polyak
//! averaging, checksums and checkpoints can treat a network as a plain slice.
//! Per hidden layer the buffer holds `W (in x out, row-major)`, `b`, and when
//! layer norm is enabled the scale and shift vectors; the output layer holds
//! `W` and `b` only.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scalar::{dot8, sum8};
use super::{Matrix, Scalar};
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FinalActivation {
    #[default]
    None,
    /// Raw logits during training; sigmoid is applied only by [`MlpParams::predict_eval`].
    SigmoidForEvalOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub layer_dims: Vec<usize>,
    #[serde(default = "default_true")]
    pub use_layer_norm: bool,
    #[serde(default)]
    pub final_activation: FinalActivation,
}

fn default_true() -> bool {
    true
}

impl MlpConfig {
    /// `input -> hidden... -> output` with layer norm on.
    pub fn new(input: usize, hidden: &[usize], output: usize) -> Self {
        let mut layer_dims = Vec::with_capacity(hidden.len() + 2);
        layer_dims.push(input);
        layer_dims.extend_from_slice(hidden);
        layer_dims.push(output);
        Self {
            layer_dims,
            use_layer_norm: true,
            final_activation: FinalActivation::None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 {
            return Err(Error::Shape("an MLP needs at least input and output dims".into()));
        }
        if self.layer_dims.contains(&0) {
            return Err(Error::Shape("layer widths must be positive".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("validated config")
    }

    fn num_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn param_count(&self) -> usize {
        layout(self).1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerSlots {
    fan_in: usize,
    fan_out: usize,
    w: usize,
    b: usize,
    /// `(scale, shift)` offsets for hidden layers with layer norm.
    ln: Option<(usize, usize)>,
    hidden: bool,
}

fn layout(cfg: &MlpConfig) -> (Vec<LayerSlots>, usize) {
    let mut off = 0;
    let n = cfg.num_layers();
    let mut slots = Vec::with_capacity(n);
    for l in 0..n {
        let (fan_in, fan_out) = (cfg.layer_dims[l], cfg.layer_dims[l + 1]);
        let hidden = l + 1 < n;
        let w = off;
        off += fan_in * fan_out;
        let b = off;
        off += fan_out;
        let ln = if hidden && cfg.use_layer_norm {
            let s = off;
            off += 2 * fan_out;
            Some((s, s + fan_out))
        } else {
            None
        };
        slots.push(LayerSlots {
            fan_in,
            fan_out,
            w,
            b,
            ln,
            hidden,
        });
    }
    (slots, off)
}

/// Network parameters stored as one flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<T> {
    cfg: MlpConfig,
    slots: Vec<LayerSlots>,
    data: Vec<T>,
}

/// Activations retained by a forward pass for the matching backward pass.
#[derive(Debug, Clone, Default)]
pub struct MlpCache<T> {
    batch: usize,
    /// Input to each layer (`inputs[0]` is the network input).
    inputs: Vec<Matrix<T>>,
    /// Normalized pre-activations per hidden layer (or raw when layer norm is off).
    xhat: Vec<Matrix<T>>,
    /// Input to GELU per hidden layer.
    pre_gelu: Vec<Matrix<T>>,
    /// Standard normal CDF of `pre_gelu`.
    cdf: Vec<Matrix<T>>,
    rstd: Vec<Vec<T>>,
    output: Matrix<T>,
    // backward scratch
    delta: Matrix<T>,
    delta_prev: Matrix<T>,
}

impl<T: Scalar> MlpCache<T> {
    pub fn output(&self) -> &Matrix<T> {
        &self.output
    }
}

fn gelu_cdf<T: Scalar>(u: T) -> T {
    T::from_f64(0.5) * (T::ONE + (u * T::from_f64(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

/// Exact GELU: `0.5 x (1 + erf(x / sqrt 2))`.
pub fn gelu<T: Scalar>(x: T) -> T {
    x * gelu_cdf(x)
}

/// Derivative of [`gelu`].
pub fn gelu_grad<T: Scalar>(x: T) -> T {
    gelu_cdf(x) + x * x.normal_pdf()
}

impl<T: Scalar> MlpParams<T> {
    /// Glorot-uniform weights, zero biases, unit layer-norm scale, zero shift.
    pub fn init(cfg: &MlpConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let (slots, len) = layout(cfg);
        let mut data = vec![T::ZERO; len];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for s in &slots {
            let limit = (6.0 / (s.fan_in + s.fan_out) as f64).sqrt();
            for w in &mut data[s.w..s.w + s.fan_in * s.fan_out] {
                *w = T::from_f64(rng.random_range(-limit..limit));
            }
            if let Some((scale, _)) = s.ln {
                data[scale..scale + s.fan_out]
                    .iter_mut()
                    .for_each(|x| *x = T::ONE);
            }
        }
        Ok(Self {
            cfg: cfg.clone(),
            slots,
            data,
        })
    }

    pub fn from_flat(cfg: &MlpConfig, data: Vec<T>) -> Result<Self> {
        cfg.validate()?;
        let (slots, len) = layout(cfg);
        if data.len() != len {
            return Err(Error::Shape(format!(
                "expected {len} parameters, got {}",
                data.len()
            )));
        }
        Ok(Self {
            cfg: cfg.clone(),
            slots,
            data,
        })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.cfg
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn cast<U: Scalar>(&self) -> MlpParams<U> {
        MlpParams {
            cfg: self.cfg.clone(),
            slots: self.slots.clone(),
            data: self.data.iter().map(|x| U::from_f64(x.to_f64())).collect(),
        }
    }

    /// Views of the named tensors of layer `l`: `(weight, bias, ln_scale, ln_shift)`.
    pub fn layer(&self, l: usize) -> (&[T], &[T], Option<&[T]>, Option<&[T]>) {
        let s = &self.slots[l];
        let w = &self.data[s.w..s.w + s.fan_in * s.fan_out];
        let b = &self.data[s.b..s.b + s.fan_out];
        match s.ln {
            Some((sc, sh)) => (
                w,
                b,
                Some(&self.data[sc..sc + s.fan_out]),
                Some(&self.data[sh..sh + s.fan_out]),
            ),
            None => (w, b, None, None),
        }
    }

    pub fn num_layers(&self) -> usize {
        self.slots.len()
    }

    /// Order-sensitive checksum of the raw parameter bits.
    pub fn checksum(&self) -> u64 {
        // FNV-1a over the f64 bit patterns
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for x in &self.data {
            for byte in x.to_f64().to_bits().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }

    /// Forward pass; activations are kept in `cache` for [`MlpParams::backward`].
    pub fn forward<'c>(&self, x: &Matrix<T>, cache: &'c mut MlpCache<T>) -> Result<&'c Matrix<T>> {
        if x.cols() != self.cfg.input_dim() {
            return Err(Error::Shape(format!(
                "input width {} != {}",
                x.cols(),
                self.cfg.input_dim()
            )));
        }
        if !x.all_finite() {
            return Err(Error::NonFinite("network input"));
        }
        let batch = x.rows();
        let n = self.slots.len();
        cache.batch = batch;
        cache.inputs.resize_with(n, || Matrix::zeros(0, 0));
        cache.xhat.resize_with(n, || Matrix::zeros(0, 0));
        cache.pre_gelu.resize_with(n, || Matrix::zeros(0, 0));
        cache.cdf.resize_with(n, || Matrix::zeros(0, 0));
        cache.rstd.resize_with(n, Vec::new);

        cache.inputs[0].reshape_for(batch, x.cols());
        cache.inputs[0].as_mut_slice().copy_from_slice(x.as_slice());

        for l in 0..n {
            let s = self.slots[l];
            let out_cols = s.fan_out;
            let mut z = if s.hidden {
                std::mem::take(&mut cache.xhat[l])
            } else {
                std::mem::take(&mut cache.output)
            };
            z.reshape_for(batch, out_cols);
            self.affine(l, &cache.inputs[l], &mut z);
            if !s.hidden {
                cache.output = z;
                break;
            }
            let mut u = std::mem::take(&mut cache.pre_gelu[l]);
            u.reshape_for(batch, out_cols);
            let rstd = &mut cache.rstd[l];
            rstd.resize(batch, T::ZERO);
            match s.ln {
                Some((sc, sh)) => {
                    let scale = &self.data[sc..sc + out_cols];
                    let shift = &self.data[sh..sh + out_cols];
                    layer_norm_rows(&mut z, &mut u, rstd, scale, shift);
                }
                None => {
                    u.as_mut_slice().copy_from_slice(z.as_slice());
                }
            }
            let mut cdf = std::mem::take(&mut cache.cdf[l]);
            cdf.reshape_for(batch, out_cols);
            let mut next = std::mem::take(&mut cache.inputs[l + 1]);
            next.reshape_for(batch, out_cols);
            gelu_rows(u.as_slice(), cdf.as_mut_slice(), next.as_mut_slice());
            cache.xhat[l] = z;
            cache.pre_gelu[l] = u;
            cache.cdf[l] = cdf;
            cache.inputs[l + 1] = next;
        }
        Ok(&cache.output)
    }

    fn affine(&self, l: usize, x: &Matrix<T>, out: &mut Matrix<T>) {
        let s = self.slots[l];
        let batch = x.rows();
        let b = &self.data[s.b..s.b + s.fan_out];
        for r in 0..batch {
            out.row_mut(r).copy_from_slice(b);
        }
        T::gemm(
            batch,
            s.fan_in,
            s.fan_out,
            T::ONE,
            x.as_slice(),
            s.fan_in as isize,
            1,
            &self.data[s.w..s.w + s.fan_in * s.fan_out],
            s.fan_out as isize,
            1,
            T::ONE,
            out.as_mut_slice(),
            s.fan_out as isize,
            1,
        );
    }

    /// Convenience forward that allocates its own cache.
    pub fn predict(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        let mut cache = MlpCache::default();
        self.forward(x, &mut cache)?;
        Ok(cache.output)
    }

    /// Forward pass with the configured evaluation-time final activation.
    pub fn predict_eval(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        let y = self.predict(x)?;
        Ok(match self.cfg.final_activation {
            FinalActivation::None => y,
            FinalActivation::SigmoidForEvalOnly => y.map(|v| T::ONE / (T::ONE + (-v).exp())),
        })
    }

    /// Backpropagate `dy` through the cached forward pass.
    ///
    /// `dy` may cover only the first rows of the cached batch; the remaining
    /// rows then take no part in the gradient.
    ///
    /// `grads` is overwritten with the parameter gradient (same layout as the
    /// parameter buffer). When `dx` is given it receives the input gradient.
    pub fn backward(
        &self,
        cache: &mut MlpCache<T>,
        dy: &Matrix<T>,
        grads: &mut [T],
        dx: Option<&mut Matrix<T>>,
    ) -> Result<()> {
        let batch = dy.rows();
        if batch == 0 || batch > cache.batch || dy.cols() != self.cfg.output_dim() {
            return Err(Error::Shape(format!(
                "dy is {}x{}, expected up to {}x{}",
                dy.rows(),
                dy.cols(),
                cache.batch,
                self.cfg.output_dim()
            )));
        }
        if grads.len() != self.data.len() {
            return Err(Error::Shape(format!(
                "gradient buffer has {} entries, expected {}",
                grads.len(),
                self.data.len()
            )));
        }
        if cache.inputs.len() != self.slots.len() {
            return Err(Error::Shape("cache does not match this network".into()));
        }
        let mut delta = std::mem::take(&mut cache.delta);
        let mut prev = std::mem::take(&mut cache.delta_prev);
        delta.reshape_for(batch, dy.cols());
        delta.as_mut_slice().copy_from_slice(dy.as_slice());

        for l in (0..self.slots.len()).rev() {
            let s = self.slots[l];
            if s.hidden {
                // delta holds dL/d(gelu output); turn it into dL/dz.
                gelu_backward_rows(
                    delta.as_mut_slice(),
                    cache.cdf[l].as_slice(),
                    cache.pre_gelu[l].as_slice(),
                );
                if let Some((sc, sh)) = s.ln {
                    let n = s.fan_out;
                    {
                        let (gscale, gshift) = split_two(grads, sc, sh, n);
                        column_sums(&delta, Some(&cache.xhat[l]), gscale);
                        column_sums(&delta, None, gshift);
                    }
                    let scale = &self.data[sc..sc + n];
                    layer_norm_backward_rows(&mut delta, &cache.xhat[l], &cache.rstd[l], scale);
                }
            }
            // affine: z = x W + b
            let x = &cache.inputs[l];
            let gw = &mut grads[s.w..s.w + s.fan_in * s.fan_out];
            T::gemm(
                s.fan_in,
                batch,
                s.fan_out,
                T::ONE,
                x.as_slice(),
                1,
                s.fan_in as isize,
                delta.as_slice(),
                s.fan_out as isize,
                1,
                T::ZERO,
                gw,
                s.fan_out as isize,
                1,
            );
            column_sums(&delta, None, &mut grads[s.b..s.b + s.fan_out]);
            if l == 0 && dx.is_none() {
                break;
            }
            prev.reshape_for(batch, s.fan_in);
            T::gemm(
                batch,
                s.fan_out,
                s.fan_in,
                T::ONE,
                delta.as_slice(),
                s.fan_out as isize,
                1,
                &self.data[s.w..s.w + s.fan_in * s.fan_out],
                1,
                s.fan_out as isize,
                T::ZERO,
                prev.as_mut_slice(),
                s.fan_in as isize,
                1,
            );
            std::mem::swap(&mut delta, &mut prev);
        }
        if let Some(dx) = dx {
            dx.reshape_for(batch, self.cfg.input_dim());
            dx.as_mut_slice().copy_from_slice(delta.as_slice());
        }
        cache.delta = delta;
        cache.delta_prev = prev;
        Ok(())
    }
}

/// Row-wise standardization: `z` becomes `xhat`, `u = xhat * scale + shift`.
fn layer_norm_rows<T: Scalar>(
    z: &mut Matrix<T>,
    u: &mut Matrix<T>,
    rstd: &mut [T],
    scale: &[T],
    shift: &[T],
) {
    let n = z.cols();
    let inv = T::from_f64(1.0 / n as f64);
    let eps = T::from_f64(LAYER_NORM_EPS);
    for r in 0..z.rows() {
        let zr = z.row_mut(r);
        let mean = sum8(zr) * inv;
        for v in zr.iter_mut() {
            *v -= mean;
        }
        let var = dot8(zr, zr) * inv;
        let rs = T::ONE / (var + eps).sqrt();
        rstd[r] = rs;
        let ur = &mut u.row_mut(r)[..n];
        let (scale, shift) = (&scale[..n], &shift[..n]);
        for c in 0..n {
            let xh = zr[c] * rs;
            zr[c] = xh;
            ur[c] = xh * scale[c] + shift[c];
        }
    }
}

fn gelu_rows<T: Scalar>(u: &[T], cdf: &mut [T], out: &mut [T]) {
    let n = u.len();
    let (cdf, out) = (&mut cdf[..n], &mut out[..n]);
    for i in 0..n {
        let p = gelu_cdf(u[i]);
        cdf[i] = p;
        out[i] = u[i] * p;
    }
}

fn gelu_backward_rows<T: Scalar>(delta: &mut [T], cdf: &[T], u: &[T]) {
    let n = delta.len();
    let (cdf, u) = (&cdf[..n], &u[..n]);
    for i in 0..n {
        delta[i] *= cdf[i] + u[i] * u[i].normal_pdf();
    }
}

/// `out[c] = sum_r a[r, c] * (b[r, c] or 1)`.
fn column_sums<T: Scalar>(a: &Matrix<T>, b: Option<&Matrix<T>>, out: &mut [T]) {
    let n = a.cols();
    let out = &mut out[..n];
    out.iter_mut().for_each(|g| *g = T::ZERO);
    for r in 0..a.rows() {
        let ar = &a.row(r)[..n];
        match b {
            Some(b) => {
                let br = &b.row(r)[..n];
                for c in 0..n {
                    out[c] += ar[c] * br[c];
                }
            }
            None => {
                for c in 0..n {
                    out[c] += ar[c];
                }
            }
        }
    }
}

/// Turn `dL/du` (in `delta`) into `dL/dz` through the layer-norm affine and standardization.
fn layer_norm_backward_rows<T: Scalar>(delta: &mut Matrix<T>, xhat: &Matrix<T>, rstd: &[T], scale: &[T]) {
    let n = delta.cols();
    let inv = T::from_f64(1.0 / n as f64);
    let scale = &scale[..n];
    for r in 0..delta.rows() {
        let rs = rstd[r];
        let xr = &xhat.row(r)[..n];
        let dr = &mut delta.row_mut(r)[..n];
        for c in 0..n {
            dr[c] *= scale[c];
        }
        let mean_d = sum8(dr) * inv;
        let mean_dx = dot8(dr, xr) * inv;
        for c in 0..n {
            dr[c] = rs * (dr[c] - mean_d - xr[c] * mean_dx);
        }
    }
}

fn split_two<T>(buf: &mut [T], a: usize, b: usize, n: usize) -> (&mut [T], &mut [T]) {
    debug_assert!(a + n <= b);
    let (head, tail) = buf.split_at_mut(b);
    (&mut head[a..a + n], &mut tail[..n])
}
