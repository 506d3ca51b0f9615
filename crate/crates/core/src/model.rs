//! Causal dilated temporal convolutional network.
//!
//! Layer `ℓ = 1..D` maps `r_{ℓ−1}` channels to `r_ℓ` channels:
//!
//! ```text
//! h⁽ℓ⁾[t, j] = ReLU( Σ_{k<p} Σ_i W⁽ℓ⁾[k, i, j] · h⁽ℓ⁻¹⁾[t − k·b^{ℓ−1}, i] )
//! ```
//!
//! with `h⁽⁰⁾` the input, `b` the dilation base and zero padding for
//! negative time indices, so the output at `t` never sees inputs after
//! `t`. A linear readout maps `r_D` channels to one prediction per step.
//! There are no bias terms.
//!
//! Capacity is controlled per convolutional layer by the mixed norm
//! `‖W‖₂,₁ = Σ_j ‖W[·, ·, j]‖₂`. The readout is not constrained but is
//! counted by [`total_norm`].

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bounds::derive_seed;
use crate::error::{invalid, Error, Result};
use crate::mixing::{rng_from_seed, Rng, Series};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcnConfig {
    pub depth: usize,
    pub kernel_size: usize,
    pub in_dim: usize,
    /// Output width of each convolutional layer, `r_1..r_D`.
    pub channels: Vec<usize>,
    pub dilation_base: usize,
    pub norm_radius: f64,
}

pub const DEFAULT_CHANNELS: usize = 16;

impl TcnConfig {
    /// `depth` layers of equal width and dilation base 2.
    pub fn new(depth: usize, kernel_size: usize, in_dim: usize, width: usize, norm_radius: f64) -> Result<Self> {
        let cfg = Self {
            depth,
            kernel_size,
            in_dim,
            channels: vec![width; depth],
            dilation_base: 2,
            norm_radius,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(invalid("depth must be >= 1"));
        }
        if self.kernel_size == 0 {
            return Err(invalid("kernel size must be >= 1"));
        }
        if self.in_dim == 0 {
            return Err(invalid("input dimension must be >= 1"));
        }
        if self.dilation_base == 0 {
            return Err(invalid("dilation base must be >= 1"));
        }
        if self.channels.len() != self.depth {
            return Err(invalid(format!(
                "{} channel widths given for depth {}",
                self.channels.len(),
                self.depth
            )));
        }
        if self.channels.contains(&0) {
            return Err(invalid("channel widths must be >= 1"));
        }
        if !(self.norm_radius > 0.0 && self.norm_radius.is_finite()) {
            return Err(invalid(format!("norm radius must be > 0, got {}", self.norm_radius)));
        }
        Ok(())
    }

    /// `(r_{ℓ−1}, r_ℓ)` for the zero-based layer index.
    pub fn layer_dims(&self, layer: usize) -> (usize, usize) {
        let r_in = if layer == 0 {
            self.in_dim
        } else {
            self.channels[layer - 1]
        };
        (r_in, self.channels[layer])
    }

    pub fn dilation(&self, layer: usize) -> usize {
        self.dilation_base.pow(layer as u32)
    }

    pub fn out_width(&self) -> usize {
        self.channels[self.depth - 1]
    }
}

/// `1 + (p−1)·Σ_{ℓ<D} b^ℓ`
pub fn receptive_field(config: &TcnConfig) -> usize {
    let span: usize = (0..config.depth).map(|l| config.dilation(l)).sum();
    1 + (config.kernel_size - 1) * span
}

/// Convolution kernel of shape `p × r_in × r_out`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub shape: [usize; 3],
    pub values: Vec<f64>,
}

impl Kernel {
    pub fn zeros(p: usize, r_in: usize, r_out: usize) -> Self {
        Self {
            shape: [p, r_in, r_out],
            values: vec![0.0; p * r_in * r_out],
        }
    }

    pub fn from_values(shape: [usize; 3], values: Vec<f64>) -> Result<Self> {
        if shape.iter().product::<usize>() != values.len() {
            return Err(Error::ShapeMismatch(format!(
                "kernel shape {shape:?} needs {} values, got {}",
                shape.iter().product::<usize>(),
                values.len()
            )));
        }
        Ok(Self { shape, values })
    }

    #[inline]
    pub fn idx(&self, k: usize, i: usize, j: usize) -> usize {
        (k * self.shape[1] + i) * self.shape[2] + j
    }

    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.values[self.idx(k, i, j)]
    }

    pub fn out_channels(&self) -> usize {
        self.shape[2]
    }

    /// Euclidean norm of every output channel's filter block.
    pub fn channel_norms(&self) -> Vec<f64> {
        let r_out = self.shape[2];
        let mut sq = vec![0.0; r_out];
        for (n, v) in self.values.iter().enumerate() {
            sq[n % r_out] += v * v;
        }
        sq.into_iter().map(f64::sqrt).collect()
    }
}

/// `Σ_j (Σ_{k,i} W[k,i,j]²)^{1/2}`
pub fn norm_21(kernel: &Kernel) -> f64 {
    kernel.channel_norms().iter().sum()
}

/// Euclidean projection of a non-negative vector onto the ℓ1 ball of
/// radius `radius`, by sorting and soft-thresholding.
pub fn project_l1_ball(v: &[f64], radius: f64) -> Vec<f64> {
    let total: f64 = v.iter().map(|x| x.abs()).sum();
    if total <= radius {
        return v.to_vec();
    }
    let mut u: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cumsum += ui;
        let t = (cumsum - radius) / (i + 1) as f64;
        if ui > t {
            theta = t;
        } else {
            break;
        }
    }
    v.iter().map(|&x| x.signum() * (x.abs() - theta).max(0.0)).collect()
}

/// Projection onto `{‖W‖₂,₁ ≤ R}`: channel directions are kept and the
/// vector of channel norms is projected onto the ℓ1 ball of radius `R`.
pub fn project_norm_21(kernel: &Kernel, radius: f64) -> Kernel {
    let norms = kernel.channel_norms();
    if norms.iter().sum::<f64>() <= radius {
        return kernel.clone();
    }
    let target = project_l1_ball(&norms, radius);
    let scale: Vec<f64> = norms
        .iter()
        .zip(&target)
        .map(|(&old, &new)| if old > 0.0 { new / old } else { 0.0 })
        .collect();
    let r_out = kernel.shape[2];
    let values = kernel
        .values
        .iter()
        .enumerate()
        .map(|(n, v)| v * scale[n % r_out])
        .collect();
    Kernel {
        shape: kernel.shape,
        values,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcnWeights {
    pub layers: Vec<Kernel>,
    pub readout: Vec<f64>,
}

pub const WEIGHTS_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct WeightsDocument {
    version: u32,
    weights: TcnWeights,
}

impl TcnWeights {
    pub fn zeros(config: &TcnConfig) -> Self {
        let layers = (0..config.depth)
            .map(|l| {
                let (r_in, r_out) = config.layer_dims(l);
                Kernel::zeros(config.kernel_size, r_in, r_out)
            })
            .collect();
        Self {
            layers,
            readout: vec![0.0; config.out_width()],
        }
    }

    /// Gaussian kernels with scale `1/√(p·r_in)`, each projected into the
    /// norm ball; readout Gaussian with scale `1/√r_D`.
    pub fn init(config: &TcnConfig, rng: &mut Rng) -> Self {
        let mut w = Self::zeros(config);
        for layer in w.layers.iter_mut() {
            let scale = 1.0 / ((layer.shape[0] * layer.shape[1]) as f64).sqrt();
            for v in layer.values.iter_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *v = scale * z;
            }
            *layer = project_norm_21(layer, config.norm_radius);
        }
        let scale = 1.0 / (config.out_width() as f64).sqrt();
        for v in w.readout.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v = scale * z;
        }
        w
    }

    pub fn check_shape(&self, config: &TcnConfig) -> Result<()> {
        if self.layers.len() != config.depth {
            return Err(Error::ShapeMismatch(format!(
                "{} layers for depth {}",
                self.layers.len(),
                config.depth
            )));
        }
        for (l, k) in self.layers.iter().enumerate() {
            let (r_in, r_out) = config.layer_dims(l);
            let want = [config.kernel_size, r_in, r_out];
            if k.shape != want || k.values.len() != want.iter().product::<usize>() {
                return Err(Error::ShapeMismatch(format!(
                    "layer {l} has shape {:?}, expected {want:?}",
                    k.shape
                )));
            }
        }
        if self.readout.len() != config.out_width() {
            return Err(Error::ShapeMismatch(format!(
                "readout has {} weights, expected {}",
                self.readout.len(),
                config.out_width()
            )));
        }
        if !self.params().all(|v| v.is_finite()) {
            return Err(invalid("weights contain non-finite entries"));
        }
        Ok(())
    }

    /// All parameters: layer kernels in order, then the readout.
    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|k| k.values.iter())
            .chain(self.readout.iter())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|k| k.values.iter_mut())
            .chain(self.readout.iter_mut())
    }

    pub fn n_params(&self) -> usize {
        self.params().count()
    }

    /// `self += alpha · other` (shapes must agree).
    pub fn axpy(&mut self, alpha: f64, other: &TcnWeights) {
        for (a, b) in self.params_mut().zip(other.params()) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in self.params_mut() {
            *a *= alpha;
        }
    }

    /// Projects every convolutional layer onto its norm ball.
    pub fn project(&mut self, radius: f64) {
        for layer in self.layers.iter_mut() {
            *layer = project_norm_21(layer, radius);
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&WeightsDocument {
            version: WEIGHTS_FORMAT_VERSION,
            weights: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: WeightsDocument = serde_json::from_str(text)?;
        if doc.version != WEIGHTS_FORMAT_VERSION {
            return Err(invalid(format!("unsupported weights format version {}", doc.version)));
        }
        for k in &doc.weights.layers {
            Kernel::from_values(k.shape, k.values.clone())?;
        }
        Ok(doc.weights)
    }
}

/// Sum of `‖·‖₂,₁` over the convolutional layers plus the readout norm.
pub fn total_norm(weights: &TcnWeights) -> f64 {
    let conv: f64 = weights.layers.iter().map(norm_21).sum();
    let readout = weights.readout.iter().map(|v| v * v).sum::<f64>().sqrt();
    conv + readout
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub values: Vec<f64>,
}

/// Clipped squared error `min((ŷ − y)², 1)`.
#[inline]
pub fn clipped_loss(pred: f64, target: f64) -> f64 {
    let r = pred - target;
    (r * r).min(1.0)
}

/// Derivative of [`clipped_loss`] in `pred`; zero where the clip is active.
#[inline]
pub fn clipped_loss_grad(pred: f64, target: f64) -> f64 {
    let r = pred - target;
    if r * r < 1.0 {
        2.0 * r
    } else {
        0.0
    }
}

/// Activations of every layer for one input sequence.
pub(crate) struct Trace {
    len: usize,
    /// `acts[0]` is the input; `acts[ℓ]` the post-ReLU output of layer ℓ.
    acts: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Vec<f64>>,
    pub(crate) output: Vec<f64>,
}

pub(crate) fn forward_trace(config: &TcnConfig, weights: &TcnWeights, input: &[f64]) -> Trace {
    let len = input.len() / config.in_dim;
    let mut acts = Vec::with_capacity(config.depth + 1);
    let mut pre = Vec::with_capacity(config.depth);
    acts.push(input.to_vec());
    for (l, kernel) in weights.layers.iter().enumerate() {
        let (r_in, r_out) = config.layer_dims(l);
        let dil = config.dilation(l);
        let h_in = &acts[l];
        let mut z = vec![0.0; len * r_out];
        for t in 0..len {
            let zt = &mut z[t * r_out..(t + 1) * r_out];
            for k in 0..config.kernel_size {
                let Some(src) = t.checked_sub(k * dil) else {
                    break;
                };
                let x = &h_in[src * r_in..(src + 1) * r_in];
                for (i, &xi) in x.iter().enumerate() {
                    if xi == 0.0 {
                        continue;
                    }
                    let base = kernel.idx(k, i, 0);
                    let w = &kernel.values[base..base + r_out];
                    for (zj, wj) in zt.iter_mut().zip(w) {
                        *zj += wj * xi;
                    }
                }
            }
        }
        let h: Vec<f64> = z.iter().map(|&v| v.max(0.0)).collect();
        pre.push(z);
        acts.push(h);
    }
    let r_d = config.out_width();
    let last = &acts[config.depth];
    let output = (0..len)
        .map(|t| {
            last[t * r_d..(t + 1) * r_d]
                .iter()
                .zip(&weights.readout)
                .map(|(h, w)| h * w)
                .sum()
        })
        .collect();
    Trace { len, acts, pre, output }
}

/// Back-propagates `d_out` (one entry per time step) through a trace and
/// accumulates into `grad`.
pub(crate) fn backward(config: &TcnConfig, weights: &TcnWeights, trace: &Trace, d_out: &[f64], grad: &mut TcnWeights) {
    let len = trace.len;
    let r_d = config.out_width();
    let last = &trace.acts[config.depth];
    let mut d_h = vec![0.0; len * r_d];
    for t in 0..len {
        let g = d_out[t];
        if g == 0.0 {
            continue;
        }
        for j in 0..r_d {
            grad.readout[j] += g * last[t * r_d + j];
            d_h[t * r_d + j] = g * weights.readout[j];
        }
    }
    for l in (0..config.depth).rev() {
        let (r_in, r_out) = config.layer_dims(l);
        let dil = config.dilation(l);
        let kernel = &weights.layers[l];
        let z = &trace.pre[l];
        let h_in = &trace.acts[l];
        let d_z: Vec<f64> = d_h
            .iter()
            .zip(z)
            .map(|(&g, &zv)| if zv > 0.0 { g } else { 0.0 })
            .collect();
        let mut d_in = if l > 0 { vec![0.0; len * r_in] } else { Vec::new() };
        let gk = &mut grad.layers[l];
        for t in 0..len {
            let dz = &d_z[t * r_out..(t + 1) * r_out];
            if dz.iter().all(|&v| v == 0.0) {
                continue;
            }
            for k in 0..config.kernel_size {
                let Some(src) = t.checked_sub(k * dil) else {
                    break;
                };
                for i in 0..r_in {
                    let base = kernel.idx(k, i, 0);
                    let xi = h_in[src * r_in + i];
                    let gw = &mut gk.values[base..base + r_out];
                    for (g, &d) in gw.iter_mut().zip(dz) {
                        *g += d * xi;
                    }
                    if l > 0 {
                        let w = &kernel.values[base..base + r_out];
                        d_in[src * r_in + i] += w.iter().zip(dz).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
            }
        }
        d_h = d_in;
    }
}

/// Activations needed for the output at the last step only.
///
/// Layer ℓ's output is needed on the grid `T − j·b^{ℓ+1}`, `j = 0..=J_ℓ`,
/// with `J_ℓ = (p−1)·Σ_{m>ℓ} b^{m−ℓ−1}`; its input slot `q` holds step
/// `T − q·b^ℓ`, so tap `k` of output `j` reads slot `j·b + k`.
pub(crate) struct LastTrace {
    acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    pub(crate) output: f64,
}

fn last_slots(config: &TcnConfig, layer: usize) -> usize {
    let mut j = 0;
    let mut pow = 1;
    for _ in layer + 1..config.depth {
        j += (config.kernel_size - 1) * pow;
        pow *= config.dilation_base;
    }
    j + 1
}

pub(crate) fn forward_last(config: &TcnConfig, weights: &TcnWeights, history: &[f64]) -> LastTrace {
    let n = config.in_dim;
    let b = config.dilation_base;
    let p = config.kernel_size;
    let steps = history.len() / n;
    let slots = (last_slots(config, 0) - 1) * b + p;
    let mut input = vec![0.0; slots * n];
    for q in 0..slots.min(steps) {
        let pos = steps - 1 - q;
        input[q * n..(q + 1) * n].copy_from_slice(&history[pos * n..(pos + 1) * n]);
    }
    let mut acts = Vec::with_capacity(config.depth + 1);
    let mut pre = Vec::with_capacity(config.depth);
    acts.push(input);
    for (l, kernel) in weights.layers.iter().enumerate() {
        let (r_in, r_out) = config.layer_dims(l);
        let n_out = last_slots(config, l);
        let h_in = &acts[l];
        let mut z = vec![0.0; n_out * r_out];
        for j in 0..n_out {
            let zj = &mut z[j * r_out..(j + 1) * r_out];
            for k in 0..p {
                let q = j * b + k;
                for (i, &xi) in h_in[q * r_in..(q + 1) * r_in].iter().enumerate() {
                    if xi == 0.0 {
                        continue;
                    }
                    let base = kernel.idx(k, i, 0);
                    for (zv, wv) in zj.iter_mut().zip(&kernel.values[base..base + r_out]) {
                        *zv += wv * xi;
                    }
                }
            }
        }
        let h: Vec<f64> = z.iter().map(|&v| v.max(0.0)).collect();
        pre.push(z);
        acts.push(h);
    }
    let output = acts[config.depth]
        .iter()
        .zip(&weights.readout)
        .map(|(h, w)| h * w)
        .sum();
    LastTrace { acts, pre, output }
}

pub(crate) fn backward_last(
    config: &TcnConfig,
    weights: &TcnWeights,
    trace: &LastTrace,
    d_out: f64,
    grad: &mut TcnWeights,
) {
    let b = config.dilation_base;
    let p = config.kernel_size;
    let last = &trace.acts[config.depth];
    let mut d_h: Vec<f64> = weights.readout.iter().map(|w| d_out * w).collect();
    for (g, h) in grad.readout.iter_mut().zip(last) {
        *g += d_out * h;
    }
    for l in (0..config.depth).rev() {
        let (r_in, r_out) = config.layer_dims(l);
        let kernel = &weights.layers[l];
        let h_in = &trace.acts[l];
        let d_z: Vec<f64> = d_h
            .iter()
            .zip(&trace.pre[l])
            .map(|(&g, &zv)| if zv > 0.0 { g } else { 0.0 })
            .collect();
        let mut d_in = if l > 0 { vec![0.0; h_in.len()] } else { Vec::new() };
        let gk = &mut grad.layers[l];
        for j in 0..d_z.len() / r_out {
            let dz = &d_z[j * r_out..(j + 1) * r_out];
            if dz.iter().all(|&v| v == 0.0) {
                continue;
            }
            for k in 0..p {
                let q = j * b + k;
                for i in 0..r_in {
                    let base = kernel.idx(k, i, 0);
                    let xi = h_in[q * r_in + i];
                    for (g, &d) in gk.values[base..base + r_out].iter_mut().zip(dz) {
                        *g += d * xi;
                    }
                    if l > 0 {
                        let w = &kernel.values[base..base + r_out];
                        d_in[q * r_in + i] += w.iter().zip(dz).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
            }
        }
        d_h = d_in;
    }
}

fn check_input(config: &TcnConfig, weights: &TcnWeights, input: &[f64]) -> Result<usize> {
    weights.check_shape(config)?;
    if input.is_empty() || !input.len().is_multiple_of(config.in_dim) {
        return Err(Error::ShapeMismatch(format!(
            "input of {} values is not a non-empty multiple of in_dim {}",
            input.len(),
            config.in_dim
        )));
    }
    Ok(input.len() / config.in_dim)
}

/// Evaluates the network on a time-major input with `config.in_dim`
/// values per step.
pub fn forward_multi(config: &TcnConfig, weights: &TcnWeights, input: &[f64]) -> Result<Prediction> {
    check_input(config, weights, input)?;
    Ok(Prediction {
        values: forward_trace(config, weights, input).output,
    })
}

/// Evaluates a univariate network on a series.
pub fn forward(config: &TcnConfig, weights: &TcnWeights, input: &Series) -> Result<Prediction> {
    if config.in_dim != 1 {
        return Err(Error::ShapeMismatch(format!(
            "series input needs in_dim 1, config has {}",
            config.in_dim
        )));
    }
    forward_multi(config, weights, input.values())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGradient {
    pub loss: f64,
    pub grad: TcnWeights,
}

/// Mean clipped squared error over all steps and its exact gradient.
/// `targets[t]` is compared with the prediction at step `t`.
pub fn loss_gradient_multi(
    config: &TcnConfig,
    weights: &TcnWeights,
    input: &[f64],
    targets: &[f64],
) -> Result<LossGradient> {
    let len = check_input(config, weights, input)?;
    if targets.len() != len {
        return Err(Error::ShapeMismatch(format!(
            "{} targets for {len} time steps",
            targets.len()
        )));
    }
    let trace = forward_trace(config, weights, input);
    let scale = 1.0 / len as f64;
    let loss = trace
        .output
        .iter()
        .zip(targets)
        .map(|(&p, &y)| clipped_loss(p, y))
        .sum::<f64>()
        * scale;
    let d_out: Vec<f64> = trace
        .output
        .iter()
        .zip(targets)
        .map(|(&p, &y)| scale * clipped_loss_grad(p, y))
        .collect();
    let mut grad = TcnWeights::zeros(config);
    backward(config, weights, &trace, &d_out, &mut grad);
    Ok(LossGradient { loss, grad })
}

pub fn loss_gradient(
    config: &TcnConfig,
    weights: &TcnWeights,
    input: &Series,
    targets: &Series,
) -> Result<LossGradient> {
    if config.in_dim != 1 {
        return Err(Error::ShapeMismatch("series input needs in_dim 1".into()));
    }
    loss_gradient_multi(config, weights, input.values(), targets.values())
}

/// Loss and gradient for the single prediction made at the last step of
/// `history` (time-major, `in_dim` values per step). Only the activations
/// that reach that prediction are evaluated.
pub fn point_loss_gradient(config: &TcnConfig, weights: &TcnWeights, history: &[f64], target: f64) -> LossGradient {
    let trace = forward_last(config, weights, history);
    let pred = trace.output;
    let mut grad = TcnWeights::zeros(config);
    backward_last(config, weights, &trace, clipped_loss_grad(pred, target), &mut grad);
    LossGradient {
        loss: clipped_loss(pred, target),
        grad,
    }
}

/// Prediction at the last step of `history`.
pub fn point_predict(config: &TcnConfig, weights: &TcnWeights, history: &[f64]) -> f64 {
    forward_last(config, weights, history).output
}

/// One row of [`gradient_check_suite`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub instance: usize,
    pub depth: usize,
    pub kernel_size: usize,
    pub in_dim: usize,
    pub width: usize,
    pub params: usize,
    /// Pre-activations on each side of the ReLU kink.
    pub active: usize,
    pub inactive: usize,
    /// Residuals inside and beyond the loss clip.
    pub unclipped: usize,
    pub clipped: usize,
    pub max_rel_error: f64,
    pub pass: bool,
}

pub const GRAD_CHECK_STEP: f64 = 1e-5;
pub const GRAD_CHECK_TOLERANCE: f64 = 1e-4;
/// Gradient magnitudes below this are compared absolutely.
const GRAD_CHECK_FLOOR: f64 = 1e-6;
/// Distance from each kink an instance must keep.
const KINK_MARGIN: f64 = 1e-4;

/// Central finite differences against the analytic gradient of the mean
/// clipped loss on `instances` random small networks. Each instance has
/// units on both sides of the ReLU kink and residuals on both sides of the
/// clip; draws that land within `1e-4` of either kink are redrawn.
pub fn gradient_check_suite(instances: usize, seed: u64) -> Result<Vec<GradCheck>> {
    let mut rows = Vec::with_capacity(instances);
    for instance in 0..instances {
        let mut attempt = 0u64;
        let row = loop {
            let mut rng = rng_from_seed(derive_seed(seed, &[instance as u64, attempt]));
            attempt += 1;
            if attempt > 1000 {
                return Err(Error::Degenerate(format!("no kink-free draw for instance {instance}")));
            }
            if let Some(row) = grad_check_instance(instance, &mut rng)? {
                break row;
            }
        };
        rows.push(row);
    }
    Ok(rows)
}

fn grad_check_instance(instance: usize, rng: &mut Rng) -> Result<Option<GradCheck>> {
    use rand::Rng as _;
    let depth = rng.random_range(1..=3);
    let kernel_size = rng.random_range(1..=3);
    let in_dim = rng.random_range(1..=2);
    let width = rng.random_range(2..=3);
    let len = 16;
    let config = TcnConfig::new(depth, kernel_size, in_dim, width, 10.0)?;
    let weights = TcnWeights::init(&config, rng);
    let input: Vec<f64> = (0..len * in_dim).map(|_| rng.random_range(-1.5..1.5)).collect();
    let trace = forward_trace(&config, &weights, &input);
    // alternate small and large offsets so both loss regimes appear
    let targets: Vec<f64> = trace
        .output
        .iter()
        .enumerate()
        .map(|(t, &y)| {
            let mag = if t % 2 == 0 {
                rng.random_range(0.1..0.8)
            } else {
                rng.random_range(1.2..2.5)
            };
            if rng.random::<bool>() {
                y + mag
            } else {
                y - mag
            }
        })
        .collect();

    let pre = trace.pre.iter().flatten();
    if pre.clone().any(|z| z.abs() < KINK_MARGIN) {
        return Ok(None);
    }
    let active = pre.clone().filter(|&&z| z > 0.0).count();
    let inactive = pre.count() - active;
    let residuals: Vec<f64> = trace.output.iter().zip(&targets).map(|(p, y)| p - y).collect();
    if residuals.iter().any(|r| (r.abs() - 1.0).abs() < 1e-3) {
        return Ok(None);
    }
    let unclipped = residuals.iter().filter(|r| r.abs() < 1.0).count();
    let clipped = residuals.len() - unclipped;
    if active == 0 || inactive == 0 || unclipped == 0 || clipped == 0 {
        return Ok(None);
    }

    let analytic = loss_gradient_multi(&config, &weights, &input, &targets)?.grad;
    let mut probe = weights.clone();
    let mut max_rel_error: f64 = 0.0;
    let n_params = weights.params().count();
    for (idx, &a) in analytic.params().enumerate() {
        let orig = *probe.params().nth(idx).expect("index in range");
        *probe.params_mut().nth(idx).expect("index in range") = orig + GRAD_CHECK_STEP;
        let up = loss_gradient_multi(&config, &probe, &input, &targets)?.loss;
        *probe.params_mut().nth(idx).expect("index in range") = orig - GRAD_CHECK_STEP;
        let down = loss_gradient_multi(&config, &probe, &input, &targets)?.loss;
        *probe.params_mut().nth(idx).expect("index in range") = orig;
        let fd = (up - down) / (2.0 * GRAD_CHECK_STEP);
        let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(GRAD_CHECK_FLOOR);
        max_rel_error = max_rel_error.max(rel);
    }
    Ok(Some(GradCheck {
        instance,
        depth,
        kernel_size,
        in_dim,
        width,
        params: n_params,
        active,
        inactive,
        unclipped,
        clipped,
        max_rel_error,
        pass: max_rel_error < GRAD_CHECK_TOLERANCE,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixing::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn single(w: f64, readout: f64) -> (TcnConfig, TcnWeights) {
        let cfg = TcnConfig::new(1, 1, 1, 1, 10.0).unwrap();
        let mut wt = TcnWeights::zeros(&cfg);
        wt.layers[0].values[0] = w;
        wt.readout[0] = readout;
        (cfg, wt)
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let cfg = TcnConfig::new(3, 3, 1, 4, 1.0).unwrap();
        let w = TcnWeights::zeros(&cfg);
        let x = Series::new(vec![1.0, -2.0, 3.0, 0.5, 9.0]).unwrap();
        assert!(forward(&cfg, &w, &x).unwrap().values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_weight_is_relu() {
        let (cfg, w) = single(1.0, 1.0);
        let x = Series::new(vec![-1.5, 0.0, 2.0, -0.1, 3.5]).unwrap();
        let y = forward(&cfg, &w, &x).unwrap().values;
        assert_eq!(y, vec![0.0, 0.0, 2.0, 0.0, 3.5]);
    }

    #[test]
    fn hand_traced_two_layer_network() {
        // layer 1 (dilation 1, one channel): z1[t] = 0.5 x[t] + 0.25 x[t-1]
        // layer 2 (dilation 2, one channel): z2[t] = 1.0 h1[t] - 0.5 h1[t-2]
        // readout 2.0
        let cfg = TcnConfig::new(2, 2, 1, 1, 10.0).unwrap();
        let w = TcnWeights {
            layers: vec![
                Kernel::from_values([2, 1, 1], vec![0.5, 0.25]).unwrap(),
                Kernel::from_values([2, 1, 1], vec![1.0, -0.5]).unwrap(),
            ],
            readout: vec![2.0],
        };
        let x = Series::new(vec![1.0, 2.0, 3.0]).unwrap();
        // h1 = [0.5, 1.25, 2.0]
        // z2 = [0.5, 1.25, 2.0 - 0.25] = [0.5, 1.25, 1.75]
        let y = forward(&cfg, &w, &x).unwrap().values;
        let want = [1.0, 2.5, 3.5];
        for (a, b) in y.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn receptive_field_examples() {
        let rf = |d, p| receptive_field(&TcnConfig::new(d, p, 1, 1, 1.0).unwrap());
        assert_eq!(rf(1, 1), 1);
        assert_eq!(rf(3, 2), 8);
        assert_eq!(rf(8, 5), 1021);
    }

    #[test]
    fn norm_examples() {
        assert_eq!(norm_21(&Kernel::zeros(3, 2, 2)), 0.0);
        let k = Kernel::from_values([2, 1, 1], vec![3.0, 4.0]).unwrap();
        assert_eq!(norm_21(&k), 5.0);
        // two output channels, each with filter (3, 4)
        let k = Kernel::from_values([2, 1, 2], vec![3.0, 4.0, 4.0, 3.0]).unwrap();
        assert_eq!(norm_21(&k), 10.0);
    }

    #[test]
    fn projection_leaves_feasible_kernels_alone() {
        let k = Kernel::from_values([2, 1, 2], vec![0.1, 0.2, -0.3, 0.1]).unwrap();
        assert_eq!(project_norm_21(&k, 1.0), k);
    }

    #[test]
    fn projection_soft_thresholds_channel_norms() {
        // channel 0 = (8, 0), channel 1 = (0, 6); R = 7 → θ = 3.5
        let k = Kernel::from_values([2, 1, 2], vec![8.0, 0.0, 0.0, 6.0]).unwrap();
        let p = project_norm_21(&k, 7.0);
        let norms = p.channel_norms();
        assert!((norms[0] - 4.5).abs() < 1e-12);
        assert!((norms[1] - 2.5).abs() < 1e-12);
        assert!((p.get(0, 0, 0) - 4.5).abs() < 1e-12);
        assert_eq!(p.get(1, 0, 0), 0.0);
        assert!((p.get(1, 0, 1) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn projection_agrees_with_threshold_search() {
        // Brute force: the ℓ1-ball projection of a non-negative vector is
        // max(v − θ, 0) for the θ making the sum equal to R; scan θ finely.
        let v = [8.0, 6.0];
        let r = 7.0;
        let mut best = (f64::INFINITY, 0.0);
        let steps = 800_000;
        for s in 0..=steps {
            let theta = 8.0 * s as f64 / steps as f64;
            let sum: f64 = v.iter().map(|x: &f64| (x - theta).max(0.0)).sum();
            let err = (sum - r).abs();
            if err < best.0 {
                best = (err, theta);
            }
        }
        assert!((best.1 - 3.5).abs() < 1e-4);
        let p = project_l1_ball(&v, r);
        assert!((p[0] - 4.5).abs() < 1e-12 && (p[1] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn projection_is_optimal_for_two_channels() {
        // Infeasible two-channel kernels project onto allocations
        // (a, R − a) of the channel norms. Search a by a dense scan refined
        // around the best cell until the cell width is below 1e-10.
        let mut rng = rng_from_seed(11);
        for _ in 0..50 {
            let vals: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
            let k = Kernel::from_values([3, 1, 2], vals).unwrap();
            let r = rng.random_range(0.2..2.0);
            let n = k.channel_norms();
            if n[0] + n[1] <= r {
                continue;
            }
            let dist2 = |a: f64| (n[0] - a).powi(2) + (n[1] - (r - a)).powi(2);
            let (mut lo, mut hi) = ((r - n[1]).max(0.0), n[0].min(r));
            let mut best = lo;
            while hi - lo > 1e-10 {
                let cells = 1000;
                let step = (hi - lo) / cells as f64;
                best = (0..=cells)
                    .map(|s| lo + s as f64 * step)
                    .min_by(|x, y| dist2(*x).total_cmp(&dist2(*y)))
                    .unwrap();
                lo = (best - step).max(lo);
                hi = (best + step).min(hi);
            }
            let p = project_norm_21(&k, r);
            let pn = p.channel_norms();
            let gap = ((pn[0] - best).powi(2) + (pn[1] - (r - best)).powi(2)).sqrt();
            assert!(gap < 1e-6, "gap {gap}");
        }
    }

    proptest! {
        #[test]
        fn projection_feasible_and_idempotent(
            vals in proptest::collection::vec(-10.0f64..10.0, 12),
            r in 0.01f64..5.0,
        ) {
            let k = Kernel::from_values([2, 2, 3], vals).unwrap();
            let p = project_norm_21(&k, r);
            prop_assert!(norm_21(&p) <= r + 1e-9);
            let pp = project_norm_21(&p, r);
            for (a, b) in p.values.iter().zip(&pp.values) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn relu_is_one_lipschitz(a in -5.0f64..5.0, b in -5.0f64..5.0) {
            prop_assert!((a.max(0.0) - b.max(0.0)).abs() <= (a - b).abs());
        }
    }

    #[test]
    fn total_norm_examples() {
        let cfg = TcnConfig::new(3, 2, 1, 4, 1.5).unwrap();
        assert_eq!(total_norm(&TcnWeights::zeros(&cfg)), 0.0);

        let mut rng = rng_from_seed(3);
        let mut w = TcnWeights::init(&cfg, &mut rng);
        for layer in w.layers.iter_mut() {
            // push every layer out of the ball, then project onto its boundary
            layer.values.iter_mut().for_each(|v| *v *= 100.0);
            *layer = project_norm_21(layer, 1.5);
        }
        w.readout.iter_mut().for_each(|v| *v = 0.0);
        assert!((total_norm(&w) - 3.0 * 1.5).abs() < 1e-12);
    }

    #[test]
    fn total_norm_matches_independent_recomputation() {
        let cfg = TcnConfig::new(3, 3, 2, 5, 1.0).unwrap();
        let w = TcnWeights::init(&cfg, &mut rng_from_seed(5));
        let mut want = 0.0;
        for k in &w.layers {
            let [p, r_in, r_out] = k.shape;
            for j in 0..r_out {
                let mut s = 0.0;
                for kk in 0..p {
                    for i in 0..r_in {
                        s += k.get(kk, i, j).powi(2);
                    }
                }
                want += s.sqrt();
            }
        }
        want += w.readout.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((total_norm(&w) - want).abs() < 1e-12);
    }

    #[test]
    fn init_is_inside_the_ball() {
        let cfg = TcnConfig::new(4, 5, 1, 16, 0.7).unwrap();
        let w = TcnWeights::init(&cfg, &mut rng_from_seed(0));
        w.check_shape(&cfg).unwrap();
        for k in &w.layers {
            assert!(norm_21(k) <= 0.7 + 1e-12);
        }
    }

    #[test]
    fn perfect_predictions_have_zero_gradient() {
        let cfg = TcnConfig::new(2, 2, 1, 3, 1.0).unwrap();
        let w = TcnWeights::init(&cfg, &mut rng_from_seed(1));
        let x = Series::new((0..20).map(|t| (t as f64 * 0.3).sin()).collect()).unwrap();
        let y = Series::new(forward(&cfg, &w, &x).unwrap().values).unwrap();
        let lg = loss_gradient(&cfg, &w, &x, &y).unwrap();
        assert_eq!(lg.loss, 0.0);
        assert!(lg.grad.params().all(|&g| g == 0.0));
    }

    #[test]
    fn zero_network_has_zero_readout_gradient() {
        let cfg = TcnConfig::new(2, 2, 1, 3, 1.0).unwrap();
        let w = TcnWeights::zeros(&cfg);
        let x = Series::new(vec![0.3, -0.2, 0.5, 0.1]).unwrap();
        let y = Series::new(vec![0.0; 4]).unwrap();
        let lg = loss_gradient(&cfg, &w, &x, &y).unwrap();
        assert_eq!(lg.loss, 0.0);
        assert!(lg.grad.params().all(|&g| g == 0.0));

        let y = Series::new(vec![0.5, 2.0, -0.5, 0.1]).unwrap();
        let lg = loss_gradient(&cfg, &w, &x, &y).unwrap();
        let want = (0.25 + 1.0 + 0.25 + 0.01) / 4.0;
        assert!((lg.loss - want).abs() < 1e-15);
        assert!(lg.grad.readout.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn point_gradient_matches_full_gradient_on_last_step() {
        let cfg = TcnConfig::new(3, 2, 1, 4, 1.0).unwrap();
        let w = TcnWeights::init(&cfg, &mut rng_from_seed(2));
        let mut rng = rng_from_seed(9);
        let x: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
        let target = 0.3;
        let pt = point_loss_gradient(&cfg, &w, &x, target);
        // full-sequence loss that only weighs the last step
        let trace = forward_trace(&cfg, &w, &x);
        let mut d_out = vec![0.0; x.len()];
        d_out[x.len() - 1] = clipped_loss_grad(trace.output[x.len() - 1], target);
        let mut grad = TcnWeights::zeros(&cfg);
        backward(&cfg, &w, &trace, &d_out, &mut grad);
        for (a, b) in pt.grad.params().zip(grad.params()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((point_predict(&cfg, &w, &x) - trace.output[29]).abs() < 1e-12);
    }

    #[test]
    fn last_step_path_matches_dense_across_shapes() {
        let shapes = [(1, 1, 1, 3, 2), (2, 3, 2, 4, 2), (4, 2, 1, 3, 3), (3, 5, 1, 2, 1)];
        for (case, &(depth, p, n, width, base)) in shapes.iter().enumerate() {
            let mut cfg = TcnConfig::new(depth, p, n, width, 2.0).unwrap();
            cfg.dilation_base = base;
            let mut rng = rng_from_seed(40 + case as u64);
            let w = TcnWeights::init(&cfg, &mut rng);
            // both shorter and longer than one receptive field
            let rf = receptive_field(&cfg);
            for steps in [1, rf / 2 + 1, rf + 7] {
                let x: Vec<f64> = (0..steps * n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let target = rng.random_range(-0.5..0.5);
                let pt = point_loss_gradient(&cfg, &w, &x, target);
                let trace = forward_trace(&cfg, &w, &x);
                let out = trace.output[steps - 1];
                let mut d_out = vec![0.0; steps];
                d_out[steps - 1] = clipped_loss_grad(out, target);
                let mut grad = TcnWeights::zeros(&cfg);
                backward(&cfg, &w, &trace, &d_out, &mut grad);
                assert!((point_predict(&cfg, &w, &x) - out).abs() < 1e-12, "case {case}");
                for (a, b) in pt.grad.params().zip(grad.params()) {
                    assert!((a - b).abs() < 1e-12, "case {case} steps {steps}");
                }
            }
        }
    }

    #[test]
    fn gradient_suite_passes_and_covers_both_regimes() {
        let rows = gradient_check_suite(20, 5).unwrap();
        assert_eq!(rows.len(), 20);
        for r in &rows {
            assert!(r.pass, "{r:?}");
            assert!(r.active > 0 && r.inactive > 0 && r.clipped > 0 && r.unclipped > 0);
        }
        assert!(rows.iter().any(|r| r.depth == 3) && rows.iter().any(|r| r.in_dim == 2));
    }

    #[test]
    fn weights_json_round_trip() {
        let cfg = TcnConfig::new(2, 3, 1, 4, 1.0).unwrap();
        let w = TcnWeights::init(&cfg, &mut rng_from_seed(4));
        let back = TcnWeights::from_json(&w.to_json().unwrap()).unwrap();
        assert_eq!(back, w);
        let bad = w.to_json().unwrap().replace("\"version\":1", "\"version\":9");
        assert!(TcnWeights::from_json(&bad).is_err());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let cfg = TcnConfig::new(2, 3, 1, 4, 1.0).unwrap();
        let other = TcnConfig::new(2, 2, 1, 4, 1.0).unwrap();
        let w = TcnWeights::zeros(&other);
        let x = Series::new(vec![1.0; 5]).unwrap();
        assert!(matches!(forward(&cfg, &w, &x), Err(Error::ShapeMismatch(_))));
        let w = TcnWeights::zeros(&cfg);
        let y = Series::new(vec![1.0; 4]).unwrap();
        assert!(matches!(loss_gradient(&cfg, &w, &x, &y), Err(Error::ShapeMismatch(_))));
    }
}
