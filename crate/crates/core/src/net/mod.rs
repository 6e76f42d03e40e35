//! Small reverse-mode network kernel with hand-written backward passes.
//!
//! Layers do not own their parameters. Each layer holds [`ParamSlot`]s into a flat `f64`
//! buffer owned by the model; backward passes add into a gradient buffer of the same layout.

mod adam;
mod conv;
mod encoder;
mod linear;

pub use adam::AdamState;
pub use conv::{Conv2d, ConvKind, InvertedResidual, IrCache};
pub use encoder::{ConvEncoder, ConvEncoderCache, ConvEncoderConfig, Encoder, EncoderArch, EncoderCache};
pub use linear::{Linear, Mlp, MlpCache};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};

/// Slope of the `tanh` inside the modified softmax.
pub const MSOFTMAX_SLOPE: f64 = 10.0;

/// Probabilities are clamped to this floor before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// Dense array with up to four axes and an optional gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 4 {
            return Err(Error::InvalidArgument(format!("tensor needs 1 to 4 axes, got {}", shape.len())));
        }
        check_dim(shape.iter().product(), data.len(), "tensor data")?;
        Ok(Self { shape, data, grad: None })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; len],
            grad: None,
        }
    }

    /// Allocates a zeroed gradient buffer.
    pub fn with_grad(mut self) -> Self {
        self.grad = Some(vec![0.0; self.data.len()]);
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [f64]> {
        self.grad.as_deref_mut()
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// `(C, H, W)` of a three-axis tensor.
    pub fn chw(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::InvalidArgument(format!("expected a 3-axis tensor, got shape {:?}", self.shape))),
        }
    }
}

/// Location of one parameter array inside a flat parameter buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamSlot {
    pub offset: usize,
    pub len: usize,
}

impl ParamSlot {
    pub fn get<'a>(&self, params: &'a [f64]) -> &'a [f64] {
        &params[self.offset..self.offset + self.len]
    }

    pub fn get_mut<'a>(&self, params: &'a mut [f64]) -> &'a mut [f64] {
        &mut params[self.offset..self.offset + self.len]
    }
}

/// Allocates parameter slots and draws their initial values.
#[derive(Debug)]
pub struct ParamBuilder {
    values: Vec<f64>,
    rng: ChaCha8Rng,
}

impl ParamBuilder {
    pub fn new(seed: u64) -> Self {
        Self {
            values: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform on `[-bound, bound]`.
    pub fn uniform(&mut self, len: usize, bound: f64) -> ParamSlot {
        let offset = self.values.len();
        for _ in 0..len {
            let x = self.rng.random_range(-bound..=bound);
            self.values.push(x);
        }
        ParamSlot { offset, len }
    }

    /// He-style uniform initialization for a layer with `fan_in` inputs.
    pub fn he(&mut self, len: usize, fan_in: usize) -> ParamSlot {
        self.uniform(len, (6.0 / fan_in.max(1) as f64).sqrt())
    }

    pub fn zeros(&mut self, len: usize) -> ParamSlot {
        let offset = self.values.len();
        self.values.resize(offset + len, 0.0);
        ParamSlot { offset, len }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn finish(self) -> Vec<f64> {
        self.values
    }
}

/// Layer kinds that make up an assembled network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Linear,
    Conv3x3,
    Depthwise,
    Pointwise,
    InvertedResidual,
    Gap,
    Elu,
    Msoftmax,
}

/// Description of one layer for reporting and parameter accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub bias: bool,
    /// Hidden width of an inverted residual block.
    pub expanded: usize,
}

impl LayerSpec {
    pub fn simple(kind: LayerKind, c_in: usize, c_out: usize) -> Self {
        Self {
            kind,
            c_in,
            c_out,
            kernel: 1,
            stride: 1,
            bias: false,
            expanded: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("kernel size {} must be odd", self.kernel)));
        }
        if !(self.stride == 1 || self.stride == 2) {
            return Err(Error::InvalidArgument(format!("stride {} must be 1 or 2", self.stride)));
        }
        if self.kind == LayerKind::Depthwise && self.c_in != self.c_out {
            return Err(Error::InvalidArgument("depthwise layers keep the channel count".into()));
        }
        Ok(())
    }

    /// `true` when an inverted residual block adds its input to the output.
    pub fn has_residual(&self) -> bool {
        self.kind == LayerKind::InvertedResidual && self.stride == 1 && self.c_in == self.c_out
    }

    pub fn param_count(&self) -> usize {
        let k2 = self.kernel * self.kernel;
        let b = if self.bias { self.c_out } else { 0 };
        match self.kind {
            LayerKind::Linear | LayerKind::Pointwise => self.c_in * self.c_out + b,
            LayerKind::Conv3x3 => k2 * self.c_in * self.c_out + b,
            LayerKind::Depthwise => k2 * self.c_in + b,
            LayerKind::InvertedResidual => {
                self.c_in * self.expanded + k2 * self.expanded + self.expanded * self.c_out
            }
            LayerKind::Gap | LayerKind::Elu | LayerKind::Msoftmax => 0,
        }
    }
}

/// Weight counts of a depthwise-separable convolution versus a standard one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeparableCounts {
    /// `K·K·C_I + C_O·C_I`
    pub separable: usize,
    /// `K·K·C_O·C_I`
    pub standard: usize,
}

pub fn separable_counts(kernel: usize, c_in: usize, c_out: usize) -> SeparableCounts {
    SeparableCounts {
        separable: kernel * kernel * c_in + c_out * c_in,
        standard: kernel * kernel * c_out * c_in,
    }
}

/// `1/C_O + 1/K²`, the separable-to-standard weight ratio.
pub fn depthwise_separable_param_ratio(kernel: usize, c_out: usize) -> f64 {
    1.0 / c_out as f64 + 1.0 / (kernel * kernel) as f64
}

pub fn elu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| if v >= 0.0 { v } else { v.exp_m1() }).collect()
}

pub fn elu_backward(x: &[f64], upstream: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(upstream)
        .map(|(&v, &g)| if v >= 0.0 { g } else { g * v.exp() })
        .collect()
}

fn msoftmax_numerator(x: f64) -> f64 {
    x * (MSOFTMAX_SLOPE * x).tanh()
}

fn msoftmax_numerator_derivative(x: f64) -> f64 {
    let t = (MSOFTMAX_SLOPE * x).tanh();
    t + MSOFTMAX_SLOPE * x * (1.0 - t * t)
}

/// `x_i tanh(10 x_i) / Σ_j x_j tanh(10 x_j)`; the uniform vector when every `x_i` is zero.
pub fn msoftmax(x: &[f64]) -> Vec<f64> {
    let g: Vec<f64> = x.iter().map(|&v| msoftmax_numerator(v)).collect();
    let s: f64 = g.iter().sum();
    if s == 0.0 {
        return vec![1.0 / x.len() as f64; x.len()];
    }
    g.into_iter().map(|v| v / s).collect()
}

/// Vector-Jacobian product of [`msoftmax`].
pub fn msoftmax_backward(x: &[f64], upstream: &[f64]) -> Vec<f64> {
    let g: Vec<f64> = x.iter().map(|&v| msoftmax_numerator(v)).collect();
    let s: f64 = g.iter().sum();
    if s == 0.0 {
        return vec![0.0; x.len()];
    }
    let weighted: f64 = g.iter().zip(upstream).map(|(a, b)| a * b).sum::<f64>() / s;
    x.iter()
        .zip(upstream)
        .map(|(&v, &u)| msoftmax_numerator_derivative(v) * (u - weighted) / s)
        .collect()
}

fn check_simplex(v: &[f64], tol: f64, what: &str) -> Result<()> {
    let sum: f64 = v.iter().sum();
    if v.iter().any(|&x| !(x >= -tol)) || (sum - 1.0).abs() > tol {
        return Err(Error::NotOnSimplex(format!("{what} (sum {sum})")));
    }
    Ok(())
}

/// `−Σ label_i ln(max(probs_i, 1e-12))`.
pub fn cross_entropy(label: &[f64], probs: &[f64]) -> Result<f64> {
    check_dim(label.len(), probs.len(), "cross entropy")?;
    check_simplex(label, 1e-8, "label")?;
    check_simplex(probs, 1e-8, "probabilities")?;
    Ok(-label
        .iter()
        .zip(probs)
        .map(|(&l, &p)| if l == 0.0 { 0.0 } else { l * p.max(PROB_FLOOR).ln() })
        .sum::<f64>())
}

/// Gradient of [`cross_entropy`] with respect to the probabilities.
pub fn cross_entropy_grad(label: &[f64], probs: &[f64]) -> Vec<f64> {
    label
        .iter()
        .zip(probs)
        .map(|(&l, &p)| if p > PROB_FLOOR { -l / p } else { 0.0 })
        .collect()
}

/// Mean cross entropy over a labelled set; zero when the set is empty.
pub fn mean_cross_entropy(labels: &[Vec<f64>], probs: &[Vec<f64>]) -> Result<f64> {
    check_dim(labels.len(), probs.len(), "cross entropy batch")?;
    if labels.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (l, p) in labels.iter().zip(probs) {
        total += cross_entropy(l, p)?;
    }
    Ok(total / labels.len() as f64)
}

/// Per-channel spatial mean of a `C × H × W` tensor.
pub fn global_average_pool(x: &Tensor) -> Result<Vec<f64>> {
    let (c, h, w) = x.chw()?;
    let hw = h * w;
    Ok((0..c)
        .map(|ch| x.data[ch * hw..(ch + 1) * hw].iter().sum::<f64>() / hw as f64)
        .collect())
}

pub fn global_average_pool_backward(shape: (usize, usize, usize), upstream: &[f64]) -> Tensor {
    let (c, h, w) = shape;
    let hw = h * w;
    let mut data = Vec::with_capacity(c * hw);
    for &g in &upstream[..c] {
        data.extend(std::iter::repeat_n(g / hw as f64, hw));
    }
    Tensor {
        shape: vec![c, h, w],
        data,
        grad: None,
    }
}

/// Central finite-difference gradient of `f` at `x`.
pub fn finite_difference_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + step;
            let up = f(&probe);
            probe[i] = orig - step;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// `max_i |a_i − b_i| / max(‖a‖_∞, ‖b‖_∞)`, or `0` when both are zero.
pub fn gradient_relative_error(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().chain(b).fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}
