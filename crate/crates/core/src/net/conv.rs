use super::{elu, elu_backward, LayerKind, LayerSpec, ParamBuilder, ParamSlot, Tensor};
use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvKind {
    /// Every output channel sees every input channel.
    Standard,
    /// One `K × K` filter per channel.
    Depthwise,
}

/// Zero-padded 2D cross-correlation with odd kernel and stride 1 or 2.
///
/// Weights are `C_O × C_I × K × K` (standard) or `C × K × K` (depthwise).
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub kind: ConvKind,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    weight: ParamSlot,
    bias: Option<ParamSlot>,
}

fn out_len(n: usize, stride: usize) -> usize {
    n.div_ceil(stride)
}

/// Output indices `o` with `0 <= o·s + tap < len`.
fn valid_range(out: usize, len: usize, stride: usize, tap: isize) -> (usize, usize) {
    let lo = if tap >= 0 { 0 } else { (-tap) as usize }.div_ceil(stride);
    let room = len as isize - tap;
    let hi = if room <= 0 { 0 } else { (room as usize).div_ceil(stride) };
    (lo, hi.min(out))
}

impl Conv2d {
    pub fn new(
        b: &mut ParamBuilder,
        kind: ConvKind,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        bias: bool,
    ) -> Result<Self> {
        let spec = LayerSpec {
            kind: match (kind, kernel) {
                (ConvKind::Depthwise, _) => LayerKind::Depthwise,
                (ConvKind::Standard, 1) => LayerKind::Pointwise,
                _ => LayerKind::Conv3x3,
            },
            c_in,
            c_out,
            kernel,
            stride,
            bias,
            expanded: 0,
        };
        spec.validate()?;
        let fan_in = kernel * kernel * if kind == ConvKind::Depthwise { 1 } else { c_in };
        let len = match kind {
            ConvKind::Standard => c_out * c_in * kernel * kernel,
            ConvKind::Depthwise => c_in * kernel * kernel,
        };
        let weight = b.he(len, fan_in);
        let bias = bias.then(|| b.zeros(c_out));
        Ok(Self {
            kind,
            c_in,
            c_out,
            kernel,
            stride,
            weight,
            bias,
        })
    }

    pub fn pointwise(b: &mut ParamBuilder, c_in: usize, c_out: usize) -> Result<Self> {
        Self::new(b, ConvKind::Standard, c_in, c_out, 1, 1, false)
    }

    pub fn weight_slot(&self) -> ParamSlot {
        self.weight
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec {
            kind: match (self.kind, self.kernel) {
                (ConvKind::Depthwise, _) => LayerKind::Depthwise,
                (ConvKind::Standard, 1) => LayerKind::Pointwise,
                _ => LayerKind::Conv3x3,
            },
            c_in: self.c_in,
            c_out: self.c_out,
            kernel: self.kernel,
            stride: self.stride,
            bias: self.bias.is_some(),
            expanded: 0,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len + self.bias.map_or(0, |s| s.len)
    }

    pub fn output_shape(&self, h: usize, w: usize) -> (usize, usize, usize) {
        (self.c_out, out_len(h, self.stride), out_len(w, self.stride))
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize, usize)> {
        let (c, h, w) = x.chw()?;
        check_dim(self.c_in, c, "convolution input channels")?;
        if h < self.kernel || w < self.kernel {
            return Err(Error::InvalidArgument(format!(
                "spatial size {h}x{w} is smaller than the kernel {}",
                self.kernel
            )));
        }
        Ok((c, h, w))
    }

    fn weight_base(&self, co: usize, ci: usize) -> usize {
        let k2 = self.kernel * self.kernel;
        match self.kind {
            ConvKind::Standard => (co * self.c_in + ci) * k2,
            ConvKind::Depthwise => co * k2,
        }
    }

    fn inputs_of(&self, co: usize) -> std::ops::Range<usize> {
        match self.kind {
            ConvKind::Standard => 0..self.c_in,
            ConvKind::Depthwise => co..co + 1,
        }
    }

    pub fn forward(&self, params: &[f64], x: &Tensor) -> Result<Tensor> {
        let (_, h, w) = self.check_input(x)?;
        let (c_out, oh, ow) = self.output_shape(h, w);
        let k = self.kernel;
        let pad = (k / 2) as isize;
        let s = self.stride;
        let weights = self.weight.get(params);
        let input = x.data();
        let mut out = vec![0.0; c_out * oh * ow];
        for co in 0..c_out {
            let plane = &mut out[co * oh * ow..(co + 1) * oh * ow];
            if let Some(bias) = self.bias {
                plane.fill(bias.get(params)[co]);
            }
            for ci in self.inputs_of(co) {
                let base = self.weight_base(co, ci);
                let src = &input[ci * h * w..(ci + 1) * h * w];
                for kh in 0..k {
                    let th = kh as isize - pad;
                    let (h_lo, h_hi) = valid_range(oh, h, s, th);
                    for kw in 0..k {
                        let tw = kw as isize - pad;
                        let (w_lo, w_hi) = valid_range(ow, w, s, tw);
                        if w_lo >= w_hi {
                            continue;
                        }
                        let wt = weights[base + kh * k + kw];
                        for o_h in h_lo..h_hi {
                            let ih = (o_h * s) as isize + th;
                            let row = &src[ih as usize * w..(ih as usize + 1) * w];
                            let dst = &mut plane[o_h * ow + w_lo..o_h * ow + w_hi];
                            let start = (w_lo * s) as isize + tw;
                            if s == 1 {
                                for (d, x) in dst.iter_mut().zip(&row[start as usize..]) {
                                    *d += wt * x;
                                }
                            } else {
                                for (d, x) in dst.iter_mut().zip(row[start as usize..].iter().step_by(s)) {
                                    *d += wt * x;
                                }
                            }
                        }
                    }
                }
            }
        }
        Tensor::new(vec![c_out, oh, ow], out)
    }

    /// Returns the input gradient; parameter gradients are added into `grad` when given.
    pub fn backward(&self, params: &[f64], x: &Tensor, upstream: &Tensor, mut grad: Option<&mut [f64]>) -> Tensor {
        let (c_in, h, w) = x.chw().expect("checked in forward");
        let (c_out, oh, ow) = self.output_shape(h, w);
        debug_assert_eq!(upstream.shape(), &[c_out, oh, ow]);
        let k = self.kernel;
        let pad = (k / 2) as isize;
        let s = self.stride;
        let weights = self.weight.get(params);
        let input = x.data();
        let gout = upstream.data();
        let mut gin = vec![0.0; c_in * h * w];
        for co in 0..c_out {
            let gplane = &gout[co * oh * ow..(co + 1) * oh * ow];
            if let (Some(bias), Some(g)) = (self.bias, grad.as_deref_mut()) {
                bias.get_mut(g)[co] += gplane.iter().sum::<f64>();
            }
            for ci in self.inputs_of(co) {
                let base = self.weight_base(co, ci);
                let src = &input[ci * h * w..(ci + 1) * h * w];
                let dsrc = &mut gin[ci * h * w..(ci + 1) * h * w];
                for kh in 0..k {
                    let th = kh as isize - pad;
                    let (h_lo, h_hi) = valid_range(oh, h, s, th);
                    for kw in 0..k {
                        let tw = kw as isize - pad;
                        let (w_lo, w_hi) = valid_range(ow, w, s, tw);
                        if w_lo >= w_hi {
                            continue;
                        }
                        let wt = weights[base + kh * k + kw];
                        let mut gw = 0.0;
                        for o_h in h_lo..h_hi {
                            let ih = ((o_h * s) as isize + th) as usize;
                            let g = &gplane[o_h * ow + w_lo..o_h * ow + w_hi];
                            let start = ((w_lo * s) as isize + tw) as usize;
                            let row = &src[ih * w..(ih + 1) * w];
                            let drow = &mut dsrc[ih * w..(ih + 1) * w];
                            if s == 1 {
                                for ((gi, xi), di) in g.iter().zip(&row[start..]).zip(&mut drow[start..]) {
                                    gw += gi * xi;
                                    *di += wt * gi;
                                }
                            } else {
                                for (j, gi) in g.iter().enumerate() {
                                    let iw = start + j * s;
                                    gw += gi * row[iw];
                                    drow[iw] += wt * gi;
                                }
                            }
                        }
                        if let Some(gr) = grad.as_deref_mut() {
                            self.weight.get_mut(gr)[base + kh * k + kw] += gw;
                        }
                    }
                }
            }
        }
        Tensor::new(vec![c_in, h, w], gin).expect("shape matches input")
    }
}

/// Pointwise expand, ELU, depthwise, ELU, pointwise project; no biases.
///
/// The input is added to the output when the stride is 1 and the channel count is kept.
#[derive(Debug, Clone, PartialEq)]
pub struct InvertedResidual {
    pub expand: Conv2d,
    pub depthwise: Conv2d,
    pub project: Conv2d,
    pub residual: bool,
}

/// Intermediate values of an [`InvertedResidual`] forward pass.
#[derive(Debug, Clone)]
pub struct IrCache {
    input: Tensor,
    expanded_pre: Tensor,
    expanded: Tensor,
    filtered_pre: Tensor,
    filtered: Tensor,
}

fn map_tensor(t: &Tensor, f: impl Fn(&[f64]) -> Vec<f64>) -> Tensor {
    Tensor::new(t.shape().to_vec(), f(t.data())).expect("same shape")
}

impl InvertedResidual {
    pub fn new(b: &mut ParamBuilder, c_in: usize, c_out: usize, expanded: usize, kernel: usize, stride: usize) -> Result<Self> {
        let expand = Conv2d::pointwise(b, c_in, expanded)?;
        let depthwise = Conv2d::new(b, ConvKind::Depthwise, expanded, expanded, kernel, stride, false)?;
        let project = Conv2d::pointwise(b, expanded, c_out)?;
        Ok(Self {
            expand,
            depthwise,
            project,
            residual: stride == 1 && c_in == c_out,
        })
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec {
            kind: LayerKind::InvertedResidual,
            c_in: self.expand.c_in,
            c_out: self.project.c_out,
            kernel: self.depthwise.kernel,
            stride: self.depthwise.stride,
            bias: false,
            expanded: self.expand.c_out,
        }
    }

    pub fn param_count(&self) -> usize {
        self.expand.param_count() + self.depthwise.param_count() + self.project.param_count()
    }

    pub fn output_shape(&self, h: usize, w: usize) -> (usize, usize, usize) {
        let (_, oh, ow) = self.depthwise.output_shape(h, w);
        (self.project.c_out, oh, ow)
    }

    pub fn forward(&self, params: &[f64], x: &Tensor) -> Result<(Tensor, IrCache)> {
        let expanded_pre = self.expand.forward(params, x)?;
        let expanded = map_tensor(&expanded_pre, elu);
        let filtered_pre = self.depthwise.forward(params, &expanded)?;
        let filtered = map_tensor(&filtered_pre, elu);
        let mut out = self.project.forward(params, &filtered)?;
        if self.residual {
            for (o, i) in out.data_mut().iter_mut().zip(x.data()) {
                *o += i;
            }
        }
        let cache = IrCache {
            input: x.clone(),
            expanded_pre,
            expanded,
            filtered_pre,
            filtered,
        };
        Ok((out, cache))
    }

    pub fn backward(&self, params: &[f64], cache: &IrCache, upstream: &Tensor, mut grad: Option<&mut [f64]>) -> Tensor {
        let g = self.project.backward(params, &cache.filtered, upstream, grad.as_deref_mut());
        let g = Tensor::new(g.shape().to_vec(), elu_backward(cache.filtered_pre.data(), g.data())).expect("same shape");
        let g = self.depthwise.backward(params, &cache.expanded, &g, grad.as_deref_mut());
        let g = Tensor::new(g.shape().to_vec(), elu_backward(cache.expanded_pre.data(), g.data())).expect("same shape");
        let mut gx = self.expand.backward(params, &cache.input, &g, grad);
        if self.residual {
            for (d, u) in gx.data_mut().iter_mut().zip(upstream.data()) {
                *d += u;
            }
        }
        gx
    }
}
