use super::{
    elu, elu_backward, global_average_pool, global_average_pool_backward, msoftmax, msoftmax_backward, Conv2d, ConvKind,
    InvertedResidual, IrCache, LayerKind, LayerSpec, Linear, Mlp, MlpCache, ParamBuilder, Tensor,
};
use crate::error::{check_dim, Error, Result};

/// Shape of the convolutional encoder: a biased `K × K` stem with ELU, three inverted residual
/// blocks (strides 2, 2, 1), global average pooling, a biased linear head and a modified softmax.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvEncoderConfig {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub stem: usize,
    pub blocks: [usize; 3],
    pub expansion: usize,
    pub kernel: usize,
    pub latent: usize,
}

impl ConvEncoderConfig {
    pub fn new(channels: usize, height: usize, width: usize, latent: usize) -> Self {
        Self {
            channels,
            height,
            width,
            stem: 8,
            blocks: [12, 16, 16],
            expansion: 2,
            kernel: 3,
            latent,
        }
    }
}

/// Encoder architecture; enough to rebuild the layer stack and its parameter layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EncoderArch {
    Conv(ConvEncoderConfig),
    /// Biased linear layers with ELU, then a modified softmax over `latent` outputs.
    Mlp { input: usize, hidden: Vec<usize>, latent: usize },
}

impl EncoderArch {
    pub fn latent(&self) -> usize {
        match self {
            Self::Conv(c) => c.latent,
            Self::Mlp { latent, .. } => *latent,
        }
    }

    /// Length of the (grid-mapped) encoder input.
    pub fn input_dim(&self) -> usize {
        match self {
            Self::Conv(c) => c.channels * c.height * c.width,
            Self::Mlp { input, .. } => *input,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvEncoder {
    pub config: ConvEncoderConfig,
    stem: Conv2d,
    blocks: Vec<InvertedResidual>,
    head: Linear,
}

#[derive(Debug, Clone)]
pub struct ConvEncoderCache {
    input: Tensor,
    stem_pre: Tensor,
    block_caches: Vec<IrCache>,
    pooled_shape: (usize, usize, usize),
    pooled: Vec<f64>,
    logits: Vec<f64>,
}

impl ConvEncoder {
    pub fn new(b: &mut ParamBuilder, config: ConvEncoderConfig) -> Result<Self> {
        let k = config.kernel;
        let mut h = config.height;
        let mut w = config.width;
        if h < k || w < k {
            return Err(Error::InvalidArgument(format!("encoder input {h}x{w} is smaller than the kernel")));
        }
        let stem = Conv2d::new(b, ConvKind::Standard, config.channels, config.stem, k, 1, true)?;
        let mut blocks = Vec::new();
        let mut c = config.stem;
        for (i, &c_out) in config.blocks.iter().enumerate() {
            let stride = if i < 2 { 2 } else { 1 };
            if h < k || w < k {
                return Err(Error::InvalidArgument(format!(
                    "encoder input {}x{} is too small for three blocks",
                    config.height, config.width
                )));
            }
            let block = InvertedResidual::new(b, c, c_out, c * config.expansion, k, stride)?;
            (_, h, w) = block.output_shape(h, w);
            blocks.push(block);
            c = c_out;
        }
        let head = Linear::new(b, c, config.latent, true);
        Ok(Self {
            config,
            stem,
            blocks,
            head,
        })
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        let mut out = vec![self.stem.spec(), LayerSpec::simple(LayerKind::Elu, self.stem.c_out, self.stem.c_out)];
        out.extend(self.blocks.iter().map(InvertedResidual::spec));
        let c = self.head.inputs;
        out.push(LayerSpec::simple(LayerKind::Gap, c, c));
        out.push(self.head.spec());
        out.push(LayerSpec::simple(LayerKind::Msoftmax, self.config.latent, self.config.latent));
        out
    }

    pub fn param_count(&self) -> usize {
        self.stem.param_count() + self.blocks.iter().map(InvertedResidual::param_count).sum::<usize>() + self.head.param_count()
    }

    pub fn forward(&self, params: &[f64], x: &[f64]) -> Result<(Vec<f64>, ConvEncoderCache)> {
        let cfg = &self.config;
        let input = Tensor::new(vec![cfg.channels, cfg.height, cfg.width], x.to_vec())?;
        let stem_pre = self.stem.forward(params, &input)?;
        let mut h = Tensor::new(stem_pre.shape().to_vec(), elu(stem_pre.data()))?;
        let mut block_caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (out, cache) = block.forward(params, &h)?;
            block_caches.push(cache);
            h = out;
        }
        let pooled_shape = h.chw()?;
        let pooled = global_average_pool(&h)?;
        let logits = self.head.forward(params, &pooled)?;
        let rho = msoftmax(&logits);
        Ok((
            rho,
            ConvEncoderCache {
                input,
                stem_pre,
                block_caches,
                pooled_shape,
                pooled,
                logits,
            },
        ))
    }

    pub fn backward(&self, params: &[f64], cache: &ConvEncoderCache, upstream: &[f64], mut grad: Option<&mut [f64]>) -> Vec<f64> {
        let g = msoftmax_backward(&cache.logits, upstream);
        let g = self.head.backward(params, &cache.pooled, &g, grad.as_deref_mut());
        let mut g = global_average_pool_backward(cache.pooled_shape, &g);
        for (block, bc) in self.blocks.iter().zip(&cache.block_caches).rev() {
            g = block.backward(params, bc, &g, grad.as_deref_mut());
        }
        let g = Tensor::new(g.shape().to_vec(), elu_backward(cache.stem_pre.data(), g.data())).expect("same shape");
        self.stem.backward(params, &cache.input, &g, grad).into_data()
    }
}

/// Encoder `μ`: grid-mapped state to simplex coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum Encoder {
    Conv(ConvEncoder),
    Mlp(Mlp),
}

#[derive(Debug, Clone)]
pub enum EncoderCache {
    Conv(ConvEncoderCache),
    Mlp(MlpCache),
}

impl Encoder {
    /// Builds the layer stack and draws initial parameters.
    pub fn build(arch: &EncoderArch, seed: u64) -> Result<(Self, Vec<f64>)> {
        let mut b = ParamBuilder::new(seed);
        let enc = match arch {
            EncoderArch::Conv(cfg) => Self::Conv(ConvEncoder::new(&mut b, cfg.clone())?),
            EncoderArch::Mlp { input, hidden, latent } => {
                if *input == 0 || *latent == 0 {
                    return Err(Error::InvalidArgument("encoder dimensions must be positive".into()));
                }
                let mut widths = vec![*input];
                widths.extend(hidden);
                widths.push(*latent);
                Self::Mlp(Mlp::new(&mut b, &widths))
            }
        };
        Ok((enc, b.finish()))
    }

    pub fn arch(&self) -> EncoderArch {
        match self {
            Self::Conv(c) => EncoderArch::Conv(c.config.clone()),
            Self::Mlp(m) => EncoderArch::Mlp {
                input: m.inputs(),
                hidden: m.layers[..m.layers.len() - 1].iter().map(|l| l.outputs).collect(),
                latent: m.outputs(),
            },
        }
    }

    pub fn latent(&self) -> usize {
        match self {
            Self::Conv(c) => c.config.latent,
            Self::Mlp(m) => m.outputs(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.arch().input_dim()
    }

    pub fn param_count(&self) -> usize {
        match self {
            Self::Conv(c) => c.param_count(),
            Self::Mlp(m) => m.param_count(),
        }
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        match self {
            Self::Conv(c) => c.specs(),
            Self::Mlp(m) => m.specs(),
        }
    }

    pub fn forward(&self, params: &[f64], x: &[f64]) -> Result<(Vec<f64>, EncoderCache)> {
        check_dim(self.input_dim(), x.len(), "encoder input")?;
        match self {
            Self::Conv(c) => c.forward(params, x).map(|(y, cache)| (y, EncoderCache::Conv(cache))),
            Self::Mlp(m) => m.forward(params, x).map(|(y, cache)| (y, EncoderCache::Mlp(cache))),
        }
    }

    pub fn backward(&self, params: &[f64], cache: &EncoderCache, upstream: &[f64], grad: Option<&mut [f64]>) -> Vec<f64> {
        match (self, cache) {
            (Self::Conv(c), EncoderCache::Conv(cc)) => c.backward(params, cc, upstream, grad),
            (Self::Mlp(m), EncoderCache::Mlp(mc)) => m.backward(params, mc, upstream, grad),
            _ => panic!("encoder cache does not match the encoder kind"),
        }
    }
}
