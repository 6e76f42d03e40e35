use super::{elu, elu_backward, msoftmax, msoftmax_backward, LayerKind, LayerSpec, ParamBuilder, ParamSlot};
use crate::error::{check_dim, Result};

/// `y = W x + b` with `W` stored row-major, `outputs × inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub inputs: usize,
    pub outputs: usize,
    weight: ParamSlot,
    bias: Option<ParamSlot>,
}

impl Linear {
    pub fn new(b: &mut ParamBuilder, inputs: usize, outputs: usize, bias: bool) -> Self {
        let weight = b.he(inputs * outputs, inputs);
        let bias = bias.then(|| b.zeros(outputs));
        Self {
            inputs,
            outputs,
            weight,
            bias,
        }
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec {
            bias: self.bias.is_some(),
            ..LayerSpec::simple(LayerKind::Linear, self.inputs, self.outputs)
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len + self.bias.map_or(0, |s| s.len)
    }

    pub fn forward(&self, params: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.inputs, x.len(), "linear input")?;
        let w = self.weight.get(params);
        let mut y = match self.bias {
            Some(s) => s.get(params).to_vec(),
            None => vec![0.0; self.outputs],
        };
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &w[o * self.inputs..(o + 1) * self.inputs];
            *yo += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
        Ok(y)
    }

    /// Returns the input gradient; parameter gradients are added into `grad` when given.
    pub fn backward(&self, params: &[f64], x: &[f64], upstream: &[f64], grad: Option<&mut [f64]>) -> Vec<f64> {
        let w = self.weight.get(params);
        let mut gx = vec![0.0; self.inputs];
        for (o, &g) in upstream.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let row = &w[o * self.inputs..(o + 1) * self.inputs];
            for (gi, wi) in gx.iter_mut().zip(row) {
                *gi += g * wi;
            }
        }
        if let Some(grad) = grad {
            let gw = self.weight.get_mut(grad);
            for (o, &g) in upstream.iter().enumerate() {
                for (gwi, xi) in gw[o * self.inputs..(o + 1) * self.inputs].iter_mut().zip(x) {
                    *gwi += g * xi;
                }
            }
            if let Some(s) = self.bias {
                for (gb, g) in s.get_mut(grad).iter_mut().zip(upstream) {
                    *gb += g;
                }
            }
        }
        gx
    }
}

/// Stack of biased linear layers with ELU between them and a modified-softmax head.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

/// Intermediate values of an [`Mlp`] forward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Input to each layer.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation output of each layer.
    pre: Vec<Vec<f64>>,
}

impl Mlp {
    /// `widths = [input, hidden..., output]`.
    pub fn new(b: &mut ParamBuilder, widths: &[usize]) -> Self {
        let layers = widths.windows(2).map(|w| Linear::new(b, w[0], w[1], true)).collect();
        Self { layers }
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().expect("nonempty mlp").outputs
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Linear::param_count).sum()
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            out.push(l.spec());
            let act = if i + 1 == self.layers.len() { LayerKind::Msoftmax } else { LayerKind::Elu };
            out.push(LayerSpec::simple(act, l.outputs, l.outputs));
        }
        out
    }

    pub fn forward(&self, params: &[f64], x: &[f64]) -> Result<(Vec<f64>, MlpCache)> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(params, &h)?;
            inputs.push(h);
            h = if i + 1 == self.layers.len() { msoftmax(&z) } else { elu(&z) };
            pre.push(z);
        }
        Ok((h, MlpCache { inputs, pre }))
    }

    pub fn backward(&self, params: &[f64], cache: &MlpCache, upstream: &[f64], mut grad: Option<&mut [f64]>) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let mut g = msoftmax_backward(&cache.pre[last], upstream);
        for i in (0..self.layers.len()).rev() {
            if i != last {
                g = elu_backward(&cache.pre[i], &g);
            }
            g = self.layers[i].backward(params, &cache.inputs[i], &g, grad.as_deref_mut());
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::super::{finite_difference_gradient, gradient_relative_error};
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_gradients() {
        let mut b = ParamBuilder::new(1);
        let layer = Linear::new(&mut b, 4, 3, true);
        let mut params = b.finish();
        let bias = layer.bias.unwrap();
        bias.get_mut(&mut params).copy_from_slice(&[0.1, -0.2, 0.3]);
        let x = [0.5, -1.0, 0.25, 2.0];
        let u = [1.0, -0.5, 0.7];
        let loss = |p: &[f64], x: &[f64]| layer.forward(p, x).unwrap().iter().zip(&u).map(|(a, b)| a * b).sum::<f64>();
        let mut grad = vec![0.0; params.len()];
        let gx = layer.backward(&params, &x, &u, Some(&mut grad));
        assert!(gradient_relative_error(&gx, &finite_difference_gradient(|z| loss(&params, z), &x, 1e-6)) < 1e-5);
        assert!(gradient_relative_error(&grad, &finite_difference_gradient(|p| loss(p, &x), &params, 1e-6)) < 1e-5);
    }

    #[test]
    fn mlp_outputs_simplex_and_gradients_match() {
        let mut b = ParamBuilder::new(7);
        let mlp = Mlp::new(&mut b, &[3, 12, 12, 3]);
        let params = b.finish();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0)).collect();
        let (y, cache) = mlp.forward(&params, &x).unwrap();
        assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let u = [0.3, -1.0, 0.8];
        let loss = |p: &[f64], x: &[f64]| mlp.forward(p, x).unwrap().0.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>();
        let mut grad = vec![0.0; params.len()];
        let gx = mlp.backward(&params, &cache, &u, Some(&mut grad));
        assert!(gradient_relative_error(&gx, &finite_difference_gradient(|z| loss(&params, z), &x, 1e-6)) < 1e-5);
        assert!(gradient_relative_error(&grad, &finite_difference_gradient(|p| loss(p, &x), &params, 1e-6)) < 1e-5);
        let counted: usize = mlp.specs().iter().map(LayerSpec::param_count).sum();
        assert_eq!(counted, params.len());
    }
}
