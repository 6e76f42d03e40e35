//! Polytopic autoencoder: simplex encoder, clustering net and bias-free polytopic decoder.

mod eval;
mod train;

pub use eval::{evaluate, evaluate_pod, EvalReport, SnapshotError};
pub use train::{
    default_arch, loss_joint, loss_joint_gradient, loss_rec, train_steps_two_three, train_step_one, train_three_step, LossHistory,
    StepOne, TrainConfig, TrainOutcome,
};

use std::fmt;
use std::str::FromStr;

use crate::datagen::GridMap;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{DenseMatrix, SpdWeight};
use crate::net::{Encoder, EncoderArch, EncoderCache, Mlp, MlpCache, ParamBuilder};
use crate::polytope::Polytope;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Pod,
    Cae,
    Pae,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pod => "pod",
            Self::Cae => "cae",
            Self::Pae => "pae",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pod" => Ok(Self::Pod),
            "cae" => Ok(Self::Cae),
            "pae" => Ok(Self::Pae),
            other => Err(Error::InvalidArgument(format!("unknown model kind '{other}'"))),
        }
    }
}

/// Number of polytope vertices needed to describe the reduced state set.
///
/// POD needs the `2^r` corners of a bounding box, a CAE its `r` decoder columns and a PAE `k·r`.
pub fn vertex_count(kind: ModelKind, r: usize, k: usize) -> usize {
    match kind {
        ModelKind::Pod => 1usize.checked_shl(r as u32).unwrap_or(usize::MAX),
        ModelKind::Cae => r,
        ModelKind::Pae => k * r,
    }
}

fn check_simplex(v: &[f64], what: &str) -> Result<()> {
    let sum: f64 = v.iter().sum();
    if v.is_empty() || v.iter().any(|&x| !(x >= -1e-12)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::NotOnSimplex(format!("{what} (sum {sum})")));
    }
    Ok(())
}

/// `α ⊗ ρ` ordered blockwise: entry `i·r + j` is `α_i ρ_j`.
pub fn kron_coeffs(alpha: &[f64], rho: &[f64]) -> Result<Vec<f64>> {
    check_simplex(alpha, "cluster coefficients")?;
    check_simplex(rho, "latent coefficients")?;
    Ok(kron_unchecked(alpha, rho))
}

pub(crate) fn kron_unchecked(alpha: &[f64], rho: &[f64]) -> Vec<f64> {
    alpha.iter().flat_map(|&a| rho.iter().map(move |&p| a * p)).collect()
}

/// Clustering net: `r → 4k → 4k → k` with ELU and a modified-softmax head.
pub fn cluster_net(r: usize, k: usize, seed: u64) -> (Mlp, Vec<f64>) {
    let mut b = ParamBuilder::new(seed);
    let mlp = Mlp::new(&mut b, &[r, 4 * k, 4 * k, k]);
    (mlp, b.finish())
}

/// Encoder `μ`, clustering net `c` and vertex matrix `U = [U_1 … U_k]`.
///
/// With `k = 1` there is no clustering net, `α = (1)`, and the model is a plain convex autoencoder.
#[derive(Debug, Clone, PartialEq)]
pub struct PaeModel {
    pub encoder: Encoder,
    pub encoder_params: Vec<f64>,
    pub cluster: Option<Mlp>,
    pub cluster_params: Vec<f64>,
    /// `n × (k·r)`
    pub vertices: DenseMatrix,
    pub weight: SpdWeight,
    /// Maps states onto the encoder's input grid; `None` feeds states directly.
    pub grid: Option<GridMap>,
}

/// Intermediate values of one encode-decode pass.
#[derive(Debug, Clone)]
pub(crate) struct Pass {
    pub rho: Vec<f64>,
    pub alpha: Vec<f64>,
    pub zeta: Vec<f64>,
    pub output: Vec<f64>,
    pub encoder_cache: EncoderCache,
    pub cluster_cache: Option<MlpCache>,
}

impl PaeModel {
    pub fn new(
        encoder: Encoder,
        encoder_params: Vec<f64>,
        cluster: Option<(Mlp, Vec<f64>)>,
        vertices: DenseMatrix,
        weight: SpdWeight,
        grid: Option<GridMap>,
    ) -> Result<Self> {
        let r = encoder.latent();
        check_dim(weight.dim(), vertices.rows(), "vertex matrix rows")?;
        if !vertices.cols().is_multiple_of(r) || vertices.cols() == 0 {
            return Err(Error::InvalidArgument(format!(
                "vertex matrix has {} columns, not a multiple of r = {r}",
                vertices.cols()
            )));
        }
        let k = vertices.cols() / r;
        if !vertices.is_finite() {
            return Err(Error::NonFinite("vertex matrix"));
        }
        match &grid {
            Some(g) => {
                check_dim(weight.dim(), g.state_dim(), "grid map columns")?;
                check_dim(encoder.input_dim(), g.operator.rows(), "grid map rows")?;
            }
            None => check_dim(encoder.input_dim(), weight.dim(), "encoder input")?,
        }
        let (cluster, cluster_params) = match cluster {
            Some((net, params)) => {
                check_dim(r, net.inputs(), "cluster net input")?;
                check_dim(k, net.outputs(), "cluster net output")?;
                (Some(net), params)
            }
            None if k == 1 => (None, Vec::new()),
            None => return Err(Error::Uninitialized("cluster net for k > 1")),
        };
        Ok(Self {
            encoder,
            encoder_params,
            cluster,
            cluster_params,
            vertices,
            weight,
            grid,
        })
    }

    pub fn r(&self) -> usize {
        self.encoder.latent()
    }

    pub fn k(&self) -> usize {
        self.vertices.cols() / self.r()
    }

    pub fn dim(&self) -> usize {
        self.vertices.rows()
    }

    pub fn kind(&self) -> ModelKind {
        if self.k() == 1 {
            ModelKind::Cae
        } else {
            ModelKind::Pae
        }
    }

    pub fn arch(&self) -> EncoderArch {
        self.encoder.arch()
    }

    pub fn encoder_param_count(&self) -> usize {
        self.encoder.param_count()
    }

    /// Vertex matrix entries plus clustering-net parameters.
    pub fn decoder_param_count(&self) -> usize {
        self.vertices.rows() * self.vertices.cols() + self.cluster.as_ref().map_or(0, Mlp::param_count)
    }

    pub fn vertex_count(&self) -> usize {
        vertex_count(self.kind(), self.r(), self.k())
    }

    /// Decoder block `U_i`, `n × r`.
    pub fn block(&self, i: usize) -> DenseMatrix {
        let r = self.r();
        self.vertices.column_block(i * r, (i + 1) * r)
    }

    pub fn polytope(&self) -> Result<Polytope> {
        Polytope::new(self.vertices.clone(), self.weight.clone())
    }

    fn check_ready(&self) -> Result<()> {
        if self.encoder_params.len() != self.encoder.param_count() {
            return Err(Error::Uninitialized("encoder parameters"));
        }
        if let Some(net) = &self.cluster {
            if self.cluster_params.len() != net.param_count() {
                return Err(Error::Uninitialized("cluster net parameters"));
            }
        }
        Ok(())
    }

    /// Encoder input `I_C v`.
    pub fn encoder_input(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), v.len(), "state")?;
        match &self.grid {
            Some(g) => g.apply(v),
            None => Ok(v.to_vec()),
        }
    }

    pub fn encode(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_ready()?;
        let x = self.encoder_input(v)?;
        Ok(self.encoder.forward(&self.encoder_params, &x)?.0)
    }

    pub fn cluster_coeffs(&self, rho: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.r(), rho.len(), "latent coefficients")?;
        match &self.cluster {
            Some(net) => Ok(net.forward(&self.cluster_params, rho)?.0),
            None => Ok(vec![1.0]),
        }
    }

    /// Polytope coordinates `ζ = c(ρ) ⊗ ρ`.
    pub fn decode_coords(&self, rho: &[f64]) -> Result<Vec<f64>> {
        let alpha = self.cluster_coeffs(rho)?;
        kron_coeffs(&alpha, rho)
    }

    /// `U (c(ρ) ⊗ ρ)`
    pub fn decode(&self, rho: &[f64]) -> Result<Vec<f64>> {
        let zeta = self.decode_coords(rho)?;
        Ok(self.vertices.matvec_unchecked(&zeta))
    }

    pub fn reconstruct(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.decode(&self.encode(v)?)
    }

    pub(crate) fn pass(&self, x: &[f64]) -> Result<Pass> {
        let (rho, encoder_cache) = self.encoder.forward(&self.encoder_params, x)?;
        let (alpha, cluster_cache) = match &self.cluster {
            Some(net) => {
                let (a, c) = net.forward(&self.cluster_params, &rho)?;
                (a, Some(c))
            }
            None => (vec![1.0], None),
        };
        let zeta = kron_unchecked(&alpha, &rho);
        let output = self.vertices.matvec_unchecked(&zeta);
        Ok(Pass {
            rho,
            alpha,
            zeta,
            output,
            encoder_cache,
            cluster_cache,
        })
    }

    /// Splits `∂/∂ζ` into `∂/∂ρ` (through both factors) and `∂/∂α`.
    pub(crate) fn split_zeta_grad(&self, pass: &Pass, g_zeta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let r = self.r();
        let k = self.k();
        let mut g_rho = vec![0.0; r];
        let mut g_alpha = vec![0.0; k];
        for i in 0..k {
            for j in 0..r {
                let g = g_zeta[i * r + j];
                g_rho[j] += g * pass.alpha[i];
                g_alpha[i] += g * pass.rho[j];
            }
        }
        (g_rho, g_alpha)
    }

    /// `d/dt U(c(μ(v)) ⊗ μ(v))` along `v̇`, from `r` reverse passes through the encoder and
    /// `k` through the clustering net.
    pub fn reconstruction_jvp(&self, v: &[f64], v_dot: &[f64]) -> Result<Vec<f64>> {
        self.check_ready()?;
        check_dim(self.dim(), v_dot.len(), "state derivative")?;
        let x = self.encoder_input(v)?;
        let x_dot = self.encoder_input(v_dot)?;
        let pass = self.pass(&x)?;
        let r = self.r();
        let k = self.k();
        let mut rho_dot = vec![0.0; r];
        for (j, rd) in rho_dot.iter_mut().enumerate() {
            let mut e = vec![0.0; r];
            e[j] = 1.0;
            let row = self.encoder.backward(&self.encoder_params, &pass.encoder_cache, &e, None);
            *rd = row.iter().zip(&x_dot).map(|(a, b)| a * b).sum();
        }
        let mut alpha_dot = vec![0.0; k];
        if let (Some(net), Some(cache)) = (&self.cluster, &pass.cluster_cache) {
            for (i, ad) in alpha_dot.iter_mut().enumerate() {
                let mut e = vec![0.0; k];
                e[i] = 1.0;
                let row = net.backward(&self.cluster_params, cache, &e, None);
                *ad = row.iter().zip(&rho_dot).map(|(a, b)| a * b).sum();
            }
        }
        let zeta_dot: Vec<f64> = (0..k)
            .flat_map(|i| (0..r).map(move |j| (i, j)))
            .map(|(i, j)| alpha_dot[i] * pass.rho[j] + pass.alpha[i] * rho_dot[j])
            .collect();
        Ok(self.vertices.matvec_unchecked(&zeta_dot))
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn micro_model(n: usize, r: usize, k: usize, seed: u64) -> PaeModel {
        let arch = EncoderArch::Mlp {
            input: n,
            hidden: vec![8],
            latent: r,
        };
        let (enc, ep) = Encoder::build(&arch, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        let u = DenseMatrix::from_fn(n, k * r, |_, _| rng.random_range(-1.0..1.0));
        let cluster = (k > 1).then(|| cluster_net(r, k, seed + 2));
        PaeModel::new(enc, ep, cluster, u, SpdWeight::scaled_identity(n, 0.5).unwrap(), None).unwrap()
    }

    #[test]
    fn vertex_counts() {
        assert_eq!(vertex_count(ModelKind::Pod, 5, 1), 32);
        assert_eq!(vertex_count(ModelKind::Pae, 5, 3), 15);
        assert_eq!(vertex_count(ModelKind::Pod, 8, 1), 256);
        assert_eq!(vertex_count(ModelKind::Pae, 8, 3), 24);
        assert_eq!(vertex_count(ModelKind::Cae, 4, 1), 4);
        for r in 5..=12 {
            for k in 1..=r {
                assert!(vertex_count(ModelKind::Pae, r, k) < vertex_count(ModelKind::Pod, r, 1));
            }
        }
    }

    #[test]
    fn kron_examples() {
        assert_eq!(kron_coeffs(&[0.3, 0.7], &[0.5, 0.5]).unwrap(), vec![0.15, 0.15, 0.35, 0.35]);
        assert_eq!(kron_coeffs(&[1.0, 0.0], &[0.2, 0.8]).unwrap(), vec![0.2, 0.8, 0.0, 0.0]);
        assert!(kron_coeffs(&[0.5, 0.6], &[1.0]).is_err());
    }

    #[test]
    fn vertex_recovery() {
        let model = micro_model(6, 2, 1, 3);
        let out = model.decode(&[0.0, 1.0]).unwrap();
        assert_eq!(out, model.vertices.column(1));
    }

    #[test]
    fn jvp_matches_central_difference() {
        let model = micro_model(10, 3, 2, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let v: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let jvp = model.reconstruction_jvp(&v, &w).unwrap();
        let h = 1e-5;
        let shift = |s: f64| -> Vec<f64> { v.iter().zip(&w).map(|(a, b)| a + s * b).collect() };
        let up = model.reconstruct(&shift(h)).unwrap();
        let down = model.reconstruct(&shift(-h)).unwrap();
        let fd: Vec<f64> = up.iter().zip(&down).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        let err = jvp.iter().zip(&fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = fd.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        assert!(err / scale < 1e-4, "{err} vs {scale}");
        assert!(model.reconstruction_jvp(&v, &[0.0; 10]).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn missing_cluster_net_rejected() {
        let arch = EncoderArch::Mlp {
            input: 4,
            hidden: vec![],
            latent: 2,
        };
        let (enc, ep) = Encoder::build(&arch, 0).unwrap();
        let u = DenseMatrix::zeros(4, 4);
        assert!(PaeModel::new(enc.clone(), ep.clone(), None, u.clone(), SpdWeight::identity(4), None).is_err());
        let mut model = PaeModel::new(enc, ep, Some(cluster_net(2, 2, 0)), u, SpdWeight::identity(4), None).unwrap();
        model.encoder_params.pop();
        assert!(matches!(model.encode(&[0.0; 4]), Err(Error::Uninitialized(_))));
    }
}
