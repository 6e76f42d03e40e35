use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{cluster_net, PaeModel, Pass};
use crate::clustering::{kmeans, select_pseudo_labels, KmeansResult, PseudoLabelSet};
use crate::datagen::{GridMap, SnapshotSet};
use crate::error::{check_dim, Error, Result};
use crate::linalg::DenseMatrix;
use crate::net::{cross_entropy, cross_entropy_grad, AdamState, ConvEncoderConfig, Encoder, EncoderArch};

/// Hyperparameters of the three-step training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Epochs of steps 1, 2 and 3.
    pub epochs: [usize; 3],
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Weight `λ` of the clustering loss.
    pub cluster_weight: f64,
    pub seed: u64,
    /// Epochs between checkpoint evaluations; the first and last epoch are always evaluated.
    pub checkpoint_every: usize,
    /// Encoder architecture; derived from the data when `None`.
    pub encoder: Option<EncoderArch>,
    /// Grid map for the encoder input; the identity on tensor-laid-out data when `None`.
    pub grid: Option<GridMap>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: [200, 100, 200],
            batch_size: 64,
            learning_rate: 1e-4,
            cluster_weight: 1e-4,
            seed: 0,
            checkpoint_every: 1,
            encoder: None,
            grid: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs.contains(&0) || self.batch_size == 0 || self.checkpoint_every == 0 {
            return Err(Error::InvalidArgument("epochs, batch size and checkpoint interval must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.cluster_weight >= 0.0) || !self.cluster_weight.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "clustering weight must be nonnegative, got {}",
                self.cluster_weight
            )));
        }
        Ok(())
    }
}

/// Mean training loss per epoch, one list per step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossHistory {
    pub steps: [Vec<f64>; 3],
}

/// Result of step 1: the convex autoencoder every later step starts from.
#[derive(Debug, Clone)]
pub struct StepOne {
    pub model: PaeModel,
    pub history: Vec<f64>,
    /// Averaged relative training error of the kept checkpoint.
    pub train_error: f64,
    seeds: Seeds,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: PaeModel,
    pub history: LossHistory,
    /// Averaged relative training error after steps 1 and 3; after step 2 the mean over the
    /// individual decoders on their selected points.
    pub step_errors: [f64; 3],
    pub labels: PseudoLabelSet,
    pub kmeans: Option<KmeansResult>,
}

#[derive(Debug, Clone, Copy)]
struct Seeds {
    encoder: u64,
    decoder: u64,
    shuffle: u64,
    kmeans: u64,
    cluster: u64,
}

impl Seeds {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            encoder: rng.random(),
            decoder: rng.random(),
            shuffle: rng.random(),
            kmeans: rng.random(),
            cluster: rng.random(),
        }
    }
}

/// Convolutional encoder for tensor-laid-out data, otherwise a two-hidden-layer MLP.
pub fn default_arch(data: &SnapshotSet, r: usize) -> EncoderArch {
    match data.grid {
        Some((c, h, w)) => EncoderArch::Conv(ConvEncoderConfig::new(c, h, w, r)),
        None => EncoderArch::Mlp {
            input: data.dim(),
            hidden: vec![64, 32],
            latent: r,
        },
    }
}

struct TrainData {
    states: Vec<Vec<f64>>,
    inputs: Vec<Vec<f64>>,
    norms: Vec<f64>,
}

impl TrainData {
    fn new(model: &PaeModel, data: &SnapshotSet) -> Result<Self> {
        let states = data.train_snapshots();
        let inputs = states.iter().map(|v| model.encoder_input(v)).collect::<Result<Vec<_>>>()?;
        let norms = states.iter().map(|v| data.weight.norm_unchecked(v)).collect();
        Ok(Self { states, inputs, norms })
    }
}

struct Grads {
    encoder: Vec<f64>,
    cluster: Vec<f64>,
    vertices: Vec<f64>,
}

impl Grads {
    fn zeros(model: &PaeModel) -> Self {
        Self {
            encoder: vec![0.0; model.encoder_params.len()],
            cluster: vec![0.0; model.cluster_params.len()],
            vertices: vec![0.0; model.vertices.rows() * model.vertices.cols()],
        }
    }

    fn reset(&mut self) {
        for g in [&mut self.encoder, &mut self.cluster, &mut self.vertices] {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
    }
}

/// `(‖ṽ − v‖_M, M(ṽ − v))`
fn residual(model: &PaeModel, pass: &Pass, v: &[f64]) -> (f64, Vec<f64>) {
    let e: Vec<f64> = pass.output.iter().zip(v).map(|(a, b)| a - b).collect();
    let me = model.weight.apply_unchecked(&e);
    let norm = e.iter().zip(&me).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt();
    (norm, me)
}

/// Forward and backward pass for one sample; returns `(reconstruction loss, cross entropy)`.
///
/// Gradients of `w_rec · ‖ṽ − v‖_M + w_ce · CE(label, α)` are added into `grads`.
fn accumulate(
    model: &PaeModel,
    x: &[f64],
    v: &[f64],
    label: Option<&[f64]>,
    w_rec: f64,
    w_ce: f64,
    grads: &mut Grads,
) -> Result<(f64, f64)> {
    let pass = model.pass(x)?;
    let (norm, me) = residual(model, &pass, v);
    let g_out: Vec<f64> = if norm > 0.0 {
        me.iter().map(|m| w_rec * m / norm).collect()
    } else {
        vec![0.0; me.len()]
    };
    let kr = pass.zeta.len();
    for (row, &g) in grads.vertices.chunks_exact_mut(kr).zip(&g_out) {
        if g != 0.0 {
            for (gu, z) in row.iter_mut().zip(&pass.zeta) {
                *gu += g * z;
            }
        }
    }
    let g_zeta = model.vertices.matvec_t_unchecked(&g_out);
    let (mut g_rho, mut g_alpha) = model.split_zeta_grad(&pass, &g_zeta);
    let mut ce = 0.0;
    if let Some(label) = label {
        ce = cross_entropy(label, &pass.alpha)?;
        for (ga, gc) in g_alpha.iter_mut().zip(cross_entropy_grad(label, &pass.alpha)) {
            *ga += w_ce * gc;
        }
    }
    if let (Some(net), Some(cache)) = (&model.cluster, &pass.cluster_cache) {
        let back = net.backward(&model.cluster_params, cache, &g_alpha, Some(&mut grads.cluster));
        for (gr, b) in g_rho.iter_mut().zip(back) {
            *gr += b;
        }
    }
    model
        .encoder
        .backward(&model.encoder_params, &pass.encoder_cache, &g_rho, Some(&mut grads.encoder));
    Ok((norm, ce))
}

/// `(1/|B|) Σ ‖ṽ − v‖_M` over a batch of states.
pub fn loss_rec(model: &PaeModel, batch: &[Vec<f64>]) -> Result<f64> {
    loss_joint(model, batch, &[], 0.0)
}

/// `loss_rec + λ · (1/|P|) Σ_{j∈P} CE(label_j, α_j)`; `labels` pairs batch indices with one-hot labels.
pub fn loss_joint(model: &PaeModel, batch: &[Vec<f64>], labels: &[(usize, Vec<f64>)], lambda: f64) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mut rec = 0.0;
    let mut passes = Vec::with_capacity(batch.len());
    for v in batch {
        let pass = model.pass(&model.encoder_input(v)?)?;
        rec += residual(model, &pass, v).0;
        passes.push(pass);
    }
    rec /= batch.len() as f64;
    if labels.is_empty() || lambda == 0.0 {
        return Ok(rec);
    }
    let mut ce = 0.0;
    for (j, label) in labels {
        let pass = passes
            .get(*j)
            .ok_or_else(|| Error::InvalidArgument(format!("label index {j} outside the batch")))?;
        check_dim(model.k(), label.len(), "label")?;
        ce += cross_entropy(label, &pass.alpha)?;
    }
    Ok(rec + lambda * ce / labels.len() as f64)
}

/// Full-batch gradients of [`loss_joint`] for every parameter group, in the order
/// `(encoder, cluster net, vertex matrix row-major)`.
pub fn loss_joint_gradient(
    model: &PaeModel,
    batch: &[Vec<f64>],
    labels: &[(usize, Vec<f64>)],
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mut grads = Grads::zeros(model);
    let w_rec = 1.0 / batch.len() as f64;
    let w_ce = if labels.is_empty() { 0.0 } else { lambda / labels.len() as f64 };
    for (j, v) in batch.iter().enumerate() {
        let label = labels.iter().find(|(i, _)| *i == j).map(|(_, l)| l.as_slice());
        accumulate(model, &model.encoder_input(v)?, v, label, w_rec, w_ce, &mut grads)?;
    }
    Ok((grads.encoder, grads.cluster, grads.vertices))
}

fn relative_error(model: &PaeModel, td: &TrainData) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0;
    for ((x, v), &norm) in td.inputs.iter().zip(&td.states).zip(&td.norms) {
        if norm == 0.0 {
            continue;
        }
        let pass = model.pass(x)?;
        total += residual(model, &pass, v).0 / norm;
        count += 1;
    }
    if count == 0 {
        return Err(Error::Degenerate("all training snapshots are zero".into()));
    }
    Ok(total / count as f64)
}

/// Joint minibatch training of every parameter group; keeps the checkpoint with the lowest
/// averaged relative training error, including the starting point.
fn run_joint(
    model: &mut PaeModel,
    td: &TrainData,
    labels: &[Option<Vec<f64>>],
    cfg: &TrainConfig,
    epochs: usize,
    step: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, f64)> {
    let mut best_err = relative_error(model, td)?;
    let mut best = model.clone();
    let mut adam_enc = AdamState::new(model.encoder_params.len(), cfg.learning_rate);
    let mut adam_cl = AdamState::new(model.cluster_params.len(), cfg.learning_rate);
    let mut adam_u = AdamState::new(model.vertices.rows() * model.vertices.cols(), cfg.learning_rate);
    let mut grads = Grads::zeros(model);
    let mut order: Vec<usize> = (0..td.states.len()).collect();
    let mut history = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.reset();
            let w_rec = 1.0 / batch.len() as f64;
            let labelled = batch.iter().filter(|&&i| labels[i].is_some()).count();
            let w_ce = if labelled == 0 { 0.0 } else { cfg.cluster_weight / labelled as f64 };
            let mut rec = 0.0;
            let mut ce = 0.0;
            for &i in batch {
                let (l_rec, l_ce) = accumulate(
                    model,
                    &td.inputs[i],
                    &td.states[i],
                    labels[i].as_deref(),
                    w_rec,
                    w_ce,
                    &mut grads,
                )?;
                rec += l_rec;
                ce += l_ce;
            }
            let loss = rec * w_rec + if labelled == 0 { 0.0 } else { cfg.cluster_weight * ce / labelled as f64 };
            if !loss.is_finite() {
                return Err(Error::Diverged { step, epoch });
            }
            epoch_loss += loss * batch.len() as f64;
            adam_enc.update(&mut model.encoder_params, &grads.encoder)?;
            adam_cl.update(&mut model.cluster_params, &grads.cluster)?;
            adam_u.update(model.vertices.as_mut_slice(), &grads.vertices)?;
        }
        history.push(epoch_loss / td.states.len() as f64);
        if epoch % cfg.checkpoint_every == 0 || epoch == epochs || epoch == 1 {
            let err = relative_error(model, td)?;
            if !err.is_finite() {
                return Err(Error::Diverged { step, epoch });
            }
            if err < best_err {
                best_err = err;
                best = model.clone();
            }
        }
    }
    *model = best;
    Ok((history, best_err))
}

/// Step 1: encoder plus a single `n × r` decoder, started from `r` distinct training snapshots.
pub fn train_step_one(data: &SnapshotSet, cfg: &TrainConfig, r: usize) -> Result<StepOne> {
    cfg.validate()?;
    if r == 0 || r > data.split {
        return Err(Error::InvalidArgument(format!("r = {r} must lie in 1..={}", data.split)));
    }
    let seeds = Seeds::new(cfg.seed);
    let arch = cfg.encoder.clone().unwrap_or_else(|| default_arch(data, r));
    check_dim(r, arch.latent(), "encoder latent dimension")?;
    let grid = cfg
        .grid
        .clone()
        .or_else(|| data.grid.map(|(c, h, w)| GridMap::identity(c, h, w)));
    let (encoder, params) = Encoder::build(&arch, seeds.encoder)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seeds.decoder);
    let picks = rand::seq::index::sample(&mut rng, data.split, r).into_vec();
    let columns: Vec<Vec<f64>> = picks.iter().map(|&j| data.snapshot(j)).collect();
    let vertices = DenseMatrix::from_columns(&columns)?;
    let mut model = PaeModel::new(encoder, params, None, vertices, data.weight.clone(), grid)?;
    let td = TrainData::new(&model, data)?;
    let mut shuffle = ChaCha8Rng::seed_from_u64(seeds.shuffle);
    let labels = vec![None; td.states.len()];
    let (history, train_error) = run_joint(&mut model, &td, &labels, cfg, cfg.epochs[0], 1, &mut shuffle)?;
    Ok(StepOne {
        model,
        history,
        train_error,
        seeds,
    })
}

/// Mean relative error of `U ρ_j` against the members' states.
fn block_error(u: &DenseMatrix, members: &[usize], latents: &[Vec<f64>], td: &TrainData, model: &PaeModel) -> f64 {
    let mut total = 0.0;
    let mut count = 0;
    for &j in members {
        if td.norms[j] == 0.0 {
            continue;
        }
        let out = u.matvec_unchecked(&latents[j]);
        let e: Vec<f64> = out.iter().zip(&td.states[j]).map(|(a, b)| a - b).collect();
        total += model.weight.norm_unchecked(&e) / td.norms[j];
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

/// Trains one individual decoder on fixed latents; returns the per-epoch loss sums.
fn fit_block(
    u: &mut DenseMatrix,
    members: &[usize],
    latents: &[Vec<f64>],
    td: &TrainData,
    model: &PaeModel,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, f64)> {
    let epochs = cfg.epochs[1];
    let r = u.cols();
    let mut best_err = block_error(u, members, latents, td, model);
    let mut best = u.clone();
    let mut adam = AdamState::new(u.rows() * r, cfg.learning_rate);
    let mut grad = vec![0.0; u.rows() * r];
    let mut order = members.to_vec();
    let mut sums = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        order.shuffle(rng);
        let mut epoch_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let w = 1.0 / batch.len() as f64;
            for &j in batch {
                let rho = &latents[j];
                let out = u.matvec_unchecked(rho);
                let e: Vec<f64> = out.iter().zip(&td.states[j]).map(|(a, b)| a - b).collect();
                let me = model.weight.apply_unchecked(&e);
                let norm = e.iter().zip(&me).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt();
                if !norm.is_finite() {
                    return Err(Error::Diverged { step: 2, epoch });
                }
                epoch_sum += norm;
                if norm > 0.0 {
                    for (row, m) in grad.chunks_exact_mut(r).zip(&me) {
                        let g = w * m / norm;
                        for (gr, p) in row.iter_mut().zip(rho) {
                            *gr += g * p;
                        }
                    }
                }
            }
            adam.update(u.as_mut_slice(), &grad)?;
        }
        sums.push(epoch_sum);
        let err = block_error(u, members, latents, td, model);
        if err < best_err {
            best_err = err;
            best = u.clone();
        }
    }
    *u = best;
    Ok((sums, best_err))
}

/// Steps 2 and 3 on top of a step-1 result.
pub fn train_steps_two_three(data: &SnapshotSet, cfg: &TrainConfig, k: usize, step_one: &StepOne) -> Result<TrainOutcome> {
    cfg.validate()?;
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    let seeds = step_one.seeds;
    let base = &step_one.model;
    let r = base.r();
    let td = TrainData::new(base, data)?;
    let n_train = td.states.len();

    // Step 2: frozen encoder, latent clustering, individual decoders.
    let latents: Vec<Vec<f64>> = td
        .inputs
        .iter()
        .map(|x| base.encoder.forward(&base.encoder_params, x).map(|(rho, _)| rho))
        .collect::<Result<_>>()?;
    let (labels, km) = if k == 1 {
        let entries = (0..n_train).map(|j| (j, vec![1.0])).collect();
        (PseudoLabelSet { entries, radii: vec![0.0] }, None)
    } else {
        let km = kmeans(&latents, k, seeds.kmeans)?;
        (select_pseudo_labels(&latents, &km)?, Some(km))
    };
    let mut shuffle = ChaCha8Rng::seed_from_u64(seeds.shuffle ^ 0x5eed_0002);
    let mut blocks = Vec::with_capacity(k);
    let mut step2_sums = vec![0.0; cfg.epochs[1]];
    let mut step2_errors = Vec::with_capacity(k);
    for i in 0..k {
        let members = labels.members(i);
        let mut u = base.vertices.clone();
        if members.is_empty() {
            log::warn!("cluster {i} has no selected points; its decoder keeps the step-1 matrix");
        } else {
            let (sums, err) = fit_block(&mut u, &members, &latents, &td, base, cfg, &mut shuffle)?;
            for (acc, s) in step2_sums.iter_mut().zip(sums) {
                *acc += s;
            }
            step2_errors.push(err);
        }
        blocks.push(u);
    }
    let selected = labels.len().max(1) as f64;
    let step2_history: Vec<f64> = step2_sums.into_iter().map(|s| s / selected).collect();
    let step2_error = if step2_errors.is_empty() {
        f64::NAN
    } else {
        step2_errors.iter().sum::<f64>() / step2_errors.len() as f64
    };

    // Step 3: assemble U = [U_1 … U_k] and fine-tune everything jointly.
    let columns: Vec<Vec<f64>> = blocks.iter().flat_map(|b| (0..r).map(move |j| b.column(j))).collect();
    let vertices = DenseMatrix::from_columns(&columns)?;
    let cluster = (k > 1).then(|| cluster_net(r, k, seeds.cluster));
    let mut model = PaeModel::new(
        base.encoder.clone(),
        base.encoder_params.clone(),
        cluster,
        vertices,
        base.weight.clone(),
        base.grid.clone(),
    )?;
    let mut point_labels = vec![None; n_train];
    if k > 1 {
        for (j, label) in &labels.entries {
            point_labels[*j] = Some(label.clone());
        }
    }
    let mut shuffle3 = ChaCha8Rng::seed_from_u64(seeds.shuffle ^ 0x5eed_0003);
    let (step3_history, step3_error) = run_joint(&mut model, &td, &point_labels, cfg, cfg.epochs[2], 3, &mut shuffle3)?;
    Ok(TrainOutcome {
        model,
        history: LossHistory {
            steps: [step_one.history.clone(), step2_history, step3_history],
        },
        step_errors: [step_one.train_error, step2_error, step3_error],
        labels,
        kmeans: km,
    })
}

/// Three-step training: a convex autoencoder, individual decoders on pseudo-labelled clusters,
/// then joint fine-tuning of encoder, clustering net and `U = [U_1 … U_k]`.
pub fn train_three_step(data: &SnapshotSet, cfg: &TrainConfig, k: usize, r: usize) -> Result<TrainOutcome> {
    let one = train_step_one(data, cfg, r)?;
    train_steps_two_three(data, cfg, k, &one)
}

#[cfg(test)]
mod tests {
    use super::super::tests::micro_model;
    use super::*;
    use crate::net::{finite_difference_gradient, gradient_relative_error};
    use rand::Rng;

    fn batch(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
    }

    #[test]
    fn end_to_end_gradient_matches_differences() {
        let model = micro_model(24, 2, 2, 11);
        let data = batch(24, 5, 3);
        let labels = vec![(1, vec![1.0, 0.0]), (3, vec![0.0, 1.0])];
        let lambda = 0.3;
        let (ge, gc, gu) = loss_joint_gradient(&model, &data, &labels, lambda).unwrap();
        let fd_e = finite_difference_gradient(
            |p| {
                let mut m = model.clone();
                m.encoder_params = p.to_vec();
                loss_joint(&m, &data, &labels, lambda).unwrap()
            },
            &model.encoder_params,
            1e-6,
        );
        assert!(gradient_relative_error(&ge, &fd_e) < 1e-4);
        let fd_c = finite_difference_gradient(
            |p| {
                let mut m = model.clone();
                m.cluster_params = p.to_vec();
                loss_joint(&m, &data, &labels, lambda).unwrap()
            },
            &model.cluster_params,
            1e-6,
        );
        assert!(gradient_relative_error(&gc, &fd_c) < 1e-4);
        let fd_u = finite_difference_gradient(
            |p| {
                let mut m = model.clone();
                m.vertices.as_mut_slice().copy_from_slice(p);
                loss_joint(&m, &data, &labels, lambda).unwrap()
            },
            model.vertices.as_slice(),
            1e-6,
        );
        assert!(gradient_relative_error(&gu, &fd_u) < 1e-4);
    }

    #[test]
    fn loss_decomposition() {
        let model = micro_model(12, 2, 2, 4);
        let data = batch(12, 4, 9);
        let rec = loss_rec(&model, &data).unwrap();
        assert_eq!(loss_joint(&model, &data, &[], 0.5).unwrap(), rec);
        assert_eq!(loss_joint(&model, &data, &[(0, vec![1.0, 0.0])], 0.0).unwrap(), rec);
        let single = loss_rec(&model, &data[..1]).unwrap();
        let out = model.reconstruct(&data[0]).unwrap();
        let e: Vec<f64> = out.iter().zip(&data[0]).map(|(a, b)| a - b).collect();
        assert!((single - crate::linalg::m_norm(&e, &model.weight).unwrap()).abs() < 1e-14);
        assert!(loss_rec(&model, &[]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            cluster_weight: -1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
