//! Section layouts of the artifact kinds stored in a container.

use std::path::Path;

use super::{Container, StorageError};
use crate::datagen::{BurgersParams, GridMap, SnapshotSet};
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, PodModel, SparseMatrix, SpdWeight};
use crate::lpv::LpvSystem;
use crate::net::{ConvEncoderConfig, Encoder, EncoderArch};
use crate::pae::{cluster_net, PaeModel};
use crate::polytope::Polytope;

/// Value of the `artifact` section.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArtifactKind {
    Snapshots = 1,
    Pae = 2,
    Pod = 3,
    Polytope = 4,
    Lpv = 5,
}

impl ArtifactKind {
    fn from_code(code: usize) -> Option<Self> {
        Some(match code {
            1 => Self::Snapshots,
            2 => Self::Pae,
            3 => Self::Pod,
            4 => Self::Polytope,
            5 => Self::Lpv,
            _ => return None,
        })
    }
}

pub fn artifact_kind(c: &Container) -> Result<ArtifactKind> {
    let code = c.count("artifact")?;
    ArtifactKind::from_code(code).ok_or_else(|| StorageError::Malformed(format!("unknown artifact code {code}")).into())
}

fn expect_kind(c: &Container, kind: ArtifactKind) -> Result<()> {
    let found = artifact_kind(c)?;
    if found != kind {
        return Err(StorageError::Malformed(format!("expected a {kind:?} artifact, found {found:?}")).into());
    }
    Ok(())
}

fn as_index(x: f64, what: &str) -> Result<usize> {
    if x >= 0.0 && x.fract() == 0.0 && x < 9.0e15 {
        Ok(x as usize)
    } else {
        Err(StorageError::Malformed(format!("{what} holds {x}, not a count")).into())
    }
}

fn indices(data: &[f64], what: &str) -> Result<Vec<usize>> {
    data.iter().map(|&x| as_index(x, what)).collect()
}

fn put_matrix(c: &mut Container, name: &str, m: &DenseMatrix) {
    c.insert(name, vec![m.rows(), m.cols()], m.as_slice().to_vec());
}

fn get_matrix(c: &Container, name: &str) -> Result<DenseMatrix> {
    let s = c.require(name)?;
    let [rows, cols] = s.shape[..] else {
        return Err(StorageError::Malformed(format!("section '{name}' is not a matrix")).into());
    };
    DenseMatrix::from_row_major(rows, cols, s.data.clone())
}

fn put_weight(c: &mut Container, w: &SpdWeight) {
    match w {
        SpdWeight::Diagonal { diag, .. } => c.insert_vec("weight.diag", diag.clone()),
        SpdWeight::Dense { matrix, .. } => put_matrix(c, "weight.dense", matrix),
    }
}

fn get_weight(c: &Container) -> Result<SpdWeight> {
    if let Some(s) = c.get("weight.diag") {
        SpdWeight::diagonal(s.data.clone())
    } else if c.get("weight.dense").is_some() {
        SpdWeight::dense(get_matrix(c, "weight.dense")?)
    } else {
        Err(StorageError::MissingSection("weight.diag".into()).into())
    }
}

fn put_grid(c: &mut Container, g: &GridMap) {
    let op = &g.operator;
    c.insert_vec(
        "grid.shape",
        vec![g.channels as f64, g.height as f64, g.width as f64, op.rows() as f64, op.cols() as f64],
    );
    c.insert_vec("grid.offsets", op.offsets().iter().map(|&x| x as f64).collect());
    c.insert_vec("grid.indices", op.indices().iter().map(|&x| x as f64).collect());
    c.insert_vec("grid.values", op.values().to_vec());
}

fn get_grid(c: &Container) -> Result<Option<GridMap>> {
    let Some(shape) = c.get("grid.shape") else {
        return Ok(None);
    };
    let s = indices(&shape.data, "grid.shape")?;
    let [ch, h, w, rows, cols] = s[..] else {
        return Err(StorageError::Malformed("grid.shape needs five entries".into()).into());
    };
    let op = SparseMatrix::from_csr(
        rows,
        cols,
        indices(&c.require("grid.offsets")?.data, "grid.offsets")?,
        indices(&c.require("grid.indices")?.data, "grid.indices")?,
        c.require("grid.values")?.data.clone(),
    )?;
    Ok(Some(GridMap::from_operator(op, ch, h, w)?))
}

fn encode_arch(arch: &EncoderArch) -> Vec<f64> {
    match arch {
        EncoderArch::Conv(cfg) => [
            0,
            cfg.channels,
            cfg.height,
            cfg.width,
            cfg.stem,
            cfg.blocks[0],
            cfg.blocks[1],
            cfg.blocks[2],
            cfg.expansion,
            cfg.kernel,
            cfg.latent,
        ]
        .iter()
        .map(|&x| x as f64)
        .collect(),
        EncoderArch::Mlp { input, hidden, latent } => {
            let mut out = vec![1.0, *input as f64, *latent as f64];
            out.extend(hidden.iter().map(|&h| h as f64));
            out
        }
    }
}

fn decode_arch(data: &[f64]) -> Result<EncoderArch> {
    let v = indices(data, "pae.arch")?;
    match v[..] {
        [0, channels, height, width, stem, b0, b1, b2, expansion, kernel, latent] => Ok(EncoderArch::Conv(ConvEncoderConfig {
            channels,
            height,
            width,
            stem,
            blocks: [b0, b1, b2],
            expansion,
            kernel,
            latent,
        })),
        [1, input, latent, ref hidden @ ..] => Ok(EncoderArch::Mlp {
            input,
            hidden: hidden.to_vec(),
            latent,
        }),
        _ => Err(StorageError::Malformed("unrecognised encoder architecture".into()).into()),
    }
}

pub fn snapshots_to_container(data: &SnapshotSet) -> Container {
    let mut c = Container::new();
    c.insert_scalar("artifact", ArtifactKind::Snapshots as usize as f64);
    put_matrix(&mut c, "states", &data.states);
    c.insert_vec("times", data.times.clone());
    c.insert_scalar("split", data.split as f64);
    put_weight(&mut c, &data.weight);
    if let Some((ch, h, w)) = data.grid {
        c.insert_vec("tensor_shape", vec![ch as f64, h as f64, w as f64]);
    }
    if let Some(p) = &data.system {
        c.insert_vec("burgers", vec![p.n as f64, p.viscosity, p.length]);
    }
    c
}

pub fn snapshots_from_container(c: &Container) -> Result<SnapshotSet> {
    expect_kind(c, ArtifactKind::Snapshots)?;
    let mut set = SnapshotSet::new(
        get_matrix(c, "states")?,
        c.require("times")?.data.clone(),
        get_weight(c)?,
        c.count("split")?,
    )?;
    if let Some(s) = c.get("tensor_shape") {
        let t = indices(&s.data, "tensor_shape")?;
        let [ch, h, w] = t[..] else {
            return Err(StorageError::Malformed("tensor_shape needs three entries".into()).into());
        };
        set.grid = Some((ch, h, w));
    }
    if let Some(s) = c.get("burgers") {
        let [n, viscosity, length] = s.data[..] else {
            return Err(StorageError::Malformed("burgers needs three entries".into()).into());
        };
        set.system = Some(BurgersParams {
            n: as_index(n, "burgers.n")?,
            viscosity,
            length,
        });
    }
    Ok(set)
}

pub fn pae_to_container(model: &PaeModel) -> Container {
    let mut c = Container::new();
    c.insert_scalar("artifact", ArtifactKind::Pae as usize as f64);
    c.insert_vec("pae.arch", encode_arch(&model.arch()));
    c.insert_vec("pae.encoder_params", model.encoder_params.clone());
    c.insert_scalar("pae.k", model.k() as f64);
    c.insert_vec("pae.cluster_params", model.cluster_params.clone());
    put_matrix(&mut c, "pae.vertices", &model.vertices);
    put_weight(&mut c, &model.weight);
    if let Some(g) = &model.grid {
        put_grid(&mut c, g);
    }
    c
}

pub fn pae_from_container(c: &Container) -> Result<PaeModel> {
    expect_kind(c, ArtifactKind::Pae)?;
    let arch = decode_arch(&c.require("pae.arch")?.data)?;
    let (encoder, fresh) = Encoder::build(&arch, 0)?;
    let encoder_params = c.require("pae.encoder_params")?.data.clone();
    if encoder_params.len() != fresh.len() {
        return Err(StorageError::Malformed(format!(
            "encoder holds {} parameters, architecture needs {}",
            encoder_params.len(),
            fresh.len()
        ))
        .into());
    }
    let k = c.count("pae.k")?;
    let cluster_params = c.require("pae.cluster_params")?.data.clone();
    let cluster = if k > 1 {
        let (net, fresh) = cluster_net(arch.latent(), k, 0);
        if cluster_params.len() != fresh.len() {
            return Err(StorageError::Malformed("cluster net parameter count does not match".into()).into());
        }
        Some((net, cluster_params))
    } else {
        None
    };
    PaeModel::new(encoder, encoder_params, cluster, get_matrix(c, "pae.vertices")?, get_weight(c)?, get_grid(c)?)
}

pub fn pod_to_container(model: &PodModel) -> Container {
    let mut c = Container::new();
    c.insert_scalar("artifact", ArtifactKind::Pod as usize as f64);
    put_matrix(&mut c, "pod.basis", &model.basis);
    put_weight(&mut c, &model.weight);
    c
}

pub fn pod_from_container(c: &Container) -> Result<PodModel> {
    expect_kind(c, ArtifactKind::Pod)?;
    let basis = get_matrix(c, "pod.basis")?;
    let weight = get_weight(c)?;
    if basis.rows() != weight.dim() {
        return Err(Error::DimensionMismatch {
            expected: weight.dim(),
            got: basis.rows(),
            context: "pod basis rows",
        });
    }
    Ok(PodModel { basis, weight })
}

pub fn polytope_to_container(p: &Polytope) -> Container {
    let mut c = Container::new();
    c.insert_scalar("artifact", ArtifactKind::Polytope as usize as f64);
    put_matrix(&mut c, "polytope.vertices", p.vertices());
    put_weight(&mut c, p.weight());
    c
}

pub fn polytope_from_container(c: &Container) -> Result<Polytope> {
    expect_kind(c, ArtifactKind::Polytope)?;
    Polytope::new(get_matrix(c, "polytope.vertices")?, get_weight(c)?)
}

/// Vertex matrices go to `lpv.A.<i>`, the vertices to `lpv.U`.
pub fn lpv_to_container(lpv: &LpvSystem) -> Container {
    let mut c = Container::new();
    c.insert_scalar("artifact", ArtifactKind::Lpv as usize as f64);
    c.insert_scalar("lpv.count", lpv.vertex_count() as f64);
    put_matrix(&mut c, "lpv.U", &lpv.vertices);
    for (i, a) in lpv.matrices.iter().enumerate() {
        put_matrix(&mut c, &format!("lpv.A.{i}"), a);
    }
    c
}

pub fn lpv_from_container(c: &Container) -> Result<LpvSystem> {
    expect_kind(c, ArtifactKind::Lpv)?;
    let count = c.count("lpv.count")?;
    let matrices = (0..count).map(|i| get_matrix(c, &format!("lpv.A.{i}"))).collect::<Result<Vec<_>>>()?;
    LpvSystem::new(matrices, get_matrix(c, "lpv.U")?)
}

/// A model read from disk.
#[derive(Debug, Clone, PartialEq)]
pub enum StoredModel {
    Pae(PaeModel),
    Pod(PodModel),
}

pub fn save_snapshots(data: &SnapshotSet, path: &Path) -> Result<()> {
    Ok(snapshots_to_container(data).write_atomic(path)?)
}

pub fn load_snapshots(path: &Path) -> Result<SnapshotSet> {
    snapshots_from_container(&Container::read(path)?)
}

pub fn save_pae(model: &PaeModel, path: &Path) -> Result<()> {
    Ok(pae_to_container(model).write_atomic(path)?)
}

pub fn load_pae(path: &Path) -> Result<PaeModel> {
    pae_from_container(&Container::read(path)?)
}

pub fn save_pod(model: &PodModel, path: &Path) -> Result<()> {
    Ok(pod_to_container(model).write_atomic(path)?)
}

pub fn load_pod(path: &Path) -> Result<PodModel> {
    pod_from_container(&Container::read(path)?)
}

pub fn save_polytope(p: &Polytope, path: &Path) -> Result<()> {
    Ok(polytope_to_container(p).write_atomic(path)?)
}

pub fn load_polytope(path: &Path) -> Result<Polytope> {
    polytope_from_container(&Container::read(path)?)
}

pub fn save_lpv(lpv: &LpvSystem, path: &Path) -> Result<()> {
    Ok(lpv_to_container(lpv).write_atomic(path)?)
}

pub fn load_lpv(path: &Path) -> Result<LpvSystem> {
    lpv_from_container(&Container::read(path)?)
}

/// Loads a PAE or POD model, whichever the file holds.
pub fn load_model(path: &Path) -> Result<StoredModel> {
    let c = Container::read(path)?;
    match artifact_kind(&c)? {
        ArtifactKind::Pae => Ok(StoredModel::Pae(pae_from_container(&c)?)),
        ArtifactKind::Pod => Ok(StoredModel::Pod(pod_from_container(&c)?)),
        other => Err(StorageError::Malformed(format!("{other:?} artifact is not a model")).into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pae::tests::micro_model;

    fn random_set() -> SnapshotSet {
        let states = DenseMatrix::from_fn(5, 7, |i, j| ((i * 7 + j) as f64 * 0.77).sin() / 3.0);
        let mut set = SnapshotSet::new(states, (0..7).map(|t| t as f64 * 0.1).collect(), SpdWeight::diagonal(vec![0.5, 1.0, 2.0, 0.25, 1.5]).unwrap(), 4).unwrap();
        set.system = Some(BurgersParams {
            n: 5,
            viscosity: 0.01,
            length: 1.0,
        });
        set
    }

    #[test]
    fn snapshot_round_trip_is_bitwise() {
        let set = random_set();
        let bytes = snapshots_to_container(&set).to_bytes();
        let back = snapshots_from_container(&Container::from_bytes(&bytes).unwrap()).unwrap();
        assert_eq!(back, set);
        assert_eq!(snapshots_to_container(&back).to_bytes(), bytes);
    }

    #[test]
    fn dense_weight_round_trip() {
        let m = DenseMatrix::from_row_major(2, 2, vec![2.0, 0.5, 0.5, 1.0]).unwrap();
        let p = Polytope::new(DenseMatrix::identity(2), SpdWeight::dense(m).unwrap()).unwrap();
        let back = polytope_from_container(&polytope_to_container(&p)).unwrap();
        assert_eq!(back.vertices(), p.vertices());
        assert_eq!(back.weight(), p.weight());
    }

    #[test]
    fn pae_round_trip_with_grid() {
        let mut model = micro_model(24, 2, 2, 5);
        model.grid = Some(GridMap::identity(1, 4, 6));
        let back = pae_from_container(&pae_to_container(&model)).unwrap();
        assert_eq!(back, model);
        let v: Vec<f64> = (0..24).map(|i| (i as f64).cos()).collect();
        assert_eq!(back.reconstruct(&v).unwrap(), model.reconstruct(&v).unwrap());
    }

    #[test]
    fn wrong_kind_rejected() {
        let c = snapshots_to_container(&random_set());
        assert!(pae_from_container(&c).is_err());
        assert!(load_model(Path::new("/nonexistent/model.paeb")).is_err());
    }
}
