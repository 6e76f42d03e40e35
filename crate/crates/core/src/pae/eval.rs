use super::{vertex_count, ModelKind, PaeModel};
use crate::clustering::activation_rates;
use crate::datagen::SnapshotSet;
use crate::error::{check_dim, Error, Result};
use crate::linalg::PodModel;
use crate::polytope::relative_polytope_errors;

/// Errors of one snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotError {
    pub index: usize,
    pub time: f64,
    pub train: bool,
    /// `‖ṽ − v‖_M`
    pub reconstruction_error: f64,
    /// `‖ṽ − v‖_M / ‖v‖_M`, NaN for a zero snapshot.
    pub relative_error: f64,
    /// `‖v* − v‖_M` for the best approximation `v*` in the polytope; NaN without a polytope.
    pub polytope_error: f64,
    pub relative_polytope_error: f64,
    pub latent: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub kind: ModelKind,
    pub r: usize,
    pub k: usize,
    pub train_error: f64,
    pub test_error: f64,
    /// Averaged relative polytope error over all snapshots; NaN for POD.
    pub polytope_error: f64,
    /// Empty for POD, whose coordinates are not convex.
    pub activation_rates: Vec<f64>,
    pub encoder_params: usize,
    pub decoder_params: usize,
    pub vertex_count: usize,
    pub rows: Vec<SnapshotError>,
}

fn mean_finite(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.filter(|x| x.is_finite()).fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

fn split_means(rows: &[SnapshotError]) -> (f64, f64) {
    (
        mean_finite(rows.iter().filter(|r| r.train).map(|r| r.relative_error)),
        mean_finite(rows.iter().filter(|r| !r.train).map(|r| r.relative_error)),
    )
}

fn reconstruction_rows(
    data: &SnapshotSet,
    mut f: impl FnMut(&[f64]) -> Result<(Vec<f64>, Vec<f64>)>,
) -> Result<Vec<SnapshotError>> {
    (0..data.len())
        .map(|j| {
            let v = data.snapshot(j);
            let (latent, out) = f(&v)?;
            let e: Vec<f64> = out.iter().zip(&v).map(|(a, b)| a - b).collect();
            let err = data.weight.norm_unchecked(&e);
            let norm = data.weight.norm_unchecked(&v);
            Ok(SnapshotError {
                index: j,
                time: data.times[j],
                train: j < data.split,
                reconstruction_error: err,
                relative_error: if norm > 0.0 { err / norm } else { f64::NAN },
                polytope_error: f64::NAN,
                relative_polytope_error: f64::NAN,
                latent,
            })
        })
        .collect()
}

/// Reconstruction errors on both halves, polytope errors warm-started at the decoder's own
/// coordinates, activation rates and parameter counts.
pub fn evaluate(model: &PaeModel, data: &SnapshotSet, tol: f64, threads: usize) -> Result<EvalReport> {
    check_dim(model.dim(), data.dim(), "model and data dimension")?;
    let mut coords = Vec::with_capacity(data.len());
    let mut rows = reconstruction_rows(data, |v| {
        let rho = model.encode(v)?;
        let zeta = model.decode_coords(&rho)?;
        let out = model.vertices.matvec_unchecked(&zeta);
        coords.push(zeta);
        Ok((rho, out))
    })?;
    let polytope = model.polytope()?;
    let snapshots = data.snapshots();
    let rel = relative_polytope_errors(&snapshots, &polytope, tol, Some(&coords), threads)?;
    for (row, (e, v)) in rows.iter_mut().zip(rel.iter().zip(&snapshots)) {
        let norm = data.weight.norm_unchecked(v);
        match e {
            Some(e) => {
                row.relative_polytope_error = *e;
                row.polytope_error = e * norm;
            }
            None => {
                row.relative_polytope_error = f64::NAN;
                row.polytope_error = 0.0;
            }
        }
    }
    let latents: Vec<Vec<f64>> = rows.iter().map(|r| r.latent.clone()).collect();
    let (train_error, test_error) = split_means(&rows);
    Ok(EvalReport {
        kind: model.kind(),
        r: model.r(),
        k: model.k(),
        train_error,
        test_error,
        polytope_error: mean_finite(rel.iter().flatten().copied()),
        activation_rates: activation_rates(&latents)?,
        encoder_params: model.encoder_param_count(),
        decoder_params: model.decoder_param_count(),
        vertex_count: model.vertex_count(),
        rows,
    })
}

/// POD counterpart of [`evaluate`]; encoder and decoder each hold the `n × r` basis.
pub fn evaluate_pod(pod: &PodModel, data: &SnapshotSet) -> Result<EvalReport> {
    if pod.dim() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: pod.dim(),
            got: data.dim(),
            context: "model and data dimension",
        });
    }
    let rows = reconstruction_rows(data, |v| {
        let c = pod.encode(v)?;
        let out = pod.reconstruct(v)?;
        Ok((c, out))
    })?;
    let (train_error, test_error) = split_means(&rows);
    let r = pod.rank();
    Ok(EvalReport {
        kind: ModelKind::Pod,
        r,
        k: 1,
        train_error,
        test_error,
        polytope_error: f64::NAN,
        activation_rates: Vec::new(),
        encoder_params: pod.dim() * r,
        decoder_params: pod.dim() * r,
        vertex_count: vertex_count(ModelKind::Pod, r, 1),
        rows,
    })
}
