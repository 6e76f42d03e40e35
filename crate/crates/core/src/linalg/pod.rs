use super::dense::DenseMatrix;
use super::svd::{orthonormalize_columns, truncated_svd};
use super::weight::SpdWeight;
use crate::datagen::SnapshotSet;
use crate::error::{check_dim, Error, Result};

/// POD reduced basis together with the weight it is orthonormal in.
#[derive(Debug, Clone, PartialEq)]
pub struct PodModel {
    pub basis: DenseMatrix,
    pub weight: SpdWeight,
}

impl PodModel {
    pub fn rank(&self) -> usize {
        self.basis.cols()
    }

    pub fn dim(&self) -> usize {
        self.basis.rows()
    }

    pub fn encode(&self, v: &[f64]) -> Result<Vec<f64>> {
        Ok(pod_project_reconstruct(&self.basis, &self.weight, v)?.0)
    }

    pub fn reconstruct(&self, v: &[f64]) -> Result<Vec<f64>> {
        Ok(pod_project_reconstruct(&self.basis, &self.weight, v)?.1)
    }

    /// `max |VᵀMV - I|`
    pub fn orthonormality_defect(&self) -> f64 {
        let mv = DenseMatrix::from_columns(
            &(0..self.rank())
                .map(|j| self.weight.apply_unchecked(&self.basis.column(j)))
                .collect::<Vec<_>>(),
        )
        .expect("equal column lengths");
        let g = self.basis.t_matmul(&mv).expect("shapes agree");
        g.max_abs_diff(&DenseMatrix::identity(self.rank()))
    }
}

/// Leading `r` POD modes of the training snapshots, M-orthonormal.
pub fn pod_basis(snapshots: &SnapshotSet, r: usize) -> Result<DenseMatrix> {
    pod_basis_from_states(&snapshots.train_states(), &snapshots.weight, r)
}

/// POD modes of an explicit `n × T` snapshot matrix.
///
/// Computed as the truncated SVD of `Lᵀ X` with `M = L Lᵀ`, mapped back through `L⁻ᵀ`.
pub fn pod_basis_from_states(states: &DenseMatrix, weight: &SpdWeight, r: usize) -> Result<DenseMatrix> {
    check_dim(weight.dim(), states.rows(), "snapshot dimension vs weight")?;
    if r == 0 || r > states.cols() {
        return Err(Error::InvalidArgument(format!(
            "POD rank {r} exceeds snapshot count {}",
            states.cols()
        )));
    }
    if states.as_slice().iter().all(|&x| x == 0.0) {
        return Err(Error::Degenerate("all snapshots are zero".into()));
    }
    let (n, t) = states.shape();
    let mut weighted = DenseMatrix::zeros(n, t);
    for j in 0..t {
        weighted.set_column(j, &weight.factor_t_apply(&states.column(j)));
    }
    let svd = truncated_svd(&weighted, r)?;
    let mut basis = DenseMatrix::zeros(n, r);
    for j in 0..r {
        basis.set_column(j, &weight.factor_t_solve(&svd.left.column(j)));
    }
    Ok(orthonormalize_columns(&basis, &vec![1.0; r], Some(weight)))
}

/// Coordinates `VᵀMv` and the lifted reconstruction `V VᵀMv`.
pub fn pod_project_reconstruct(
    basis: &DenseMatrix,
    weight: &SpdWeight,
    v: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dim(basis.rows(), v.len(), "pod projection")?;
    check_dim(weight.dim(), v.len(), "pod projection weight")?;
    let mv = weight.apply_unchecked(v);
    let coords = basis.matvec_t_unchecked(&mv);
    let recon = basis.matvec_unchecked(&coords);
    Ok((coords, recon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::m_norm;

    #[test]
    fn single_repeated_snapshot() {
        let v0 = vec![1.0, -2.0, 0.5, 3.0];
        let states = DenseMatrix::from_fn(4, 5, |i, _| v0[i]);
        let w = SpdWeight::diagonal(vec![1.0, 2.0, 0.5, 1.5]).unwrap();
        let basis = pod_basis_from_states(&states, &w, 1).unwrap();
        let norm = m_norm(&v0, &w).unwrap();
        let col = basis.column(0);
        let sign = col[0].signum() * v0[0].signum();
        for (b, v) in col.iter().zip(&v0) {
            assert!((b * sign - v / norm).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_snapshots_are_degenerate() {
        let states = DenseMatrix::zeros(3, 4);
        assert!(matches!(
            pod_basis_from_states(&states, &SpdWeight::identity(3), 1),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn range_and_orthogonal_complement() {
        let states = DenseMatrix::from_fn(5, 3, |i, j| ((i * 3 + j * 7) % 5) as f64 - 1.5);
        let w = SpdWeight::diagonal(vec![1.0, 2.0, 3.0, 1.0, 0.5]).unwrap();
        let basis = pod_basis_from_states(&states, &w, 2).unwrap();
        let v: Vec<f64> = basis.matvec(&[0.7, -1.3]).unwrap();
        let (_, rec) = pod_project_reconstruct(&basis, &w, &v).unwrap();
        for (a, b) in rec.iter().zip(&v) {
            assert!((a - b).abs() < 1e-12);
        }
        // M-orthogonal complement: subtract the projection of an arbitrary vector
        let x = vec![1.0, 0.0, -1.0, 2.0, 0.3];
        let (_, px) = pod_project_reconstruct(&basis, &w, &x).unwrap();
        let perp: Vec<f64> = x.iter().zip(&px).map(|(a, b)| a - b).collect();
        let (_, rec_perp) = pod_project_reconstruct(&basis, &w, &perp).unwrap();
        assert!(rec_perp.iter().all(|r| r.abs() < 1e-12));
    }
}
