use super::dense::{backward_substitute_t, cholesky, dot, DenseMatrix};
use crate::error::{check_dim, Error, Result};

/// Symmetric positive-definite mass matrix `M` defining the inner product `⟨v, w⟩_M = vᵀ M w`.
///
/// Diagonal matrices (lumped mass) are stored as their diagonal; general SPD matrices keep
/// a cached lower Cholesky factor `L` with `M = L Lᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub enum SpdWeight {
    Diagonal { diag: Vec<f64>, sqrt_diag: Vec<f64> },
    Dense { matrix: DenseMatrix, factor: DenseMatrix },
}

impl SpdWeight {
    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0).expect("unit weight is SPD")
    }

    pub fn scaled_identity(n: usize, scale: f64) -> Result<Self> {
        Self::diagonal(vec![scale; n])
    }

    pub fn diagonal(diag: Vec<f64>) -> Result<Self> {
        if let Some((i, &d)) = diag.iter().enumerate().find(|(_, d)| !(**d > 0.0) || !d.is_finite()) {
            return Err(Error::NotPositiveDefinite { pivot: i, value: d });
        }
        let sqrt_diag = diag.iter().map(|d| d.sqrt()).collect();
        Ok(Self::Diagonal { diag, sqrt_diag })
    }

    /// Dense SPD weight. Symmetry is checked to `1e-12` relative before factorizing.
    pub fn dense(matrix: DenseMatrix) -> Result<Self> {
        check_dim(matrix.rows(), matrix.cols(), "mass matrix must be square")?;
        if !matrix.is_finite() {
            return Err(Error::NonFinite("mass matrix"));
        }
        let asym = matrix.asymmetry();
        if asym > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "mass matrix is not symmetric (relative asymmetry {asym:e})"
            )));
        }
        let factor = cholesky(&matrix)?;
        Ok(Self::Dense { matrix, factor })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Diagonal { diag, .. } => diag.len(),
            Self::Dense { matrix, .. } => matrix.rows(),
        }
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self, Self::Diagonal { .. })
    }

    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            Self::Diagonal { diag, .. } => DenseMatrix::diagonal(diag),
            Self::Dense { matrix, .. } => matrix.clone(),
        }
    }

    /// `M v`
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), v.len(), "mass matrix product")?;
        Ok(self.apply_unchecked(v))
    }

    pub(crate) fn apply_unchecked(&self, v: &[f64]) -> Vec<f64> {
        match self {
            Self::Diagonal { diag, .. } => diag.iter().zip(v).map(|(d, x)| d * x).collect(),
            Self::Dense { matrix, .. } => matrix.matvec_unchecked(v),
        }
    }

    /// `vᵀ M w`
    pub fn inner(&self, v: &[f64], w: &[f64]) -> Result<f64> {
        check_dim(self.dim(), v.len(), "weighted inner product")?;
        check_dim(self.dim(), w.len(), "weighted inner product")?;
        Ok(self.inner_unchecked(v, w))
    }

    pub(crate) fn inner_unchecked(&self, v: &[f64], w: &[f64]) -> f64 {
        match self {
            Self::Diagonal { diag, .. } => diag.iter().zip(v).zip(w).map(|((d, a), b)| d * a * b).sum(),
            Self::Dense { matrix, .. } => dot(v, &matrix.matvec_unchecked(w)),
        }
    }

    pub(crate) fn norm_unchecked(&self, v: &[f64]) -> f64 {
        self.inner_unchecked(v, v).max(0.0).sqrt()
    }

    /// `‖v - w‖_M`
    pub fn distance(&self, v: &[f64], w: &[f64]) -> Result<f64> {
        check_dim(v.len(), w.len(), "weighted distance")?;
        let diff: Vec<f64> = v.iter().zip(w).map(|(a, b)| a - b).collect();
        m_norm(&diff, self)
    }

    /// `Lᵀ v`, so that `‖Lᵀ v‖₂ = ‖v‖_M`.
    pub fn factor_t_apply(&self, v: &[f64]) -> Vec<f64> {
        match self {
            Self::Diagonal { sqrt_diag, .. } => sqrt_diag.iter().zip(v).map(|(s, x)| s * x).collect(),
            Self::Dense { factor, .. } => factor.matvec_t_unchecked(v),
        }
    }

    /// Solves `Lᵀ x = y`.
    pub fn factor_t_solve(&self, y: &[f64]) -> Vec<f64> {
        match self {
            Self::Diagonal { sqrt_diag, .. } => sqrt_diag.iter().zip(y).map(|(s, x)| x / s).collect(),
            Self::Dense { factor, .. } => backward_substitute_t(factor, y),
        }
    }
}

/// M-norm `sqrt(vᵀ M v)`.
pub fn m_norm(v: &[f64], weight: &SpdWeight) -> Result<f64> {
    check_dim(weight.dim(), v.len(), "m_norm")?;
    Ok(weight.norm_unchecked(v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn euclidean_and_diagonal_cases() {
        assert_eq!(m_norm(&[3.0, 4.0], &SpdWeight::identity(2)).unwrap(), 5.0);
        let w = SpdWeight::diagonal(vec![2.0, 2.0]).unwrap();
        assert!((m_norm(&[1.0, 0.0], &w).unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        assert!(matches!(
            m_norm(&[1.0, 2.0, 3.0], &SpdWeight::identity(2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rejects_non_spd() {
        assert!(SpdWeight::diagonal(vec![1.0, 0.0]).is_err());
        let asym = DenseMatrix::from_row_major(2, 2, vec![2.0, 1.0, 0.0, 2.0]).unwrap();
        assert!(SpdWeight::dense(asym).is_err());
        let indef = DenseMatrix::from_row_major(2, 2, vec![1.0, 3.0, 3.0, 1.0]).unwrap();
        assert!(SpdWeight::dense(indef).is_err());
    }

    #[test]
    fn zero_iff_zero_vector() {
        let w = SpdWeight::dense(DenseMatrix::from_row_major(2, 2, vec![2.0, 0.3, 0.3, 1.0]).unwrap()).unwrap();
        assert_eq!(m_norm(&[0.0, 0.0], &w).unwrap(), 0.0);
        assert!(m_norm(&[1e-8, 0.0], &w).unwrap() > 0.0);
    }
}
