use super::dense::{axpy, dot, DenseMatrix};
use crate::error::{Error, Result};

/// Leading part of a singular value decomposition `X ≈ U diag(σ) Vᵀ`.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    /// `rows × r`, orthonormal columns.
    pub left: DenseMatrix,
    /// Nonincreasing, nonnegative.
    pub singular_values: Vec<f64>,
    /// `cols × r`, orthonormal columns.
    pub right: DenseMatrix,
}

impl TruncatedSvd {
    /// `U diag(σ) Vᵀ`
    pub fn reconstruct(&self) -> DenseMatrix {
        let (m, r) = self.left.shape();
        let n = self.right.rows();
        DenseMatrix::from_fn(m, n, |i, j| {
            (0..r)
                .map(|l| self.left[(i, l)] * self.singular_values[l] * self.right[(j, l)])
                .sum()
        })
    }
}

/// Symmetric eigendecomposition with eigenvalues sorted in decreasing order.
pub(crate) fn sorted_symmetric_eigen(gram: &DenseMatrix) -> (Vec<f64>, DenseMatrix) {
    let n = gram.rows();
    let m = nalgebra::DMatrix::from_row_slice(n, n, gram.as_slice());
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DenseMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

/// Rank-`r` truncated SVD computed from the eigendecomposition of the smaller Gram matrix.
///
/// The factors obtained by back-multiplication are re-orthonormalized (two passes of modified
/// Gram-Schmidt) so that orthonormality holds even for small trailing singular values.
pub fn truncated_svd(x: &DenseMatrix, r: usize) -> Result<TruncatedSvd> {
    let (rows, cols) = x.shape();
    if r == 0 || r > rows.min(cols) {
        return Err(Error::InvalidArgument(format!(
            "rank {r} out of range for a {rows}x{cols} matrix"
        )));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("svd input"));
    }
    let tall = rows >= cols;
    // Eigenvectors of the small Gram matrix give the factor on the short side.
    let gram = if tall { x.t_matmul(x)? } else { x.matmul(&x.transpose())? };
    let (values, vectors) = sorted_symmetric_eigen(&gram);
    let short = vectors.leading_columns(r);
    let singular_values: Vec<f64> = values[..r].iter().map(|&l| l.max(0.0).sqrt()).collect();

    let long_raw = if tall { x.matmul(&short)? } else { x.t_matmul(&short)? };
    let long = orthonormalize_columns(&long_raw, &singular_values, None);
    let (left, right) = if tall { (long, short) } else { (short, long) };
    Ok(TruncatedSvd {
        left,
        singular_values,
        right,
    })
}

/// Orthonormalizes the columns of `a` in the inner product `⟨x, y⟩ = xᵀ G y`
/// (Euclidean when `gram_weight` is `None`).
///
/// Each column is first scaled by `1/scales[j]` when that is meaningful. Columns that collapse
/// numerically are replaced by the next canonical basis vector that survives orthogonalization,
/// keeping the result a full orthonormal set.
pub(crate) fn orthonormalize_columns(
    a: &DenseMatrix,
    scales: &[f64],
    gram_weight: Option<&super::SpdWeight>,
) -> DenseMatrix {
    let (n, r) = a.shape();
    let inner = |x: &[f64], y: &[f64]| match gram_weight {
        Some(w) => w.inner_unchecked(x, y),
        None => dot(x, y),
    };
    let top = scales.iter().cloned().fold(0.0_f64, f64::max);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(r);
    let mut canonical = 0usize;
    for j in 0..r {
        let mut col = a.column(j);
        if scales[j] > top * 1e-12 && scales[j] > 0.0 {
            col.iter_mut().for_each(|c| *c /= scales[j]);
        }
        let mut accepted = false;
        loop {
            let before = inner(&col, &col).sqrt();
            for _ in 0..2 {
                for b in &basis {
                    let p = inner(b, &col);
                    axpy(-p, b, &mut col);
                }
            }
            let after = inner(&col, &col).sqrt();
            if after > 1e-8 * before.max(f64::MIN_POSITIVE) && after > 0.0 {
                col.iter_mut().for_each(|c| *c /= after);
                basis.push(col);
                accepted = true;
            }
            if accepted || canonical >= n {
                break;
            }
            col = vec![0.0; n];
            col[canonical] = 1.0;
            canonical += 1;
        }
        if !accepted {
            basis.push(vec![0.0; n]);
        }
    }
    DenseMatrix::from_columns(&basis).expect("columns have equal length")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orthonormality_defect(q: &DenseMatrix) -> f64 {
        let g = q.t_matmul(q).unwrap();
        g.max_abs_diff(&DenseMatrix::identity(q.cols()))
    }

    #[test]
    fn rank_one_outer_product() {
        let a = [1.0, 2.0, 2.0];
        let b = [3.0, 4.0];
        let x = DenseMatrix::from_fn(3, 2, |i, j| a[i] * b[j]);
        let svd = truncated_svd(&x, 1).unwrap();
        assert!((svd.singular_values[0] - 15.0).abs() < 1e-12);
        assert!(svd.reconstruct().max_abs_diff(&x) < 1e-12);
    }

    #[test]
    fn identity_has_unit_singular_values() {
        let svd = truncated_svd(&DenseMatrix::identity(3), 2).unwrap();
        for s in &svd.singular_values {
            assert!((s - 1.0).abs() < 1e-14);
        }
        assert!(orthonormality_defect(&svd.left) < 1e-12);
        assert!(orthonormality_defect(&svd.right) < 1e-12);
    }

    #[test]
    fn wide_matrix_uses_row_gram() {
        let x = DenseMatrix::from_fn(2, 5, |i, j| ((i + 1) * (j + 2)) as f64 + if i == j { 1.0 } else { 0.0 });
        let svd = truncated_svd(&x, 2).unwrap();
        assert!(svd.reconstruct().max_abs_diff(&x) < 1e-10);
        assert!(orthonormality_defect(&svd.right) < 1e-12);
    }

    #[test]
    fn rank_out_of_range() {
        let x = DenseMatrix::identity(3);
        assert!(truncated_svd(&x, 4).is_err());
        assert!(truncated_svd(&x, 0).is_err());
    }

    #[test]
    fn rank_deficient_columns_are_completed() {
        // rank 1 but r = 2: the second factor column must still be orthonormal
        let x = DenseMatrix::from_fn(4, 3, |i, _| i as f64 + 1.0);
        let svd = truncated_svd(&x, 2).unwrap();
        assert!(orthonormality_defect(&svd.left) < 1e-10);
        assert!(svd.singular_values[1] < 1e-6);
    }
}
