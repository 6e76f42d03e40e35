use crate::error::{check_dim, Error, Result};

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data, rejecting wrong lengths and non-finite entries.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_dim(rows * cols, data.len(), "row-major matrix data")?;
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("dense matrix"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        for c in columns {
            check_dim(rows, c.len(), "column length")?;
        }
        Ok(Self::from_fn(rows, cols, |i, j| columns[j][i]))
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[f64]) {
        for (i, &v) in values.iter().enumerate() {
            self.data[i * self.cols + j] = v;
        }
    }

    /// Leading `count` columns.
    pub fn leading_columns(&self, count: usize) -> Self {
        Self::from_fn(self.rows, count, |i, j| self[(i, j)])
    }

    /// Columns `start..end` (half-open).
    pub fn column_block(&self, start: usize, end: usize) -> Self {
        Self::from_fn(self.rows, end - start, |i, j| self[(i, start + j)])
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `A x`
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.cols, x.len(), "matrix-vector product")?;
        Ok(self.matvec_unchecked(x))
    }

    pub(crate) fn matvec_unchecked(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `Aᵀ x`
    pub fn matvec_t(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.rows, x.len(), "transposed matrix-vector product")?;
        Ok(self.matvec_t_unchecked(x))
    }

    pub(crate) fn matvec_t_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                axpy(xi, self.row(i), &mut out);
            }
        }
        out
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        check_dim(self.cols, other.rows, "matrix product")?;
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (l, &a) in self.row(i).iter().enumerate() {
                if a != 0.0 {
                    axpy(a, other.row(l), out_row);
                }
            }
        }
        Ok(out)
    }

    /// `Aᵀ B` without materializing the transpose.
    pub fn t_matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        check_dim(self.rows, other.rows, "transposed matrix product")?;
        let mut out = DenseMatrix::zeros(self.cols, other.cols);
        for l in 0..self.rows {
            let a_row = self.row(l);
            let b_row = other.row(l);
            for (i, &a) in a_row.iter().enumerate() {
                if a != 0.0 {
                    axpy(a, b_row, &mut out.data[i * other.cols..(i + 1) * other.cols]);
                }
            }
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        check_dim(self.rows, other.rows, "matrix sum rows")?;
        check_dim(self.cols, other.cols, "matrix sum cols")?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    /// `self += s * other`
    pub fn add_scaled(&mut self, s: f64, other: &DenseMatrix) -> Result<()> {
        check_dim(self.rows, other.rows, "matrix axpy rows")?;
        check_dim(self.cols, other.cols, "matrix axpy cols")?;
        axpy(s, &other.data, &mut self.data);
        Ok(())
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Relative asymmetry `max |a_ij - a_ji| / max |a_ij|`.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0_f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst / scale
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += a * x`
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Cholesky factor `L` (lower triangular) with `A = L Lᵀ`.
pub fn cholesky(a: &DenseMatrix) -> Result<DenseMatrix> {
    let n = a.rows();
    check_dim(n, a.cols(), "cholesky of non-square matrix")?;
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for p in 0..j {
            d -= l[(j, p)] * l[(j, p)];
        }
        if !(d > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for p in 0..j {
                s -= l[(i, p)] * l[(j, p)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Solves `L y = b` for lower-triangular `L`.
pub fn forward_substitute(l: &DenseMatrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut y = b.to_vec();
    for i in 0..n {
        let row = l.row(i);
        let s = dot(&row[..i], &y[..i]);
        y[i] = (y[i] - s) / row[i];
    }
    y
}

/// Solves `Lᵀ x = y` for lower-triangular `L`.
pub fn backward_substitute_t(l: &DenseMatrix, y: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut x = y.to_vec();
    for i in (0..n).rev() {
        let mut s = x[i];
        for p in (i + 1)..n {
            s -= l[(p, i)] * x[p];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// LU factorization with partial pivoting, reusable across right-hand sides.
#[derive(Debug, Clone)]
pub struct LuFactor {
    lu: DenseMatrix,
    perm: Vec<usize>,
}

impl LuFactor {
    /// Factorizes `a`; numerically singular matrices are rejected.
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        let n = a.rows();
        check_dim(n, a.cols(), "lu of non-square matrix")?;
        let mut m = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = m.as_slice().iter().fold(0.0_f64, |s, v| s.max(v.abs()));
        if scale == 0.0 || !scale.is_finite() {
            return Err(Error::Singular("zero or non-finite matrix"));
        }
        for col in 0..n {
            let (pivot, pmax) = (col..n)
                .map(|r| (r, m[(r, col)].abs()))
                .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pmax <= scale * 1e-14 {
                return Err(Error::Singular("pivot below threshold"));
            }
            if pivot != col {
                for j in 0..n {
                    let tmp = m[(col, j)];
                    m[(col, j)] = m[(pivot, j)];
                    m[(pivot, j)] = tmp;
                }
                perm.swap(col, pivot);
            }
            let d = m[(col, col)];
            for r in (col + 1)..n {
                let f = m[(r, col)] / d;
                m[(r, col)] = f;
                if f != 0.0 {
                    for j in (col + 1)..n {
                        m[(r, j)] -= f * m[(col, j)];
                    }
                }
            }
        }
        Ok(Self { lu: m, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.lu.rows();
        check_dim(n, b.len(), "lu solve right-hand side")?;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            let s = dot(&row[..i], &x[..i]);
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let s = dot(&row[i + 1..], &x[i + 1..]);
            x[i] = (x[i] - s) / row[i];
        }
        Ok(x)
    }
}

/// One-shot dense solve `A x = b`.
pub fn lu_solve(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    LuFactor::new(a)?.solve(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_reconstructs_spd() {
        let a = DenseMatrix::from_row_major(3, 3, vec![4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0])
            .unwrap();
        let l = cholesky(&a).unwrap();
        let back = l.matmul(&l.transpose()).unwrap();
        assert!(back.max_abs_diff(&a) < 1e-14);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = DenseMatrix::from_row_major(2, 2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(matches!(cholesky(&a), Err(Error::NotPositiveDefinite { pivot: 1, .. })));
    }

    #[test]
    fn lu_solves_and_detects_singularity() {
        let a = DenseMatrix::from_row_major(3, 3, vec![0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 3.0, 0.0, 1.0])
            .unwrap();
        let x = vec![1.0, -2.0, 0.5];
        let b = a.matvec(&x).unwrap();
        let sol = lu_solve(&a, &b).unwrap();
        for (s, e) in sol.iter().zip(&x) {
            assert!((s - e).abs() < 1e-13);
        }
        let sing = DenseMatrix::from_row_major(2, 2, vec![1.0, 2.0, 2.0, 4.0]).unwrap();
        assert!(lu_solve(&sing, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn triangular_solves_invert_cholesky() {
        let a = DenseMatrix::from_row_major(2, 2, vec![2.0, 0.5, 0.5, 1.0]).unwrap();
        let l = cholesky(&a).unwrap();
        let b = [1.0, 3.0];
        let x = backward_substitute_t(&l, &forward_substitute(&l, &b));
        let back = a.matvec(&x).unwrap();
        assert!((back[0] - 1.0).abs() < 1e-14 && (back[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_non_finite_data() {
        assert!(DenseMatrix::from_row_major(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(DenseMatrix::from_row_major(1, 2, vec![1.0]).is_err());
    }
}
