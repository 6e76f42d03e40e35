use crate::error::{check_dim, Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Validates CSR structure: monotone offsets, strictly increasing column indices per row,
    /// finite values.
    pub fn from_csr(
        rows: usize,
        cols: usize,
        offsets: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        check_dim(rows + 1, offsets.len(), "csr offsets")?;
        check_dim(indices.len(), values.len(), "csr values")?;
        if offsets[0] != 0 || offsets[rows] != indices.len() {
            return Err(Error::InvalidArgument("csr offsets must span the index array".into()));
        }
        for r in 0..rows {
            if offsets[r] > offsets[r + 1] {
                return Err(Error::InvalidArgument(format!("csr offsets decrease at row {r}")));
            }
            let row = &indices[offsets[r]..offsets[r + 1]];
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidArgument(format!(
                    "csr column indices not strictly increasing in row {r}"
                )));
            }
            if row.iter().any(|&c| c >= cols) {
                return Err(Error::InvalidArgument(format!("csr column out of range in row {r}")));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sparse matrix"));
        }
        Ok(Self {
            rows,
            cols,
            offsets,
            indices,
            values,
        })
    }

    /// Builds from per-row `(column, value)` lists; duplicate columns are summed.
    pub fn from_rows(cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        offsets.push(0);
        let n_rows = rows.len();
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                if indices.len() > *offsets.last().unwrap() && *indices.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    values.push(v);
                }
            }
            offsets.push(indices.len());
        }
        Self::from_csr(n_rows, cols, offsets, indices, values)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            offsets: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Fraction of stored entries relative to a dense matrix of the same shape.
    pub fn density(&self) -> f64 {
        self.nnz() as f64 / (self.rows as f64 * self.cols as f64)
    }

    pub fn row_entries(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.offsets[r]..self.offsets[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|r| self.row_entries(r).map(|(_, v)| v).sum()).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.cols, x.len(), "sparse matrix-vector product")?;
        Ok((0..self.rows)
            .map(|r| self.row_entries(r).map(|(c, v)| v * x[c]).sum())
            .collect())
    }

    pub fn matvec_t(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.rows, y.len(), "sparse transposed product")?;
        let mut out = vec![0.0; self.cols];
        for (r, &yr) in y.iter().enumerate() {
            for (c, v) in self.row_entries(r) {
                out[c] += v * yr;
            }
        }
        Ok(out)
    }

    /// True when the matrix is square with a single unit entry per row and column.
    pub fn is_permutation(&self) -> bool {
        if self.rows != self.cols || self.nnz() != self.rows {
            return false;
        }
        let mut seen = vec![false; self.cols];
        for r in 0..self.rows {
            let mut it = self.row_entries(r);
            match (it.next(), it.next()) {
                (Some((c, v)), None) if v == 1.0 && !seen[c] => seen[c] = true,
                _ => return false,
            }
        }
        true
    }
}
