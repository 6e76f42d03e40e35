use crate::error::{check_dim, Error, Result};
use crate::linalg::SparseMatrix;

/// Axis-aligned rectangle covered by the target grid; nodes include the boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridExtent {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl GridExtent {
    pub fn unit_square() -> Self {
        Self {
            x_min: -1.0,
            x_max: 1.0,
            y_min: -1.0,
            y_max: 1.0,
        }
    }

    fn x(&self, w: usize, width: usize) -> f64 {
        if width == 1 {
            return self.x_min;
        }
        self.x_min + (self.x_max - self.x_min) * w as f64 / (width - 1) as f64
    }

    fn y(&self, h: usize, height: usize) -> f64 {
        if height == 1 {
            return self.y_min;
        }
        self.y_min + (self.y_max - self.y_min) * h as f64 / (height - 1) as f64
    }
}

/// Sparse operator mapping a state vector to a `C × H × W` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    pub operator: SparseMatrix,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl GridMap {
    /// Identity map for states already laid out as `C × H × W`.
    pub fn identity(channels: usize, height: usize, width: usize) -> Self {
        Self {
            operator: SparseMatrix::identity(channels * height * width),
            channels,
            height,
            width,
        }
    }

    pub fn from_operator(operator: SparseMatrix, channels: usize, height: usize, width: usize) -> Result<Self> {
        check_dim(channels * height * width, operator.rows(), "grid map rows")?;
        Ok(Self {
            operator,
            channels,
            height,
            width,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.operator.cols()
    }

    pub fn tensor_shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    /// `I_C v`
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.operator.matvec(v)
    }

    /// `I_Cᵀ g`
    pub fn apply_t(&self, g: &[f64]) -> Result<Vec<f64>> {
        self.operator.matvec_t(g)
    }

    pub fn sparsity(&self) -> f64 {
        self.operator.density()
    }
}

fn distinct_sorted(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
    v.dedup();
    v
}

/// Locates `x` in the sorted breakpoints; returns the cell index and the local coordinate in `[0, 1]`.
fn locate(axis: &[f64], x: f64) -> Option<(usize, f64)> {
    let (&first, &last) = (axis.first()?, axis.last()?);
    if x < first || x > last {
        return None;
    }
    if axis.len() == 1 {
        return Some((0, 0.0));
    }
    let upper = axis.partition_point(|&a| a <= x).clamp(1, axis.len() - 1);
    let i = upper - 1;
    let t = (x - axis[i]) / (axis[i + 1] - axis[i]);
    Some((i, t.clamp(0.0, 1.0)))
}

/// Bilinear interpolation operator from scattered-order source nodes to a tensor grid.
///
/// Source nodes must form a (possibly non-uniform) tensor-product grid, in any order; state
/// vectors are laid out channel-major, `v[c · N + s]` for source node `s`. Each grid node gets the
/// bilinear weights of its enclosing source cell, so every row sums to one.
pub fn build_grid_interpolator(
    sources: &[(f64, f64)],
    (channels, height, width): (usize, usize, usize),
    extent: GridExtent,
) -> Result<GridMap> {
    if sources.is_empty() || channels == 0 || height == 0 || width == 0 {
        return Err(Error::InvalidArgument("empty source set or grid".into()));
    }
    if sources.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::NonFinite("source coordinates"));
    }
    let xs = distinct_sorted(sources.iter().map(|p| p.0));
    let ys = distinct_sorted(sources.iter().map(|p| p.1));
    if xs.len() * ys.len() != sources.len() {
        return Err(Error::InvalidArgument(format!(
            "source nodes do not form a tensor grid ({} x-values, {} y-values, {} nodes)",
            xs.len(),
            ys.len(),
            sources.len()
        )));
    }
    let mut lookup = vec![usize::MAX; sources.len()];
    for (s, &(x, y)) in sources.iter().enumerate() {
        let i = xs.partition_point(|&a| a < x);
        let j = ys.partition_point(|&a| a < y);
        let slot = &mut lookup[j * xs.len() + i];
        if *slot != usize::MAX {
            return Err(Error::InvalidArgument(format!("duplicate source node {s} at ({x}, {y})")));
        }
        *slot = s;
    }
    let n_src = sources.len();
    let at = |i: usize, j: usize| lookup[j * xs.len() + i];

    let mut rows = Vec::with_capacity(channels * height * width);
    for c in 0..channels {
        for h in 0..height {
            for w in 0..width {
                let (x, y) = (extent.x(w, width), extent.y(h, height));
                let node = (c * height + h) * width + w;
                let (Some((i, tx)), Some((j, ty))) = (locate(&xs, x), locate(&ys, y)) else {
                    return Err(Error::OutsideHull { node, x, y });
                };
                let i1 = (i + 1).min(xs.len() - 1);
                let j1 = (j + 1).min(ys.len() - 1);
                let corners = [
                    (at(i, j), (1.0 - tx) * (1.0 - ty)),
                    (at(i1, j), tx * (1.0 - ty)),
                    (at(i, j1), (1.0 - tx) * ty),
                    (at(i1, j1), tx * ty),
                ];
                let row: Vec<(usize, f64)> = corners
                    .into_iter()
                    .filter(|&(_, wgt)| wgt != 0.0)
                    .map(|(s, wgt)| (c * n_src + s, wgt))
                    .collect();
                rows.push(row);
            }
        }
    }
    let operator = SparseMatrix::from_rows(channels * n_src, rows)?;
    GridMap::from_operator(operator, channels, height, width)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor_nodes(xs: &[f64], ys: &[f64]) -> Vec<(f64, f64)> {
        ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, y))).collect()
    }

    #[test]
    fn coinciding_nodes_give_a_permutation() {
        let ext = GridExtent::unit_square();
        let xs: Vec<f64> = (0..5).map(|w| ext.x(w, 5)).collect();
        let ys: Vec<f64> = (0..4).map(|h| ext.y(h, 4)).collect();
        let mut nodes = tensor_nodes(&xs, &ys);
        nodes.reverse();
        let map = build_grid_interpolator(&nodes, (2, 4, 5), ext).unwrap();
        assert!(map.operator.is_permutation());
    }

    #[test]
    fn constant_and_linear_fields_are_reproduced() {
        let xs = [-1.0, -0.6, 0.1, 0.4, 1.0];
        let ys = [-1.0, -0.2, 0.5, 1.0];
        let nodes = tensor_nodes(&xs, &ys);
        let ext = GridExtent::unit_square();
        let map = build_grid_interpolator(&nodes, (1, 7, 9), ext).unwrap();
        for s in map.operator.row_sums() {
            assert!((s - 1.0).abs() < 1e-14);
        }
        let (a, b, c) = (0.7, -1.3, 0.25);
        let field: Vec<f64> = nodes.iter().map(|(x, y)| a * x + b * y + c).collect();
        let out = map.apply(&field).unwrap();
        for h in 0..7 {
            for w in 0..9 {
                let expected = a * ext.x(w, 9) + b * ext.y(h, 7) + c;
                assert!((out[h * 9 + w] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn node_outside_hull_is_named() {
        let nodes = tensor_nodes(&[-0.5, 0.0, 0.5], &[-1.0, 1.0]);
        let err = build_grid_interpolator(&nodes, (1, 3, 3), GridExtent::unit_square()).unwrap_err();
        match err {
            Error::OutsideHull { node, x, .. } => {
                assert_eq!(node, 0);
                assert_eq!(x, -1.0);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn non_tensor_sources_rejected() {
        let nodes = vec![(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)];
        assert!(build_grid_interpolator(&nodes, (1, 2, 2), GridExtent::unit_square()).is_err());
    }

    #[test]
    fn sparsity_below_one_percent_at_desk_scale() {
        let xs: Vec<f64> = (0..40).map(|i| -1.0 + 2.0 * (i as f64 / 39.0).powf(1.2)).collect();
        let ys: Vec<f64> = (0..40).map(|i| -1.0 + 2.0 * i as f64 / 39.0).collect();
        let map = build_grid_interpolator(&tensor_nodes(&xs, &ys), (2, 32, 32), GridExtent::unit_square()).unwrap();
        assert!(map.sparsity() < 0.01, "density {}", map.sparsity());
    }
}
