//! Dense and sparse linear algebra, M-weighted norms, truncated SVD and the POD baseline.

mod dense;
mod pod;
mod sparse;
mod svd;
mod weight;

pub use dense::{
    axpy, backward_substitute_t, cholesky, dot, forward_substitute, lu_solve, norm2, sub, DenseMatrix, LuFactor,
};
pub use pod::{pod_basis, pod_basis_from_states, pod_project_reconstruct, PodModel};
pub use sparse::SparseMatrix;
pub use svd::{truncated_svd, TruncatedSvd};
pub use weight::{m_norm, SpdWeight};

