//! Dense matrices and tensors, unfoldings, n-mode products and dense factorizations.

mod dense;
mod linalg;
mod matrix;
mod oracle;

pub use dense::{devectorize, fold, multi_mode_product, n_mode_product, unfold, vectorize, DenseTensor};
pub use linalg::{compact_svd, invert, pseudo_inverse, sym_eigen, CompactSvd, SymEigen, DEFAULT_RANK_TOL};
pub(crate) use matrix::matmul_into;
pub use matrix::{dot, norm2, norm2_sq, DenseMatrix};
pub use oracle::{explicit_kron, explicit_kron_with_limit, reshape_col_major, vec_col_major, DEFAULT_KRON_ENTRY_LIMIT};
