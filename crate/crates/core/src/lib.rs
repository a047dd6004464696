//! Kronecker-structured ridge regression and Tucker decomposition.
//!
//! The design matrix `K = A¹ ⊗ ⋯ ⊗ Aᴺ` is never formed. Exact solvers work
//! through factor SVDs; the fast solver samples rows of `K` from a product of
//! per-factor leverage-score distributions and runs preconditioned Richardson
//! iteration on the sketched normal equations. The same machinery drives every
//! block update of regularized Tucker ALS.

pub mod bench;
pub mod error;
pub mod kron;
pub mod leverage;
pub mod rng;
pub mod solvers;
pub mod tensor;
pub mod tucker;

pub use error::{Error, FormatError, Result};
pub use tensor::{CompactSvd, DenseMatrix, DenseTensor};
