//! Explicit Kronecker products and column-stacking reshapes.
//!
//! `explicit_kron` materializes the full product and exists for testing and
//! oracle checks only; the solvers never call it.

use crate::error::{Error, Result};

use super::matrix::DenseMatrix;

/// Default cap on the number of entries `explicit_kron` will allocate.
pub const DEFAULT_KRON_ENTRY_LIMIT: u128 = 10_000_000;

pub fn explicit_kron(factors: &[DenseMatrix]) -> Result<DenseMatrix> {
    explicit_kron_with_limit(factors, DEFAULT_KRON_ENTRY_LIMIT)
}

pub fn explicit_kron_with_limit(factors: &[DenseMatrix], limit: u128) -> Result<DenseMatrix> {
    let Some(first) = factors.first() else {
        return Err(Error::InvalidInput("explicit_kron needs at least one factor".into()));
    };
    let size: u128 = factors.iter().map(|a| a.rows() as u128 * a.cols() as u128).product();
    if size > limit {
        return Err(Error::SizeGuard {
            context: "explicit_kron",
            size,
            limit,
        });
    }
    let mut acc = first.clone();
    for b in &factors[1..] {
        acc = kron2(&acc, b);
    }
    Ok(acc)
}

fn kron2(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let (br, bc) = b.shape();
    DenseMatrix::from_fn(a.rows() * br, a.cols() * bc, |i, j| {
        a.get(i / br, j / bc) * b.get(i % br, j % bc)
    })
}

/// Stacks the columns of `m` into one vector.
pub fn vec_col_major(m: &DenseMatrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.rows() * m.cols());
    for j in 0..m.cols() {
        for i in 0..m.rows() {
            out.push(m.get(i, j));
        }
    }
    out
}

/// Inverse of [`vec_col_major`]: fills a `rows × cols` matrix column by column.
pub fn reshape_col_major(v: &[f64], rows: usize, cols: usize) -> Result<DenseMatrix> {
    if v.len() != rows * cols {
        return Err(crate::error::mismatch("reshape_col_major", rows * cols, v.len()));
    }
    Ok(DenseMatrix::from_fn(rows, cols, |i, j| v[j * rows + i]))
}
