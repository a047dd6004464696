//! Implicit Kronecker products `K = A¹ ⊗ ⋯ ⊗ Aᴺ` and fast multiplication by
//! `K`, `Kᵀ` and row-sampled `S·K`.
//!
//! Row and column indices of `K` are row-major multi-indices: row
//! `(i_1, …, i_N)` is `Σ i_n·∏_{k>n} I_k`, and likewise for columns.

use std::collections::{BTreeMap, HashMap};

use crate::error::{mismatch, Error, Result};
use crate::leverage::RowSketch;
use crate::tensor::{dot, matmul_into, DenseMatrix};

#[derive(Clone, Debug)]
pub struct KroneckerFactors {
    factors: Vec<DenseMatrix>,
    rows: usize,
    cols: usize,
}

impl KroneckerFactors {
    pub fn new(factors: Vec<DenseMatrix>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidInput(
                "Kronecker product needs at least one factor".into(),
            ));
        }
        let overflow = || Error::InvalidInput("Kronecker dimensions overflow usize".into());
        let rows = factors
            .iter()
            .try_fold(1usize, |acc, a| acc.checked_mul(a.rows()))
            .ok_or_else(overflow)?;
        let cols = factors
            .iter()
            .try_fold(1usize, |acc, a| acc.checked_mul(a.cols()))
            .ok_or_else(overflow)?;
        Ok(Self { factors, rows, cols })
    }

    pub fn factors(&self) -> &[DenseMatrix] {
        &self.factors
    }

    pub fn into_factors(self) -> Vec<DenseMatrix> {
        self.factors
    }

    pub fn order(&self) -> usize {
        self.factors.len()
    }

    /// `∏ I_n`.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// `∏ R_n`.
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row_dims(&self) -> Vec<usize> {
        self.factors.iter().map(|a| a.rows()).collect()
    }

    pub fn col_dims(&self) -> Vec<usize> {
        self.factors.iter().map(|a| a.cols()).collect()
    }

    /// `Kᵀ` as the product of transposed factors.
    pub fn transposed(&self) -> Self {
        Self {
            factors: self.factors.iter().map(|a| a.transpose()).collect(),
            rows: self.cols,
            cols: self.rows,
        }
    }

    /// Splits a flat row index into its per-factor row indices.
    pub fn row_multi_index(&self, flat: usize) -> Result<Vec<usize>> {
        if flat >= self.rows {
            return Err(Error::IndexOutOfRange {
                context: "row_multi_index",
                index: flat,
                limit: self.rows,
            });
        }
        let mut idx = vec![0; self.order()];
        let mut r = flat;
        for (k, a) in self.factors.iter().enumerate().rev() {
            idx[k] = r % a.rows();
            r /= a.rows();
        }
        Ok(idx)
    }

    /// Row `flat` of `K`.
    pub fn row(&self, flat: usize) -> Result<Vec<f64>> {
        let idx = self.row_multi_index(flat)?;
        Ok(kron_rows(self.factors.iter().zip(&idx).map(|(a, &i)| a.row(i))))
    }
}

/// `r¹ ⊗ r² ⊗ ⋯` of row vectors; the empty product is `[1]`.
fn kron_rows<'a>(rows: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut acc = vec![1.0];
    for r in rows {
        let mut next = Vec::with_capacity(acc.len() * r.len());
        for &x in &acc {
            next.extend(r.iter().map(|y| x * y));
        }
        acc = next;
    }
    acc
}

/// Diagonal sketching matrix with sparse support.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseDiagonal {
    entries: Vec<(usize, f64)>,
}

impl SparseDiagonal {
    /// Entries must have strictly increasing indices and finite values.
    pub fn new(entries: Vec<(usize, f64)>) -> Result<Self> {
        if entries.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::InvalidInput(
                "sparse diagonal indices must be strictly increasing".into(),
            ));
        }
        if entries.iter().any(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidInput("sparse diagonal values must be finite".into()));
        }
        Ok(Self { entries })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            entries: (0..n).map(|i| (i, 1.0)).collect(),
        }
    }

    /// The diagonal `D` with `D² = SᵀS`: repeated samples of one row merge
    /// into a single entry `√(Σ w²)`.
    pub fn from_sketch(sketch: &RowSketch) -> Self {
        let mut sorted = sketch.entries.clone();
        sorted.sort_by_key(|&(i, _)| i);
        let mut entries: Vec<(usize, f64)> = Vec::with_capacity(sorted.len());
        for (i, w) in sorted {
            match entries.last_mut() {
                Some((j, acc)) if *j == i => *acc += w * w,
                _ => entries.push((i, w * w)),
            }
        }
        for e in &mut entries {
            e.1 = e.1.sqrt();
        }
        Self { entries }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.0)
    }

    /// `(D·b)` restricted to the support, aligned with the entries.
    pub fn gather(&self, b: &[f64]) -> Vec<f64> {
        self.entries.iter().map(|&(i, v)| v * b[i]).collect()
    }

    fn check_range(&self, rows: usize, context: &'static str) -> Result<()> {
        match self.entries.last() {
            Some(&(i, _)) if i >= rows => Err(Error::IndexOutOfRange {
                context,
                index: i,
                limit: rows,
            }),
            _ => Ok(()),
        }
    }
}

/// Two-group split of the factor modes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FactorPartition {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub left_product: u128,
    pub right_product: u128,
}

impl FactorPartition {
    pub fn objective(&self) -> u128 {
        self.left_product.max(self.right_product)
    }
}

const PARTITION_MAX_ORDER: usize = 30;

/// Splits modes into two groups minimizing `max(∏_left R_n, ∏_right R_n)`.
///
/// Ties go to the smaller left product, then to the lexicographically
/// smallest left index list.
pub fn balanced_partition(col_dims: &[usize]) -> Result<FactorPartition> {
    let n = col_dims.len();
    if n > PARTITION_MAX_ORDER {
        return Err(Error::SizeGuard {
            context: "balanced_partition",
            size: n as u128,
            limit: PARTITION_MAX_ORDER as u128,
        });
    }
    let total: u128 = col_dims.iter().map(|&r| r as u128).product();
    let mut best: Option<(u128, u128, Vec<usize>)> = None;
    for mask in 0u64..(1u64 << n) {
        let left: Vec<usize> = (0..n).filter(|&k| mask >> k & 1 == 1).collect();
        let lp: u128 = left.iter().map(|&k| col_dims[k] as u128).product();
        let rp = total.checked_div(lp).unwrap_or(0);
        let key = (lp.max(rp), lp, left);
        if best.as_ref().is_none_or(|b| key < *b) {
            best = Some(key);
        }
    }
    let (_, left_product, left) = best.expect("at least the empty subset");
    let right: Vec<usize> = (0..n).filter(|k| !left.contains(k)).collect();
    let right_product = right.iter().map(|&k| col_dims[k] as u128).product();
    Ok(FactorPartition {
        left,
        right,
        left_product,
        right_product,
    })
}

/// `K·B` without forming `K`, peeling off one factor per round from the right.
pub fn kron_mat_mul(factors: &KroneckerFactors, b: &DenseMatrix) -> Result<DenseMatrix> {
    if b.rows() != factors.cols() {
        return Err(mismatch("kron_mat_mul", format!("{} rows", factors.cols()), b.rows()));
    }
    let k = b.cols();
    let out = kron_apply_raw(factors.factors(), b.data().to_vec(), k);
    Ok(DenseMatrix::from_vec_unchecked(factors.rows(), k, out))
}

/// `K·v` for a single vector.
pub fn kron_mat_vec(factors: &KroneckerFactors, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != factors.cols() {
        return Err(mismatch("kron_mat_vec", factors.cols(), v.len()));
    }
    Ok(kron_apply_raw(factors.factors(), v.to_vec(), 1))
}

// Row-major (∏J)×k input; after processing factor m the buffer is laid out as
// [J_0 … J_{m-1}] × [I_m … I_{N-1}] × k.
fn kron_apply_raw(factors: &[DenseMatrix], mut data: Vec<f64>, k: usize) -> Vec<f64> {
    let mut trailing = k;
    let mut leading: usize = factors.iter().map(|a| a.cols()).product();
    for a in factors.iter().rev() {
        let (i_m, j_m) = a.shape();
        leading /= j_m;
        let mut next = vec![0.0; leading * i_m * trailing];
        for blk in 0..leading {
            matmul_into(
                a.data(),
                i_m,
                j_m,
                &data[blk * j_m * trailing..(blk + 1) * j_m * trailing],
                trailing,
                &mut next[blk * i_m * trailing..(blk + 1) * i_m * trailing],
            );
        }
        data = next;
        trailing *= i_m;
    }
    data
}

/// `K·c` for square factors via the vec-trick.
///
/// Each round views `c` as the column-stacked `R_m × (R/R_m)` matrix `C`,
/// forms `A⁽ᵐ⁾·C` and re-stacks its transpose, which rotates the next factor's
/// index into the fastest position. After `N` rounds the original ordering is
/// restored.
pub fn kron_vec_square(factors: &KroneckerFactors, c: &[f64]) -> Result<Vec<f64>> {
    if let Some(a) = factors.factors().iter().find(|a| !a.is_square()) {
        return Err(mismatch(
            "kron_vec_square",
            "square factors",
            format!("{}x{}", a.rows(), a.cols()),
        ));
    }
    if c.len() != factors.cols() {
        return Err(mismatch("kron_vec_square", factors.cols(), c.len()));
    }
    let total = c.len();
    let mut v = c.to_vec();
    let mut next = vec![0.0; total];
    for a in factors.factors().iter().rev() {
        let n = a.rows();
        let rest = total / n;
        // C[i, r] = v[r·n + i]; next = vec(Cᵀ·Aᵀ), i.e. next[i'·rest + r] = (A·C)[i', r].
        for r in 0..rest {
            let col = &v[r * n..(r + 1) * n];
            for ip in 0..n {
                next[ip * rest + r] = dot(a.row(ip), col);
            }
        }
        std::mem::swap(&mut v, &mut next);
    }
    Ok(v)
}

/// Column offsets of one partition group: `offsets[g]` is the contribution of
/// the group's column multi-index `g` (row-major over the group) to the flat
/// column index of `K`.
fn group_offsets(col_dims: &[usize], group: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; col_dims.len()];
    for k in (0..col_dims.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * col_dims[k + 1];
    }
    let mut offsets = vec![0usize];
    for &k in group {
        let mut next = Vec::with_capacity(offsets.len() * col_dims[k]);
        for &o in &offsets {
            next.extend((0..col_dims[k]).map(|j| o + j * strides[k]));
        }
        offsets = next;
    }
    offsets
}

struct SplitRows {
    partition: FactorPartition,
    left_offsets: Vec<usize>,
    right_offsets: Vec<usize>,
}

impl SplitRows {
    fn new(factors: &KroneckerFactors) -> Result<Self> {
        let dims = factors.col_dims();
        let partition = balanced_partition(&dims)?;
        let left_offsets = group_offsets(&dims, &partition.left);
        let right_offsets = group_offsets(&dims, &partition.right);
        Ok(Self {
            partition,
            left_offsets,
            right_offsets,
        })
    }

    /// Row-space keys of the two groups for a row multi-index.
    fn keys(&self, factors: &KroneckerFactors, idx: &[usize]) -> (usize, usize) {
        let key = |group: &[usize]| {
            group
                .iter()
                .fold(0, |acc, &k| acc * factors.factors()[k].rows() + idx[k])
        };
        (key(&self.partition.left), key(&self.partition.right))
    }

    fn group_row(&self, factors: &KroneckerFactors, idx: &[usize], left: bool) -> Vec<f64> {
        let group = if left {
            &self.partition.left
        } else {
            &self.partition.right
        };
        kron_rows(group.iter().map(|&k| factors.factors()[k].row(idx[k])))
    }
}

/// `D·K·c` restricted to the support of `D`, aligned with its entries.
///
/// Splits the modes into a balanced left/right pair, gathers `c` into the
/// `R_left × R_right` matrix `C`, and evaluates each sampled entry as
/// `d·(left row)·C·(right row)ᵀ`, sharing `C·(right row)ᵀ` across samples with
/// the same right multi-index.
pub fn sketched_kron_apply(factors: &KroneckerFactors, s_diag: &SparseDiagonal, c: &[f64]) -> Result<Vec<f64>> {
    if c.len() != factors.cols() {
        return Err(mismatch("sketched_kron_apply", factors.cols(), c.len()));
    }
    s_diag.check_range(factors.rows(), "sketched_kron_apply")?;
    if s_diag.nnz() > factors.rows() / 2 {
        let full = kron_apply_raw(factors.factors(), c.to_vec(), 1);
        return Ok(s_diag.entries().iter().map(|&(i, v)| v * full[i]).collect());
    }
    let split = SplitRows::new(factors)?;
    let rl = split.left_offsets.len();
    let rr = split.right_offsets.len();
    let cmat: Vec<f64> = split
        .left_offsets
        .iter()
        .flat_map(|&ol| split.right_offsets.iter().map(move |&or| c[ol + or]))
        .collect();

    let mut by_right: HashMap<usize, Vec<f64>> = HashMap::new();
    let mut out = Vec::with_capacity(s_diag.nnz());
    for &(flat, d) in s_diag.entries() {
        let idx = factors.row_multi_index(flat)?;
        let (_, beta) = split.keys(factors, &idx);
        let w = by_right.entry(beta).or_insert_with(|| {
            let right = split.group_row(factors, &idx, false);
            (0..rl).map(|g| dot(&cmat[g * rr..(g + 1) * rr], &right)).collect()
        });
        let left = split.group_row(factors, &idx, true);
        out.push(d * dot(&left, w));
    }
    Ok(out)
}

/// `Kᵀ·D·b` where `b_values[t]` is the `b` entry at the `t`-th support index of `D`.
///
/// Accumulates `u_α = Σ d·b·(right row)` per left multi-index `α`, then forms
/// `Σ_α (left row)_α ⊗ u_α` and scatters it back through the column offsets.
pub fn sketched_kron_transpose_apply(
    factors: &KroneckerFactors,
    s_diag: &SparseDiagonal,
    b_values: &[f64],
) -> Result<Vec<f64>> {
    if b_values.len() != s_diag.nnz() {
        return Err(mismatch("sketched_kron_transpose_apply", s_diag.nnz(), b_values.len()));
    }
    s_diag.check_range(factors.rows(), "sketched_kron_transpose_apply")?;
    if s_diag.nnz() > factors.rows() / 2 {
        let mut dense = vec![0.0; factors.rows()];
        for (&(i, d), &b) in s_diag.entries().iter().zip(b_values) {
            dense[i] = d * b;
        }
        let t = factors.transposed();
        return Ok(kron_apply_raw(t.factors(), dense, 1));
    }
    let split = SplitRows::new(factors)?;
    let rl = split.left_offsets.len();
    let rr = split.right_offsets.len();

    // Left rows are kept alongside their accumulated right-side sums; ordered
    // so the final summation order does not depend on hashing.
    let mut by_left: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (&(flat, d), &b) in s_diag.entries().iter().zip(b_values) {
        let scale = d * b;
        if scale == 0.0 {
            continue;
        }
        let idx = factors.row_multi_index(flat)?;
        let (alpha, _) = split.keys(factors, &idx);
        let right = split.group_row(factors, &idx, false);
        let (_, u) = by_left
            .entry(alpha)
            .or_insert_with(|| (split.group_row(factors, &idx, true), vec![0.0; rr]));
        for (ui, ri) in u.iter_mut().zip(&right) {
            *ui += scale * ri;
        }
    }

    let mut out = vec![0.0; factors.cols()];
    for (left, u) in by_left.values() {
        for g in 0..rl {
            let l = left[g];
            if l == 0.0 {
                continue;
            }
            let base = split.left_offsets[g];
            for (h, &uh) in u.iter().enumerate() {
                out[base + split.right_offsets[h]] += l * uh;
            }
        }
    }
    Ok(out)
}

/// `Kᵀ·D²·K·c`, the sketched Gram operator.
pub fn sketched_gram_apply(factors: &KroneckerFactors, s_diag: &SparseDiagonal, c: &[f64]) -> Result<Vec<f64>> {
    let dkc = sketched_kron_apply(factors, s_diag, c)?;
    sketched_kron_transpose_apply(factors, s_diag, &dkc)
}

/// Dense `S·K`: row `t` is `w_t·(a¹_{i_1:} ⊗ ⋯ ⊗ aᴺ_{i_N:})`.
pub fn sketch_rows_of_kron(factors: &KroneckerFactors, sketch: &RowSketch) -> Result<DenseMatrix> {
    let r = factors.cols();
    let mut data = Vec::with_capacity(sketch.entries.len() * r);
    for &(flat, w) in &sketch.entries {
        data.extend(factors.row(flat)?.into_iter().map(|v| w * v));
    }
    Ok(DenseMatrix::from_vec_unchecked(sketch.entries.len(), r, data))
}
