//! Dense factorizations: compact SVD (one-sided Jacobi), symmetric
//! eigendecomposition (cyclic Jacobi), pseudoinverse and small inverses.

use super::matrix::{dot, DenseMatrix};
use crate::error::{mismatch, Error, Result};

/// Default relative threshold below which singular values are treated as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

const MAX_SWEEPS: usize = 100;
// Relative orthogonality threshold for a column pair to count as converged.
const JACOBI_TOL: f64 = 1e-15;

/// Compact singular value decomposition `a = u · diag(sigma) · vᵀ`.
#[derive(Clone, Debug)]
pub struct CompactSvd {
    /// `n × r`, orthonormal columns.
    pub u: DenseMatrix,
    /// Positive singular values, non-increasing.
    pub sigma: Vec<f64>,
    /// `d × r`, orthonormal columns.
    pub v: DenseMatrix,
    pub rank_tol: f64,
}

impl CompactSvd {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma.first().copied().unwrap_or(0.0)
    }

    /// `u · diag(sigma) · vᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let us = DenseMatrix::from_fn(self.u.rows(), self.rank(), |i, k| self.u.get(i, k) * self.sigma[k]);
        us.matmul(&self.v.transpose())
    }
}

/// Compact SVD with singular values `<= rank_tol * sigma_max` discarded.
pub fn compact_svd(a: &DenseMatrix, rank_tol: f64) -> Result<CompactSvd> {
    if !(0.0..1.0).contains(&rank_tol) {
        return Err(Error::InvalidInput(format!("rank_tol {rank_tol} outside [0, 1)")));
    }
    if a.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("compact_svd: non-finite entry".into()));
    }
    if a.rows() >= a.cols() {
        let (u, sigma, v) = tall_jacobi_svd(a, rank_tol)?;
        Ok(CompactSvd { u, sigma, v, rank_tol })
    } else {
        let (v, sigma, u) = tall_jacobi_svd(&a.transpose(), rank_tol)?;
        Ok(CompactSvd { u, sigma, v, rank_tol })
    }
}

/// One-sided (Hestenes) Jacobi on a matrix with `rows >= cols`.
fn tall_jacobi_svd(a: &DenseMatrix, rank_tol: f64) -> Result<(DenseMatrix, Vec<f64>, DenseMatrix)> {
    let (m, n) = a.shape();
    let mut w: Vec<Vec<f64>> = (0..n).map(|j| a.col(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    let mut norms: Vec<f64> = w.iter().map(|c| dot(c, c)).collect();

    let mut converged = n < 2;
    let mut sweeps = 0;
    while !converged {
        if sweeps == MAX_SWEEPS {
            return Err(Error::NumericalFailure {
                context: "compact_svd",
                iterations: sweeps,
                detail: "one-sided Jacobi did not converge".into(),
            });
        }
        sweeps += 1;
        converged = true;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha = norms[p];
                let beta = norms[q];
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma = dot(&w[p], &w[q]);
                let scale = (alpha * beta).sqrt();
                if gamma.abs() <= JACOBI_TOL * scale || scale < f64::MIN_POSITIVE {
                    continue;
                }
                converged = false;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (wp, wq) = pair_mut(&mut w, p, q);
                rotate(wp, wq, c, s);
                let (vp, vq) = pair_mut(&mut v, p, q);
                rotate(vp, vq, c, s);
                norms[p] = dot(&w[p], &w[p]);
                norms[q] = dot(&w[q], &w[q]);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let sig: Vec<f64> = norms.iter().map(|x| x.sqrt()).collect();
    order.sort_by(|&i, &j| sig[j].total_cmp(&sig[i]));
    let smax = order.first().map_or(0.0, |&i| sig[i]);
    let keep: Vec<usize> = order
        .into_iter()
        .filter(|&i| sig[i] > 0.0 && sig[i] > rank_tol * smax)
        .collect();
    let r = keep.len();
    let mut u = DenseMatrix::zeros(m, r);
    let mut vm = DenseMatrix::zeros(n, r);
    let mut sigma = Vec::with_capacity(r);
    for (k, &j) in keep.iter().enumerate() {
        let s = sig[j];
        sigma.push(s);
        for i in 0..m {
            u.set(i, k, w[j][i] / s);
        }
        for i in 0..n {
            vm.set(i, k, v[j][i]);
        }
    }
    Ok((u, sigma, vm))
}

fn pair_mut(cols: &mut [Vec<f64>], p: usize, q: usize) -> (&mut Vec<f64>, &mut Vec<f64>) {
    debug_assert!(p < q);
    let (lo, hi) = cols.split_at_mut(q);
    (&mut lo[p], &mut hi[0])
}

#[inline]
fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (xi, yi) in x.iter_mut().zip(y.iter_mut()) {
        let a = *xi;
        let b = *yi;
        *xi = c * a - s * b;
        *yi = s * a + c * b;
    }
}

/// `V · diag(1/sigma) · Uᵀ`.
pub fn pseudo_inverse(a: &DenseMatrix, rank_tol: f64) -> Result<DenseMatrix> {
    let svd = compact_svd(a, rank_tol)?;
    let vs = DenseMatrix::from_fn(svd.v.rows(), svd.rank(), |i, k| svd.v.get(i, k) / svd.sigma[k]);
    Ok(vs.matmul(&svd.u.transpose()))
}

/// Full eigendecomposition of a symmetric matrix.
#[derive(Clone, Debug)]
pub struct SymEigen {
    /// Eigenvalues, non-increasing.
    pub values: Vec<f64>,
    /// Orthogonal matrix whose columns are the eigenvectors.
    pub vectors: DenseMatrix,
}

/// Cyclic Jacobi eigensolver for symmetric matrices.
pub fn sym_eigen(a: &DenseMatrix) -> Result<SymEigen> {
    if !a.is_square() {
        return Err(mismatch(
            "sym_eigen",
            "square matrix",
            format!("{}x{}", a.rows(), a.cols()),
        ));
    }
    if a.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("sym_eigen: non-finite entry".into()));
    }
    let n = a.rows();
    let mut m: Vec<f64> = a.data().to_vec();
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (m[i * n + j] + m[j * n + i]);
            m[i * n + j] = s;
            m[j * n + i] = s;
        }
    }
    let mut v = DenseMatrix::identity(n).into_data();
    let total: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt();

    let mut sweeps = 0;
    loop {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * total || total == 0.0 {
            break;
        }
        if sweeps == MAX_SWEEPS {
            return Err(Error::NumericalFailure {
                context: "sym_eigen",
                iterations: sweeps,
                detail: format!("off-diagonal norm {off:e} did not vanish"),
            });
        }
        sweeps += 1;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = if theta.is_finite() {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                } else {
                    0.0
                };
                if t == 0.0 {
                    continue;
                }
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // columns p, q
                for k in 0..n {
                    let kp = m[k * n + p];
                    let kq = m[k * n + q];
                    m[k * n + p] = c * kp - s * kq;
                    m[k * n + q] = s * kp + c * kq;
                }
                // rows p, q
                for k in 0..n {
                    let pk = m[p * n + k];
                    let qk = m[q * n + k];
                    m[p * n + k] = c * pk - s * qk;
                    m[q * n + k] = s * pk + c * qk;
                }
                for k in 0..n {
                    let kp = v[k * n + p];
                    let kq = v[k * n + q];
                    v[k * n + p] = c * kp - s * kq;
                    v[k * n + q] = s * kp + c * kq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j * n + j].total_cmp(&m[i * n + i]));
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let vectors = DenseMatrix::from_fn(n, n, |r, k| v[r * n + order[k]]);
    Ok(SymEigen { values, vectors })
}

/// Inverse of a small square matrix by Gauss-Jordan elimination with partial pivoting.
pub fn invert(a: &DenseMatrix) -> Result<DenseMatrix> {
    if !a.is_square() {
        return Err(mismatch(
            "invert",
            "square matrix",
            format!("{}x{}", a.rows(), a.cols()),
        ));
    }
    let n = a.rows();
    let scale = a.max_abs();
    let mut m = a.data().to_vec();
    let mut inv = DenseMatrix::identity(n).into_data();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs()))
            .unwrap_or(col);
        let pv = m[pivot * n + col];
        if pv.abs() <= 1e-14 * scale || pv == 0.0 {
            return Err(Error::NumericalFailure {
                context: "invert",
                iterations: col,
                detail: format!("singular pivot {pv:e} (scale {scale:e})"),
            });
        }
        if pivot != col {
            for k in 0..n {
                m.swap(pivot * n + k, col * n + k);
                inv.swap(pivot * n + k, col * n + k);
            }
        }
        for k in 0..n {
            m[col * n + k] /= pv;
            inv[col * n + k] /= pv;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = m[r * n + col];
            if f == 0.0 {
                continue;
            }
            for k in 0..n {
                m[r * n + k] -= f * m[col * n + k];
                inv[r * n + k] -= f * inv[col * n + k];
            }
        }
    }
    Ok(DenseMatrix::from_vec_unchecked(n, n, inv))
}
