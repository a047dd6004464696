#![allow(dead_code)]

use kronsolve_core::kron::KroneckerFactors;
use kronsolve_core::rng::rng_from_seed;
use kronsolve_core::tensor::{explicit_kron, pseudo_inverse, sym_eigen, DenseMatrix, DenseTensor};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

pub fn gaussian(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = rng_from_seed(seed);
    DenseMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
}

/// Entries i.i.d. `N(1, 0.001)`.
pub fn near_ones(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let normal = Normal::new(1.0, 0.001f64.sqrt()).unwrap();
    let mut rng = rng_from_seed(seed);
    DenseMatrix::from_fn(rows, cols, |_, _| normal.sample(&mut rng))
}

pub fn gaussian_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

pub fn gaussian_tensor(shape: &[usize], seed: u64) -> DenseTensor {
    let mut rng = rng_from_seed(seed);
    DenseTensor::from_fn(shape.to_vec(), |_| StandardNormal.sample(&mut rng)).unwrap()
}

/// Random factors with `rows_max ≥ rows ≥ cols ≥ 1` per mode.
pub fn random_factors(order: usize, rows_max: usize, cols_max: usize, seed: u64) -> KroneckerFactors {
    let mut rng = rng_from_seed(seed);
    let factors = (0..order)
        .map(|k| {
            let cols = rng.random_range(1..=cols_max);
            let rows = rng.random_range(cols..=rows_max.max(cols));
            gaussian(rows, cols, seed * 1000 + k as u64)
        })
        .collect();
    KroneckerFactors::new(factors).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

pub fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Dense `‖K·x − b‖² + λ‖x‖²`.
pub fn dense_ridge_loss(k: &DenseMatrix, x: &[f64], b: &[f64], lambda: f64) -> f64 {
    let r: Vec<f64> = k.matvec(x).iter().zip(b).map(|(p, q)| p - q).collect();
    sq_norm(&r) + lambda * sq_norm(x)
}

/// Dense ridge optimum `(KᵀK + λI)⁺Kᵀb`.
pub fn dense_ridge_solve(k: &DenseMatrix, b: &[f64], lambda: f64) -> Vec<f64> {
    let mut g = k.gram();
    for i in 0..g.rows() {
        g.set(i, i, g.get(i, i) + lambda);
    }
    pseudo_inverse(&g, 1e-14).unwrap().matvec(&k.transpose_matvec(b))
}

pub fn explicit(k: &KroneckerFactors) -> DenseMatrix {
    explicit_kron(k.factors()).unwrap()
}

/// Eigenvalue range of `B^{-1/2}·C·B^{-1/2}` for symmetric positive definite `B`.
pub fn whitened_range(b: &DenseMatrix, c: &DenseMatrix) -> (f64, f64) {
    let eig = sym_eigen(b).unwrap();
    let n = b.rows();
    let w = DenseMatrix::from_fn(n, n, |i, j| {
        (0..n)
            .map(|k| eig.vectors.get(i, k) * eig.vectors.get(j, k) / eig.values[k].sqrt())
            .sum()
    });
    let white = w.matmul(c).matmul(&w);
    let sym = DenseMatrix::from_fn(n, n, |i, j| 0.5 * (white.get(i, j) + white.get(j, i)));
    let e = sym_eigen(&sym).unwrap();
    (*e.values.last().unwrap(), e.values[0])
}

/// One factor-row problem in dense form: `K` is `⊗_{k≠n} Aᵏ`, `gt` is `Gₙᵀ`.
pub struct RowProblem {
    pub k: DenseMatrix,
    pub gt: DenseMatrix,
    pub gt_pinv: DenseMatrix,
    pub b: Vec<f64>,
    pub lambda: f64,
}

impl RowProblem {
    pub fn new(k: DenseMatrix, gt: DenseMatrix, b: Vec<f64>, lambda: f64) -> Self {
        let gt_pinv = pseudo_inverse(&gt, 1e-12).unwrap();
        Self {
            k,
            gt,
            gt_pinv,
            b,
            lambda,
        }
    }

    /// `‖K·Gₙᵀ·y − b‖² + λ‖y‖²`.
    pub fn original_objective(&self, y: &[f64]) -> f64 {
        dense_ridge_loss(&self.k.matmul(&self.gt), y, &self.b, self.lambda)
    }

    pub fn original_optimum(&self) -> Vec<f64> {
        dense_ridge_solve(&self.k.matmul(&self.gt), &self.b, self.lambda)
    }

    /// `‖K·z − b‖² + λ‖(Gₙᵀ)⁺z‖²`.
    pub fn substitute_objective(&self, z: &[f64]) -> f64 {
        let r: Vec<f64> = self.k.matvec(z).iter().zip(&self.b).map(|(p, q)| p - q).collect();
        sq_norm(&r) + self.lambda * sq_norm(&self.gt_pinv.matvec(z))
    }

    pub fn projector(&self) -> DenseMatrix {
        DenseMatrix::identity(self.gt.rows()).sub(&self.gt.matmul(&self.gt_pinv))
    }

    /// Minimizer of the substitute objective over `{N·z = 0}` from the dense KKT system.
    pub fn constrained_optimum(&self) -> Vec<f64> {
        let r = self.gt.rows();
        let p = self.gt_pinv.transpose().matmul(&self.gt_pinv);
        let h = self.k.gram().add(&p.scaled(self.lambda));
        let n = self.projector();
        let kkt = DenseMatrix::from_fn(2 * r, 2 * r, |i, j| match (i < r, j < r) {
            (true, true) => h.get(i, j),
            (true, false) => n.get(j - r, i),
            (false, true) => n.get(i - r, j),
            (false, false) => 0.0,
        });
        let mut rhs = self.k.transpose_matvec(&self.b);
        rhs.resize(2 * r, 0.0);
        let sol = pseudo_inverse(&kkt, 1e-13).unwrap().matvec(&rhs);
        sol[..r].to_vec()
    }

    /// Exact minimizer of the penalized objective `substitute + w‖N·z‖²`.
    pub fn penalized_optimum(&self, w: f64) -> Vec<f64> {
        let p = self.gt_pinv.transpose().matmul(&self.gt_pinv);
        let m = self
            .k
            .gram()
            .add(&p.scaled(self.lambda))
            .add(&self.projector().scaled(w));
        pseudo_inverse(&m, 1e-14)
            .unwrap()
            .matvec(&self.k.transpose_matvec(&self.b))
    }

    /// `Gₙᵀ(Gₙᵀ)⁺·z`.
    pub fn project(&self, z: &[f64]) -> Vec<f64> {
        self.gt.matvec(&self.gt_pinv.matvec(z))
    }
}
