//! L2-regularized Tucker decomposition by alternating least squares.
//!
//! Objective: `‖G ×₁ A¹ ⋯ ×_N Aᴺ − X‖²_F + λ(‖G‖²_F + Σₙ ‖Aⁿ‖²_F)`.
//!
//! Each factor row solves `min_y ‖K·Gₙᵀ·y − bᵢ‖² + λ‖y‖²` where
//! `K = ⊗_{k≠n} Aᵏ`, `Gₙ` is the mode-n unfolding of the core and `bᵢ` a row of
//! the mode-n unfolding of `X`. The fast path substitutes `z = Gₙᵀ·y`, which
//! turns this into Kronecker regression in `z` under the constraint `N·z = 0`
//! with `N = I − Gₙᵀ(Gₙᵀ)⁺`. The constraint is relaxed to a penalty
//! `w‖N·z‖²` and the sketched problem is solved by Richardson iteration with a
//! Woodbury-corrected preconditioner.

use std::time::{Duration, Instant};

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{mismatch, Error, Result};
use crate::kron::{
    kron_mat_mul, kron_vec_square, sketched_gram_apply, sketched_kron_transpose_apply, KroneckerFactors, SparseDiagonal,
};
use crate::leverage::REGRESSION_SAMPLE_CONSTANT;
use crate::leverage::{build_product_sampler, sample_rows, LeverageScores, ProductSampler};
use crate::rng::{derive_seed, label, rng_from_seed};
use crate::solvers::{
    fast_kronecker_regression_cached, kronmatmul_svd_solve, richardson_solve_from, FactorSpectrum, KronPreconditioner,
    RegressionConfig,
};
use crate::tensor::{
    dot, fold, invert, multi_mode_product, norm2, norm2_sq, pseudo_inverse, unfold, DenseMatrix, DenseTensor, SymEigen,
    DEFAULT_RANK_TOL,
};

#[derive(Clone, Debug)]
pub struct TuckerModel {
    pub core: DenseTensor,
    pub factors: Vec<DenseMatrix>,
    pub lambda: f64,
}

impl TuckerModel {
    pub fn new(core: DenseTensor, factors: Vec<DenseMatrix>, lambda: f64) -> Result<Self> {
        if factors.len() != core.order() {
            return Err(mismatch("TuckerModel::new", core.order(), factors.len()));
        }
        for (n, a) in factors.iter().enumerate() {
            if a.cols() != core.shape()[n] {
                return Err(mismatch(
                    "TuckerModel::new",
                    format!("{} columns in factor {n}", core.shape()[n]),
                    a.cols(),
                ));
            }
            if a.cols() > a.rows() {
                return Err(Error::InvalidInput(format!(
                    "factor {n} has rank {} above its dimension {}",
                    a.cols(),
                    a.rows()
                )));
            }
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("lambda must be >= 0, got {lambda}")));
        }
        Ok(Self { core, factors, lambda })
    }

    pub fn order(&self) -> usize {
        self.factors.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.factors.iter().map(|a| a.rows()).collect()
    }

    pub fn core_shape(&self) -> &[usize] {
        self.core.shape()
    }

    fn check_against(&self, x: &DenseTensor) -> Result<()> {
        if x.shape() != self.shape().as_slice() {
            return Err(mismatch(
                "Tucker model",
                format!("{:?}", self.shape()),
                format!("{:?}", x.shape()),
            ));
        }
        Ok(())
    }

    /// `K = ⊗_{k≠n} Aᵏ` in natural order.
    fn others(&self, n: usize) -> Result<KroneckerFactors> {
        KroneckerFactors::new(
            self.factors
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != n)
                .map(|(_, a)| a.clone())
                .collect(),
        )
    }
}

/// `G ×₁ A¹ ⋯ ×_N Aᴺ`.
pub fn reconstruct(model: &TuckerModel) -> Result<DenseTensor> {
    let f: Vec<&DenseMatrix> = model.factors.iter().collect();
    multi_mode_product(&model.core, &f)
}

/// `‖X̂ − X‖²_F / ‖X‖²_F`.
pub fn relative_error(model: &TuckerModel, x: &DenseTensor) -> Result<f64> {
    model.check_against(x)?;
    let xh = reconstruct(model)?;
    let diff: f64 = xh.data().iter().zip(x.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    let denom = norm2_sq(x.data());
    if denom == 0.0 {
        return Ok(if diff == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(diff / denom)
}

pub fn regularized_loss(model: &TuckerModel, x: &DenseTensor) -> Result<f64> {
    model.check_against(x)?;
    let xh = reconstruct(model)?;
    let fit: f64 = xh.data().iter().zip(x.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    let reg = norm2_sq(model.core.data()) + model.factors.iter().map(|a| norm2_sq(a.data())).sum::<f64>();
    Ok(fit + model.lambda * reg)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverMode {
    Exact,
    Fast,
}

#[derive(Clone, Debug)]
pub struct TuckerConfig {
    pub lambda: f64,
    pub eps: f64,
    pub delta: f64,
    pub alpha: f64,
    pub sweeps: usize,
    pub mode: SolverMode,
    pub seed: u64,
    /// Stop early once the relative loss change over a sweep drops below this.
    pub loss_tol: Option<f64>,
    /// Reuse one row sketch for all rows of a factor instead of drawing one per row.
    pub share_row_sketch: bool,
    pub max_richardson_iters: Option<usize>,
    pub residual_tol: f64,
}

impl Default for TuckerConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            eps: 0.25,
            delta: 0.01,
            alpha: 1.0,
            sweeps: 5,
            mode: SolverMode::Exact,
            seed: 0,
            loss_tol: None,
            share_row_sketch: false,
            max_richardson_iters: None,
            residual_tol: 1e-9,
        }
    }
}

impl TuckerConfig {
    fn regression(&self, seed: u64) -> RegressionConfig {
        RegressionConfig {
            eps: self.eps,
            delta: self.delta,
            lambda: self.lambda,
            alpha: self.alpha,
            max_richardson_iters: self.max_richardson_iters,
            residual_tol: self.residual_tol,
            seed,
            ..RegressionConfig::default()
        }
    }

    fn max_iters(&self) -> usize {
        self.max_richardson_iters
            .unwrap_or_else(|| 8 * (1.0 / self.eps).ln().ceil().max(1.0) as usize)
    }
}

// ---------------------------------------------------------------------------
// Core update

/// Exact or sketched ridge solve for the core with all factors fixed.
pub fn core_update(
    model: &TuckerModel,
    x: &DenseTensor,
    mode: SolverMode,
    config: &TuckerConfig,
) -> Result<DenseTensor> {
    let spectra = model
        .factors
        .iter()
        .map(FactorSpectrum::exact)
        .collect::<Result<Vec<_>>>()?;
    core_update_cached(model, x, mode, config, &spectra, config.seed)
}

fn core_update_cached(
    model: &TuckerModel,
    x: &DenseTensor,
    mode: SolverMode,
    config: &TuckerConfig,
    spectra: &[FactorSpectrum],
    seed: u64,
) -> Result<DenseTensor> {
    model.check_against(x)?;
    let k = KroneckerFactors::new(model.factors.clone())?;
    let solution = match mode {
        SolverMode::Exact => kronmatmul_svd_solve(&k, x.data(), model.lambda)?.solution,
        SolverMode::Fast => {
            let mut cfg = config.regression(seed);
            cfg.lambda = model.lambda;
            fast_kronecker_regression_cached(&k, x.data(), spectra, &cfg)?.solution
        }
    };
    DenseTensor::new(model.core_shape().to_vec(), solution)
}

// ---------------------------------------------------------------------------
// Naive factor update

/// Exact per-row ridge solutions `(KKᵀ + λI)⁺·K·bᵢᵀ` with `K = Gₙ(⊗_{k≠n} Aᵏ)ᵀ`.
pub fn naive_factor_update(model: &TuckerModel, x: &DenseTensor, n: usize) -> Result<DenseMatrix> {
    model.check_against(x)?;
    check_mode(model, n)?;
    let others = model.others(n)?;
    let gn = unfold(&model.core, n)?;
    let gt = gn.transpose();
    let grams = KroneckerFactors::new(others.factors().iter().map(|a| a.gram()).collect())?;
    let mut kkt = gn.matmul(&kron_mat_mul(&grams, &gt)?);
    for i in 0..kkt.rows() {
        kkt.set(i, i, kkt.get(i, i) + model.lambda);
    }
    let xn = unfold(x, n)?;
    // (⊗A)ᵀ·Bᵀ, one column per row of X_(n).
    let projected = kron_mat_mul(&others.transposed(), &xn.transpose())?;
    let kb = gn.matmul(&projected);
    let y = pseudo_inverse(&kkt, 1e-14)?.matmul(&kb);
    Ok(y.transpose())
}

fn check_mode(model: &TuckerModel, n: usize) -> Result<()> {
    if model.order() < 2 {
        return Err(Error::InvalidInput(
            "factor updates need a tensor of order at least 2".into(),
        ));
    }
    if n >= model.order() {
        return Err(Error::IndexOutOfRange {
            context: "factor update",
            index: n,
            limit: model.order(),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Fast factor update

/// Shared state for all row updates of one factor.
#[derive(Clone, Debug)]
pub struct FactorUpdateWorkspace {
    pub mode: usize,
    /// `Gₙᵀ`, `R_{≠n} × R_n`.
    pub gt: DenseMatrix,
    /// `(Gₙᵀ)⁺`, `R_n × R_{≠n}`.
    pub gn_pinv: DenseMatrix,
    pub penalty_weight: f64,
    pub lambda: f64,
    /// `(I + (λ(Gₙᵀ)⁺ − w·Gₙ)·(KᵀK + wI)⁻¹·Gₙ⁺)⁻¹`.
    pub woodbury_core_inverse: DenseMatrix,
    /// Gram eigendecompositions of the factors `k ≠ n`, in order.
    pub gram_eigens: Vec<SymEigen>,
    /// Exact leverage scores of the factors `k ≠ n`.
    pub scores: Vec<LeverageScores>,
    others: KroneckerFactors,
    base: KronPreconditioner,
    grams: KroneckerFactors,
}

const POWER_MAX_ITERS: usize = 100;
const POWER_REL_TOL: f64 = 1e-6;
const PENALTY_MARGIN: f64 = 1.05;

impl FactorUpdateWorkspace {
    pub fn others(&self) -> &KroneckerFactors {
        &self.others
    }

    /// `Gₙᵀ(Gₙᵀ)⁺·z`, the projection onto the range of `Gₙᵀ`.
    pub fn project_range(&self, z: &[f64]) -> Vec<f64> {
        self.gt.matvec(&self.gn_pinv.matvec(z))
    }

    /// `N·z = z − Gₙᵀ(Gₙᵀ)⁺·z`.
    pub fn apply_constraint(&self, z: &[f64]) -> Vec<f64> {
        let p = self.project_range(z);
        z.iter().zip(&p).map(|(a, b)| a - b).collect()
    }

    /// Dense `N`.
    pub fn constraint_projector(&self) -> DenseMatrix {
        let r = self.gt.rows();
        DenseMatrix::identity(r).sub(&self.gt.matmul(&self.gn_pinv))
    }

    /// `λ·Gₙ⁺(Gₙᵀ)⁺·z`.
    fn apply_ridge(&self, z: &[f64]) -> Vec<f64> {
        let y = self.gn_pinv.matvec(z);
        self.gn_pinv
            .transpose_matvec(&y)
            .into_iter()
            .map(|v| self.lambda * v)
            .collect()
    }

    fn apply_ktk(&self, z: &[f64]) -> Result<Vec<f64>> {
        kron_vec_square(&self.grams, z)
    }

    /// `M·z` with `M = KᵀK + λGₙ⁺(Gₙᵀ)⁺ + w·N`.
    pub fn apply_m(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.apply_ktk(z)?;
        let ridge = self.apply_ridge(z);
        let nz = self.apply_constraint(z);
        for ((o, r), c) in out.iter_mut().zip(&ridge).zip(&nz) {
            *o += r + self.penalty_weight * c;
        }
        Ok(out)
    }

    /// `M⁻¹·z` by the Woodbury identity around `B = KᵀK + wI`:
    /// `M⁻¹ = B⁻¹ − B⁻¹U(I + V·B⁻¹U)⁻¹V·B⁻¹` with `U = Gₙ⁺`, `V = λ(Gₙᵀ)⁺ − w·Gₙ`.
    pub fn apply_m_pinv(&self, z: &[f64]) -> Result<Vec<f64>> {
        let t = self.base.apply(z)?;
        let v = self.apply_v(&t);
        let c = self.woodbury_core_inverse.matvec(&v);
        let uc = self.gn_pinv.transpose_matvec(&c);
        let corr = self.base.apply(&uc)?;
        Ok(t.iter().zip(&corr).map(|(a, b)| a - b).collect())
    }

    fn apply_v(&self, t: &[f64]) -> Vec<f64> {
        let a = self.gn_pinv.matvec(t);
        let b = self.gt.transpose_matvec(t);
        a.iter()
            .zip(&b)
            .map(|(p, q)| self.lambda * p - self.penalty_weight * q)
            .collect()
    }

    /// Dense `M`, for checks on small instances.
    pub fn dense_m(&self) -> Result<DenseMatrix> {
        let r = self.gt.rows();
        let mut m = DenseMatrix::zeros(r, r);
        for j in 0..r {
            let mut e = vec![0.0; r];
            e[j] = 1.0;
            for (i, v) in self.apply_m(&e)?.into_iter().enumerate() {
                m.set(i, j, v);
            }
        }
        Ok(m)
    }
}

/// Builds the workspace for updating factor `n`, computing the Gram
/// eigendecompositions of the other factors.
pub fn build_factor_workspace(model: &TuckerModel, n: usize, eps: f64, lambda: f64) -> Result<FactorUpdateWorkspace> {
    check_mode(model, n)?;
    let spectra = model
        .factors
        .iter()
        .enumerate()
        .map(|(k, a)| {
            if k == n {
                Ok(None)
            } else {
                FactorSpectrum::exact(a).map(Some)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let spectra: Vec<&FactorSpectrum> = spectra.iter().flatten().collect();
    build_workspace_from(
        model,
        n,
        eps,
        lambda,
        &spectra,
        derive_seed(0, &[label::POWER, n as u64]),
    )
}

fn build_workspace_from(
    model: &TuckerModel,
    n: usize,
    eps: f64,
    lambda: f64,
    spectra: &[&FactorSpectrum],
    seed: u64,
) -> Result<FactorUpdateWorkspace> {
    if !(eps > 0.0 && eps < 1.0 / 3.0) {
        return Err(Error::InvalidInput(format!("eps must be in (0, 1/3), got {eps}")));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidInput(format!("lambda must be >= 0, got {lambda}")));
    }
    let gn = unfold(&model.core, n)?;
    if gn.max_abs() == 0.0 {
        return Err(Error::InvalidInput("core unfolding is zero".into()));
    }
    let gt = gn.transpose();
    let gn_pinv = pseudo_inverse(&gt, DEFAULT_RANK_TOL)?;
    let others = model.others(n)?;
    let grams = KroneckerFactors::new(others.factors().iter().map(|a| a.gram()).collect())?;
    let gram_eigens: Vec<SymEigen> = spectra.iter().map(|s| s.gram_eigen.clone()).collect();
    let scores: Vec<LeverageScores> = spectra.iter().map(|s| s.scores.clone()).collect();
    let k_norm_sq: f64 = gram_eigens
        .iter()
        .map(|e| e.values.first().copied().unwrap_or(0.0).max(0.0))
        .product();

    let eig_refs: Vec<&SymEigen> = gram_eigens.iter().collect();
    let placeholder = KronPreconditioner::from_gram_eigens(&eig_refs, 1.0)?;
    let mut ws = FactorUpdateWorkspace {
        mode: n,
        gt,
        gn_pinv,
        penalty_weight: 0.0,
        lambda,
        woodbury_core_inverse: DenseMatrix::zeros(0, 0),
        gram_eigens,
        scores,
        others,
        base: placeholder,
        grams,
    };

    let bound = constrained_norm_estimate(&ws, seed)?;
    let w = PENALTY_MARGIN * (1.0 + 12.0 / eps) * bound;
    // With N = 0 the penalty term vanishes and any positive w gives the same M.
    ws.penalty_weight = if w > 1e-10 * k_norm_sq { w } else { k_norm_sq.max(1.0) };

    let eig_refs: Vec<&SymEigen> = ws.gram_eigens.iter().collect();
    ws.base = KronPreconditioner::from_gram_eigens(&eig_refs, ws.penalty_weight)?;

    let rn = ws.gt.cols();
    let mut core = DenseMatrix::identity(rn);
    for j in 0..rn {
        let u_col: Vec<f64> = ws.gn_pinv.row(j).to_vec();
        let bu = ws.base.apply(&u_col)?;
        let col = ws.apply_v(&bu);
        for (i, v) in col.into_iter().enumerate() {
            core.set(i, j, core.get(i, j) + v);
        }
    }
    ws.woodbury_core_inverse = invert(&core).map_err(|e| match e {
        Error::NumericalFailure { iterations, detail, .. } => Error::NumericalFailure {
            context: "woodbury core",
            iterations,
            detail,
        },
        other => other,
    })?;
    Ok(ws)
}

/// Power-iteration estimate of `‖[K; √λ(Gₙᵀ)⁺]·N‖₂²`.
fn constrained_norm_estimate(ws: &FactorUpdateWorkspace, seed: u64) -> Result<f64> {
    let r = ws.gt.rows();
    let mut rng = rng_from_seed(seed);
    let start: Vec<f64> = (0..r).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut v = ws.apply_constraint(&start);
    let nv = norm2(&v);
    if nv <= 1e-12 * norm2(&start) {
        return Ok(0.0);
    }
    v.iter_mut().for_each(|x| *x /= nv);
    let mut estimate = 0.0;
    for iter in 0..POWER_MAX_ITERS {
        // Nᵀ(KᵀK + λGₙ⁺(Gₙᵀ)⁺)N·v; N is a symmetric projector.
        let nv = ws.apply_constraint(&v);
        let mut y = ws.apply_ktk(&nv)?;
        for (yi, ri) in y.iter_mut().zip(ws.apply_ridge(&nv)) {
            *yi += ri;
        }
        let y = ws.apply_constraint(&y);
        let next = dot(&v, &y);
        let ny = norm2(&y);
        if ny == 0.0 {
            return Ok(0.0);
        }
        v = y.into_iter().map(|x| x / ny).collect();
        if iter > 0 && (next - estimate).abs() <= POWER_REL_TOL * next.abs() {
            return Ok(next.max(estimate));
        }
        estimate = next;
    }
    Ok(estimate)
}

/// Per-row sample count `ceil(α·1680·R·ln(40R)·ln(I_n/δ)/ε)` with `R = R_{≠n}`.
pub fn factor_row_sample_count(r_others: usize, rows: usize, eps: f64, delta: f64, alpha: f64) -> usize {
    let r = r_others.max(1) as f64;
    let i = rows.max(1) as f64;
    (alpha * REGRESSION_SAMPLE_CONSTANT * r * (40.0 * r).ln() * (i / delta).ln().max(f64::MIN_POSITIVE) / eps).ceil()
        as usize
}

/// Result of one fast row update.
#[derive(Clone, Debug)]
pub struct RowUpdate {
    /// Projected solution of the penalized problem; satisfies `N·z ≈ 0`.
    pub z: Vec<f64>,
    /// New factor row `(Gₙᵀ)⁺·z`.
    pub y: Vec<f64>,
    pub iterations: usize,
}

/// Solves one factor row with the given sketch diagonal.
pub fn fast_factor_row_update(
    ws: &FactorUpdateWorkspace,
    b_row: &[f64],
    diag: &SparseDiagonal,
    damping: f64,
    max_iters: usize,
    residual_tol: f64,
) -> Result<RowUpdate> {
    let k = &ws.others;
    if b_row.len() != k.rows() {
        return Err(mismatch("fast_factor_row_update", k.rows(), b_row.len()));
    }
    let db = diag.gather(b_row);
    let rhs = sketched_kron_transpose_apply(k, diag, &db)?;
    let w = ws.penalty_weight;
    let normal = |z: &[f64]| -> Result<Vec<f64>> {
        let mut out = sketched_gram_apply(k, diag, z)?;
        let ridge = ws.apply_ridge(z);
        let nz = ws.apply_constraint(z);
        for ((o, r), c) in out.iter_mut().zip(&ridge).zip(&nz) {
            *o += r + w * c;
        }
        Ok(out)
    };
    let precond = |z: &[f64]| ws.apply_m_pinv(z);
    let outcome = richardson_solve_from(
        normal,
        precond,
        &rhs,
        vec![0.0; rhs.len()],
        damping,
        max_iters,
        residual_tol,
        |_, _| {},
    )?;
    let z = ws.project_range(&outcome.solution);
    let y = ws.gn_pinv.matvec(&z);
    Ok(RowUpdate {
        z,
        y,
        iterations: outcome.iterations,
    })
}

/// Sketched update of factor `n`, one independent sketch per row.
pub fn fast_factor_matrix_update(
    model: &TuckerModel,
    x: &DenseTensor,
    n: usize,
    config: &TuckerConfig,
) -> Result<DenseMatrix> {
    check_mode(model, n)?;
    let ws = build_factor_workspace(model, n, config.eps, model.lambda)?;
    fast_factor_update_with(&ws, x, config, config.seed)
}

fn fast_factor_update_with(
    ws: &FactorUpdateWorkspace,
    x: &DenseTensor,
    config: &TuckerConfig,
    seed: u64,
) -> Result<DenseMatrix> {
    if !(config.delta > 0.0 && config.delta < 1.0) || !(config.alpha > 0.0 && config.alpha <= 1.0) {
        return Err(Error::InvalidInput(
            "delta must be in (0, 1) and alpha in (0, 1]".into(),
        ));
    }
    let n = ws.mode;
    let xn = unfold(x, n)?;
    let k = &ws.others;
    let s = factor_row_sample_count(k.cols(), xn.rows(), config.eps, config.delta, config.alpha);
    let max_iters = config.max_iters();
    let full = s >= k.rows();
    let sampler: Option<ProductSampler> = if full {
        None
    } else {
        Some(build_product_sampler(&ws.scores)?)
    };
    let draw = |i: usize| -> Result<SparseDiagonal> {
        match &sampler {
            None => Ok(SparseDiagonal::identity(k.rows())),
            Some(p) => {
                let row_seed = if config.share_row_sketch {
                    derive_seed(seed, &[label::ROW, n as u64])
                } else {
                    derive_seed(seed, &[label::ROW, n as u64, i as u64])
                };
                Ok(SparseDiagonal::from_sketch(&sample_rows(p, s, row_seed)?))
            }
        }
    };
    let damping = if full { 1.0 } else { 1.0 - config.eps.sqrt() };
    let shared = if config.share_row_sketch { Some(draw(0)?) } else { None };
    let rows: Vec<Vec<f64>> = (0..xn.rows())
        .into_par_iter()
        .map(|i| {
            let diag = match &shared {
                Some(d) => d.clone(),
                None => draw(i)?,
            };
            Ok(fast_factor_row_update(ws, xn.row(i), &diag, damping, max_iters, config.residual_tol)?.y)
        })
        .collect::<Result<Vec<_>>>()?;
    let rn = ws.gt.cols();
    Ok(DenseMatrix::from_fn(rows.len(), rn, |i, j| rows[i][j]))
}

// ---------------------------------------------------------------------------
// ALS driver

#[derive(Clone, Debug)]
pub struct AlsReport {
    /// Loss after the initial core solve and after every later block update.
    pub block_losses: Vec<f64>,
    /// Loss after the initial core solve (index 0) and after each sweep.
    pub sweep_losses: Vec<f64>,
    /// Relative reconstruction error, aligned with `sweep_losses`.
    pub sweep_rre: Vec<f64>,
    pub sweep_times: Vec<Duration>,
    pub rre: f64,
}

impl AlsReport {
    pub fn mean_sweep_time(&self) -> Duration {
        if self.sweep_times.is_empty() {
            return Duration::ZERO;
        }
        self.sweep_times.iter().sum::<Duration>() / self.sweep_times.len() as u32
    }
}

/// Random factors with orthonormal columns, core zero.
pub fn initial_model(shape: &[usize], core_shape: &[usize], lambda: f64, seed: u64) -> Result<TuckerModel> {
    if shape.len() != core_shape.len() {
        return Err(mismatch("initial_model", shape.len(), core_shape.len()));
    }
    let mut factors = Vec::with_capacity(shape.len());
    for (n, (&i, &r)) in shape.iter().zip(core_shape).enumerate() {
        if r == 0 || r > i {
            return Err(Error::InvalidInput(format!(
                "core dimension {r} invalid for mode {n} of size {i}"
            )));
        }
        let mut rng = rng_from_seed(derive_seed(seed, &[label::INIT, n as u64]));
        let a = DenseMatrix::from_fn(i, r, |_, _| StandardNormal.sample(&mut rng));
        factors.push(orthonormalize_columns(&a)?);
    }
    TuckerModel::new(DenseTensor::zeros(core_shape.to_vec())?, factors, lambda)
}

fn orthonormalize_columns(a: &DenseMatrix) -> Result<DenseMatrix> {
    let (m, r) = a.shape();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(r);
    for j in 0..r {
        let mut c = a.col(j);
        for _ in 0..2 {
            for q in &cols {
                let p = dot(q, &c);
                c.iter_mut().zip(q).for_each(|(ci, qi)| *ci -= p * qi);
            }
        }
        let nc = norm2(&c);
        if nc <= 1e-12 {
            return Err(Error::NumericalFailure {
                context: "orthonormalize_columns",
                iterations: j,
                detail: "dependent random columns".into(),
            });
        }
        c.iter_mut().for_each(|v| *v /= nc);
        cols.push(c);
    }
    Ok(DenseMatrix::from_fn(m, r, |i, j| cols[j][i]))
}

/// Regularized Tucker ALS. Each sweep updates factors `0..N` and then the core.
pub fn tucker_als(x: &DenseTensor, core_shape: &[usize], config: &TuckerConfig) -> Result<(TuckerModel, AlsReport)> {
    if config.sweeps == 0 {
        return Err(Error::InvalidInput("sweeps must be at least 1".into()));
    }
    if x.order() < 2 {
        return Err(Error::InvalidInput(
            "Tucker ALS needs a tensor of order at least 2".into(),
        ));
    }
    let mut model = initial_model(x.shape(), core_shape, config.lambda, config.seed)?;
    let mut spectra = model
        .factors
        .iter()
        .map(FactorSpectrum::exact)
        .collect::<Result<Vec<_>>>()?;
    model.core = core_update_cached(&model, x, SolverMode::Exact, config, &spectra, config.seed)?;
    let first = regularized_loss(&model, x)?;
    let mut block_losses = vec![first];
    let mut sweep_losses = vec![first];
    let mut sweep_rre = vec![relative_error(&model, x)?];
    let mut sweep_times = Vec::with_capacity(config.sweeps);

    for sweep in 0..config.sweeps {
        let start = Instant::now();
        for n in 0..model.order() {
            let seed = derive_seed(config.seed, &[label::FACTOR, sweep as u64, n as u64]);
            let updated = match config.mode {
                SolverMode::Exact => naive_factor_update(&model, x, n)?,
                SolverMode::Fast => {
                    let others: Vec<&FactorSpectrum> = spectra
                        .iter()
                        .enumerate()
                        .filter(|&(k, _)| k != n)
                        .map(|(_, s)| s)
                        .collect();
                    let ws = build_workspace_from(
                        &model,
                        n,
                        config.eps,
                        model.lambda,
                        &others,
                        derive_seed(seed, &[label::POWER]),
                    )?;
                    fast_factor_update_with(&ws, x, config, seed)?
                }
            };
            model.factors[n] = updated;
            spectra[n] = FactorSpectrum::exact(&model.factors[n])?;
            block_losses.push(regularized_loss(&model, x)?);
        }
        let seed = derive_seed(config.seed, &[label::CORE, sweep as u64]);
        model.core = core_update_cached(&model, x, config.mode, config, &spectra, seed)?;
        sweep_times.push(start.elapsed());
        let loss = regularized_loss(&model, x)?;
        block_losses.push(loss);
        let prev = *sweep_losses.last().expect("initial loss recorded");
        sweep_losses.push(loss);
        sweep_rre.push(relative_error(&model, x)?);
        if let Some(tol) = config.loss_tol {
            if (prev - loss).abs() <= tol * prev.abs() {
                break;
            }
        }
    }
    let rre = *sweep_rre.last().expect("initial error recorded");
    Ok((
        model,
        AlsReport {
            block_losses,
            sweep_losses,
            sweep_rre,
            sweep_times,
            rre,
        },
    ))
}

/// Tensor of multilinear rank `core_shape` plus Gaussian noise scaled to
/// `noise` relative Frobenius norm.
pub fn synthetic_low_rank(shape: &[usize], core_shape: &[usize], noise: f64, seed: u64) -> Result<DenseTensor> {
    if shape.len() != core_shape.len() {
        return Err(mismatch("synthetic_low_rank", shape.len(), core_shape.len()));
    }
    let mut rng = rng_from_seed(seed);
    let core = DenseTensor::from_fn(core_shape.to_vec(), |_| StandardNormal.sample(&mut rng))?;
    let factors: Vec<DenseMatrix> = shape
        .iter()
        .zip(core_shape)
        .map(|(&i, &r)| DenseMatrix::from_fn(i, r, |_, _| StandardNormal.sample(&mut rng)))
        .collect();
    let refs: Vec<&DenseMatrix> = factors.iter().collect();
    let clean = multi_mode_product(&core, &refs)?;
    let e: Vec<f64> = (0..clean.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let scale = noise * clean.frobenius_norm() / norm2(&e).max(f64::MIN_POSITIVE);
    let data = clean.data().iter().zip(&e).map(|(c, n)| c + scale * n).collect();
    DenseTensor::new(shape.to_vec(), data)
}

/// Rebuilds a tensor from its mode-`n` unfolding; exposed for row-level checks.
pub fn fold_mode(m: &DenseMatrix, shape: &[usize], n: usize) -> Result<DenseTensor> {
    fold(m, shape, n)
}
