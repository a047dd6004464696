//! Kronecker ridge regression: `min_x ‖K·x − b‖² + λ‖x‖²` with `K = A¹ ⊗ ⋯ ⊗ Aᴺ`.
//!
//! [`fast_kronecker_regression`] samples rows of `K` from a product of
//! per-factor leverage-score distributions and solves the sketched normal
//! equations by preconditioned Richardson iteration. The remaining solvers are
//! exact or dense baselines.

use std::time::{Duration, Instant};

use crate::error::{mismatch, Error, Result};
use crate::kron::{
    kron_mat_mul, kron_mat_vec, kron_vec_square, sketch_rows_of_kron, sketched_gram_apply,
    sketched_kron_transpose_apply, KroneckerFactors, SparseDiagonal,
};
use crate::leverage::{
    approx_leverage_scores_jl_with, build_product_sampler, sample_rows, spectral_sample_count,
    statistical_leverage_scores, DiscreteDistribution, JlRows, LeverageScores, RowSketch, REGRESSION_SAMPLE_CONSTANT,
};
use crate::rng::{derive_seed, label};
use crate::tensor::{
    compact_svd, explicit_kron_with_limit, norm2, norm2_sq, pseudo_inverse, sym_eigen, DenseMatrix, SymEigen,
    DEFAULT_RANK_TOL,
};

/// Size limit for the dense baselines: `∏ I_n` and `(∏ R_n)²`.
pub const EXACT_SIZE_LIMIT: u128 = 100_000_000;

/// Chooses between the theoretical sample counts and a scaled-down practical variant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SampleMode {
    Theoretical,
    Practical { alpha: f64 },
}

impl SampleMode {
    pub fn alpha(self) -> f64 {
        match self {
            SampleMode::Theoretical => 1.0,
            SampleMode::Practical { alpha } => alpha,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RegressionConfig {
    pub eps: f64,
    pub delta: f64,
    pub lambda: f64,
    /// Multiplies every theoretical sample count.
    pub alpha: f64,
    /// Defaults to `8·ceil(ln(1/ε))` when `None`.
    pub max_richardson_iters: Option<usize>,
    /// Relative preconditioned-residual stopping threshold.
    pub residual_tol: f64,
    pub seed: u64,
    pub jl_rows: JlRows,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        Self {
            eps: 0.1,
            delta: 0.01,
            lambda: 1e-3,
            alpha: 1.0,
            max_richardson_iters: None,
            residual_tol: 1e-9,
            seed: 0,
            jl_rows: JlRows::Derived,
        }
    }
}

impl RegressionConfig {
    pub fn new(eps: f64, delta: f64, lambda: f64) -> Self {
        Self {
            eps,
            delta,
            lambda,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_mode(mut self, mode: SampleMode) -> Self {
        self.alpha = mode.alpha();
        self
    }

    pub fn max_iters(&self) -> usize {
        self.max_richardson_iters
            .unwrap_or_else(|| 8 * (1.0 / self.eps).ln().ceil().max(1.0) as usize)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::InvalidInput(format!("{what} out of range: {v}")));
        if !(self.eps > 0.0 && self.eps <= 0.25) {
            return bad("eps (0, 1/4]", self.eps);
        }
        self.validate_common()
    }

    fn validate_common(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::InvalidInput(format!("{what} out of range: {v}")));
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta (0, 1)", self.delta);
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda >= 0", self.lambda);
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha (0, 1]", self.alpha);
        }
        if !(self.residual_tol >= 0.0) {
            return bad("residual_tol >= 0", self.residual_tol);
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub solution: Vec<f64>,
    pub loss: f64,
    pub iterations: usize,
    /// Rows of `K` touched by the solve: sketch size, or `∏ I_n` for exact solvers.
    pub sample_count: usize,
    /// Time spent in the solve itself; excludes the final loss evaluation.
    pub wall_time: Duration,
}

/// `‖K·x − b‖² + λ‖x‖²`.
pub fn ridge_loss(factors: &KroneckerFactors, x: &[f64], b: &[f64], lambda: f64) -> Result<f64> {
    if b.len() != factors.rows() {
        return Err(mismatch("ridge_loss", factors.rows(), b.len()));
    }
    let kx = kron_mat_vec(factors, x)?;
    let resid: f64 = kx.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
    Ok(resid + lambda * norm2_sq(x))
}

fn report(
    factors: &KroneckerFactors,
    b: &[f64],
    lambda: f64,
    solution: Vec<f64>,
    iterations: usize,
    sample_count: usize,
    start: Instant,
) -> Result<SolveReport> {
    let wall_time = start.elapsed();
    let loss = ridge_loss(factors, &solution, b, lambda)?;
    Ok(SolveReport {
        solution,
        loss,
        iterations,
        sample_count,
        wall_time,
    })
}

// ---------------------------------------------------------------------------
// Richardson iteration

#[derive(Clone, Debug)]
pub struct RichardsonOutcome {
    pub solution: Vec<f64>,
    /// Number of updates applied.
    pub iterations: usize,
    /// Final relative preconditioned residual.
    pub residual: f64,
}

/// Damped preconditioned Richardson iteration from `x⁰ = 0`:
/// `x ← x − damping·M⁺(A·x − rhs)`.
pub fn richardson_solve<F, P>(
    apply_normal: F,
    apply_precond: P,
    rhs: &[f64],
    damping: f64,
    max_iters: usize,
    residual_tol: f64,
) -> Result<RichardsonOutcome>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
    P: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let x0 = vec![0.0; rhs.len()];
    richardson_solve_from(
        apply_normal,
        apply_precond,
        rhs,
        x0,
        damping,
        max_iters,
        residual_tol,
        |_, _| {},
    )
}

/// Richardson iteration from an explicit start; `observer(k, x)` sees every iterate, `x⁰` included.
///
/// Stops once `‖M⁺(A·x − rhs)‖ ≤ residual_tol·‖M⁺·rhs‖`. Fails if the
/// residual grows tenfold across five consecutive increases.
#[allow(clippy::too_many_arguments)]
pub fn richardson_solve_from<F, P, O>(
    mut apply_normal: F,
    mut apply_precond: P,
    rhs: &[f64],
    x0: Vec<f64>,
    damping: f64,
    max_iters: usize,
    residual_tol: f64,
    mut observer: O,
) -> Result<RichardsonOutcome>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
    P: FnMut(&[f64]) -> Result<Vec<f64>>,
    O: FnMut(usize, &[f64]),
{
    if x0.len() != rhs.len() {
        return Err(mismatch("richardson_solve", rhs.len(), x0.len()));
    }
    if !(damping > 0.0 && damping <= 1.0) {
        return Err(Error::InvalidInput(format!("damping must be in (0, 1], got {damping}")));
    }
    let scale = norm2(&apply_precond(rhs)?);
    let mut x = x0;
    observer(0, &x);
    if scale == 0.0 && x.iter().all(|v| *v == 0.0) {
        return Ok(RichardsonOutcome {
            solution: x,
            iterations: 0,
            residual: 0.0,
        });
    }
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let mut history: Vec<f64> = Vec::new();
    let mut iterations = 0;
    loop {
        let ax = apply_normal(&x)?;
        if ax.len() != x.len() {
            return Err(mismatch("richardson_solve normal operator", x.len(), ax.len()));
        }
        let g: Vec<f64> = ax.iter().zip(rhs).map(|(a, r)| a - r).collect();
        let step = apply_precond(&g)?;
        let residual = norm2(&step) / scale;
        if !residual.is_finite() {
            return Err(Error::NumericalFailure {
                context: "richardson_solve",
                iterations,
                detail: "non-finite residual".into(),
            });
        }
        history.push(residual);
        if let [.., a, b1, b2, b3, b4, b5] = history[..] {
            if b5 >= 10.0 * a && a < b1 && b1 < b2 && b2 < b3 && b3 < b4 && b4 < b5 {
                return Err(Error::NumericalFailure {
                    context: "richardson_solve",
                    iterations,
                    detail: format!("diverging: residual {a:e} -> {b5:e} over 5 iterations"),
                });
            }
        }
        if residual <= residual_tol || iterations >= max_iters {
            return Ok(RichardsonOutcome {
                solution: x,
                iterations,
                residual,
            });
        }
        for (xi, si) in x.iter_mut().zip(&step) {
            *xi -= damping * si;
        }
        iterations += 1;
        observer(iterations, &x);
    }
}

// ---------------------------------------------------------------------------
// Preconditioner

/// `M⁺ = (V¹ ⊗ ⋯ ⊗ Vᴺ)·diag(d)·(V¹ ⊗ ⋯ ⊗ Vᴺ)ᵀ` with `d = (μ¹ ⊗ ⋯ ⊗ μᴺ + λ)⁺`,
/// where `(Vⁿ, μⁿ)` is the eigendecomposition of the n-th factor Gram matrix.
#[derive(Clone, Debug)]
pub struct KronPreconditioner {
    pub v_factors: Vec<DenseMatrix>,
    pub d_diag: Vec<f64>,
    pub lambda: f64,
    v: KroneckerFactors,
    vt: KroneckerFactors,
}

impl KronPreconditioner {
    pub fn from_gram_eigens(eigens: &[&SymEigen], lambda: f64) -> Result<Self> {
        let v_factors: Vec<DenseMatrix> = eigens.iter().map(|e| e.vectors.clone()).collect();
        let mut prod = vec![1.0];
        for e in eigens {
            let top = e.values.first().copied().unwrap_or(0.0).max(0.0);
            let mu: Vec<f64> = e
                .values
                .iter()
                .map(|&m| if m <= DEFAULT_RANK_TOL * top { 0.0 } else { m })
                .collect();
            prod = prod.iter().flat_map(|p| mu.iter().map(move |m| p * m)).collect();
        }
        let d_diag = prod
            .into_iter()
            .map(|p| {
                let denom = p + lambda;
                if denom > 0.0 {
                    1.0 / denom
                } else {
                    0.0
                }
            })
            .collect();
        let v = KroneckerFactors::new(v_factors.clone())?;
        let vt = v.transposed();
        Ok(Self {
            v_factors,
            d_diag,
            lambda,
            v,
            vt,
        })
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = kron_vec_square(&self.vt, x)?;
        for (yi, d) in y.iter_mut().zip(&self.d_diag) {
            *yi *= d;
        }
        kron_vec_square(&self.v, &y)
    }

    /// Dense `M⁺`, for checks on small instances.
    pub fn dense(&self) -> Result<DenseMatrix> {
        let n = self.d_diag.len();
        let mut m = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            for (i, v) in self.apply(&e)?.into_iter().enumerate() {
                m.set(i, j, v);
            }
        }
        Ok(m)
    }
}

// ---------------------------------------------------------------------------
// Fast solver

/// Gram eigendecomposition of a factor (or of its spectral approximation) and
/// the leverage scores used for sampling that factor's rows.
#[derive(Clone, Debug)]
pub struct FactorSpectrum {
    pub gram_eigen: SymEigen,
    pub scores: LeverageScores,
}

impl FactorSpectrum {
    /// Exact Gram eigendecomposition and exact statistical leverage scores.
    pub fn exact(a: &DenseMatrix) -> Result<Self> {
        let gram_eigen = sym_eigen(&a.gram())?;
        let scores = scores_from_gram_eigen(a, &gram_eigen);
        Ok(Self { gram_eigen, scores })
    }
}

/// `ℓ_i = Σ_k (a_i·v_k)²/μ_k` over the numerically nonzero eigenpairs of `AᵀA`.
pub(crate) fn scores_from_gram_eigen(a: &DenseMatrix, eig: &SymEigen) -> LeverageScores {
    let top = eig.values.first().copied().unwrap_or(0.0);
    let keep: Vec<usize> = (0..eig.values.len())
        .filter(|&k| eig.values[k] > DEFAULT_RANK_TOL * top && eig.values[k] > 0.0)
        .collect();
    let scores = (0..a.rows())
        .map(|i| {
            let row = a.row(i);
            keep.iter()
                .map(|&k| {
                    let p: f64 = (0..row.len()).map(|j| row[j] * eig.vectors.get(j, k)).sum();
                    p * p / eig.values[k]
                })
                .sum::<f64>()
                .min(1.0)
        })
        .collect();
    LeverageScores {
        scores,
        lambda: 0.0,
        approx_factor: 1.0,
    }
}

fn check_factors(factors: &KroneckerFactors) -> Result<()> {
    for (n, a) in factors.factors().iter().enumerate() {
        if a.max_abs() == 0.0 {
            return Err(Error::InvalidInput(format!("factor {n} is the zero matrix")));
        }
    }
    Ok(())
}

/// Per-factor spectral approximation, Gram eigendecomposition and JL leverage scores.
pub fn approximate_spectra(factors: &KroneckerFactors, config: &RegressionConfig) -> Result<Vec<FactorSpectrum>> {
    config.validate()?;
    check_factors(factors)?;
    let order = factors.order() as f64;
    let eps_n = (1.0 + config.eps / 4.0).ln() / order;
    let mut out = Vec::with_capacity(factors.order());
    for (n, a) in factors.factors().iter().enumerate() {
        let exact = statistical_leverage_scores(a)?;
        let s =
            (config.alpha * spectral_sample_count(a.cols(), eps_n, config.delta, exact.beta()) as f64).ceil() as usize;
        let a_tilde = if s >= a.rows() {
            a.clone()
        } else {
            let dist = DiscreteDistribution::new(&exact.scores)?;
            sample_rows(&dist, s.max(1), derive_seed(config.seed, &[label::SPECTRAL, n as u64]))?.apply(a)
        };
        let gram = a_tilde.gram();
        let gram_eigen = sym_eigen(&gram)?;
        let eps_jl = (4.0 * eps_n).min(0.25);
        let jl_seed = derive_seed(config.seed, &[label::JL, n as u64]);
        let scores = match approx_leverage_scores_jl_with(a, &a_tilde, &gram, eps_jl, config.jl_rows, jl_seed) {
            Ok(s) => s,
            Err(Error::NumericalFailure { .. }) => exact,
            Err(e) => return Err(e),
        };
        out.push(FactorSpectrum { gram_eigen, scores });
    }
    Ok(out)
}

/// Main sketch size `ceil(α·1680·R·ln(40R)·ln(1/δ)/ε)`.
pub fn regression_sample_count(r: usize, eps: f64, delta: f64, alpha: f64) -> usize {
    let r = r.max(1) as f64;
    (alpha * REGRESSION_SAMPLE_CONSTANT * r * (40.0 * r).ln() * (1.0 / delta).ln() / eps).ceil() as usize
}

/// Preconditioner and row sketch for one regression.
#[derive(Clone, Debug)]
pub struct SketchedProblem {
    pub preconditioner: KronPreconditioner,
    pub diag: SparseDiagonal,
    pub sample_count: usize,
}

/// Draws the main sketch, or returns `None` when it would not be smaller than `K`.
pub fn prepare_sketch(
    factors: &KroneckerFactors,
    spectra: &[FactorSpectrum],
    config: &RegressionConfig,
) -> Result<Option<SketchedProblem>> {
    if spectra.len() != factors.order() {
        return Err(mismatch("prepare_sketch", factors.order(), spectra.len()));
    }
    let s = regression_sample_count(factors.cols(), config.eps, config.delta, config.alpha);
    if s >= factors.rows() {
        return Ok(None);
    }
    let scores: Vec<LeverageScores> = spectra.iter().map(|s| s.scores.clone()).collect();
    let sampler = build_product_sampler(&scores)?;
    let sketch = sample_rows(&sampler, s, derive_seed(config.seed, &[label::SKETCH]))?;
    let eigens: Vec<&SymEigen> = spectra.iter().map(|s| &s.gram_eigen).collect();
    Ok(Some(SketchedProblem {
        preconditioner: KronPreconditioner::from_gram_eigens(&eigens, config.lambda)?,
        diag: SparseDiagonal::from_sketch(&sketch),
        sample_count: s,
    }))
}

/// Fast approximate solver: `(1+ε)`-approximate loss with probability `≥ 1−δ`.
pub fn fast_kronecker_regression(
    factors: &KroneckerFactors,
    b: &[f64],
    config: &RegressionConfig,
) -> Result<SolveReport> {
    let start = Instant::now();
    if b.len() != factors.rows() {
        return Err(mismatch("fast_kronecker_regression", factors.rows(), b.len()));
    }
    let spectra = approximate_spectra(factors, config)?;
    solve_sketched(factors, b, &spectra, config, start)
}

/// [`fast_kronecker_regression`] reusing precomputed per-factor spectra.
pub fn fast_kronecker_regression_cached(
    factors: &KroneckerFactors,
    b: &[f64],
    spectra: &[FactorSpectrum],
    config: &RegressionConfig,
) -> Result<SolveReport> {
    let start = Instant::now();
    config.validate()?;
    check_factors(factors)?;
    if b.len() != factors.rows() {
        return Err(mismatch("fast_kronecker_regression", factors.rows(), b.len()));
    }
    solve_sketched(factors, b, spectra, config, start)
}

fn solve_sketched(
    factors: &KroneckerFactors,
    b: &[f64],
    spectra: &[FactorSpectrum],
    config: &RegressionConfig,
    start: Instant,
) -> Result<SolveReport> {
    let Some(problem) = prepare_sketch(factors, spectra, config)? else {
        let exact = kronmatmul_svd_solve(factors, b, config.lambda)?;
        return report(factors, b, config.lambda, exact.solution, 0, factors.rows(), start);
    };
    let diag = &problem.diag;
    let lambda = config.lambda;
    let db = diag.gather(b);
    let rhs = sketched_kron_transpose_apply(factors, diag, &db)?;
    let normal = |x: &[f64]| -> Result<Vec<f64>> {
        let mut y = sketched_gram_apply(factors, diag, x)?;
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi += lambda * xi;
        }
        Ok(y)
    };
    let precond = |x: &[f64]| problem.preconditioner.apply(x);
    let damping = 1.0 - config.eps.sqrt();
    let outcome = richardson_solve(normal, precond, &rhs, damping, config.max_iters(), config.residual_tol)?;
    report(
        factors,
        b,
        lambda,
        outcome.solution,
        outcome.iterations,
        problem.sample_count,
        start,
    )
}

// ---------------------------------------------------------------------------
// Exact and dense baselines

fn guard(context: &'static str, size: u128, force: bool) -> Result<()> {
    if !force && size > EXACT_SIZE_LIMIT {
        return Err(Error::SizeGuard {
            context,
            size,
            limit: EXACT_SIZE_LIMIT,
        });
    }
    Ok(())
}

// Relative cutoff for the normal-equation pseudoinverse. `KᵀK` squares the
// condition number of `K`, so the SVD default would discard real directions.
const NORMAL_RANK_TOL: f64 = 1e-14;

/// Solves `(KᵀK + λI)⁺·Kᵀb` with `KᵀK = ⊗ₙ AⁿᵀAⁿ` formed densely.
pub fn naive_normal_solve(factors: &KroneckerFactors, b: &[f64], lambda: f64, force: bool) -> Result<SolveReport> {
    let start = Instant::now();
    if b.len() != factors.rows() {
        return Err(mismatch("naive_normal_solve", factors.rows(), b.len()));
    }
    guard("naive_normal_solve", factors.rows() as u128, force)?;
    let r = factors.cols() as u128;
    guard("naive_normal_solve", r * r, force)?;
    let grams: Vec<DenseMatrix> = factors.factors().iter().map(|a| a.gram()).collect();
    let mut ktk = explicit_kron_with_limit(&grams, if force { u128::MAX } else { EXACT_SIZE_LIMIT })?;
    for i in 0..ktk.rows() {
        ktk.set(i, i, ktk.get(i, i) + lambda);
    }
    let ktb = kron_mat_mul(&factors.transposed(), &DenseMatrix::column(b))?.into_data();
    let x = pseudo_inverse(&ktk, NORMAL_RANK_TOL)?.matvec(&ktb);
    report(factors, b, lambda, x, 0, factors.rows(), start)
}

/// Exact solution `(V¹ ⊗ ⋯)·diag(σ/(σ²+λ))·(U¹ ⊗ ⋯)ᵀ·b` from factor SVDs.
pub fn kronmatmul_svd_solve(factors: &KroneckerFactors, b: &[f64], lambda: f64) -> Result<SolveReport> {
    let start = Instant::now();
    if b.len() != factors.rows() {
        return Err(mismatch("kronmatmul_svd_solve", factors.rows(), b.len()));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidInput(format!("lambda must be >= 0, got {lambda}")));
    }
    let svds = factors
        .factors()
        .iter()
        .map(|a| compact_svd(a, DEFAULT_RANK_TOL))
        .collect::<Result<Vec<_>>>()?;
    if svds.iter().any(|s| s.rank() == 0) {
        return report(factors, b, lambda, vec![0.0; factors.cols()], 0, factors.rows(), start);
    }
    let ut = KroneckerFactors::new(svds.iter().map(|s| s.u.transpose()).collect())?;
    let mut y = kron_mat_vec(&ut, b)?;
    let mut sig = vec![1.0];
    for s in &svds {
        sig = sig.iter().flat_map(|p| s.sigma.iter().map(move |x| p * x)).collect();
    }
    for (yi, s) in y.iter_mut().zip(&sig) {
        *yi *= s / (s * s + lambda);
    }
    let v = KroneckerFactors::new(svds.iter().map(|s| s.v.clone()).collect())?;
    let x = kron_mat_vec(&v, &y)?;
    report(factors, b, lambda, x, 0, factors.rows(), start)
}

/// Sketch-and-solve sample count `ceil(α·1680·R·ln(40R)/ε)`.
pub fn sketch_solve_sample_count(r: usize, eps: f64, alpha: f64) -> usize {
    let r = r.max(1) as f64;
    (alpha * REGRESSION_SAMPLE_CONSTANT * r * (40.0 * r).ln() / eps).ceil() as usize
}

/// Samples `S` by exact product leverage scores and solves the sketched ridge problem densely.
pub fn sketch_and_solve_ridge(factors: &KroneckerFactors, b: &[f64], config: &RegressionConfig) -> Result<SolveReport> {
    let start = Instant::now();
    if !(config.eps > 0.0 && config.eps < 1.0) {
        return Err(Error::InvalidInput(format!(
            "eps must be in (0, 1), got {}",
            config.eps
        )));
    }
    config.validate_common()?;
    check_factors(factors)?;
    if b.len() != factors.rows() {
        return Err(mismatch("sketch_and_solve_ridge", factors.rows(), b.len()));
    }
    let scores = factors
        .factors()
        .iter()
        .map(statistical_leverage_scores)
        .collect::<Result<Vec<_>>>()?;
    let sampler = build_product_sampler(&scores)?;
    let s = sketch_solve_sample_count(factors.cols(), config.eps, config.alpha);
    let sketch = sample_rows(&sampler, s, derive_seed(config.seed, &[label::SKETCH]))?;
    let mut out = sketch_and_solve_with_sketch(factors, b, &sketch, config.lambda)?;
    out.wall_time = start.elapsed();
    Ok(out)
}

/// Solves `min ‖S(Kx − b)‖² + λ‖x‖²` for a given sketch.
pub fn sketch_and_solve_with_sketch(
    factors: &KroneckerFactors,
    b: &[f64],
    sketch: &RowSketch,
    lambda: f64,
) -> Result<SolveReport> {
    let start = Instant::now();
    let r = factors.cols() as u128;
    guard("sketch_and_solve_ridge", r * r, false)?;
    if sketch.entries.iter().any(|&(i, _)| i >= factors.rows()) {
        return Err(mismatch(
            "sketch_and_solve_ridge",
            format!("row indices below {}", factors.rows()),
            "out-of-range index",
        ));
    }
    // SᵀS = D² with duplicate samples merged, so only distinct rows are materialized.
    let diag = SparseDiagonal::from_sketch(sketch);
    let merged = RowSketch {
        sample_count: diag.nnz(),
        entries: diag.entries().to_vec(),
    };
    let sk = sketch_rows_of_kron(factors, &merged)?;
    let sb = merged.apply_vec(b);
    let mut normal = sk.gram();
    for i in 0..normal.rows() {
        normal.set(i, i, normal.get(i, i) + lambda);
    }
    let rhs = sk.transpose_matvec(&sb);
    let x = pseudo_inverse(&normal, NORMAL_RANK_TOL)?.matvec(&rhs);
    report(factors, b, lambda, x, 0, sketch.entries.len(), start)
}

/// `Kᵀ(K·x − b) + λx`, the gradient of half the ridge objective.
pub fn ridge_gradient(factors: &KroneckerFactors, x: &[f64], b: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let kx = kron_mat_vec(factors, x)?;
    let r: Vec<f64> = kx.iter().zip(b).map(|(p, q)| p - q).collect();
    let mut g = kron_mat_vec(&factors.transposed(), &r)?;
    for (gi, xi) in g.iter_mut().zip(x) {
        *gi += lambda * xi;
    }
    Ok(g)
}
