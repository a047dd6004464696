//! Leverage scores, spectral approximation by row sampling, and row sketches.

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{mismatch, Error, Result};
use crate::rng::{rng_from_seed, StreamRng};
use crate::tensor::{compact_svd, sym_eigen, CompactSvd, DenseMatrix, DEFAULT_RANK_TOL};

/// Constant in the spectral-approximation sample count `144·d·ln(2d/δ)/(β·ε²)`.
pub const SPECTRAL_SAMPLE_CONSTANT: f64 = 144.0;
/// Constant in the block-regression sample count `1680·d·ln(40d)`.
pub const REGRESSION_SAMPLE_CONSTANT: f64 = 1680.0;

#[derive(Clone, Debug)]
pub struct LeverageScores {
    pub scores: Vec<f64>,
    pub lambda: f64,
    /// Multiplicative accuracy of the scores; 1 for exact scores.
    pub approx_factor: f64,
}

impl LeverageScores {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.scores.iter().sum()
    }

    /// Overestimate factor implied by `approx_factor` for the normalized distribution.
    pub fn beta(&self) -> f64 {
        1.0 / (self.approx_factor * self.approx_factor)
    }

    pub fn probabilities(&self) -> Result<Vec<f64>> {
        normalize(&self.scores)
    }
}

fn normalize(weights: &[f64]) -> Result<Vec<f64>> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidInput("weights must be finite and nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidInput("weights sum to zero".into()));
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

/// Exact λ-ridge leverage scores `Σ_k σ_k²/(σ_k²+λ)·u_ik²` from a compact SVD.
pub fn ridge_leverage_scores(svd: &CompactSvd, lambda: f64) -> Result<LeverageScores> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidInput(format!("lambda must be >= 0, got {lambda}")));
    }
    let shrink: Vec<f64> = svd.sigma.iter().map(|s| s * s / (s * s + lambda)).collect();
    let scores = (0..svd.u.rows())
        .map(|i| {
            svd.u
                .row(i)
                .iter()
                .zip(&shrink)
                .map(|(u, f)| f * u * u)
                .sum::<f64>()
                .min(1.0)
        })
        .collect();
    Ok(LeverageScores {
        scores,
        lambda,
        approx_factor: 1.0,
    })
}

/// Exact statistical (λ = 0) leverage scores of `a`.
pub fn statistical_leverage_scores(a: &DenseMatrix) -> Result<LeverageScores> {
    ridge_leverage_scores(&compact_svd(a, DEFAULT_RANK_TOL)?, 0.0)
}

/// Number of Gaussian projection rows used by [`approx_leverage_scores_jl`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum JlRows {
    /// Enough rows for every squared norm to be preserved within `1 ± ε/20`
    /// simultaneously with probability 0.99.
    Derived,
    /// `ceil(c·ln n)` rows.
    LogScaled(f64),
    Fixed(usize),
}

const JL_FAILURE_PROB: f64 = 0.01;

pub fn jl_row_count(n: usize, eps: f64, rows: JlRows) -> usize {
    let n = n.max(2) as f64;
    match rows {
        JlRows::Derived => {
            let e = eps / 20.0;
            (4.0 * (2.0 * n / JL_FAILURE_PROB).ln() / (e * e - e * e * e)).ceil() as usize
        }
        JlRows::LogScaled(c) => (c * n.ln()).ceil().max(1.0) as usize,
        JlRows::Fixed(r) => r.max(1),
    }
}

/// `(1+ε/2)`-approximate statistical leverage scores of `a` given a spectral
/// approximation `a_tilde` and its Gram matrix.
pub fn approx_leverage_scores_jl(
    a: &DenseMatrix,
    a_tilde: &DenseMatrix,
    gram_tilde: &DenseMatrix,
    eps: f64,
    seed: u64,
) -> Result<LeverageScores> {
    approx_leverage_scores_jl_with(a, a_tilde, gram_tilde, eps, JlRows::Derived, seed)
}

/// As [`approx_leverage_scores_jl`] with an explicit projection size.
///
/// Scores are `‖G·Ã·M·a_i‖² / ((1+ε/4)(1−ε/20))` with `M = (1+ε/4)(ÃᵀÃ)⁻¹` and
/// `G` an `r × k` matrix of `N(0, 1/r)` entries. `G·Ã` has i.i.d. `N(0, ÃᵀÃ/r)`
/// rows, so its Gram matrix is Wishart and is drawn directly (Bartlett
/// decomposition when `r ≥ d`), at a cost independent of `r` and `k`.
pub fn approx_leverage_scores_jl_with(
    a: &DenseMatrix,
    a_tilde: &DenseMatrix,
    gram_tilde: &DenseMatrix,
    eps: f64,
    rows: JlRows,
    seed: u64,
) -> Result<LeverageScores> {
    if !(eps > 0.0 && eps <= 0.25) {
        return Err(Error::InvalidInput(format!("JL eps must be in (0, 1/4], got {eps}")));
    }
    let d = a.cols();
    if a_tilde.cols() != d {
        return Err(mismatch(
            "approx_leverage_scores_jl",
            format!("{d} columns"),
            a_tilde.cols(),
        ));
    }
    if gram_tilde.shape() != (d, d) {
        return Err(mismatch(
            "approx_leverage_scores_jl",
            format!("{d}x{d} gram"),
            format!("{}x{}", gram_tilde.rows(), gram_tilde.cols()),
        ));
    }
    let eig = sym_eigen(gram_tilde)?;
    let top = eig.values.first().copied().unwrap_or(0.0);
    let bottom = eig.values.last().copied().unwrap_or(0.0);
    if !(top > 0.0) || bottom <= 1e-12 * top {
        return Err(Error::NumericalFailure {
            context: "approx_leverage_scores_jl",
            iterations: 0,
            detail: format!("gram matrix is singular (eigenvalues {bottom:e} .. {top:e})"),
        });
    }

    let r = jl_row_count(a.rows(), eps, rows);
    let mut rng = rng_from_seed(seed);
    let t = gaussian_gram_factor(r, d, &mut rng)?;

    // P = Tᵀ·Λ^{-1/2}·Vᵀ, so ‖G·Ã·(ÃᵀÃ)⁻¹·a_i‖² ~ ‖P·a_i‖² / r.
    let vt_scaled = DenseMatrix::from_fn(d, d, |k, j| eig.vectors.get(j, k) / eig.values[k].sqrt());
    let p = t.transpose().matmul(&vt_scaled);
    let scale = (1.0 + eps / 4.0) / (r as f64 * (1.0 - eps / 20.0));
    let scores = (0..a.rows())
        .map(|i| {
            let y = p.matvec(a.row(i));
            scale * y.iter().map(|v| v * v).sum::<f64>()
        })
        .collect();
    Ok(LeverageScores {
        scores,
        lambda: 0.0,
        approx_factor: 1.0 + eps / 2.0,
    })
}

/// Returns `F` (`d × m`) with `F·Fᵀ` distributed as `ZᵀZ` for an `r × d`
/// standard normal `Z`.
fn gaussian_gram_factor(r: usize, d: usize, rng: &mut StreamRng) -> Result<DenseMatrix> {
    if r >= d {
        let mut t = DenseMatrix::zeros(d, d);
        for i in 0..d {
            let dof = (r - i) as f64;
            let chi = ChiSquared::new(dof).map_err(|e| Error::InvalidInput(format!("chi-squared: {e}")))?;
            t.set(i, i, chi.sample(rng).sqrt());
            for j in 0..i {
                t.set(i, j, StandardNormal.sample(rng));
            }
        }
        Ok(t)
    } else {
        let z = DenseMatrix::from_fn(r, d, |_, _| StandardNormal.sample(rng));
        Ok(z.transpose())
    }
}

/// Spectral-approximation sample count `ceil(144·d·ln(2d/δ)/(β·ε²))`.
pub fn spectral_sample_count(d: usize, eps: f64, delta: f64, beta: f64) -> usize {
    let d = d.max(1) as f64;
    (SPECTRAL_SAMPLE_CONSTANT * d * (2.0 * d / delta).ln() / (beta * eps * eps)).ceil() as usize
}

/// Samples `S·A` by exact leverage scores with the spectral-approximation sample count.
pub fn spectral_approx_rows(a: &DenseMatrix, eps: f64, delta: f64, seed: u64) -> Result<DenseMatrix> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidInput(format!("eps must be in (0, 1), got {eps}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidInput(format!("delta must be in (0, 1), got {delta}")));
    }
    let scores = statistical_leverage_scores(a)?;
    let dist = DiscreteDistribution::new(&scores.scores)?;
    let s = spectral_sample_count(a.cols(), eps, delta, scores.beta());
    Ok(sample_rows(&dist, s, seed)?.apply(a))
}

/// A distribution over row indices that reports the probability of each draw.
pub trait RowDistribution {
    /// Number of rows in the support.
    fn len(&self) -> usize;
    fn probability(&self, index: usize) -> f64;
    fn draw(&self, rng: &mut StreamRng) -> (usize, f64);

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn cdf_of(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = p
        .iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect();
    if let Some(last) = cdf.last_mut() {
        *last = 1.0;
    }
    cdf
}

#[inline]
fn lookup(cdf: &[f64], u: f64) -> usize {
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

/// Explicit finite distribution sampled by CDF inversion.
#[derive(Clone, Debug)]
pub struct DiscreteDistribution {
    probabilities: Vec<f64>,
    cdf: Vec<f64>,
}

impl DiscreteDistribution {
    /// Normalizes nonnegative `weights` into a distribution.
    pub fn new(weights: &[f64]) -> Result<Self> {
        let probabilities = normalize(weights)?;
        let cdf = cdf_of(&probabilities);
        Ok(Self { probabilities, cdf })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }
}

impl RowDistribution for DiscreteDistribution {
    fn len(&self) -> usize {
        self.probabilities.len()
    }

    fn probability(&self, index: usize) -> f64 {
        self.probabilities[index]
    }

    fn draw(&self, rng: &mut StreamRng) -> (usize, f64) {
        let i = lookup(&self.cdf, rng.random::<f64>());
        (i, self.probabilities[i])
    }
}

/// Product of per-factor distributions over the rows of a Kronecker product.
///
/// Row `(i_1, …, i_N)` has flat index `Σ i_n·∏_{k>n} I_k` and probability `∏ p⁽ⁿ⁾_{i_n}`.
#[derive(Clone, Debug)]
pub struct ProductSampler {
    factors: Vec<DiscreteDistribution>,
    dims: Vec<usize>,
}

pub fn build_product_sampler(per_factor_scores: &[LeverageScores]) -> Result<ProductSampler> {
    if per_factor_scores.is_empty() {
        return Err(Error::InvalidInput("product sampler needs at least one factor".into()));
    }
    let factors = per_factor_scores
        .iter()
        .map(|s| DiscreteDistribution::new(&s.scores))
        .collect::<Result<Vec<_>>>()?;
    let dims = factors.iter().map(|f| f.len()).collect();
    Ok(ProductSampler { factors, dims })
}

impl ProductSampler {
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn per_factor_probabilities(&self) -> Vec<&[f64]> {
        self.factors.iter().map(|f| f.probabilities()).collect()
    }

    pub fn per_factor_cdf(&self) -> Vec<&[f64]> {
        self.factors.iter().map(|f| f.cdf()).collect()
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dims.len()];
        for k in (0..self.dims.len()).rev() {
            idx[k] = flat % self.dims[k];
            flat /= self.dims[k];
        }
        idx
    }

    pub fn joint_probability(&self, idx: &[usize]) -> f64 {
        idx.iter().zip(&self.factors).map(|(&i, f)| f.probability(i)).product()
    }
}

impl RowDistribution for ProductSampler {
    fn len(&self) -> usize {
        self.dims.iter().product()
    }

    fn probability(&self, index: usize) -> f64 {
        self.joint_probability(&self.multi_index(index))
    }

    fn draw(&self, rng: &mut StreamRng) -> (usize, f64) {
        let mut flat = 0;
        let mut p = 1.0;
        for (f, &n) in self.factors.iter().zip(&self.dims) {
            let (i, pi) = f.draw(rng);
            flat = flat * n + i;
            p *= pi;
        }
        (flat, p)
    }
}

/// Row-sampling sketch `S`: row `t` of `S` is `weight_t·e_{index_t}ᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct RowSketch {
    pub sample_count: usize,
    /// `(flat row index, weight)` per sample, in draw order.
    pub entries: Vec<(usize, f64)>,
}

impl RowSketch {
    /// The `n × n` identity viewed as a sketch.
    pub fn identity(n: usize) -> Self {
        Self {
            sample_count: n,
            entries: (0..n).map(|i| (i, 1.0)).collect(),
        }
    }

    /// Dense `S·A`.
    pub fn apply(&self, a: &DenseMatrix) -> DenseMatrix {
        DenseMatrix::from_fn(self.entries.len(), a.cols(), |t, j| {
            let (i, w) = self.entries[t];
            w * a.get(i, j)
        })
    }

    /// `S·b`.
    pub fn apply_vec(&self, b: &[f64]) -> Vec<f64> {
        self.entries.iter().map(|&(i, w)| w * b[i]).collect()
    }
}

/// Draws `s` rows i.i.d. with replacement; each gets weight `1/√(p·s)`.
pub fn sample_rows<D: RowDistribution + ?Sized>(dist: &D, s: usize, seed: u64) -> Result<RowSketch> {
    if s == 0 {
        return Err(Error::InvalidInput("sample count must be at least 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let sf = s as f64;
    let entries = (0..s)
        .map(|_| {
            let (i, p) = dist.draw(&mut rng);
            (i, 1.0 / (p * sf).sqrt())
        })
        .collect();
    Ok(RowSketch {
        sample_count: s,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::explicit_kron;
    use proptest::prelude::*;

    fn random(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = rng_from_seed(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn ridge_examples() {
        let s = ridge_leverage_scores(&compact_svd(&DenseMatrix::identity(3), 1e-12).unwrap(), 0.0).unwrap();
        assert!(close(&s.scores, &[1.0, 1.0, 1.0], 1e-14));
        let s = ridge_leverage_scores(&compact_svd(&DenseMatrix::identity(2), 1e-12).unwrap(), 1.0).unwrap();
        assert!(close(&s.scores, &[0.5, 0.5], 1e-14));

        let a = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 2.0], [0.0, 0.0]]).unwrap();
        let s = ridge_leverage_scores(&compact_svd(&a, 1e-12).unwrap(), 3.0).unwrap();
        // a_i (AᵀA + 3I)⁻¹ a_iᵀ with AᵀA + 3I = diag(4, 7).
        let inv = [1.0 / 4.0, 1.0 / 7.0];
        let direct: Vec<f64> = (0..3)
            .map(|i| a.row(i).iter().zip(&inv).map(|(x, d)| x * x * d).sum())
            .collect();
        assert!(close(&s.scores, &direct, 1e-14));
        assert!(close(&s.scores, &[0.25, 4.0 / 7.0, 0.0], 1e-14));
        assert!(ridge_leverage_scores(&compact_svd(&a, 1e-12).unwrap(), -1.0).is_err());
    }

    #[test]
    fn score_sums() {
        let a = random(12, 4, 1).matmul(&random(4, 5, 2));
        let svd = compact_svd(&a, DEFAULT_RANK_TOL).unwrap();
        let s = ridge_leverage_scores(&svd, 0.0).unwrap();
        assert!((s.sum() - 4.0).abs() < 1e-8);
        let lambda = 0.7;
        let s = ridge_leverage_scores(&svd, lambda).unwrap();
        let expect: f64 = svd.sigma.iter().map(|x| x * x / (x * x + lambda)).sum();
        assert!((s.sum() - expect).abs() < 1e-8);
        assert!(s.scores.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn appending_rows_never_increases_scores() {
        for seed in 0..10 {
            let a = random(10, 3, seed);
            let extra = random(5, 3, seed + 50);
            let stacked = DenseMatrix::new(15, 3, [a.data(), extra.data()].concat()).unwrap();
            let before = statistical_leverage_scores(&a).unwrap();
            let after = statistical_leverage_scores(&stacked).unwrap();
            for i in 0..10 {
                assert!(after.scores[i] <= before.scores[i] + 1e-12);
            }
        }
    }

    #[test]
    fn jl_rejects_bad_inputs() {
        let a = DenseMatrix::identity(4);
        let g = a.gram();
        assert!(approx_leverage_scores_jl(&a, &a, &g, 0.0, 1).is_err());
        assert!(approx_leverage_scores_jl(&a, &a, &g, 0.3, 1).is_err());
        let singular = DenseMatrix::from_diag(&[1.0, 1.0, 1.0, 0.0]);
        assert!(matches!(
            approx_leverage_scores_jl(&a, &a, &singular, 0.25, 1),
            Err(Error::NumericalFailure { .. })
        ));
    }

    #[test]
    fn jl_scores_nonnegative_with_small_projection() {
        let a = random(20, 3, 4);
        let g = a.gram();
        let s = approx_leverage_scores_jl_with(&a, &a, &g, 0.25, JlRows::Fixed(2), 9).unwrap();
        assert!(s.scores.iter().all(|&v| v >= 0.0));
        assert_eq!(s.approx_factor, 1.125);
    }

    #[test]
    fn jl_row_counts() {
        assert_eq!(
            jl_row_count(100, 0.25, JlRows::LogScaled(8.0)),
            (8.0 * 100f64.ln()).ceil() as usize
        );
        assert_eq!(jl_row_count(100, 0.25, JlRows::Fixed(7)), 7);
        assert!(jl_row_count(100, 0.25, JlRows::Derived) > 10_000);
    }

    #[test]
    fn spectral_identity_rows_are_basis_rows() {
        let sa = spectral_approx_rows(&DenseMatrix::identity(3), 0.5, 0.1, 5).unwrap();
        assert_eq!(sa.rows(), spectral_sample_count(3, 0.5, 0.1, 1.0));
        for t in 0..sa.rows() {
            let nnz: Vec<f64> = sa.row(t).iter().copied().filter(|v| *v != 0.0).collect();
            assert_eq!(nnz.len(), 1);
            assert!((nnz[0] - (3.0 / sa.rows() as f64).sqrt()).abs() < 1e-15);
        }
        assert!(spectral_approx_rows(&DenseMatrix::identity(3), 0.0, 0.1, 5).is_err());
        assert!(spectral_approx_rows(&DenseMatrix::identity(3), 0.5, 1.0, 5).is_err());
    }

    #[test]
    fn product_sampler_uniform() {
        let scores: Vec<LeverageScores> = [2, 3]
            .iter()
            .map(|&n| statistical_leverage_scores(&DenseMatrix::identity(n)).unwrap())
            .collect();
        let ps = build_product_sampler(&scores).unwrap();
        for flat in 0..6 {
            assert!((ps.probability(flat) - 1.0 / 6.0).abs() < 1e-15);
        }
        for cdf in ps.per_factor_cdf() {
            assert_eq!(*cdf.last().unwrap(), 1.0);
            assert!(cdf.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn product_sampler_single_factor() {
        let s = LeverageScores {
            scores: vec![1.0, 3.0],
            lambda: 0.0,
            approx_factor: 1.0,
        };
        let ps = build_product_sampler(std::slice::from_ref(&s)).unwrap();
        assert_eq!(ps.per_factor_probabilities()[0], &[0.25, 0.75]);
        let zero = LeverageScores {
            scores: vec![0.0, 0.0],
            lambda: 0.0,
            approx_factor: 1.0,
        };
        assert!(build_product_sampler(&[s, zero]).is_err());
    }

    #[test]
    fn kron_scores_are_products() {
        let a = random(4, 2, 1);
        let b = random(3, 2, 2);
        let la = statistical_leverage_scores(&a).unwrap().probabilities().unwrap();
        let lb = statistical_leverage_scores(&b).unwrap().probabilities().unwrap();
        let k = explicit_kron(&[a, b]).unwrap();
        let lk = statistical_leverage_scores(&k).unwrap().probabilities().unwrap();
        for i in 0..4 {
            for j in 0..3 {
                assert!((lk[i * 3 + j] - la[i] * lb[j]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sample_rows_examples() {
        let uniform = DiscreteDistribution::new(&[1.0; 4]).unwrap();
        let sk = sample_rows(&uniform, 2, 3).unwrap();
        assert_eq!(sk.entries.len(), 2);
        for &(_, w) in &sk.entries {
            assert!((w - 2f64.sqrt()).abs() < 1e-15);
        }
        let degenerate = DiscreteDistribution::new(&[1.0, 0.0, 0.0]).unwrap();
        let sk = sample_rows(&degenerate, 3, 3).unwrap();
        for &(i, w) in &sk.entries {
            assert_eq!(i, 0);
            assert!((w - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        }
        assert!(sample_rows(&uniform, 0, 1).is_err());
    }

    #[test]
    fn zero_probability_rows_never_drawn() {
        let d = DiscreteDistribution::new(&[0.0, 2.0, 0.0, 1.0, 0.0]).unwrap();
        let sk = sample_rows(&d, 5000, 11).unwrap();
        assert!(sk.entries.iter().all(|&(i, _)| i == 1 || i == 3));
    }

    proptest! {
        #[test]
        fn ridge_scores_bounded(rows in 2usize..10, cols in 1usize..5, lambda in 0.0f64..10.0, seed in any::<u64>()) {
            let a = random(rows, cols, seed);
            let s = ridge_leverage_scores(&compact_svd(&a, DEFAULT_RANK_TOL).unwrap(), lambda).unwrap();
            prop_assert!(s.scores.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }

        #[test]
        fn weights_match_probabilities(weights in prop::collection::vec(0.0f64..5.0, 1..8), s in 1usize..20, seed in any::<u64>()) {
            prop_assume!(weights.iter().sum::<f64>() > 0.0);
            let d = DiscreteDistribution::new(&weights).unwrap();
            let sk = sample_rows(&d, s, seed).unwrap();
            prop_assert_eq!(sk.entries.len(), s);
            for &(i, w) in &sk.entries {
                let p = d.probability(i);
                prop_assert!(p > 0.0);
                prop_assert_eq!(w, 1.0 / (p * s as f64).sqrt());
            }
        }
    }
}
