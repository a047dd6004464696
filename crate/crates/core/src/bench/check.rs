//! Quick equivalence checks of the structured kernels against dense oracles.

use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::kron::{
    kron_mat_mul, kron_vec_square, sketched_kron_apply, sketched_kron_transpose_apply, KroneckerFactors, SparseDiagonal,
};
use crate::leverage::{ridge_leverage_scores, statistical_leverage_scores};
use crate::rng::{derive_seed, rng_from_seed};
use crate::solvers::{kronmatmul_svd_solve, naive_normal_solve};
use crate::tensor::{compact_svd, explicit_kron, pseudo_inverse, DenseMatrix, DenseTensor, DEFAULT_RANK_TOL};
use crate::tucker::{
    build_factor_workspace, fast_factor_matrix_update, naive_factor_update, TuckerConfig, TuckerModel,
};

use super::io::{decode_tensor, encode_tensor};

#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed error against the tolerance.
    pub detail: String,
}

fn random(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = rng_from_seed(seed);
    DenseMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
}

fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

fn small_factors(seed: u64, order: usize) -> KroneckerFactors {
    let factors = (0..order)
        .map(|k| {
            let s = derive_seed(seed, &[k as u64]);
            let rows = 2 + (s % 5) as usize;
            let cols = 1 + ((s >> 8) % rows.min(4) as u64) as usize;
            random(rows, cols, s)
        })
        .collect();
    KroneckerFactors::new(factors).expect("non-empty")
}

fn outcome(name: &'static str, worst: f64, tol: f64) -> CheckOutcome {
    CheckOutcome {
        name,
        passed: worst <= tol,
        detail: format!("max error {worst:.3e} (tolerance {tol:.0e})"),
    }
}

fn leverage_law() -> Result<CheckOutcome> {
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let k = small_factors(seed, 2 + (seed % 2) as usize);
        let dense = explicit_kron(k.factors())?;
        let joint = statistical_leverage_scores(&dense)?.probabilities()?;
        let per: Vec<Vec<f64>> = k
            .factors()
            .iter()
            .map(|a| statistical_leverage_scores(a)?.probabilities())
            .collect::<Result<_>>()?;
        for (flat, p) in joint.iter().enumerate() {
            let idx = k.row_multi_index(flat)?;
            let q: f64 = idx.iter().zip(&per).map(|(&i, pr)| pr[i]).product();
            worst = worst.max((p - q).abs());
        }
        let lambda = 0.3;
        let ridge = ridge_leverage_scores(&compact_svd(&dense, DEFAULT_RANK_TOL)?, lambda)?;
        let mut reg = dense.gram();
        for i in 0..reg.rows() {
            reg.set(i, i, reg.get(i, i) + lambda);
        }
        let inv = pseudo_inverse(&reg, 1e-14)?;
        for i in 0..dense.rows() {
            let row = dense.row(i);
            let direct: f64 = row.iter().zip(inv.matvec(row)).map(|(a, b)| a * b).sum();
            worst = worst.max((direct - ridge.scores[i]).abs());
        }
    }
    Ok(outcome("kronecker leverage law", worst, 1e-9))
}

fn fast_multiply() -> Result<CheckOutcome> {
    let mut worst = 0.0f64;
    for seed in 0..40 {
        let k = small_factors(seed + 100, 2 + (seed % 3) as usize);
        let dense = explicit_kron(k.factors())?;
        let b = random(k.cols(), 2, seed);
        worst = worst.max(max_rel(kron_mat_mul(&k, &b)?.data(), dense.matmul(&b).data()));

        let sq = KroneckerFactors::new(
            k.factors()
                .iter()
                .map(|a| random(a.cols(), a.cols(), seed + 7))
                .collect(),
        )?;
        let c = random_vec(sq.cols(), seed + 1);
        worst = worst.max(max_rel(
            &kron_vec_square(&sq, &c)?,
            &explicit_kron(sq.factors())?.matvec(&c),
        ));

        let rows = k.rows();
        let entries: Vec<(usize, f64)> = (0..rows)
            .step_by(3)
            .map(|i| (i, 0.5 + i as f64 / rows as f64))
            .collect();
        let diag = SparseDiagonal::new(entries)?;
        let c = random_vec(k.cols(), seed + 2);
        let full = dense.matvec(&c);
        let expect: Vec<f64> = diag.entries().iter().map(|&(i, d)| d * full[i]).collect();
        worst = worst.max(max_rel(&sketched_kron_apply(&k, &diag, &c)?, &expect));

        let y = random_vec(diag.nnz(), seed + 3);
        let mut scattered = vec![0.0; rows];
        for (&(i, d), v) in diag.entries().iter().zip(&y) {
            scattered[i] = d * v;
        }
        worst = worst.max(max_rel(
            &sketched_kron_transpose_apply(&k, &diag, &y)?,
            &dense.transpose_matvec(&scattered),
        ));
    }
    Ok(outcome("fast multiply vs dense", worst, 1e-10))
}

fn exact_solvers() -> Result<CheckOutcome> {
    let mut worst = 0.0f64;
    for seed in 0..15 {
        let k = small_factors(seed + 200, 2 + (seed % 2) as usize);
        let b = random_vec(k.rows(), seed);
        let lambda = [0.0, 1e-3, 1.0][(seed % 3) as usize];
        let a = naive_normal_solve(&k, &b, lambda, false)?.solution;
        let c = kronmatmul_svd_solve(&k, &b, lambda)?.solution;
        worst = worst.max(max_rel(&a, &c));
    }
    Ok(outcome("exact solver agreement", worst, 1e-8))
}

fn random_model(seed: u64) -> Result<TuckerModel> {
    let shape = [5, 4, 4];
    let core: Vec<usize> = (0..3).map(|k| 1 + (derive_seed(seed, &[k]) % 3) as usize).collect();
    let mut rng = rng_from_seed(seed);
    let g = DenseTensor::from_fn(core.clone(), |_| StandardNormal.sample(&mut rng))?;
    let factors = shape
        .iter()
        .zip(&core)
        .enumerate()
        .map(|(k, (&i, &r))| random(i, r, derive_seed(seed, &[10 + k as u64])))
        .collect();
    TuckerModel::new(g, factors, 0.1)
}

fn woodbury() -> Result<CheckOutcome> {
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let model = random_model(seed + 300)?;
        let ws = build_factor_workspace(&model, (seed % 3) as usize, 0.25, model.lambda)?;
        let inv = pseudo_inverse(&ws.dense_m()?, 1e-14)?;
        let z = random_vec(ws.gt.rows(), seed);
        worst = worst.max(max_rel(&ws.apply_m_pinv(&z)?, &inv.matvec(&z)));
    }
    Ok(outcome("woodbury preconditioner", worst, 1e-8))
}

fn factor_update() -> Result<CheckOutcome> {
    let mut worst = 0.0f64;
    for seed in 0..4 {
        let model = random_model(seed + 400)?;
        let x = DenseTensor::from_fn(vec![5, 4, 4], |i| ((i[0] + 2 * i[1] + 3 * i[2]) as f64).sin())?;
        let cfg = TuckerConfig {
            lambda: model.lambda,
            eps: 1e-6,
            ..TuckerConfig::default()
        };
        for n in 0..3 {
            let fast = fast_factor_matrix_update(&model, &x, n, &cfg)?;
            let naive = naive_factor_update(&model, &x, n)?;
            worst = worst.max(max_rel(fast.data(), naive.data()));
        }
    }
    Ok(outcome("full-sketch factor update vs naive", worst, 1e-6))
}

fn tensor_roundtrip() -> Result<CheckOutcome> {
    let mut rng = rng_from_seed(5);
    let x = DenseTensor::from_fn(vec![3, 1, 4], |_| StandardNormal.sample(&mut rng))?;
    let y = decode_tensor(&encode_tensor(&x)?);
    let passed = matches!(&y, Ok(y) if y.shape() == x.shape()
        && y.data().iter().zip(x.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    Ok(CheckOutcome {
        name: "tensor file roundtrip",
        passed,
        detail: if passed { "bitwise".into() } else { format!("{y:?}") },
    })
}

/// Runs every check; a check that errors counts as failed.
pub fn oracle_checks() -> Vec<CheckOutcome> {
    let checks: [(&'static str, fn() -> Result<CheckOutcome>); 6] = [
        ("kronecker leverage law", leverage_law),
        ("fast multiply vs dense", fast_multiply),
        ("exact solver agreement", exact_solvers),
        ("woodbury preconditioner", woodbury),
        ("full-sketch factor update vs naive", factor_update),
        ("tensor file roundtrip", tensor_roundtrip),
    ];
    checks
        .into_iter()
        .map(|(name, f)| {
            f().unwrap_or_else(|e| CheckOutcome {
                name,
                passed: false,
                detail: e.to_string(),
            })
        })
        .collect()
}
