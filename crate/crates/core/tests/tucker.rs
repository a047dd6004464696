mod common;

use common::*;
use kronsolve_core::kron::KroneckerFactors;
use kronsolve_core::kron::SparseDiagonal;
use kronsolve_core::leverage::{build_product_sampler, sample_rows};
use kronsolve_core::solvers::{ridge_loss, FactorSpectrum};
use kronsolve_core::tensor::{explicit_kron, unfold, DenseMatrix, DenseTensor};
use kronsolve_core::tucker::{
    build_factor_workspace, core_update, factor_row_sample_count, fast_factor_matrix_update, fast_factor_row_update,
    naive_factor_update, tucker_als, FactorUpdateWorkspace, SolverMode, TuckerConfig, TuckerModel,
};
use proptest::prelude::*;

fn random_model(shape: &[usize], core: &[usize], lambda: f64, seed: u64) -> TuckerModel {
    let factors = shape
        .iter()
        .zip(core)
        .enumerate()
        .map(|(k, (&i, &r))| gaussian(i, r, seed * 17 + k as u64))
        .collect();
    TuckerModel::new(gaussian_tensor(core, seed + 12345), factors, lambda).unwrap()
}

fn row_problem(ws: &FactorUpdateWorkspace, x: &DenseTensor, i: usize, lambda: f64) -> RowProblem {
    let xn = unfold(x, ws.mode).unwrap();
    RowProblem::new(explicit(ws.others()), ws.gt.clone(), xn.row(i).to_vec(), lambda)
}

/// Tiny instance with `R_n ≤ ∏_{k≠n} R_k` in every mode.
fn tiny(seed: u64) -> (TuckerModel, DenseTensor, usize, f64) {
    let shape = [3 + (seed % 2) as usize, 4, 3];
    let core = [2, 1 + (seed % 3) as usize, 2];
    let lambda = [0.01, 0.1, 1.0][(seed % 3) as usize];
    let model = random_model(&shape, &core, lambda, seed);
    (model, gaussian_tensor(&shape, seed + 77), (seed % 3) as usize, lambda)
}

#[test]
fn substitution_equivalence() {
    for seed in 0..30 {
        let (model, x, n, lambda) = tiny(seed);
        let ws = build_factor_workspace(&model, n, 0.1, lambda).unwrap();
        for i in 0..x.shape()[n] {
            let p = row_problem(&ws, &x, i, lambda);
            let z = p.constrained_optimum();
            let y = p.original_optimum();
            let fc = p.substitute_objective(&z);
            let fo = p.original_objective(&y);
            assert!((fc - fo).abs() <= 1e-8 * fo.max(1.0), "seed {seed}: {fc} vs {fo}");
            assert!(max_abs_diff(&p.gt_pinv.matvec(&z), &y) <= 1e-8 * sq_norm(&y).sqrt().max(1.0));
        }
    }
}

#[test]
fn penalty_reduction() {
    for eps in [0.1, 0.3] {
        for seed in 0..20 {
            let (model, x, n, lambda) = tiny(seed + 100);
            let ws = build_factor_workspace(&model, n, eps, lambda).unwrap();
            for i in 0..x.shape()[n] {
                let p = row_problem(&ws, &x, i, lambda);
                let opt = p.substitute_objective(&p.constrained_optimum());
                let z = p.project(&p.penalized_optimum(ws.penalty_weight));
                let got = p.substitute_objective(&z);
                assert!(
                    got <= (1.0 + eps) * opt + 1e-12,
                    "eps {eps} seed {seed}: {got} vs {opt}"
                );
            }
        }
    }
}

#[test]
fn woodbury_inverse_and_feasibility() {
    for seed in 0..20 {
        let model = random_model(&[5, 4, 6], &[2, 3, 3], 0.05, seed + 200);
        let x = gaussian_tensor(&[5, 4, 6], seed);
        let n = (seed % 3) as usize;
        let ws = build_factor_workspace(&model, n, 0.25, 0.05).unwrap();
        let m = ws.dense_m().unwrap();
        let v = m.matvec(&gaussian_vec(m.cols(), seed + 1));
        let back = m.matvec(&ws.apply_m_pinv(&v).unwrap());
        assert!(max_abs_diff(&back, &v) <= 1e-8 * sq_norm(&v).sqrt().max(1.0));

        // A real sketch over the other modes.
        let scores: Vec<_> = ws.scores.clone();
        let sampler = build_product_sampler(&scores).unwrap();
        let diag = SparseDiagonal::from_sketch(&sample_rows(&sampler, 10, seed).unwrap());
        let xn = unfold(&x, n).unwrap();
        for i in 0..xn.rows() {
            let row = fast_factor_row_update(&ws, xn.row(i), &diag, 0.5, 16, 1e-12).unwrap();
            let nz = ws.apply_constraint(&row.z);
            assert!(sq_norm(&nz).sqrt() <= 1e-6 * sq_norm(&row.z).sqrt().max(f64::MIN_POSITIVE));
        }
    }
}

#[test]
fn naive_update_matches_materialized_least_squares() {
    for seed in 0..5 {
        let model = random_model(&[4, 5], &[2, 3], 0.02, seed + 300);
        let x = gaussian_tensor(&[4, 5], seed);
        for n in 0..2 {
            let got = naive_factor_update(&model, &x, n).unwrap();
            let other = &model.factors[1 - n];
            let gt = unfold(&model.core, n).unwrap().transpose();
            let design_row = other.matmul(&gt);
            // Block-diagonal design for all rows of the factor at once.
            let rows = x.shape()[n];
            let (m, r) = design_row.shape();
            let design = DenseMatrix::from_fn(rows * m, rows * r, |p, q| {
                if p / m == q / r {
                    design_row.get(p % m, q % r)
                } else {
                    0.0
                }
            });
            let target = unfold(&x, n).unwrap().into_data();
            let sol = dense_ridge_solve(&design, &target, 0.02);
            assert!(max_abs_diff(got.data(), &sol) < 1e-8);
        }
    }
}

#[test]
fn fast_core_update_contract() {
    let eps = 0.25;
    let mut good = 0;
    for seed in 0..100 {
        let model = random_model(&[10, 10, 10], &[3, 3, 3], 1e-3, seed + 400);
        let x = gaussian_tensor(&[10, 10, 10], seed);
        let config = TuckerConfig {
            lambda: 1e-3,
            eps,
            seed,
            ..TuckerConfig::default()
        };
        let k = KroneckerFactors::new(model.factors.clone()).unwrap();
        let exact = core_update(&model, &x, SolverMode::Exact, &config).unwrap();
        let fast = core_update(&model, &x, SolverMode::Fast, &config).unwrap();
        let le = ridge_loss(&k, exact.data(), x.data(), 1e-3).unwrap();
        let lf = ridge_loss(&k, fast.data(), x.data(), 1e-3).unwrap();
        good += (lf <= (1.0 + eps) * le) as usize;
    }
    assert!(good >= 95, "{good}/100");
}

fn per_row_ratios(model: &TuckerModel, x: &DenseTensor, n: usize, config: &TuckerConfig) -> Vec<f64> {
    let fast = fast_factor_matrix_update(model, x, n, config).unwrap();
    let naive = naive_factor_update(model, x, n).unwrap();
    let ws = build_factor_workspace(model, n, config.eps, model.lambda).unwrap();
    (0..fast.rows())
        .map(|i| {
            let p = row_problem(&ws, x, i, model.lambda);
            p.original_objective(fast.row(i)) / p.original_objective(naive.row(i))
        })
        .collect()
}

#[test]
fn fast_factor_update_per_row_contract() {
    let mut good = 0;
    let mut total = 0;
    for seed in 0..20 {
        let model = random_model(&[6, 6, 6], &[2, 2, 2], 1e-3, seed + 500);
        let x = gaussian_tensor(&[6, 6, 6], seed);
        let config = TuckerConfig {
            lambda: 1e-3,
            eps: 0.25,
            seed,
            ..TuckerConfig::default()
        };
        for r in per_row_ratios(&model, &x, (seed % 3) as usize, &config) {
            good += (r <= 1.25) as usize;
            total += 1;
        }
    }
    assert!(good as f64 >= 0.95 * total as f64, "{good}/{total}");
}

#[test]
fn fast_factor_update_with_real_sketch() {
    let eps = 0.25;
    let full = factor_row_sample_count(4, 20, eps, 0.01, 1.0);
    let alpha = 150.0 / full as f64;
    let mut ratios = Vec::new();
    for seed in 0..10 {
        let model = random_model(&[20, 20, 20], &[2, 2, 2], 1e-3, seed + 600);
        let x = gaussian_tensor(&[20, 20, 20], seed);
        let config = TuckerConfig {
            lambda: 1e-3,
            eps,
            alpha,
            seed,
            ..TuckerConfig::default()
        };
        ratios.extend(per_row_ratios(&model, &x, (seed % 3) as usize, &config));
    }
    assert!(ratios.iter().all(|&r| r >= 1.0 - 1e-9));
    let good = ratios.iter().filter(|&&r| r <= 1.0 + eps).count();
    assert!(good as f64 >= 0.95 * ratios.len() as f64, "{good}/{}", ratios.len());
}

#[test]
fn exact_spectrum_matches_explicit_scores() {
    let a = gaussian(7, 3, 1);
    let s = FactorSpectrum::exact(&a).unwrap();
    let k = explicit_kron(std::slice::from_ref(&a)).unwrap();
    let g = k.gram();
    let inv = kronsolve_core::tensor::invert(&g).unwrap();
    for i in 0..7 {
        let row = a.row(i);
        let direct: f64 = row.iter().zip(inv.matvec(row)).map(|(p, q)| p * q).sum();
        assert!((direct - s.scores.scores[i]).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn exact_als_is_monotone(seed in 0u64..10_000, r in 1usize..=4, li in 0usize..3) {
        let lambda = [0.0, 1e-3, 0.1][li];
        let x = gaussian_tensor(&[8, 8, 8], seed);
        let config = TuckerConfig { lambda, sweeps: 3, seed, ..TuckerConfig::default() };
        let (_, report) = tucker_als(&x, &[r, r.max(2), r], &config).unwrap();
        for w in report.block_losses.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-10), "{:?}", report.block_losses);
        }
    }

    #[test]
    fn projector_algebra(seed in 0u64..10_000, n in 0usize..3) {
        let model = random_model(&[4, 4, 4], &[2, 3, 2], 0.1, seed);
        let ws = build_factor_workspace(&model, n, 0.25, 0.1).unwrap();
        let p = ws.constraint_projector();
        prop_assert!(p.matmul(&p).sub(&p).max_abs() < 1e-10);
        prop_assert!(p.sub(&p.transpose()).max_abs() < 1e-10);
        prop_assert!(p.matmul(&ws.gt).max_abs() < 1e-10);
    }
}
