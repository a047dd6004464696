//! Synthetic regression runs and Tucker ALS runs.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kron::KroneckerFactors;
use crate::rng::{derive_seed, rng_from_seed};
use crate::solvers::{
    fast_kronecker_regression, kronmatmul_svd_solve, naive_normal_solve, sketch_and_solve_ridge, RegressionConfig,
    SolveReport, EXACT_SIZE_LIMIT,
};
use crate::tensor::{DenseMatrix, DenseTensor};
use crate::tucker::{synthetic_low_rank, tucker_als, AlsReport, SolverMode, TuckerConfig, TuckerModel};

use super::io::read_tensor;

/// Mean and variance of the synthetic factor entries.
pub const SYNTH_MEAN: f64 = 1.0;
pub const SYNTH_VARIANCE: f64 = 1e-3;

/// `order` factors of shape `n × d` with i.i.d. `N(1, 0.001)` entries, and `b = 1`.
pub fn generate_synth_regression(n: usize, d: usize, order: usize, seed: u64) -> Result<(KroneckerFactors, Vec<f64>)> {
    if d == 0 || n < d {
        return Err(Error::InvalidInput(format!("need n >= d >= 1, got n={n}, d={d}")));
    }
    if order == 0 {
        return Err(Error::InvalidInput("order must be at least 1".into()));
    }
    let rows = u32::try_from(order)
        .ok()
        .and_then(|o| n.checked_pow(o))
        .ok_or_else(|| Error::InvalidInput(format!("{n}^{order} rows overflow")))?;
    let normal = Normal::new(SYNTH_MEAN, SYNTH_VARIANCE.sqrt()).expect("finite parameters");
    let mut rng = rng_from_seed(seed);
    let factors = (0..order)
        .map(|_| DenseMatrix::from_fn(n, d, |_, _| normal.sample(&mut rng)))
        .collect();
    Ok((KroneckerFactors::new(factors)?, vec![1.0; rows]))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SolverKind {
    Naive,
    KronMatMul,
    SketchSolve,
    Fast,
}

impl SolverKind {
    pub const ALL: [SolverKind; 4] = [
        SolverKind::Naive,
        SolverKind::KronMatMul,
        SolverKind::SketchSolve,
        SolverKind::Fast,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Naive => "naive",
            SolverKind::KronMatMul => "kronmatmul",
            SolverKind::SketchSolve => "sketch-solve",
            SolverKind::Fast => "fast",
        }
    }

    pub fn is_exact(self) -> bool {
        matches!(self, SolverKind::Naive | SolverKind::KronMatMul)
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown solver {s:?}")))
    }
}

#[derive(Clone, Debug)]
pub struct RegressionSpec {
    pub n: usize,
    pub d: usize,
    pub order: usize,
    pub lambda: f64,
    pub eps: f64,
    pub delta: f64,
    pub alpha: f64,
    pub seeds: Vec<u64>,
    pub solvers: Vec<SolverKind>,
    /// Timed repetitions per cell; the reported wall time is their median.
    pub repetitions: usize,
    /// Lift the size guards on the exact solvers.
    pub force: bool,
    /// Run independent (seed, solver) cells concurrently.
    pub parallel: bool,
}

impl Default for RegressionSpec {
    fn default() -> Self {
        Self {
            n: 128,
            d: 8,
            order: 2,
            lambda: 1e-3,
            eps: 0.1,
            delta: 0.01,
            alpha: 1e-5,
            seeds: vec![0],
            solvers: SolverKind::ALL.to_vec(),
            repetitions: 3,
            force: false,
            parallel: false,
        }
    }
}

#[derive(Clone, Debug)]
pub enum TuckerInput {
    File(PathBuf),
    Synthetic {
        shape: Vec<usize>,
        rank: Vec<usize>,
        noise: f64,
        seed: u64,
    },
}

#[derive(Clone, Debug)]
pub struct TuckerSpec {
    pub input: TuckerInput,
    pub core: Vec<usize>,
    pub config: TuckerConfig,
    pub force: bool,
}

#[derive(Clone, Debug)]
pub enum ExperimentSpec {
    SynthRegression(RegressionSpec),
    Tucker(TuckerSpec),
}

fn in_open_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} must be in (0, 1), got {v}")))
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ExperimentSpec::SynthRegression(s) => {
                if s.d == 0 || s.n < s.d || s.order == 0 {
                    return Err(Error::InvalidInput(format!(
                        "need n >= d >= 1 and order >= 1, got n={}, d={}, order={}",
                        s.n, s.d, s.order
                    )));
                }
                if !(s.lambda >= 0.0 && s.lambda.is_finite()) {
                    return Err(Error::InvalidInput(format!("lambda must be >= 0, got {}", s.lambda)));
                }
                in_open_unit("eps", s.eps)?;
                in_open_unit("delta", s.delta)?;
                if !(s.alpha > 0.0 && s.alpha <= 1.0) {
                    return Err(Error::InvalidInput(format!("alpha must be in (0, 1], got {}", s.alpha)));
                }
                if s.seeds.is_empty() || s.solvers.is_empty() || s.repetitions == 0 {
                    return Err(Error::InvalidInput(
                        "seeds, solvers and repetitions must be non-empty".into(),
                    ));
                }
                Ok(())
            }
            ExperimentSpec::Tucker(t) => {
                let c = &t.config;
                if t.core.is_empty() || t.core.contains(&0) {
                    return Err(Error::InvalidInput("core shape must be non-empty and positive".into()));
                }
                if !(c.lambda >= 0.0 && c.lambda.is_finite()) {
                    return Err(Error::InvalidInput(format!("lambda must be >= 0, got {}", c.lambda)));
                }
                if c.mode == SolverMode::Fast && !(c.eps > 0.0 && c.eps < 1.0 / 3.0) {
                    return Err(Error::InvalidInput(format!("eps must be in (0, 1/3), got {}", c.eps)));
                }
                in_open_unit("delta", c.delta)?;
                if c.sweeps == 0 {
                    return Err(Error::InvalidInput("sweeps must be at least 1".into()));
                }
                if let TuckerInput::Synthetic { shape, rank, noise, .. } = &t.input {
                    if shape.len() != rank.len() || shape.len() != t.core.len() {
                        return Err(Error::InvalidInput(
                            "shape, rank and core must have the same order".into(),
                        ));
                    }
                    if !(*noise >= 0.0 && noise.is_finite()) {
                        return Err(Error::InvalidInput(format!("noise must be >= 0, got {noise}")));
                    }
                }
                Ok(())
            }
        }
    }
}

/// One (seed, solver) cell of a regression run.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub solver: SolverKind,
    pub n: usize,
    pub d: usize,
    pub order: usize,
    pub seed: u64,
    pub loss: Option<f64>,
    /// `loss / OPT` when the exact optimum was computed.
    pub ratio: Option<f64>,
    pub rows_sampled: Option<usize>,
    pub iterations: Option<usize>,
    pub wall_time: Option<Duration>,
    pub error: Option<String>,
}

fn median(mut times: Vec<Duration>) -> Duration {
    times.sort();
    times[times.len() / 2]
}

fn run_solver(
    kind: SolverKind,
    k: &KroneckerFactors,
    b: &[f64],
    spec: &RegressionSpec,
    seed: u64,
) -> Result<SolveReport> {
    let config = RegressionConfig {
        alpha: spec.alpha,
        ..RegressionConfig::new(spec.eps, spec.delta, spec.lambda).with_seed(derive_seed(seed, &[kind as u64]))
    };
    match kind {
        SolverKind::Naive => naive_normal_solve(k, b, spec.lambda, spec.force),
        SolverKind::KronMatMul => {
            guard_rows(k, spec.force)?;
            kronmatmul_svd_solve(k, b, spec.lambda)
        }
        SolverKind::SketchSolve => sketch_and_solve_ridge(k, b, &config),
        SolverKind::Fast => fast_kronecker_regression(k, b, &config),
    }
}

fn guard_rows(k: &KroneckerFactors, force: bool) -> Result<()> {
    let rows = k.rows() as u128;
    if !force && rows > EXACT_SIZE_LIMIT {
        return Err(Error::SizeGuard {
            context: "exact solver",
            size: rows,
            limit: EXACT_SIZE_LIMIT,
        });
    }
    Ok(())
}

fn run_cell(
    kind: SolverKind,
    k: &KroneckerFactors,
    b: &[f64],
    spec: &RegressionSpec,
    seed: u64,
    opt: Option<f64>,
) -> ResultRow {
    let mut row = ResultRow {
        solver: kind,
        n: spec.n,
        d: spec.d,
        order: spec.order,
        seed,
        loss: None,
        ratio: None,
        rows_sampled: None,
        iterations: None,
        wall_time: None,
        error: None,
    };
    let mut times = Vec::with_capacity(spec.repetitions);
    let mut first = None;
    for _ in 0..spec.repetitions {
        match run_solver(kind, k, b, spec, seed) {
            Ok(report) => {
                times.push(report.wall_time);
                first.get_or_insert(report);
            }
            Err(e) => {
                row.error = Some(e.to_string());
                return row;
            }
        }
    }
    let report = first.expect("at least one repetition");
    row.loss = Some(report.loss);
    row.ratio = match (kind, opt) {
        (SolverKind::KronMatMul, Some(_)) => Some(1.0),
        (_, Some(o)) if o > 0.0 => Some(report.loss / o),
        _ => None,
    };
    row.rows_sampled = Some(report.sample_count);
    row.iterations = Some(report.iterations);
    row.wall_time = Some(median(times));
    row
}

/// Runs every selected solver on one instance per seed. Solver errors are
/// recorded in their row and the run continues.
pub fn run_regression_experiment(spec: &RegressionSpec) -> Result<Vec<ResultRow>> {
    ExperimentSpec::SynthRegression(spec.clone()).validate()?;
    let per_seed = |&seed: &u64| -> Result<Vec<ResultRow>> {
        let (k, b) = generate_synth_regression(spec.n, spec.d, spec.order, seed)?;
        let opt = guard_rows(&k, spec.force)
            .and_then(|_| kronmatmul_svd_solve(&k, &b, spec.lambda))
            .ok()
            .map(|r| r.loss);
        let cell = |&kind: &SolverKind| run_cell(kind, &k, &b, spec, seed, opt);
        Ok(if spec.parallel {
            spec.solvers.par_iter().map(cell).collect()
        } else {
            spec.solvers.iter().map(cell).collect()
        })
    };
    let nested: Vec<Vec<ResultRow>> = if spec.parallel {
        spec.seeds.par_iter().map(per_seed).collect::<Result<_>>()?
    } else {
        spec.seeds.iter().map(per_seed).collect::<Result<_>>()?
    };
    Ok(nested.into_iter().flatten().collect())
}

fn exact_tucker_guard(shape: &[usize], core: &[usize], force: bool) -> Result<()> {
    if force {
        return Ok(());
    }
    let rows: u128 = shape.iter().map(|&v| v as u128).product();
    let r: u128 = core.iter().map(|&v| v as u128).product();
    for size in [rows, r * r] {
        if size > EXACT_SIZE_LIMIT {
            return Err(Error::SizeGuard {
                context: "exact Tucker ALS",
                size,
                limit: EXACT_SIZE_LIMIT,
            });
        }
    }
    Ok(())
}

pub fn load_tucker_input(input: &TuckerInput) -> Result<DenseTensor> {
    match input {
        TuckerInput::File(path) => read_tensor(path),
        TuckerInput::Synthetic {
            shape,
            rank,
            noise,
            seed,
        } => synthetic_low_rank(shape, rank, *noise, *seed),
    }
}

pub fn run_tucker_experiment(spec: &TuckerSpec) -> Result<(TuckerModel, AlsReport)> {
    ExperimentSpec::Tucker(spec.clone()).validate()?;
    let x = load_tucker_input(&spec.input)?;
    if x.order() != spec.core.len() {
        return Err(Error::InvalidInput(format!(
            "core shape has order {} but the tensor has order {}",
            spec.core.len(),
            x.order()
        )));
    }
    if spec.config.mode == SolverMode::Exact {
        exact_tucker_guard(x.shape(), &spec.core, spec.force)?;
    }
    tucker_als(&x, &spec.core, &spec.config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synth_moments_and_target() {
        let (k, b) = generate_synth_regression(200, 50, 2, 3).unwrap();
        assert!(b.iter().all(|&v| v == 1.0));
        assert_eq!(b.len(), 40_000);
        let data = k.factors()[0].data();
        let m = data.len() as f64;
        let mean = data.iter().sum::<f64>() / m;
        let var = data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
        assert!((0.0005..=0.0015).contains(&var), "variance {var}");
        assert!((mean - 1.0).abs() < 0.01);
    }

    #[test]
    fn synth_is_deterministic() {
        let (a, _) = generate_synth_regression(10, 3, 3, 9).unwrap();
        let (b, _) = generate_synth_regression(10, 3, 3, 9).unwrap();
        for (x, y) in a.factors().iter().zip(b.factors()) {
            assert!(x.data().iter().zip(y.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
        assert!(generate_synth_regression(2, 3, 2, 0).is_err());
    }

    #[test]
    fn solver_names_roundtrip() {
        for k in SolverKind::ALL {
            assert_eq!(k.name().parse::<SolverKind>().unwrap(), k);
        }
        assert!("qr".parse::<SolverKind>().is_err());
    }

    #[test]
    fn defaults_match_published_setup() {
        let s = RegressionSpec::default();
        assert_eq!((s.eps, s.delta, s.lambda, s.alpha), (0.1, 0.01, 1e-3, 1e-5));
    }

    #[test]
    fn regression_rows_and_ratios() {
        let spec = RegressionSpec {
            n: 16,
            d: 2,
            seeds: vec![1, 2],
            repetitions: 1,
            alpha: 1.0,
            ..RegressionSpec::default()
        };
        let rows = run_regression_experiment(&spec).unwrap();
        assert_eq!(rows.len(), 8);
        for row in &rows {
            assert!(row.error.is_none(), "{row:?}");
            let ratio = row.ratio.unwrap();
            assert!(ratio >= 1.0 - 1e-9);
            if row.solver.is_exact() {
                assert!((ratio - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn parallel_matches_sequential() {
        let spec = RegressionSpec {
            n: 12,
            d: 3,
            seeds: vec![4, 5, 6],
            repetitions: 1,
            ..RegressionSpec::default()
        };
        let strip = |rows: Vec<ResultRow>| -> Vec<ResultRow> {
            rows.into_iter().map(|r| ResultRow { wall_time: None, ..r }).collect()
        };
        let seq = strip(run_regression_experiment(&spec).unwrap());
        let par = strip(run_regression_experiment(&RegressionSpec { parallel: true, ..spec }).unwrap());
        assert_eq!(seq, par);
    }

    #[test]
    fn guarded_solver_error_is_recorded() {
        let spec = RegressionSpec {
            n: 120,
            d: 110,
            order: 2,
            seeds: vec![0],
            solvers: vec![SolverKind::Naive],
            repetitions: 1,
            ..RegressionSpec::default()
        };
        let rows = run_regression_experiment(&spec).unwrap();
        assert!(rows[0].error.as_deref().unwrap().contains("size guard"));
    }

    #[test]
    fn tucker_spec_checks() {
        let spec = TuckerSpec {
            input: TuckerInput::Synthetic {
                shape: vec![5, 5, 5],
                rank: vec![2, 2, 2],
                noise: 0.0,
                seed: 1,
            },
            core: vec![5, 5, 5],
            config: TuckerConfig {
                lambda: 0.0,
                sweeps: 1,
                ..TuckerConfig::default()
            },
            force: false,
        };
        let (_, report) = run_tucker_experiment(&spec).unwrap();
        assert!(report.rre <= 1e-8);
        let bad = TuckerSpec {
            core: vec![2, 2],
            ..spec.clone()
        };
        assert!(run_tucker_experiment(&bad).is_err());
        let missing = TuckerSpec {
            input: TuckerInput::File("/nonexistent/x.ktn".into()),
            ..spec
        };
        assert!(matches!(run_tucker_experiment(&missing).unwrap_err(), Error::Io { .. }));
    }
}
