//! Experiment harness: synthetic instances, file formats and oracle checks.

pub mod check;
pub mod experiments;
pub mod io;

pub use check::{oracle_checks, CheckOutcome};
pub use experiments::{
    generate_synth_regression, load_tucker_input, run_regression_experiment, run_tucker_experiment, ExperimentSpec,
    RegressionSpec, ResultRow, SolverKind, TuckerInput, TuckerSpec,
};
pub use io::{read_matrix_csv, read_tensor, write_als_csv, write_matrix_csv, write_results_csv, write_tensor};
