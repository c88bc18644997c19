//! Finite-state Metropolis-Hastings variance laboratory.
//!
//! * [`model`]: state spaces, targets, proposal kernels and validation.
//! * [`exact`]: transition matrices, Poisson solutions and closed-form
//!   asymptotic variances of the plain, waste-recycling and control-variate
//!   estimators.
//! * [`chain`]: seeded single- and multi-proposal chain simulation.
//! * [`estimators`]: ergodic averages and their control-variate corrections.
//! * [`bench`]: replicated variance studies with confidence intervals.

pub mod bench;
pub mod chain;
pub mod estimators;
pub mod exact;
pub mod matrix;
pub mod model;
pub mod number;
pub mod report;
pub mod rng;
pub mod synth;

pub use bench::{
    counterexample_f, counterexample_model, run_bench, BenchConfig, BenchError, BenchRow, BenchTable,
    EstimatorKind, EstimatorRow, Interval,
};
pub use chain::{run_chain, ChainError, ChainTrace, InitialState, ModelKind, Sampler, StepRecord, StepView};
pub use estimators::{
    b_hat, estimate, estimate_ppsi, estimate_with, j_prime, AlternateKernel, EstimateError, EstimateReport,
    Observables, OnlineEstimator,
};
pub use exact::{
    b_star, build_p_multi, build_p_single, delta_f, sigma2, sigma2_cv_multi, sigma2_cv_single, sigma2_opt,
    sigma2_tilde, solve_poisson, transition_matrix, variance_report, ExactError, PoissonSolution,
    TransitionMatrix, VarianceReport,
};
pub use matrix::SquareMatrix;
pub use model::{
    load_function, load_model, parse_model, validate_model, AcceptanceRule, Model, ModelError,
    MultiProposalKernel, Proposal, ProposalSet, SelectionKernelSpec, SelectionMatrix, StateFunction, StateSpace,
    Subset, TargetDistribution, ValidationReport,
};
