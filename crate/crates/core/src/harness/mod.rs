//! Verification experiments: built-in scenarios with one acceptance rule
//! each, Monte-Carlo ensembles, refinement studies and reports.

mod config;
mod example1;
mod report;
mod scenarios;
mod stats;
mod study;

pub use config::{ExperimentConfig, Refinement, Scenario, Tolerances};
pub use example1::{aitken, example1_experiment, Example1Report, Example1Row};
pub use report::{Check, EnsembleStat, OrderRecord, RuleOutcome, VerificationReport};
pub use scenarios::{dt_residuals, dx_residuals, eps_errors, example1_coefficients, run_verification, simulate_scenario};
pub use stats::{mean_se, observed_order, replica_seed, replicate, rms, slope, MeanSe};
pub use study::{convergence_study, StudyAxis};
