//! Experiment driver: configuration, seeded Monte Carlo sweeps and the
//! invariant suite.

pub mod config;
pub mod sweep;
pub mod validate;

pub use config::{Algorithm, ExperimentConfig};
pub use sweep::{run_cell_trials, run_sweep, trial_seed, write_csv, SweepRecord, TrialOutcome};
pub use validate::{run_validation, ValidateOptions, ValidationReport};
