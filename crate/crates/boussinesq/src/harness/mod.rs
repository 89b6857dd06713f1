//! Monte Carlo orchestration: experiment configs, replica ensembles with
//! resumable CSV output, intensity-scaling tables with frozen constants,
//! and the command-line front end.

pub mod cli;
pub mod config;
pub mod ensemble;
pub mod scaling;

pub use config::{ConfigMap, ExperimentConfig, Scenario};
pub use ensemble::{
    run_ensemble, EnsembleOutcome, EnsembleRow, ScenarioRunner, ENSEMBLE_HEADER,
    TRAJECTORY_HEADER,
};
pub use scaling::{
    epsilon_scaling, fit_tail, pathwise_scaling_check, probe_constants, scaling_constant,
    tail_experiment, trace_s_beta, ScalingTable, TailFit, TailReport, SCALING_HEADER,
};
