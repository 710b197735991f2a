//! Experiment drivers, CSV output, configuration files and the command line.

pub mod cli;
pub mod config;
pub mod experiments;
pub mod fit;
pub mod table;

pub use cli::cli_main;
pub use experiments::{
    channel_experiment, classical_experiment, complete_graph_experiment, convergence_experiment,
    convergence_table, epsilon_horizon, horizon_experiment, horizon_table, lambda_sweep, log_log_slope,
    long_time_experiment, max_abs_deviation, monte_carlo_experiment, resolve_timing, trajectory_experiment,
    ConvergencePoint, ExperimentSpec, HorizonPoint, LongTimeOutcome,
};
pub use fit::{fit_envelope, local_maxima, EnvelopeFit};
pub use table::{Cell, Table};
