//! Evolution backends for the percolated walk.
//!
//! * [`run_trajectory`] / [`run_classical_trajectory`]: one sampled sequence
//!   of realizations, stepped with exact per-realization propagators.
//! * [`build_step_channel`] / [`evolve_channel`]: the exact ensemble average,
//!   as a column-stacked superoperator over all `2^N` realizations.
//! * [`monte_carlo_channel`] / [`monte_carlo_classical`]: trajectory averages
//!   with per-trajectory derived seeds, for graphs too large to enumerate.

mod channel;
mod classical;
mod monte_carlo;
mod propagator;
mod trajectory;

pub use channel::{build_step_channel, evolve_channel, ChannelMatrix, ChannelStepper};
pub use classical::{run_classical_trajectory, ClassicalRecord};
pub use monte_carlo::{monte_carlo_channel, monte_carlo_classical, EnsemblePoint, DistributionPoint};
pub use propagator::{PropagatorCache, StepPropagator, CACHE_BYTE_BUDGET, CACHE_CAPACITY};
pub use trajectory::{run_trajectory, run_trajectory_with, TrajectoryOptions, TrajectoryRecord};

use crate::error::{Result, WalkError};
use crate::graph::check_lambda;

/// Configuration of one stochastic evolution: edge-keep probability, step
/// size and step count. The step count is authoritative; the total time is
/// always derived as `steps * tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PercolationRun {
    lambda: f64,
    tau: f64,
    steps: usize,
    pub seed: u64,
}

impl PercolationRun {
    pub fn new(lambda: f64, tau: f64, steps: usize, seed: u64) -> Result<Self> {
        check_lambda(lambda)?;
        if !(tau.is_finite() && tau > 0.0) {
            return Err(WalkError::invalid(format!("step size must be positive, got {tau}")));
        }
        Ok(PercolationRun {
            lambda,
            tau,
            steps,
            seed,
        })
    }

    /// Splits `[0, total_time]` into `steps` equal steps.
    pub fn from_total_time(lambda: f64, total_time: f64, steps: usize, seed: u64) -> Result<Self> {
        if steps == 0 {
            return Err(WalkError::invalid("step count must be positive"));
        }
        Self::new(lambda, total_time / steps as f64, steps, seed)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn total_time(&self) -> f64 {
        self.steps as f64 * self.tau
    }

    pub fn time_at(&self, step: usize) -> f64 {
        step as f64 * self.tau
    }
}

/// Steps at which a series with the given stride is recorded: `0`, every
/// `stride`-th step, and always the final step.
pub(crate) fn recorded_steps(steps: usize, stride: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..=steps).step_by(stride).collect();
    if *out.last().unwrap() != steps {
        out.push(steps);
    }
    out
}

pub(crate) fn check_stride(stride: usize) -> Result<()> {
    if stride == 0 {
        return Err(WalkError::invalid("sample stride must be positive"));
    }
    Ok(())
}
