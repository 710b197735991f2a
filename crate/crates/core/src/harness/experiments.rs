//! Experiment drivers. Each returns a [`Table`] whose metadata is enough to
//! rerun it.

use rayon::prelude::*;

use super::fit::{fit_envelope, local_maxima, EnvelopeFit};
use super::table::{Cell, Table};
use crate::dynamics::{
    build_step_channel, monte_carlo_channel, run_classical_trajectory, run_trajectory, ChannelStepper,
    PercolationRun,
};
use crate::error::{Result, WalkError};
use crate::graph::{parse_graph_spec, Graph};
use crate::oracles::{
    complete_graph_classical_return, complete_graph_quantum_return, rescaled_classical_reference,
    rescaled_reference, OracleCurve,
};
use crate::walk::{DensityMatrix, QuantumState, WalkConfig};

/// Relative errors are only evaluated where the oracle is at least this large.
pub const RELATIVE_ERROR_GUARD: f64 = 1e-6;

/// Tolerance on `steps * tau == time` when all three are given.
const TIMING_TOL: f64 = 1e-9;

/// Completes a timing from any two of step size, step count and total time.
/// The step count wins: a given `time` with `tau` is rounded to whole steps.
pub fn resolve_timing(tau: Option<f64>, steps: Option<usize>, time: Option<f64>) -> Result<(f64, usize)> {
    let positive = |name: &str, x: f64| {
        if x.is_finite() && x > 0.0 {
            Ok(x)
        } else {
            Err(WalkError::invalid(format!("{name} must be positive, got {x}")))
        }
    };
    match (tau, steps, time) {
        (_, Some(0), _) => Err(WalkError::invalid("step count must be positive")),
        (Some(tau), Some(s), None) => Ok((positive("tau", tau)?, s)),
        (None, Some(s), Some(t)) => Ok((positive("time", t)? / s as f64, s)),
        (Some(tau), None, Some(t)) => {
            let (tau, t) = (positive("tau", tau)?, positive("time", t)?);
            let s = (t / tau).round();
            if s < 1.0 || ((s * tau - t).abs() > TIMING_TOL * t) {
                return Err(WalkError::invalid(format!("time {t} is not a whole number of steps of {tau}")));
            }
            Ok((tau, s as usize))
        }
        (Some(tau), Some(s), Some(t)) => {
            let tau = positive("tau", tau)?;
            if (s as f64 * tau - t).abs() > TIMING_TOL * t.abs().max(1.0) {
                return Err(WalkError::invalid(format!(
                    "inconsistent timing: {s} steps of {tau} do not make time {t}"
                )));
            }
            Ok((tau, s))
        }
        _ => Err(WalkError::invalid("give two of --tau, --steps and --time")),
    }
}

/// Parameters shared by all experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub graph: String,
    pub lambda: f64,
    pub tau: f64,
    pub steps: usize,
    pub start: usize,
    pub seed: u64,
    pub stride: usize,
    pub gamma: f64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            graph: "ring:15".into(),
            lambda: 0.5,
            tau: 0.004,
            steps: 5000,
            start: 0,
            seed: 7,
            stride: 1,
            gamma: 1.0,
        }
    }
}

impl ExperimentSpec {
    /// 10×10 lattice started at the centre node, 10⁵ steps to `t = 10`.
    pub fn lattice() -> Self {
        ExperimentSpec {
            graph: "lattice2d:10x10".into(),
            lambda: 0.5,
            tau: 1e-4,
            steps: 100_000,
            start: 44,
            seed: 1,
            stride: 100,
            ..Default::default()
        }
    }

    /// 15-node ring, channel evolution to `t = 20`.
    pub fn ring_channel() -> Self {
        ExperimentSpec::default()
    }

    /// Complete graph `K_15` at λ = 0.3, 10⁵ steps to `t = 10`.
    pub fn complete_graph() -> Self {
        ExperimentSpec {
            graph: "complete:15".into(),
            lambda: 0.3,
            tau: 1e-4,
            steps: 100_000,
            seed: 1,
            stride: 10,
            ..Default::default()
        }
    }

    /// 4-cycle at λ = 0.2 with coarse steps `τ = 0.1` to `t = 100`.
    pub fn long_time() -> Self {
        ExperimentSpec {
            graph: "ring:4".into(),
            lambda: 0.2,
            tau: 0.1,
            steps: 1000,
            ..Default::default()
        }
    }

    /// 10-node ring at λ = 0.5 to `t = 10`; the step count is scanned.
    pub fn convergence() -> Self {
        ExperimentSpec {
            graph: "ring:10".into(),
            tau: 0.01,
            steps: 1000,
            ..Default::default()
        }
    }

    /// 5-node ring at λ = 0.5 to `t = 10`; the step count is scanned.
    pub fn horizon() -> Self {
        ExperimentSpec {
            graph: "ring:5".into(),
            tau: 0.01,
            steps: 1000,
            ..Default::default()
        }
    }

    pub fn total_time(&self) -> f64 {
        self.steps as f64 * self.tau
    }

    pub fn load_graph(&self) -> Result<Graph> {
        parse_graph_spec(&self.graph)
    }

    pub fn walk_config(&self) -> Result<WalkConfig> {
        WalkConfig::new(self.gamma)
    }

    pub fn run(&self) -> Result<PercolationRun> {
        PercolationRun::new(self.lambda, self.tau, self.steps, self.seed)
    }

    fn with_steps(&self, steps: usize) -> Self {
        ExperimentSpec {
            tau: self.total_time() / steps as f64,
            steps,
            ..self.clone()
        }
    }

    fn annotate(&self, table: &mut Table, experiment: &str) {
        table
            .meta("experiment", experiment)
            .meta("graph", &self.graph)
            .meta("lambda", self.lambda)
            .meta("tau", self.tau)
            .meta("steps", self.steps)
            .meta("time", self.total_time())
            .meta("start", self.start)
            .meta("seed", self.seed)
            .meta("stride", self.stride)
            .meta("gamma", self.gamma);
    }
}

/// Largest `|sim_i - oracle(t_i)|`.
pub fn max_abs_deviation(times: &[f64], sim: &[f64], oracle: impl Fn(f64) -> f64) -> f64 {
    times
        .iter()
        .zip(sim)
        .map(|(&t, &p)| (p - oracle(t)).abs())
        .fold(0.0, f64::max)
}

fn series_table(columns: &[&str], times: &[f64], series: &[Vec<f64>]) -> Table {
    let mut table = Table::new(columns.iter().copied());
    for (i, &t) in times.iter().enumerate() {
        let mut row = vec![Cell::Float(t)];
        row.extend(series.iter().map(|s| Cell::Float(s[i])));
        table.push_row(row);
    }
    table
}

fn note_deviation(table: &mut Table, sim: &str, oracle: &str) {
    let (Some(a), Some(b)) = (table.column(sim), table.column(oracle)) else {
        return;
    };
    let dev = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    table.meta(format!("max_abs_deviation({sim},{oracle})"), dev);
}

/// Quantum return probability of one trajectory against the rescaled walk.
pub fn trajectory_experiment(spec: &ExperimentSpec) -> Result<Table> {
    let g = spec.load_graph()?;
    let cfg = spec.walk_config()?;
    let psi0 = QuantumState::basis(g.node_count(), spec.start)?;
    let rec = run_trajectory(&g, &cfg, &spec.run()?, &psi0, spec.stride)?;
    let oracle = rescaled_reference(&g, &cfg, spec.lambda, spec.start, spec.start)?;
    let sim = rec.site_series(spec.start);
    let reference: Vec<f64> = rec.times.iter().map(|&t| oracle.evaluate(t)).collect();
    let mut table = series_table(&["t", "p_sim", "p_oracle"], &rec.times, &[sim, reference]);
    spec.annotate(&mut table, "trajectory");
    table.meta("renormalizations", rec.renormalizations);
    note_deviation(&mut table, "p_sim", "p_oracle");
    Ok(table)
}

/// [`trajectory_experiment`] for each λ in parallel, one table per λ.
pub fn lambda_sweep(spec: &ExperimentSpec, lambdas: &[f64]) -> Result<Vec<(f64, Table)>> {
    lambdas
        .par_iter()
        .map(|&lambda| {
            let point = ExperimentSpec { lambda, ..spec.clone() };
            Ok((lambda, trajectory_experiment(&point)?))
        })
        .collect()
}

/// Exact ensemble return probability from the enumerated step channel.
pub fn channel_experiment(spec: &ExperimentSpec) -> Result<Table> {
    let g = spec.load_graph()?;
    let cfg = spec.walk_config()?;
    let run = spec.run()?;
    let phi = build_step_channel(&g, &cfg, spec.lambda, spec.tau)?;
    let oracle = rescaled_reference(&g, &cfg, spec.lambda, spec.start, spec.start)?;
    let rho0 = DensityMatrix::pure(spec.start, g.node_count())?;

    let mut stepper = ChannelStepper::new(&phi, &rho0)?;
    let (mut times, mut sim, mut reference) = (Vec::new(), Vec::new(), Vec::new());
    let mut trace_defect: f64 = 0.0;
    for &target in &crate::dynamics::recorded_steps(run.steps(), spec.stride) {
        while stepper.step() < target {
            stepper.advance();
        }
        let t = run.time_at(target);
        times.push(t);
        sim.push(stepper.population(spec.start));
        reference.push(oracle.evaluate(t));
        trace_defect = trace_defect.max((stepper.populations().iter().sum::<f64>() - 1.0).abs());
    }
    let mut table = series_table(&["t", "p_sim", "p_oracle"], &times, &[sim, reference]);
    spec.annotate(&mut table, "channel");
    table.meta("max_trace_defect", trace_defect);
    note_deviation(&mut table, "p_sim", "p_oracle");
    Ok(table)
}

/// Trajectory-averaged return probability with its standard error.
pub fn monte_carlo_experiment(spec: &ExperimentSpec, trajectories: usize) -> Result<Table> {
    let g = spec.load_graph()?;
    let cfg = spec.walk_config()?;
    let rho0 = DensityMatrix::pure(spec.start, g.node_count())?;
    let points = monte_carlo_channel(&g, &cfg, &spec.run()?, &rho0, trajectories, spec.stride)?;
    let oracle = rescaled_reference(&g, &cfg, spec.lambda, spec.start, spec.start)?;
    let times: Vec<f64> = points.iter().map(|p| p.time).collect();
    let sim = points.iter().map(|p| p.mean.entries()[(spec.start, spec.start)].re).collect();
    let err = points.iter().map(|p| p.diag_stderr[spec.start]).collect();
    let reference = times.iter().map(|&t| oracle.evaluate(t)).collect();
    let mut table = series_table(&["t", "p_sim", "stderr", "p_oracle"], &times, &[sim, err, reference]);
    spec.annotate(&mut table, "montecarlo");
    table.meta("trajectories", trajectories);
    note_deviation(&mut table, "p_sim", "p_oracle");
    Ok(table)
}

/// Classical walk on the sampled realizations against `e^{-Hλt}`.
pub fn classical_experiment(spec: &ExperimentSpec) -> Result<Table> {
    let g = spec.load_graph()?;
    let cfg = spec.walk_config()?;
    let mut p0 = vec![0.0; g.node_count()];
    crate::walk::check_node(spec.start, g.node_count())?;
    p0[spec.start] = 1.0;
    let rec = run_classical_trajectory(&g, &cfg, &spec.run()?, &p0, spec.stride)?;
    let oracle = rescaled_classical_reference(&g, &cfg, spec.lambda, spec.start, spec.start)?;
    let reference = rec.times.iter().map(|&t| oracle.evaluate(t)).collect();
    let mut table = series_table(&["t", "p_sim", "p_oracle"], &rec.times, &[rec.site_series(spec.start), reference]);
    spec.annotate(&mut table, "classical");
    note_deviation(&mut table, "p_sim", "p_oracle");
    Ok(table)
}

/// Quantum and classical trajectories on a complete graph, driven by the
/// same realizations, against the closed-form return probabilities.
pub fn complete_graph_experiment(spec: &ExperimentSpec) -> Result<Table> {
    let g = spec.load_graph()?;
    let n = g.node_count();
    if g.edge_count() != n * (n - 1) / 2 {
        return Err(WalkError::invalid(format!("{} is not a complete graph", spec.graph)));
    }
    let cfg = spec.walk_config()?;
    let run = spec.run()?;
    let psi0 = QuantumState::basis(n, spec.start)?;
    let quantum = run_trajectory(&g, &cfg, &run, &psi0, spec.stride)?;
    let mut p0 = vec![0.0; n];
    p0[spec.start] = 1.0;
    let classical = run_classical_trajectory(&g, &cfg, &run, &p0, spec.stride)?;

    let scale = spec.lambda * spec.gamma;
    let times = &quantum.times;
    let q_oracle = times.iter().map(|&t| complete_graph_quantum_return(n, scale * t)).collect();
    let c_oracle = times.iter().map(|&t| complete_graph_classical_return(n, scale * t)).collect();
    let mut table = series_table(
        &["t", "quantum_sim", "quantum_oracle", "classical_sim", "classical_oracle"],
        times,
        &[quantum.site_series(spec.start), q_oracle, classical.site_series(spec.start), c_oracle],
    );
    spec.annotate(&mut table, "complete_graph");
    note_deviation(&mut table, "quantum_sim", "quantum_oracle");
    note_deviation(&mut table, "classical_sim", "classical_oracle");
    Ok(table)
}

#[derive(Debug)]
pub struct LongTimeOutcome {
    pub table: Table,
    /// `(t, P)` at the local maxima of the channel curve.
    pub maxima: Vec<(f64, f64)>,
    pub fit: Result<EnvelopeFit>,
}

/// Channel and single trajectory at a coarse step, with quantum and
/// classical references and an envelope fit of the channel curve's maxima.
///
/// The trajectory uses `trajectory_steps` over the same total time; it must
/// be a multiple of `spec.steps` so both series share the channel's grid.
pub fn long_time_experiment(spec: &ExperimentSpec, trajectory_steps: usize) -> Result<LongTimeOutcome> {
    if trajectory_steps == 0 || !trajectory_steps.is_multiple_of(spec.steps) {
        return Err(WalkError::invalid(format!(
            "trajectory steps {trajectory_steps} must be a positive multiple of {}",
            spec.steps
        )));
    }
    let g = spec.load_graph()?;
    let cfg = spec.walk_config()?;
    let run = spec.run()?;
    let n = g.node_count();

    let phi = build_step_channel(&g, &cfg, spec.lambda, spec.tau)?;
    let rho0 = DensityMatrix::pure(spec.start, n)?;
    let mut stepper = ChannelStepper::new(&phi, &rho0)?;
    let mut channel = vec![stepper.population(spec.start)];
    for _ in 0..run.steps() {
        stepper.advance();
        channel.push(stepper.population(spec.start));
    }
    let times: Vec<f64> = (0..=run.steps()).map(|s| run.time_at(s)).collect();

    let fine = PercolationRun::from_total_time(spec.lambda, run.total_time(), trajectory_steps, spec.seed)?;
    let psi0 = QuantumState::basis(n, spec.start)?;
    let trajectory = run_trajectory(&g, &cfg, &fine, &psi0, trajectory_steps / spec.steps)?;

    let q = rescaled_reference(&g, &cfg, spec.lambda, spec.start, spec.start)?;
    let c = rescaled_classical_reference(&g, &cfg, spec.lambda, spec.start, spec.start)?;
    let eval = |o: &OracleCurve| times.iter().map(|&t| o.evaluate(t)).collect::<Vec<_>>();
    let mut table = series_table(
        &["t", "channel", "trajectory", "quantum_oracle", "classical_oracle"],
        &times,
        &[channel.clone(), trajectory.site_series(spec.start), eval(&q), eval(&c)],
    );
    spec.annotate(&mut table, "envelope");
    table.meta("trajectory_steps", trajectory_steps);

    let asymptote = 1.0 / n as f64;
    let idx = local_maxima(&channel, true);
    let maxima: Vec<(f64, f64)> = idx.iter().map(|&i| (times[i], channel[i])).collect();
    let (mt, mv): (Vec<f64>, Vec<f64>) = maxima.iter().copied().unzip();
    let fit = fit_envelope(&mt, &mv, asymptote);
    table.meta("envelope_points", maxima.len()).meta("envelope_asymptote", asymptote);
    match &fit {
        Ok(f) => {
            table
                .meta("envelope_a", f.a)
                .meta("envelope_b", f.b)
                .meta("envelope_residual", f.residual)
                .meta("envelope_iterations", f.iterations)
                .meta("envelope_converged", f.converged);
        }
        Err(e) => {
            table.meta("envelope_error", e);
        }
    }
    Ok(LongTimeOutcome { table, maxima, fit })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergencePoint {
    pub steps: usize,
    pub tau: f64,
    pub max_abs_error: f64,
}

/// Channel return probability sampled at every step, one series per step
/// count in `steps_list`, all to the same total time as `spec`.
fn scan_channel<F, R>(spec: &ExperimentSpec, steps_list: &[usize], reduce: F) -> Result<Vec<R>>
where
    F: Fn(&ExperimentSpec, &[f64], &OracleCurve) -> R + Sync,
    R: Send,
{
    let g = spec.load_graph()?;
    let cfg = spec.walk_config()?;
    let oracle = rescaled_reference(&g, &cfg, spec.lambda, spec.start, spec.start)?;
    let rho0 = DensityMatrix::pure(spec.start, g.node_count())?;
    steps_list
        .par_iter()
        .map(|&steps| {
            if steps == 0 {
                return Err(WalkError::invalid("step count must be positive"));
            }
            let point = spec.with_steps(steps);
            let phi = build_step_channel(&g, &cfg, point.lambda, point.tau)?;
            let mut stepper = ChannelStepper::new(&phi, &rho0)?;
            let mut series = Vec::with_capacity(steps + 1);
            series.push(stepper.population(spec.start));
            for _ in 0..steps {
                stepper.advance();
                series.push(stepper.population(spec.start));
            }
            Ok(reduce(&point, &series, &oracle))
        })
        .collect()
}

/// Maximum error against the rescaled walk for each step count.
pub fn convergence_experiment(spec: &ExperimentSpec, steps_list: &[usize]) -> Result<Vec<ConvergencePoint>> {
    scan_channel(spec, steps_list, |point, series, oracle| {
        let times: Vec<f64> = (0..series.len()).map(|s| s as f64 * point.tau).collect();
        ConvergencePoint {
            steps: point.steps,
            tau: point.tau,
            max_abs_error: max_abs_deviation(&times, series, |t| oracle.evaluate(t)),
        }
    })
}

/// Least-squares slope of `ln(error)` against `ln(tau)`. `None` with fewer
/// than two points of positive error.
pub fn log_log_slope(points: &[ConvergencePoint]) -> Option<f64> {
    let xy: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.max_abs_error > 0.0)
        .map(|p| (p.tau.ln(), p.max_abs_error.ln()))
        .collect();
    if xy.len() < 2 {
        return None;
    }
    let m = xy.len() as f64;
    let xbar = xy.iter().map(|p| p.0).sum::<f64>() / m;
    let ybar = xy.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = xy.iter().map(|p| (p.0 - xbar).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - xbar) * (p.1 - ybar)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn convergence_table(spec: &ExperimentSpec, points: &[ConvergencePoint]) -> Table {
    let mut table = Table::new(["S", "tau", "max_abs_error"]);
    for p in points {
        table.push_row(vec![p.steps.into(), p.tau.into(), p.max_abs_error.into()]);
    }
    spec.annotate(&mut table, "convergence");
    table.meta("grid", "every step");
    if let Some(slope) = log_log_slope(points) {
        table.meta("log_log_slope", slope);
    }
    table
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonPoint {
    pub steps: usize,
    pub epsilon: f64,
    pub horizon: f64,
}

/// Last sampled time before the relative error first reaches `epsilon`, or
/// the final time if it never does. Points where the oracle is below
/// [`RELATIVE_ERROR_GUARD`] are skipped.
pub fn epsilon_horizon(times: &[f64], sim: &[f64], oracle: &[f64], epsilon: f64) -> f64 {
    for i in 0..times.len() {
        if oracle[i] < RELATIVE_ERROR_GUARD {
            continue;
        }
        if (sim[i] - oracle[i]).abs() / oracle[i] >= epsilon {
            return if i == 0 { times[0] } else { times[i - 1] };
        }
    }
    *times.last().unwrap_or(&0.0)
}

/// ε-horizon for every pair of step count and tolerance.
pub fn horizon_experiment(spec: &ExperimentSpec, steps_list: &[usize], epsilons: &[f64]) -> Result<Vec<HorizonPoint>> {
    if let Some(&e) = epsilons.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
        return Err(WalkError::invalid(format!("epsilon must be positive, got {e}")));
    }
    let per_steps = scan_channel(spec, steps_list, |point, series, oracle| {
        let times: Vec<f64> = (0..series.len()).map(|s| s as f64 * point.tau).collect();
        let reference: Vec<f64> = times.iter().map(|&t| oracle.evaluate(t)).collect();
        epsilons
            .iter()
            .map(|&epsilon| HorizonPoint {
                steps: point.steps,
                epsilon,
                horizon: epsilon_horizon(&times, series, &reference, epsilon),
            })
            .collect::<Vec<_>>()
    })?;
    Ok(per_steps.into_iter().flatten().collect())
}

pub fn horizon_table(spec: &ExperimentSpec, points: &[HorizonPoint]) -> Table {
    let mut table = Table::new(["S", "epsilon", "horizon"]);
    for p in points {
        table.push_row(vec![p.steps.into(), p.epsilon.into(), p.horizon.into()]);
    }
    spec.annotate(&mut table, "horizon");
    table
        .meta("grid", "every step")
        .meta("relative_error_guard", format!("points with oracle < {RELATIVE_ERROR_GUARD:e} are skipped"));
    table
}
