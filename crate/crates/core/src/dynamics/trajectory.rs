use nalgebra::{ComplexField, DVector};
use num_complex::Complex64;

use super::propagator::{PropagatorCache, StepPropagator};
use super::{check_stride, recorded_steps, PercolationRun};
use crate::error::{Result, WalkError};
use crate::graph::{sample_realization, Graph, Realization};
use crate::rng::{rng_from_seed, WalkRng};
use crate::walk::{QuantumState, WalkConfig, NORM_TOL};

/// Steps between norm checks of a trajectory state.
pub const RENORMALIZE_EVERY: usize = 10_000;
/// Norm drift tolerated before a state is renormalized.
pub const RENORMALIZE_DRIFT: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct TrajectoryOptions {
    pub sample_stride: usize,
    /// Keep full amplitude vectors, not just site probabilities.
    pub keep_states: bool,
    pub log_masks: bool,
}

impl TrajectoryOptions {
    pub fn new(sample_stride: usize) -> Self {
        TrajectoryOptions {
            sample_stride,
            keep_states: true,
            log_masks: false,
        }
    }
}

/// Recorded samples of one trajectory. `times[i]`, `probabilities[i]` and,
/// when kept, `states[i]` describe the same step.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub steps: Vec<usize>,
    pub times: Vec<f64>,
    pub probabilities: Vec<Vec<f64>>,
    pub states: Vec<QuantumState>,
    pub masks: Option<Vec<Realization>>,
    pub final_state: QuantumState,
    /// Largest `| ||ψ_s|| - 1 |` seen right after a step.
    pub max_step_norm_drift: f64,
    pub renormalizations: usize,
}

impl TrajectoryRecord {
    pub fn site_series(&self, node: usize) -> Vec<f64> {
        self.probabilities.iter().map(|p| p[node]).collect()
    }
}

/// Samples a realization per step, applies its propagator from `cache`, and
/// calls `visit` at every recorded step (including step 0).
#[allow(clippy::too_many_arguments)]
pub(crate) fn drive<T, S>(
    g: &Graph,
    cfg: &WalkConfig,
    run: &PercolationRun,
    rng: &mut WalkRng,
    cache: &mut PropagatorCache<T>,
    build: fn(&Graph, &WalkConfig, &Realization, f64) -> Result<StepPropagator<T>>,
    stride: usize,
    state: &mut S,
    mut masks: Option<&mut Vec<Realization>>,
    mut step: impl FnMut(&StepPropagator<T>, &mut S, usize),
    mut visit: impl FnMut(usize, &mut S),
) -> Result<()>
where
    T: ComplexField + Copy,
{
    check_stride(stride)?;
    let record = recorded_steps(run.steps(), stride);
    let mut next = 0;
    if record[next] == 0 {
        visit(0, state);
        next += 1;
    }
    for s in 1..=run.steps() {
        let mask = sample_realization(g, run.lambda(), rng);
        let prop = cache.get_or_build(&mask, || build(g, cfg, &mask, run.tau()))?;
        step(&prop, state, s);
        if let Some(log) = masks.as_deref_mut() {
            log.push(mask);
        }
        if next < record.len() && record[next] == s {
            visit(s, state);
            next += 1;
        }
    }
    Ok(())
}

/// One stochastic trajectory recorded every `sample_stride` steps.
pub fn run_trajectory(
    g: &Graph,
    cfg: &WalkConfig,
    run: &PercolationRun,
    psi0: &QuantumState,
    sample_stride: usize,
) -> Result<TrajectoryRecord> {
    let mut cache = PropagatorCache::for_nodes(g.node_count());
    let mut rng = rng_from_seed(run.seed);
    run_trajectory_with(g, cfg, run, psi0, &TrajectoryOptions::new(sample_stride), &mut rng, &mut cache)
}

pub fn run_trajectory_with(
    g: &Graph,
    cfg: &WalkConfig,
    run: &PercolationRun,
    psi0: &QuantumState,
    opts: &TrajectoryOptions,
    rng: &mut WalkRng,
    cache: &mut PropagatorCache<Complex64>,
) -> Result<TrajectoryRecord> {
    if psi0.dim() != g.node_count() {
        return Err(WalkError::invalid(format!(
            "initial state has dimension {} but the graph has {} nodes",
            psi0.dim(),
            g.node_count()
        )));
    }
    let norm = psi0.norm();
    if (norm - 1.0).abs() > NORM_TOL {
        return Err(WalkError::invalid(format!("initial state is not normalized: norm = {norm}")));
    }

    struct Walker {
        psi: DVector<Complex64>,
        max_drift: f64,
        renormalizations: usize,
        steps: Vec<usize>,
        probabilities: Vec<Vec<f64>>,
        states: Vec<QuantumState>,
    }
    let mut w = Walker {
        psi: psi0.amplitudes().clone(),
        max_drift: 0.0,
        renormalizations: 0,
        steps: Vec::new(),
        probabilities: Vec::new(),
        states: Vec::new(),
    };
    let mut masks = opts.log_masks.then(Vec::new);
    let keep_states = opts.keep_states;

    drive(
        g,
        cfg,
        run,
        rng,
        cache,
        StepPropagator::quantum,
        opts.sample_stride,
        &mut w,
        masks.as_mut(),
        |prop, w, s| {
            prop.apply(&mut w.psi);
            let drift = (w.psi.norm() - 1.0).abs();
            w.max_drift = w.max_drift.max(drift);
            if s % RENORMALIZE_EVERY == 0 && drift > RENORMALIZE_DRIFT {
                log::debug!("step {s}: renormalizing trajectory state, norm drift {drift:e}");
                w.psi.unscale_mut(w.psi.norm());
                w.renormalizations += 1;
            }
        },
        |s, w| {
            w.steps.push(s);
            w.probabilities.push(w.psi.iter().map(|a| a.norm_sqr()).collect());
            if keep_states {
                w.states.push(QuantumState::from_raw(w.psi.clone()));
            }
        },
    )?;

    if w.max_drift > NORM_TOL {
        log::warn!("trajectory norm drift {:e} exceeded {NORM_TOL:e}", w.max_drift);
    }
    Ok(TrajectoryRecord {
        times: w.steps.iter().map(|&s| run.time_at(s)).collect(),
        steps: w.steps,
        probabilities: w.probabilities,
        states: w.states,
        masks,
        final_state: QuantumState::from_raw(w.psi),
        max_step_norm_drift: w.max_drift,
        renormalizations: w.renormalizations,
    })
}
