use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use super::classical::{check_distribution, classical_with};
use super::propagator::{PropagatorCache, StepPropagator, CACHE_BYTE_BUDGET};
use super::trajectory::drive;
use super::{check_stride, recorded_steps, PercolationRun};
use crate::error::{Result, WalkError};
use crate::graph::Graph;
use crate::rng::trajectory_rng;
use crate::walk::{DensityMatrix, WalkConfig};

/// Trajectories per work unit. Units are summed in index order, so results do
/// not depend on how rayon schedules them.
const TRAJECTORIES_PER_CHUNK: usize = 64;

const PURITY_TOL: f64 = 1e-10;

/// Ensemble mean at one recorded step.
#[derive(Debug, Clone)]
pub struct EnsemblePoint {
    pub step: usize,
    pub time: f64,
    pub mean: DensityMatrix,
    /// Standard error of each diagonal entry.
    pub diag_stderr: Vec<f64>,
}

impl EnsemblePoint {
    /// Largest diagonal standard error.
    pub fn stderr(&self) -> f64 {
        self.diag_stderr.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct DistributionPoint {
    pub step: usize,
    pub time: f64,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

struct Sums<T> {
    first: Vec<T>,
    diag_sq: Vec<Vec<f64>>,
}

impl<T: std::ops::AddAssign + Clone> Sums<T> {
    fn merge(&mut self, other: Sums<T>) {
        for (a, b) in self.first.iter_mut().zip(other.first) {
            *a += b;
        }
        for (a, b) in self.diag_sq.iter_mut().zip(other.diag_sq) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

fn stderr(sum: f64, sum_sq: f64, n: usize) -> f64 {
    let nf = n as f64;
    let mean = sum / nf;
    let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
    (var / nf).sqrt()
}

fn check_count(n: usize) -> Result<()> {
    if n < 2 {
        return Err(WalkError::invalid(format!("need at least 2 trajectories, got {n}")));
    }
    Ok(())
}

/// Runs `work` for every chunk of trajectory indices and adds the chunk sums
/// in index order.
fn reduce_chunks<T, F>(n: usize, work: F) -> Result<Sums<T>>
where
    T: std::ops::AddAssign + Clone + Send,
    F: Fn(std::ops::Range<usize>) -> Result<Sums<T>> + Sync,
{
    let chunks = n.div_ceil(TRAJECTORIES_PER_CHUNK);
    let parts: Vec<Sums<T>> = (0..chunks)
        .into_par_iter()
        .map(|c| work(c * TRAJECTORIES_PER_CHUNK..((c + 1) * TRAJECTORIES_PER_CHUNK).min(n)))
        .collect::<Result<_>>()?;
    let mut it = parts.into_iter();
    let mut total = it.next().expect("at least one chunk");
    for p in it {
        total.merge(p);
    }
    Ok(total)
}

fn worker_cache<T: nalgebra::ComplexField + Copy>(nodes: usize) -> PropagatorCache<T> {
    let workers = rayon::current_num_threads().max(1);
    PropagatorCache::with_budget(nodes, CACHE_BYTE_BUDGET / workers)
}

/// If `rho` is pure, returns a unit vector `ψ` with `ρ = |ψ⟩⟨ψ|`.
fn pure_vector(rho: &DensityMatrix) -> Option<DVector<Complex64>> {
    let m = rho.entries();
    let purity: f64 = m.iter().map(|x| x.norm_sqr()).sum();
    if (purity - 1.0).abs() > PURITY_TOL {
        return None;
    }
    let (k, _) = (0..rho.dim())
        .map(|i| (i, m[(i, i)].re))
        .max_by(|a, b| a.1.total_cmp(&b.1))?;
    let scale = m[(k, k)].re.sqrt();
    Some(m.column(k).map(|x| x / scale))
}

/// Trajectory average of `ρ(t)` with per-trajectory seeds
/// `stream_seed(run.seed, i)`.
///
/// Pure initial states are propagated as vectors; mixed ones as full
/// matrices, each trajectory contributing `M_S⋯M_1 ρ0 M_1†⋯M_S†`.
pub fn monte_carlo_channel(
    g: &Graph,
    cfg: &WalkConfig,
    run: &PercolationRun,
    rho0: &DensityMatrix,
    n_trajectories: usize,
    sample_stride: usize,
) -> Result<Vec<EnsemblePoint>> {
    check_count(n_trajectories)?;
    check_stride(sample_stride)?;
    let d = g.node_count();
    if rho0.dim() != d {
        return Err(WalkError::invalid(format!(
            "initial density matrix is {0}x{0} but the graph has {d} nodes",
            rho0.dim()
        )));
    }
    rho0.validate()?;
    let record = recorded_steps(run.steps(), sample_stride);
    let pure = pure_vector(rho0);

    let sums = reduce_chunks(n_trajectories, |range| {
        let mut cache = worker_cache::<Complex64>(d);
        let mut sums = Sums {
            first: vec![DMatrix::<Complex64>::zeros(d, d); record.len()],
            diag_sq: vec![vec![0.0; d]; record.len()],
        };
        for i in range {
            let mut rng = trajectory_rng(run.seed, i as u64);
            let mut slot = 0;
            let mut add = |rho: &DMatrix<Complex64>, sums: &mut Sums<DMatrix<Complex64>>| {
                sums.first[slot] += rho;
                for (k, sq) in sums.diag_sq[slot].iter_mut().enumerate() {
                    *sq += rho[(k, k)].re.powi(2);
                }
                slot += 1;
            };
            match &pure {
                Some(psi0) => {
                    let mut psi = psi0.clone();
                    drive(
                        g,
                        cfg,
                        run,
                        &mut rng,
                        &mut cache,
                        StepPropagator::quantum,
                        sample_stride,
                        &mut psi,
                        None,
                        |prop, psi, _| prop.apply(psi),
                        |_, psi| add(&(&*psi * psi.adjoint()), &mut sums),
                    )?;
                }
                None => {
                    let mut rho = rho0.entries().clone();
                    drive(
                        g,
                        cfg,
                        run,
                        &mut rng,
                        &mut cache,
                        StepPropagator::quantum,
                        sample_stride,
                        &mut rho,
                        None,
                        |prop, rho, _| prop.conjugate(rho),
                        |_, rho| add(rho, &mut sums),
                    )?;
                }
            }
        }
        Ok(sums)
    })?;

    let nf = n_trajectories as f64;
    Ok(record
        .iter()
        .zip(sums.first)
        .zip(sums.diag_sq)
        .map(|((&step, total), sq)| {
            let diag_stderr = (0..d)
                .map(|k| stderr(total[(k, k)].re, sq[k], n_trajectories))
                .collect();
            EnsemblePoint {
                step,
                time: run.time_at(step),
                mean: DensityMatrix::from_raw(total / Complex64::new(nf, 0.0)),
                diag_stderr,
            }
        })
        .collect())
}

/// Trajectory average of the classical walk's site distribution.
pub fn monte_carlo_classical(
    g: &Graph,
    cfg: &WalkConfig,
    run: &PercolationRun,
    p0: &[f64],
    n_trajectories: usize,
    sample_stride: usize,
) -> Result<Vec<DistributionPoint>> {
    check_count(n_trajectories)?;
    check_stride(sample_stride)?;
    let d = g.node_count();
    check_distribution(p0, d)?;
    let record = recorded_steps(run.steps(), sample_stride);

    let sums = reduce_chunks(n_trajectories, |range| {
        let mut cache = worker_cache::<f64>(d);
        let mut sums = Sums {
            first: vec![DVector::<f64>::zeros(d); record.len()],
            diag_sq: vec![vec![0.0; d]; record.len()],
        };
        for i in range {
            let mut rng = trajectory_rng(run.seed, i as u64);
            let rec = classical_with(g, cfg, run, p0, sample_stride, &mut rng, &mut cache)?;
            for (slot, row) in rec.distributions.iter().enumerate() {
                for (k, &x) in row.iter().enumerate() {
                    sums.first[slot][k] += x;
                    sums.diag_sq[slot][k] += x * x;
                }
            }
        }
        Ok(sums)
    })?;

    let nf = n_trajectories as f64;
    Ok(record
        .iter()
        .zip(sums.first)
        .zip(sums.diag_sq)
        .map(|((&step, total), sq)| DistributionPoint {
            step,
            time: run.time_at(step),
            mean: total.iter().map(|x| x / nf).collect(),
            stderr: (0..d).map(|k| stderr(total[k], sq[k], n_trajectories)).collect(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{build_step_channel, evolve_channel, run_trajectory};
    use crate::graph::{make_complete, make_ring};
    use crate::rng::stream_seed;
    use crate::spectral::{decompose, unitary_exp};
    use crate::walk::{hamiltonian, QuantumState};

    #[test]
    fn full_keep_has_zero_variance() {
        let g = make_ring(5).unwrap();
        let cfg = WalkConfig::default();
        let run = PercolationRun::new(1.0, 0.1, 20, 3).unwrap();
        let rho0 = DensityMatrix::pure(0, 5).unwrap();
        let out = monte_carlo_channel(&g, &cfg, &run, &rho0, 10, 5).unwrap();
        let h = hamiltonian(&g, &g.full_realization(), &cfg).unwrap();
        let u = unitary_exp(&decompose(&h).unwrap(), run.total_time()).unwrap();
        let want = u.as_matrix() * rho0.entries() * u.as_matrix().adjoint();
        let last = out.last().unwrap();
        assert!(last.stderr() < 1e-8);
        assert!((last.mean.entries() - want).iter().all(|x| x.norm() < 1e-8));
    }

    #[test]
    fn zero_keep_returns_initial_state() {
        let g = make_complete(4).unwrap();
        let run = PercolationRun::new(0.0, 0.1, 10, 3).unwrap();
        let rho0 = DensityMatrix::pure(2, 4).unwrap();
        let out = monte_carlo_channel(&g, &WalkConfig::default(), &run, &rho0, 4, 3).unwrap();
        for p in &out {
            assert_eq!(p.mean, rho0);
            assert_eq!(p.stderr(), 0.0);
        }
    }

    #[test]
    fn single_edge_matches_exact_channel() {
        let g = make_ring(2).unwrap();
        let cfg = WalkConfig::default();
        let run = PercolationRun::new(0.5, 0.7, 3, 2024).unwrap();
        let rho0 = DensityMatrix::pure(0, 2).unwrap();
        let mc = monte_carlo_channel(&g, &cfg, &run, &rho0, 100_000, 1).unwrap();
        let phi = build_step_channel(&g, &cfg, 0.5, 0.7).unwrap();
        let exact = evolve_channel(&phi, &rho0, 3, 1).unwrap();
        for (point, rho) in mc.iter().zip(&exact) {
            for k in 0..2 {
                let gap = (point.mean.entries()[(k, k)].re - rho.entries()[(k, k)].re).abs();
                assert!(gap <= 4.0 * point.diag_stderr[k] + 1e-15, "step {} gap {gap}", point.step);
            }
        }
    }

    #[test]
    fn mixed_initial_state_is_averaged_linearly() {
        let g = make_ring(3).unwrap();
        let cfg = WalkConfig::default();
        let run = PercolationRun::new(0.6, 0.2, 6, 5).unwrap();
        let half = Complex64::new(0.5, 0.0);
        let mut m = DMatrix::zeros(3, 3);
        m[(0, 0)] = half;
        m[(1, 1)] = half;
        let mixed = DensityMatrix::new(m).unwrap();
        let out = monte_carlo_channel(&g, &cfg, &run, &mixed, 8, 6).unwrap();
        let a = monte_carlo_channel(&g, &cfg, &run, &DensityMatrix::pure(0, 3).unwrap(), 8, 6).unwrap();
        let b = monte_carlo_channel(&g, &cfg, &run, &DensityMatrix::pure(1, 3).unwrap(), 8, 6).unwrap();
        let want = (a[1].mean.entries() + b[1].mean.entries()) * half;
        assert!((out[1].mean.entries() - want).iter().all(|x| x.norm() < 1e-12));
    }

    #[test]
    fn trajectory_i_equals_standalone_run_with_derived_seed() {
        let g = make_ring(4).unwrap();
        let cfg = WalkConfig::default();
        let run = PercolationRun::new(0.5, 0.3, 10, 99).unwrap();
        let psi0 = QuantumState::basis(4, 0).unwrap();
        let alone = PercolationRun::new(0.5, 0.3, 10, stream_seed(99, 0)).unwrap();
        let r0 = run_trajectory(&g, &cfg, &alone, &psi0, 10).unwrap();
        let alone1 = PercolationRun::new(0.5, 0.3, 10, stream_seed(99, 1)).unwrap();
        let r1 = run_trajectory(&g, &cfg, &alone1, &psi0, 10).unwrap();
        let mc = monte_carlo_channel(&g, &cfg, &run, &psi0.projector(), 2, 10).unwrap();
        let last = mc.last().unwrap();
        for k in 0..4 {
            let want = (r0.probabilities[1][k] + r1.probabilities[1][k]) / 2.0;
            assert!((last.mean.entries()[(k, k)].re - want).abs() < 1e-14);
        }
    }

    #[test]
    fn ensemble_is_deterministic() {
        let g = make_ring(5).unwrap();
        let run = PercolationRun::new(0.4, 0.1, 30, 8).unwrap();
        let rho0 = DensityMatrix::pure(0, 5).unwrap();
        let a = monte_carlo_channel(&g, &WalkConfig::default(), &run, &rho0, 300, 10).unwrap();
        let b = monte_carlo_channel(&g, &WalkConfig::default(), &run, &rho0, 300, 10).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.mean, y.mean);
            assert_eq!(x.diag_stderr, y.diag_stderr);
        }
    }

    #[test]
    fn classical_average_limits() {
        let g = make_complete(5).unwrap();
        let cfg = WalkConfig::default();
        let p0 = [1.0, 0.0, 0.0, 0.0, 0.0];
        let frozen = PercolationRun::new(0.0, 0.1, 10, 1).unwrap();
        let out = monte_carlo_classical(&g, &cfg, &frozen, &p0, 3, 5).unwrap();
        assert!(out.iter().all(|p| p.mean == p0 && p.stderr.iter().all(|&s| s == 0.0)));

        let full = PercolationRun::new(1.0, 0.1, 10, 1).unwrap();
        let out = monte_carlo_classical(&g, &cfg, &full, &p0, 3, 10).unwrap();
        let want = crate::oracles::complete_graph_classical_return(5, 1.0);
        assert!((out.last().unwrap().mean[0] - want).abs() < 1e-8);
    }

    #[test]
    fn rejects_too_few_trajectories() {
        let g = make_ring(3).unwrap();
        let run = PercolationRun::new(0.5, 0.1, 3, 0).unwrap();
        let rho0 = DensityMatrix::pure(0, 3).unwrap();
        assert!(monte_carlo_channel(&g, &WalkConfig::default(), &run, &rho0, 1, 1).is_err());
        assert!(monte_carlo_classical(&g, &WalkConfig::default(), &run, &[1.0, 0.0, 0.0], 1, 1).is_err());
    }
}
