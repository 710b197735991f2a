use nalgebra::DVector;

use super::propagator::{PropagatorCache, StepPropagator};
use super::trajectory::drive;
use super::PercolationRun;
use crate::error::{Result, WalkError};
use crate::graph::Graph;
use crate::rng::{rng_from_seed, WalkRng};
use crate::walk::WalkConfig;

const DISTRIBUTION_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct ClassicalRecord {
    pub steps: Vec<usize>,
    pub times: Vec<f64>,
    pub distributions: Vec<Vec<f64>>,
}

impl ClassicalRecord {
    pub fn site_series(&self, node: usize) -> Vec<f64> {
        self.distributions.iter().map(|p| p[node]).collect()
    }
}

pub(crate) fn check_distribution(p0: &[f64], nodes: usize) -> Result<()> {
    if p0.len() != nodes {
        return Err(WalkError::invalid(format!(
            "distribution has {} entries but the graph has {nodes} nodes",
            p0.len()
        )));
    }
    if p0.iter().any(|&x| !(x.is_finite() && x >= 0.0)) {
        return Err(WalkError::invalid("distribution has negative or non-finite entries"));
    }
    let total: f64 = p0.iter().sum();
    if (total - 1.0).abs() > DISTRIBUTION_TOL {
        return Err(WalkError::invalid(format!("distribution sums to {total}, expected 1")));
    }
    Ok(())
}

/// Classical random walk on the same sampled realizations: each step applies
/// `e^{-H_r tau}` to the site distribution.
pub fn run_classical_trajectory(
    g: &Graph,
    cfg: &WalkConfig,
    run: &PercolationRun,
    p0: &[f64],
    sample_stride: usize,
) -> Result<ClassicalRecord> {
    let mut rng = rng_from_seed(run.seed);
    let mut cache = PropagatorCache::for_nodes(g.node_count());
    classical_with(g, cfg, run, p0, sample_stride, &mut rng, &mut cache)
}

pub(crate) fn classical_with(
    g: &Graph,
    cfg: &WalkConfig,
    run: &PercolationRun,
    p0: &[f64],
    sample_stride: usize,
    rng: &mut WalkRng,
    cache: &mut PropagatorCache<f64>,
) -> Result<ClassicalRecord> {
    check_distribution(p0, g.node_count())?;
    let mut state = (DVector::from_column_slice(p0), Vec::new(), Vec::new());
    drive(
        g,
        cfg,
        run,
        rng,
        cache,
        StepPropagator::classical,
        sample_stride,
        &mut state,
        None,
        |prop, (p, _, _), _| prop.apply(p),
        |s, (p, steps, rows)| {
            steps.push(s);
            rows.push(p.iter().copied().collect());
        },
    )?;
    let (_, steps, distributions) = state;
    Ok(ClassicalRecord {
        times: steps.iter().map(|&s| run.time_at(s)).collect(),
        steps,
        distributions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{make_complete, make_ring};
    use crate::walk::SpectralWalk;

    #[test]
    fn frozen_at_zero_keep() {
        let g = make_ring(5).unwrap();
        let p0 = vec![0.5, 0.0, 0.25, 0.25, 0.0];
        let run = PercolationRun::new(0.0, 0.2, 30, 3).unwrap();
        let rec = run_classical_trajectory(&g, &WalkConfig::default(), &run, &p0, 4).unwrap();
        assert_eq!(rec.distributions.last().unwrap(), &p0);
    }

    #[test]
    fn full_keep_is_heat_kernel() {
        let g = make_complete(5).unwrap();
        let cfg = WalkConfig::default();
        let run = PercolationRun::new(1.0, 0.01, 150, 3).unwrap();
        let mut p0 = vec![0.0; 5];
        p0[1] = 1.0;
        let rec = run_classical_trajectory(&g, &cfg, &run, &p0, 150).unwrap();
        let m = SpectralWalk::new(&g, &cfg).unwrap().stochastic_matrix(run.total_time()).unwrap();
        let want = m * DVector::from_column_slice(&p0);
        for (a, b) in rec.distributions.last().unwrap().iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn mass_is_conserved() {
        let g = make_complete(8).unwrap();
        let mut p0 = vec![0.0; 8];
        p0[0] = 1.0;
        let run = PercolationRun::new(0.3, 0.05, 200, 12).unwrap();
        let rec = run_classical_trajectory(&g, &WalkConfig::default(), &run, &p0, 10).unwrap();
        for row in &rec.distributions {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            assert!(row.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn rejects_invalid_distribution() {
        let g = make_ring(3).unwrap();
        let run = PercolationRun::new(0.5, 0.1, 3, 0).unwrap();
        let cfg = WalkConfig::default();
        assert!(run_classical_trajectory(&g, &cfg, &run, &[0.5, 0.5], 1).is_err());
        assert!(run_classical_trajectory(&g, &cfg, &run, &[0.5, 0.6, -0.1], 1).is_err());
        assert!(run_classical_trajectory(&g, &cfg, &run, &[0.5, 0.2, 0.2], 1).is_err());
    }
}
