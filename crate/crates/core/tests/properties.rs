use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

use percwalk::dynamics::{build_step_channel, evolve_channel, monte_carlo_channel, PercolationRun};
use percwalk::graph::{enumerate_realizations, Graph};
use percwalk::harness::{
    channel_experiment, convergence_experiment, log_log_slope, trajectory_experiment, ExperimentSpec,
};
use percwalk::spectral::{decompose, unitary_exp};
use percwalk::walk::{hamiltonian, DensityMatrix, WalkConfig};

/// Average of `U_S⋯U_1 ρ U_1†⋯U_S†` over all `R^S` mask sequences.
fn exhaustive(g: &Graph, lambda: f64, tau: f64, steps: usize, rho0: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let cfg = WalkConfig::default();
    let space = enumerate_realizations(g).unwrap();
    let props: Vec<(DMatrix<Complex64>, f64)> = space
        .iter(lambda)
        .map(|(mask, p)| {
            let h = hamiltonian(g, &mask, &cfg).unwrap();
            (unitary_exp(&decompose(&h).unwrap(), tau).unwrap().into_matrix(), p)
        })
        .collect();
    let r = props.len();
    let mut total = DMatrix::zeros(rho0.nrows(), rho0.ncols());
    for seq in 0..r.pow(steps as u32) {
        let (mut u, mut p) = (DMatrix::<Complex64>::identity(rho0.nrows(), rho0.nrows()), 1.0);
        let mut rest = seq;
        for _ in 0..steps {
            let (m, pm) = &props[rest % r];
            rest /= r;
            u = m * u;
            p *= pm;
        }
        total += (&u * rho0 * u.adjoint()) * Complex64::new(p, 0.0);
    }
    total
}

fn small_graph() -> impl Strategy<Value = Graph> {
    prop_oneof![
        Just(Graph::new(2, vec![(0, 1)]).unwrap()),
        Just(Graph::new(3, vec![(0, 1), (1, 2)]).unwrap()),
        Just(Graph::new(4, vec![(0, 1), (2, 3)]).unwrap()),
        Just(Graph::new(3, vec![(0, 2)]).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn channel_equals_exhaustive_average(
        g in small_graph(),
        lambda in 0.0f64..=1.0,
        tau in 0.01f64..3.0,
        steps in 0usize..=4,
        start in 0usize..2,
    ) {
        let phi = build_step_channel(&g, &WalkConfig::default(), lambda, tau).unwrap();
        let rho0 = DensityMatrix::pure(start, g.node_count()).unwrap();
        let got = evolve_channel(&phi, &rho0, steps, steps.max(1)).unwrap();
        let want = exhaustive(&g, lambda, tau, steps, rho0.entries());
        let diff = (got.last().unwrap().entries() - want).iter().map(|x| x.norm()).fold(0.0, f64::max);
        prop_assert!(diff <= 1e-12, "diff {diff:e}");
    }
}

#[test]
fn finer_steps_track_the_rescaled_walk_better() {
    let spec = ExperimentSpec::horizon();
    let pts = convergence_experiment(&spec, &[200, 800, 3200]).unwrap();
    assert!(pts.windows(2).all(|w| w[0].max_abs_error > w[1].max_abs_error), "{pts:?}");
}

#[test]
fn convergence_slope_is_measured_in_range() {
    let pts = convergence_experiment(&ExperimentSpec::convergence(), &[250, 500, 1000, 2000, 4000]).unwrap();
    let slope = log_log_slope(&pts).unwrap();
    assert!((0.4..=1.3).contains(&slope), "slope {slope}");
    let coarse = convergence_experiment(&ExperimentSpec::convergence(), &[200, 2000]).unwrap();
    assert!(coarse[1].max_abs_error < coarse[0].max_abs_error);
}

#[test]
fn monte_carlo_agrees_with_channel() {
    let g = Graph::new(4, vec![(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
    let cfg = WalkConfig::default();
    let run = PercolationRun::new(0.4, 0.25, 24, 2024).unwrap();
    let rho0 = DensityMatrix::pure(0, 4).unwrap();
    let exact = evolve_channel(&build_step_channel(&g, &cfg, 0.4, 0.25).unwrap(), &rho0, 24, 6).unwrap();
    let mc = monte_carlo_channel(&g, &cfg, &run, &rho0, 20_000, 6).unwrap();
    for (point, rho) in mc.iter().zip(&exact) {
        for i in 0..4 {
            let gap = (point.mean.entries()[(i, i)].re - rho.entries()[(i, i)].re).abs();
            assert!(gap <= 4.0 * point.diag_stderr[i] + 1e-12, "step {} site {i}: gap {gap}", point.step);
        }
    }
}

#[test]
fn ring_channel_limits() {
    let exact = channel_experiment(&ExperimentSpec {
        lambda: 1.0,
        steps: 500,
        ..ExperimentSpec::ring_channel()
    })
    .unwrap();
    let dev = exact.column("p_sim").unwrap().iter().zip(exact.column("p_oracle").unwrap()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(dev <= 1e-8);
    let defect: f64 = exact.metadata().iter().find(|(k, _)| k == "max_trace_defect").unwrap().1.parse().unwrap();
    assert!(defect <= 1e-10);
}

fn lattice(lambda: f64, steps: usize) -> (Vec<f64>, Vec<f64>) {
    let spec = ExperimentSpec {
        lambda,
        tau: 10.0 / steps as f64,
        steps,
        ..ExperimentSpec::lattice()
    };
    let table = trajectory_experiment(&spec).unwrap();
    (table.column("p_sim").unwrap(), table.column("p_oracle").unwrap())
}

#[test]
fn lattice_limits() {
    let (sim, oracle) = lattice(1.0, 2000);
    assert!(sim.iter().zip(&oracle).all(|(a, b)| (a - b).abs() <= 1e-8));
    let (sim, _) = lattice(0.0, 2000);
    assert!(sim.iter().all(|&p| p == 1.0));
}

#[test]
fn lattice_half_percolated_at_full_resolution() {
    let (sim, oracle) = lattice(0.5, 100_000);
    let dev = sim.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(dev <= 0.05, "max deviation {dev}");
}
