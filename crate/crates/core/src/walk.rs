//! Walk Hamiltonians and the single-shot quantum and classical transition
//! probabilities on an unpercolated graph.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Result, WalkError};
use crate::graph::{Graph, Realization};
use crate::spectral::{decompose, stochastic_exp, SpectralDecomposition, SymmetricMatrix};

pub const NORM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkConfig {
    gamma: f64,
}

impl WalkConfig {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(WalkError::invalid(format!("transition rate must be positive, got {gamma}")));
        }
        Ok(WalkConfig { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig { gamma: 1.0 }
    }
}

/// Sum of the edge terms kept by `mask`: `+γ` on both endpoints' diagonal and
/// `-γ` on the off-diagonal pair. The diagonal is therefore γ times the degree
/// inside the realization, and every row sums to zero.
pub fn hamiltonian(g: &Graph, mask: &Realization, cfg: &WalkConfig) -> Result<SymmetricMatrix> {
    if mask.edge_count() != g.edge_count() {
        return Err(WalkError::invalid(format!(
            "mask covers {} edges but the graph has {}",
            mask.edge_count(),
            g.edge_count()
        )));
    }
    let n = g.node_count();
    let gamma = cfg.gamma();
    let mut h = DMatrix::zeros(n, n);
    for k in mask.kept_edges() {
        let (u, v) = g.edges()[k];
        h[(u, u)] += gamma;
        h[(v, v)] += gamma;
        h[(u, v)] -= gamma;
        h[(v, u)] -= gamma;
    }
    Ok(SymmetricMatrix::new_unchecked(h))
}

/// Normalized amplitude vector over the graph's nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState(DVector<Complex64>);

impl QuantumState {
    pub fn new(amplitudes: DVector<Complex64>) -> Result<Self> {
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(WalkError::invalid(format!("state is not normalized: norm = {norm}")));
        }
        Ok(QuantumState(amplitudes))
    }

    pub fn basis(dim: usize, node: usize) -> Result<Self> {
        check_node(node, dim)?;
        let mut v = DVector::zeros(dim);
        v[node] = Complex64::new(1.0, 0.0);
        Ok(QuantumState(v))
    }

    pub(crate) fn from_raw(amplitudes: DVector<Complex64>) -> Self {
        QuantumState(amplitudes)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.0.iter().map(|a| a.norm_sqr()).collect()
    }

    /// `|ψ⟩⟨ψ|`
    pub fn projector(&self) -> DensityMatrix {
        DensityMatrix(&self.0 * self.0.adjoint())
    }
}

/// Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(DMatrix<Complex64>);

pub const DENSITY_HERMITIAN_TOL: f64 = 1e-10;
pub const DENSITY_TRACE_TOL: f64 = 1e-10;
pub const DENSITY_POSITIVITY_TOL: f64 = 1e-8;

impl DensityMatrix {
    pub fn new(entries: DMatrix<Complex64>) -> Result<Self> {
        let rho = DensityMatrix(entries);
        rho.validate()?;
        Ok(rho)
    }

    pub fn pure(node: usize, dim: usize) -> Result<Self> {
        Ok(QuantumState::basis(dim, node)?.projector())
    }

    pub(crate) fn from_raw(entries: DMatrix<Complex64>) -> Self {
        DensityMatrix(entries)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn into_entries(self) -> DMatrix<Complex64> {
        self.0
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.0[(i, i)].re).collect()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.0[(i, j)] - self.0[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Smallest eigenvalue, computed from the real symmetric embedding
    /// `[[X, -Y], [Y, X]]` of `ρ = X + iY` (same spectrum, doubled).
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let n = self.dim();
        let emb = DMatrix::from_fn(2 * n, 2 * n, |r, c| {
            // symmetrized so tiny Hermiticity defects do not trip validation
            let entry = |i: usize, j: usize| (self.0[(i, j)] + self.0[(j, i)].conj()) * 0.5;
            match (r < n, c < n) {
                (true, true) => entry(r, c).re,
                (true, false) => -entry(r, c - n).im,
                (false, true) => entry(r - n, c).im,
                (false, false) => entry(r - n, c - n).re,
            }
        });
        let d = decompose(&SymmetricMatrix::new_unchecked(emb))?;
        Ok(d.eigenvalues()[0])
    }

    pub fn validate(&self) -> Result<()> {
        if !self.0.is_square() {
            return Err(WalkError::invalid("density matrix must be square"));
        }
        let herm = self.hermiticity_defect();
        if herm > DENSITY_HERMITIAN_TOL {
            return Err(WalkError::invalid(format!("density matrix not Hermitian (defect {herm:e})")));
        }
        let tr = self.trace();
        if (tr - Complex64::new(1.0, 0.0)).norm() > DENSITY_TRACE_TOL {
            return Err(WalkError::invalid(format!("density matrix trace is {tr}, expected 1")));
        }
        let low = self.min_eigenvalue()?;
        if low < -DENSITY_POSITIVITY_TOL {
            return Err(WalkError::invalid(format!(
                "density matrix has negative eigenvalue {low:e}"
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_node(node: usize, dim: usize) -> Result<()> {
    if node >= dim {
        return Err(WalkError::invalid(format!("node {node} out of range 0..{dim}")));
    }
    Ok(())
}

/// Spectral data of the unpercolated walk, reusable across many times.
#[derive(Debug, Clone)]
pub struct SpectralWalk {
    decomp: SpectralDecomposition,
}

impl SpectralWalk {
    pub fn new(g: &Graph, cfg: &WalkConfig) -> Result<Self> {
        let h = hamiltonian(g, &g.full_realization(), cfg)?;
        Ok(SpectralWalk {
            decomp: decompose(&h)?,
        })
    }

    pub fn decomposition(&self) -> &SpectralDecomposition {
        &self.decomp
    }

    pub fn dim(&self) -> usize {
        self.decomp.dim()
    }

    /// `⟨b|e^{-iHt}|a⟩`
    pub fn amplitude(&self, a: usize, b: usize, t: f64) -> Result<Complex64> {
        check_node(a, self.dim())?;
        check_node(b, self.dim())?;
        if !t.is_finite() {
            return Err(WalkError::invalid(format!("time must be finite, got {t}")));
        }
        let q = self.decomp.eigenvectors();
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, &l) in self.decomp.eigenvalues().iter().enumerate() {
            acc += Complex64::from_polar(q[(b, k)] * q[(a, k)], -l * t);
        }
        Ok(acc)
    }

    pub fn transition_probability(&self, a: usize, b: usize, t: f64) -> Result<f64> {
        Ok(self.amplitude(a, b, t)?.norm_sqr())
    }

    /// `(e^{-Ht})_{b,a}`, clamped at zero.
    pub fn classical_transition(&self, a: usize, b: usize, t: f64) -> Result<f64> {
        check_node(a, self.dim())?;
        check_node(b, self.dim())?;
        if !(t.is_finite() && t >= 0.0) {
            return Err(WalkError::invalid(format!("time must be finite and non-negative, got {t}")));
        }
        let q = self.decomp.eigenvectors();
        let mut acc = 0.0;
        for (k, &l) in self.decomp.eigenvalues().iter().enumerate() {
            acc += q[(b, k)] * q[(a, k)] * (-l * t).exp();
        }
        Ok(acc.max(0.0))
    }

    pub fn stochastic_matrix(&self, t: f64) -> Result<DMatrix<f64>> {
        stochastic_exp(&self.decomp, t)
    }
}

/// `|⟨b|e^{-iHt}|a⟩|²` on the unpercolated graph.
pub fn transition_probability(g: &Graph, cfg: &WalkConfig, a: usize, b: usize, t: f64) -> Result<f64> {
    SpectralWalk::new(g, cfg)?.transition_probability(a, b, t)
}

/// `(e^{-Ht})_{b,a}` on the unpercolated graph.
pub fn classical_transition(g: &Graph, cfg: &WalkConfig, a: usize, b: usize, t: f64) -> Result<f64> {
    SpectralWalk::new(g, cfg)?.classical_transition(a, b, t)
}
