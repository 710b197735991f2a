use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use super::{check_stride, recorded_steps};
use crate::error::{Result, WalkError};
use crate::graph::{check_lambda, enumerate_realizations, Graph};
use crate::spectral::{decompose, unitary_exp};
use crate::walk::{hamiltonian, DensityMatrix, WalkConfig};

/// Realizations are summed in this many fixed, contiguous chunks whose
/// partial sums are added in chunk order, so the result does not depend on
/// thread scheduling.
const REDUCTION_CHUNKS: usize = 32;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// One step of the averaged dynamics, `ρ ↦ Σ_r p_r U_r ρ U_r†`, as a
/// `d² × d²` matrix acting on column-stacked density matrices
/// (`vec(ρ)[i + d j] = ρ_ij`).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    dim: usize,
    matrix: DMatrix<Complex64>,
}

impl ChannelMatrix {
    pub fn identity(dim: usize) -> Self {
        ChannelMatrix {
            dim,
            matrix: DMatrix::identity(dim * dim, dim * dim),
        }
    }

    /// Conjugation by a single `d × d` matrix: `conj(U) ⊗ U`.
    pub fn conjugation(u: &DMatrix<Complex64>) -> Self {
        let d = u.nrows();
        let mut m = DMatrix::zeros(d * d, d * d);
        accumulate_conjugation(m.as_mut_slice(), u, 1.0);
        ChannelMatrix { dim: d, matrix: m }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        self.check_dim(rho.dim())?;
        let v = DVector::from_column_slice(rho.entries().as_slice());
        let out = &self.matrix * v;
        Ok(DensityMatrix::from_raw(DMatrix::from_column_slice(
            self.dim,
            self.dim,
            out.as_slice(),
        )))
    }

    /// `Φ ∘ other`
    pub fn compose(&self, other: &ChannelMatrix) -> Result<ChannelMatrix> {
        self.check_dim(other.dim)?;
        Ok(ChannelMatrix {
            dim: self.dim,
            matrix: &self.matrix * &other.matrix,
        })
    }

    /// `Φ^n` by repeated squaring.
    pub fn power(&self, mut n: usize) -> ChannelMatrix {
        let mut result = ChannelMatrix::identity(self.dim);
        let mut base = self.clone();
        while n > 0 {
            if n & 1 == 1 {
                result.matrix = &base.matrix * &result.matrix;
            }
            n >>= 1;
            if n > 0 {
                base.matrix = &base.matrix * &base.matrix;
            }
        }
        result
    }

    /// Largest deviation from trace preservation: for every input basis
    /// element `|k⟩⟨l|`, the output trace must be `δ_kl`.
    pub fn trace_defect(&self) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for col in 0..d * d {
            let (k, l) = (col % d, col / d);
            let mut tr = ZERO;
            for i in 0..d {
                tr += self.matrix[(i + d * i, col)];
            }
            let want = if k == l { ONE } else { ZERO };
            worst = worst.max((tr - want).norm());
        }
        worst
    }

    /// Largest violation of `Φ(ρ†) = Φ(ρ)†`, entrywise on the matrix.
    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for (row, col) in (0..d * d).flat_map(|r| (0..d * d).map(move |c| (r, c))) {
            let (i, j) = (row % d, row / d);
            let (k, l) = (col % d, col / d);
            let a = self.matrix[(row, col)];
            let b = self.matrix[(j + d * i, l + d * k)];
            worst = worst.max((a - b.conj()).norm());
        }
        worst
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if dim != self.dim {
            return Err(WalkError::invalid(format!(
                "channel acts on {0}x{0} density matrices, got {1}x{1}",
                self.dim, dim
            )));
        }
        Ok(())
    }
}

// phi += weight * (conj(U) ⊗ U), with phi column-major d² × d².
fn accumulate_conjugation(phi: &mut [Complex64], u: &DMatrix<Complex64>, weight: f64) {
    let d = u.nrows();
    let dd = d * d;
    let us = u.as_slice();
    for l in 0..d {
        for k in 0..d {
            let col = &mut phi[(k + d * l) * dd..(k + d * l + 1) * dd];
            let uk = &us[k * d..(k + 1) * d];
            for j in 0..d {
                let a = us[j + d * l].conj() * weight;
                for (dst, &x) in col[j * d..(j + 1) * d].iter_mut().zip(uk) {
                    *dst += a * x;
                }
            }
        }
    }
}

/// Exact averaged step `Σ_r p_r conj(U_r(τ)) ⊗ U_r(τ)` over every
/// realization of `g`. Realizations with zero weight are skipped.
pub fn build_step_channel(g: &Graph, cfg: &WalkConfig, lambda: f64, tau: f64) -> Result<ChannelMatrix> {
    check_lambda(lambda)?;
    if !tau.is_finite() {
        return Err(WalkError::invalid(format!("step size must be finite, got {tau}")));
    }
    let space = enumerate_realizations(g)?;
    let d = g.node_count();
    let count = space.len();
    let chunk = count.div_ceil(REDUCTION_CHUNKS);

    let partials: Vec<Vec<Complex64>> = (0..count.div_ceil(chunk))
        .into_par_iter()
        .map(|c| -> Result<Vec<Complex64>> {
            let mut acc = vec![ZERO; d * d * d * d];
            for index in c * chunk..((c + 1) * chunk).min(count) {
                let (mask, p) = space.get(index, lambda);
                if p == 0.0 {
                    continue;
                }
                let u = unitary_exp(&decompose(&hamiltonian(g, &mask, cfg)?)?, tau)?;
                accumulate_conjugation(&mut acc, u.as_matrix(), p);
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;

    let mut total = vec![ZERO; d * d * d * d];
    for part in partials {
        for (t, x) in total.iter_mut().zip(part) {
            *t += x;
        }
    }
    Ok(ChannelMatrix {
        dim: d,
        matrix: DMatrix::from_vec(d * d, d * d, total),
    })
}

/// Repeated application of a channel to one column-stacked state.
pub struct ChannelStepper<'a> {
    channel: &'a ChannelMatrix,
    current: DVector<Complex64>,
    scratch: DVector<Complex64>,
    step: usize,
}

impl<'a> ChannelStepper<'a> {
    pub fn new(channel: &'a ChannelMatrix, rho0: &DensityMatrix) -> Result<Self> {
        channel.check_dim(rho0.dim())?;
        let current = DVector::from_column_slice(rho0.entries().as_slice());
        let scratch = DVector::zeros(current.len());
        Ok(ChannelStepper {
            channel,
            current,
            scratch,
            step: 0,
        })
    }

    pub fn advance(&mut self) {
        self.scratch.gemv(ONE, &self.channel.matrix, &self.current, ZERO);
        std::mem::swap(&mut self.current, &mut self.scratch);
        self.step += 1;
    }

    pub fn step(&self) -> usize {
        self.step
    }

    /// `ρ_ii` of the current state.
    pub fn population(&self, i: usize) -> f64 {
        self.current[i + self.channel.dim * i].re
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.channel.dim).map(|i| self.population(i)).collect()
    }

    pub fn density(&self) -> DensityMatrix {
        let d = self.channel.dim;
        DensityMatrix::from_raw(DMatrix::from_column_slice(d, d, self.current.as_slice()))
    }
}

/// `Φ^s(ρ0)` at steps `0, stride, 2·stride, …` and always at `steps`.
pub fn evolve_channel(
    phi: &ChannelMatrix,
    rho0: &DensityMatrix,
    steps: usize,
    sample_stride: usize,
) -> Result<Vec<DensityMatrix>> {
    check_stride(sample_stride)?;
    let record = recorded_steps(steps, sample_stride);
    let mut stepper = ChannelStepper::new(phi, rho0)?;
    let mut out = Vec::with_capacity(record.len());
    for &target in &record {
        while stepper.step() < target {
            stepper.advance();
        }
        out.push(stepper.density());
    }
    Ok(out)
}
