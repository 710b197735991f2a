//! Dense real-symmetric eigendecomposition and the exponentials built on it.
//!
//! Every propagator in the crate is `Q f(Λ) Qᵀ` for some scalar function `f`
//! of the eigenvalues, so unitarity of `e^{-iHt}` only depends on the
//! orthonormality of `Q`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Result, WalkError};

/// Absolute tolerance on `|a_ij - a_ji|`.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// QL iterations allowed per eigenvalue before giving up.
const MAX_QL_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix(DMatrix<f64>);

impl SymmetricMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(WalkError::invalid(format!(
                "expected a non-empty square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(WalkError::invalid("matrix has non-finite entries"));
        }
        let n = m.nrows();
        for i in 0..n {
            for j in i + 1..n {
                let gap = (m[(i, j)] - m[(j, i)]).abs();
                if gap > SYMMETRY_TOL {
                    return Err(WalkError::invalid(format!(
                        "matrix is not symmetric: |a[{i},{j}] - a[{j},{i}]| = {gap:e}"
                    )));
                }
            }
        }
        Ok(SymmetricMatrix(m))
    }

    pub(crate) fn new_unchecked(m: DMatrix<f64>) -> Self {
        SymmetricMatrix(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }
}

/// `A = Q diag(eigenvalues) Qᵀ` with eigenvalues in ascending order.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

/// Dense complex matrix produced by [`unitary_exp`].
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryMatrix(DMatrix<Complex64>);

impl UnitaryMatrix {
    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.0
    }

    /// `max |(U†U - I)_ij|`
    pub fn unitarity_defect(&self) -> f64 {
        let g = self.0.adjoint() * &self.0;
        max_abs_minus_identity(&g)
    }
}

fn max_abs_minus_identity(g: &DMatrix<Complex64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).norm());
        }
    }
    worst
}

pub fn decompose(a: &SymmetricMatrix) -> Result<SpectralDecomposition> {
    let n = a.dim();
    let mut v = a.as_matrix().clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(&mut v, &mut d, &mut e);
    ql_implicit(&mut v, &mut d, &mut e)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| d[i]));
    let eigenvectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

// Householder reduction to tridiagonal form (EISPACK tred2). On return `v`
// holds the accumulated orthogonal transform, `d` the diagonal and `e[1..]`
// the sub-diagonal.
fn tridiagonalize(v: &mut DMatrix<f64>, d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for j in 0..n {
        d[j] = v[(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1, j)];
                v[(i, j)] = 0.0;
                v[(j, i)] = 0.0;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[(j, i)] = f;
                g = e[j] + v[(j, j)] * f;
                for k in j + 1..i {
                    g += v[(k, j)] * d[k];
                    e[k] += v[(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[(i - 1, j)];
                v[(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }

    for i in 0..n.saturating_sub(1) {
        v[(n - 1, i)] = v[(i, i)];
        v[(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[(k, i + 1)] * v[(k, j)];
                }
                for k in 0..=i {
                    v[(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[(n - 1, j)];
        v[(n - 1, j)] = 0.0;
    }
    v[(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

// Symmetric tridiagonal QL with implicit shifts (EISPACK tql2).
fn ql_implicit(v: &mut DMatrix<f64>, d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut iterations = 0;
            loop {
                iterations += 1;
                if iterations > MAX_QL_ITERATIONS {
                    return Err(WalkError::Numerical(format!(
                        "eigensolver did not converge: eigenvalue {l} of {n} still has \
                         off-diagonal {:e} after {MAX_QL_ITERATIONS} QL iterations (tolerance {:e})",
                        e[l].abs(),
                        eps * tst1
                    )));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        let vk1 = v[(k, i + 1)];
                        let vk = v[(k, i)];
                        v[(k, i + 1)] = s * vk + c * vk1;
                        v[(k, i)] = c * vk - s * vk1;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.function_of(|x| x)
    }

    /// `Q diag(f(λ)) Qᵀ`
    pub fn function_of(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let q = &self.eigenvectors;
        let scaled = DMatrix::from_fn(q.nrows(), q.ncols(), |r, c| q[(r, c)] * f(self.eigenvalues[c]));
        scaled * q.transpose()
    }

    /// `max |(QᵀQ - I)_ij|`
    pub fn orthonormality_defect(&self) -> f64 {
        let g = self.eigenvectors.transpose() * &self.eigenvectors;
        let mut worst: f64 = 0.0;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - target).abs());
            }
        }
        worst
    }

    /// Applies `e^{-iHt}` to `psi` in place without forming the matrix.
    pub fn apply_unitary(&self, t: f64, psi: &mut [Complex64]) {
        let q = &self.eigenvectors;
        let n = self.dim();
        let mut coeffs = vec![Complex64::new(0.0, 0.0); n];
        for (k, ck) in coeffs.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, &p) in psi.iter().enumerate() {
                acc += p * q[(i, k)];
            }
            *ck = acc * Complex64::from_polar(1.0, -self.eigenvalues[k] * t);
        }
        for (i, out) in psi.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, &ck) in coeffs.iter().enumerate() {
                acc += ck * q[(i, k)];
            }
            *out = acc;
        }
    }

    /// Applies `e^{-Ht}` to `p` in place without forming the matrix.
    pub fn apply_stochastic(&self, t: f64, p: &mut [f64]) {
        let q = &self.eigenvectors;
        let n = self.dim();
        let mut coeffs = vec![0.0; n];
        for (k, ck) in coeffs.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (i, &x) in p.iter().enumerate() {
                acc += x * q[(i, k)];
            }
            *ck = acc * (-self.eigenvalues[k] * t).exp();
        }
        for (i, out) in p.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, &ck) in coeffs.iter().enumerate() {
                acc += ck * q[(i, k)];
            }
            *out = acc;
        }
    }
}

/// `e^{-iHt} = Q e^{-iΛt} Qᵀ`
pub fn unitary_exp(decomp: &SpectralDecomposition, t: f64) -> Result<UnitaryMatrix> {
    if !t.is_finite() {
        return Err(WalkError::invalid(format!("time must be finite, got {t}")));
    }
    let q = decomp.eigenvectors();
    let n = decomp.dim();
    let phases: Vec<Complex64> = decomp
        .eigenvalues()
        .iter()
        .map(|&l| Complex64::from_polar(1.0, -l * t))
        .collect();
    let u = DMatrix::from_fn(n, n, |i, j| {
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, ph) in phases.iter().enumerate() {
            acc += ph * (q[(i, k)] * q[(j, k)]);
        }
        acc
    });
    Ok(UnitaryMatrix(u))
}

/// Lowest eigenvalue accepted as a Laplacian spectrum.
const LAPLACIAN_EIGEN_FLOOR: f64 = -1e-9;
/// Negative entries above this magnitude are treated as round-off and clamped.
const NEGATIVE_ENTRY_TOL: f64 = 1e-10;

/// `e^{-Ht}` for a graph Laplacian; tiny negative round-off is clamped to 0.
pub fn stochastic_exp(decomp: &SpectralDecomposition, t: f64) -> Result<DMatrix<f64>> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(WalkError::invalid(format!("time must be finite and non-negative, got {t}")));
    }
    if let Some(&low) = decomp.eigenvalues().iter().next() {
        if low < LAPLACIAN_EIGEN_FLOOR {
            return Err(WalkError::invalid(format!(
                "stochastic exponential needs a Laplacian spectrum; lowest eigenvalue is {low:e}"
            )));
        }
    }
    let mut m = decomp.function_of(|l| (-l * t).exp());
    for x in m.iter_mut() {
        if *x < 0.0 {
            if *x < -NEGATIVE_ENTRY_TOL {
                return Err(WalkError::Numerical(format!(
                    "stochastic exponential produced a negative entry {x:e}"
                )));
            }
            *x = 0.0;
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn sym(rows: &[&[f64]]) -> SymmetricMatrix {
        let n = rows.len();
        SymmetricMatrix::new(DMatrix::from_fn(n, n, |i, j| rows[i][j])).unwrap()
    }

    fn ring4() -> SymmetricMatrix {
        sym(&[
            &[2., -1., 0., -1.],
            &[-1., 2., -1., 0.],
            &[0., -1., 2., -1.],
            &[-1., 0., -1., 2.],
        ])
    }

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.iter().fold(0.0, |a, x| a.max(x.abs()))
    }

    fn random_symmetric(n: usize, seed: u64) -> SymmetricMatrix {
        let mut rng = rng_from_seed(seed);
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let x: f64 = rng.random_range(-3.0..3.0);
                m[(i, j)] = x;
                m[(j, i)] = x;
            }
        }
        SymmetricMatrix::new(m).unwrap()
    }

    #[test]
    fn two_level_eigenvalues() {
        let d = decompose(&sym(&[&[1., -1.], &[-1., 1.]])).unwrap();
        assert!((d.eigenvalues()[0] - 0.0).abs() < 1e-14);
        assert!((d.eigenvalues()[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn identity_decomposition() {
        let d = decompose(&SymmetricMatrix::new(DMatrix::identity(5, 5)).unwrap()).unwrap();
        assert!(d.eigenvalues().iter().all(|&l| (l - 1.0).abs() < 1e-15));
        for c in 0..5 {
            let col = d.eigenvectors().column(c);
            let big = col.iter().filter(|x| (x.abs() - 1.0).abs() < 1e-14).count();
            assert_eq!(big, 1);
        }
    }

    #[test]
    fn ring4_spectrum_is_circulant() {
        let d = decompose(&ring4()).unwrap();
        let mut expected: Vec<f64> = (0..4)
            .map(|j| 2.0 - 2.0 * (2.0 * std::f64::consts::PI * j as f64 / 4.0).cos())
            .collect();
        expected.sort_by(f64::total_cmp);
        for (got, want) in d.eigenvalues().iter().zip(expected) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        assert!(d.orthonormality_defect() < 1e-12);
    }

    #[test]
    fn one_by_one_and_zero() {
        let d = decompose(&sym(&[&[3.5]])).unwrap();
        assert_eq!(d.eigenvalues()[0], 3.5);
        let z = decompose(&SymmetricMatrix::new(DMatrix::zeros(4, 4)).unwrap()).unwrap();
        assert!(z.eigenvalues().iter().all(|&l| l == 0.0));
        assert!(z.orthonormality_defect() < 1e-15);
    }

    #[test]
    fn rejects_asymmetric_and_non_finite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0 + 1e-9, 1.0]);
        assert!(matches!(SymmetricMatrix::new(m), Err(WalkError::InvalidArgument(_))));
        let m = DMatrix::from_row_slice(2, 2, &[f64::NAN, 0.0, 0.0, 1.0]);
        assert!(SymmetricMatrix::new(m).is_err());
        assert!(SymmetricMatrix::new(DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn decomposition_is_deterministic() {
        let a = random_symmetric(12, 9);
        let (d1, d2) = (decompose(&a).unwrap(), decompose(&a).unwrap());
        assert_eq!(d1.eigenvalues(), d2.eigenvalues());
        assert_eq!(d1.eigenvectors(), d2.eigenvectors());
    }

    #[test]
    fn unitary_at_zero_is_identity() {
        let d = decompose(&ring4()).unwrap();
        let u = unitary_exp(&d, 0.0).unwrap();
        let eye = DMatrix::<Complex64>::identity(4, 4);
        assert!((u.as_matrix() - eye).iter().all(|x| x.norm() < 1e-14));
        assert!(unitary_exp(&d, f64::NAN).is_err());
        assert!(unitary_exp(&d, f64::INFINITY).is_err());
    }

    #[test]
    fn two_level_unitary_entry() {
        let d = decompose(&sym(&[&[1., -1.], &[-1., 1.]])).unwrap();
        for &t in &[0.1, 0.7, 2.3, 10.0] {
            let u = unitary_exp(&d, t).unwrap();
            let want = Complex64::from_polar(1.0, -t) * t.cos();
            assert!((u.as_matrix()[(0, 0)] - want).norm() < 1e-13);
        }
    }

    #[test]
    fn eigenvalue_shift_is_global_phase() {
        let a = ring4();
        let shifted = SymmetricMatrix::new(a.as_matrix() + DMatrix::identity(4, 4) * 0.75).unwrap();
        let t = 1.3;
        let u = unitary_exp(&decompose(&a).unwrap(), t).unwrap();
        let v = unitary_exp(&decompose(&shifted).unwrap(), t).unwrap();
        let phase = Complex64::from_polar(1.0, -0.75 * t);
        for (x, y) in u.as_matrix().iter().zip(v.as_matrix().iter()) {
            assert!((x * phase - y).norm() < 1e-12);
            assert!((x.norm() - y.norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_eigenspaces_give_the_right_exponential() {
        // ring(4) has a doubly degenerate eigenvalue 2; compare against a Taylor series
        let a = ring4();
        let d = decompose(&a).unwrap();
        let t = 0.4;
        let h = a.as_matrix().map(|x| Complex64::new(x, 0.0));
        let mut term = DMatrix::<Complex64>::identity(4, 4);
        let mut sum = term.clone();
        for k in 1..40 {
            term = &term * &h * Complex64::new(0.0, -t / k as f64);
            sum += &term;
        }
        let u = unitary_exp(&d, t).unwrap();
        assert!((u.as_matrix() - sum).iter().all(|x| x.norm() < 1e-12));
    }

    #[test]
    fn stochastic_exp_cases() {
        let d = decompose(&sym(&[&[1., -1.], &[-1., 1.]])).unwrap();
        let id = stochastic_exp(&d, 0.0).unwrap();
        assert!(max_abs(&(id - DMatrix::identity(2, 2))) < 1e-14);
        for &t in &[0.05, 0.5, 3.0] {
            let m = stochastic_exp(&d, t).unwrap();
            assert!((m[(0, 0)] - (1.0 + (-2.0 * t).exp()) / 2.0).abs() < 1e-14);
        }
        let r = stochastic_exp(&decompose(&ring4()).unwrap(), 50.0).unwrap();
        assert!(r.iter().all(|&x| (x - 0.25).abs() < 1e-8));
        assert!(stochastic_exp(&d, -1.0).is_err());

        let negative = decompose(&sym(&[&[-1.0]])).unwrap();
        assert!(stochastic_exp(&negative, 1.0).is_err());
    }

    #[test]
    fn apply_in_place_matches_matrix() {
        let a = random_symmetric(7, 2);
        let d = decompose(&a).unwrap();
        let mut rng = rng_from_seed(3);
        let psi: Vec<Complex64> = (0..7)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let u = unitary_exp(&d, 0.9).unwrap();
        let want = u.as_matrix() * nalgebra::DVector::from_column_slice(&psi);
        let mut got = psi.clone();
        d.apply_unitary(0.9, &mut got);
        for (g, w) in got.iter().zip(want.iter()) {
            assert!((g - w).norm() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn round_trip_reconstruction(n in 1usize..=32, seed in any::<u64>()) {
            let a = random_symmetric(n, seed);
            let d = decompose(&a).unwrap();
            prop_assert!(d.orthonormality_defect() <= 1e-10);
            let scale = max_abs(a.as_matrix()).max(1.0);
            prop_assert!(max_abs(&(d.reconstruct() - a.as_matrix())) <= 1e-9 * scale);
            let ev = d.eigenvalues();
            prop_assert!(ev.iter().zip(ev.iter().skip(1)).all(|(x, y)| x <= y));
        }

        #[test]
        fn unitary_group_law_and_norm(n in 1usize..=16, seed in any::<u64>(),
                                      t1 in -5.0f64..5.0, t2 in -5.0f64..5.0) {
            let d = decompose(&random_symmetric(n, seed)).unwrap();
            let u1 = unitary_exp(&d, t1).unwrap();
            let u2 = unitary_exp(&d, t2).unwrap();
            let u12 = unitary_exp(&d, t1 + t2).unwrap();
            prop_assert!(u1.unitarity_defect() <= 1e-10);
            let prod = u1.as_matrix() * u2.as_matrix();
            prop_assert!((prod - u12.as_matrix()).iter().all(|x| x.norm() <= 1e-9));

            let mut rng = rng_from_seed(seed ^ 1);
            let psi = nalgebra::DVector::from_fn(n, |_, _| {
                Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            let out = u1.as_matrix() * &psi;
            prop_assert!((out.norm() - psi.norm()).abs() <= 1e-10);
        }

        #[test]
        fn stochastic_columns_are_distributions(n in 2usize..=12, t in 0.0f64..20.0) {
            let g = crate::graph::make_complete(n).unwrap();
            let h = crate::walk::hamiltonian(&g, &g.full_realization(), &crate::walk::WalkConfig::default()).unwrap();
            let m = stochastic_exp(&decompose(&h).unwrap(), t).unwrap();
            for c in 0..n {
                let col = m.column(c);
                prop_assert!(col.iter().all(|&x| x >= 0.0));
                prop_assert!((col.sum() - 1.0).abs() <= 1e-10);
            }
        }
    }
}
