//! Exponential envelope `a·e^{-b t} + c` with a fixed asymptote `c`.

use crate::error::{Result, WalkError};

pub const MAX_ITERATIONS: usize = 200;
const STEP_TOL: f64 = 1e-13;
const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeFit {
    pub a: f64,
    pub b: f64,
    /// Root-mean-square residual over the fitted points.
    pub residual: f64,
    pub asymptote: f64,
    pub iterations: usize,
    pub converged: bool,
    pub points: usize,
}

impl EnvelopeFit {
    pub fn evaluate(&self, t: f64) -> f64 {
        self.a * (-self.b * t).exp() + self.asymptote
    }

    /// A usable fit: converged and non-negative decay rate.
    pub fn is_valid(&self) -> bool {
        self.converged && self.b >= 0.0 && self.a.is_finite()
    }
}

/// Indices of strict local maxima. With `endpoints`, the first and last
/// samples also count when they exceed their only neighbour.
pub fn local_maxima(values: &[f64], endpoints: bool) -> Vec<usize> {
    let n = values.len();
    let mut out = Vec::new();
    if n < 2 {
        return out;
    }
    if endpoints && values[0] > values[1] {
        out.push(0);
    }
    for i in 1..n - 1 {
        if values[i] > values[i - 1] && values[i] > values[i + 1] {
            out.push(i);
        }
    }
    if endpoints && values[n - 1] > values[n - 2] {
        out.push(n - 1);
    }
    out
}

fn sse(times: &[f64], values: &[f64], a: f64, b: f64, c: f64) -> f64 {
    times
        .iter()
        .zip(values)
        .map(|(&t, &y)| {
            let r = a * (-b * t).exp() + c - y;
            r * r
        })
        .sum()
}

/// Least-squares fit of `a·e^{-b t} + asymptote` to `(times, values)`.
///
/// Starts from a log-linear regression of `ln(y - asymptote)` and refines
/// with Gauss-Newton, halving the step whenever the residual grows.
pub fn fit_envelope(times: &[f64], values: &[f64], asymptote: f64) -> Result<EnvelopeFit> {
    if times.len() != values.len() {
        return Err(WalkError::invalid("times and values differ in length"));
    }
    let above: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(_, &y)| y > asymptote)
        .map(|(&t, &y)| (t, (y - asymptote).ln()))
        .collect();
    if above.len() < 2 {
        return Err(WalkError::Numerical(format!(
            "envelope fit needs at least two points above the asymptote, got {}",
            above.len()
        )));
    }

    let m = above.len() as f64;
    let tbar = above.iter().map(|p| p.0).sum::<f64>() / m;
    let lbar = above.iter().map(|p| p.1).sum::<f64>() / m;
    let stt: f64 = above.iter().map(|p| (p.0 - tbar).powi(2)).sum();
    let stl: f64 = above.iter().map(|p| (p.0 - tbar) * (p.1 - lbar)).sum();
    if stt == 0.0 {
        return Err(WalkError::Numerical("envelope points share a single time".into()));
    }
    let slope = stl / stt;
    let (mut a, mut b) = ((lbar - slope * tbar).exp(), -slope);

    let mut cost = sse(times, values, a, b, asymptote);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        // Normal equations J^T J δ = -J^T r with J = [e^{-bt}, -a t e^{-bt}].
        let (mut j11, mut j12, mut j22, mut g1, mut g2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&t, &y) in times.iter().zip(values) {
            let e = (-b * t).exp();
            let r = a * e + asymptote - y;
            let (da, db) = (e, -a * t * e);
            j11 += da * da;
            j12 += da * db;
            j22 += db * db;
            g1 += da * r;
            g2 += db * r;
        }
        let det = j11 * j22 - j12 * j12;
        if !det.is_finite() || det.abs() <= f64::EPSILON * j11 * j22 {
            break;
        }
        let step_a = -(j22 * g1 - j12 * g2) / det;
        let step_b = -(j11 * g2 - j12 * g1) / det;

        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let (na, nb) = (a + scale * step_a, b + scale * step_b);
            let next = sse(times, values, na, nb, asymptote);
            if next.is_finite() && next <= cost {
                a = na;
                b = nb;
                cost = next;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        let small = (scale * step_a).abs() <= STEP_TOL * (1.0 + a.abs())
            && (scale * step_b).abs() <= STEP_TOL * (1.0 + b.abs());
        if !accepted || small {
            converged = true;
            break;
        }
    }

    Ok(EnvelopeFit {
        a,
        b,
        residual: (cost / times.len() as f64).sqrt(),
        asymptote,
        iterations,
        converged,
        points: times.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_ansatz() {
        let times: Vec<f64> = (0..12).map(|k| 7.5 * k as f64 + 1.0).collect();
        let values: Vec<f64> = times.iter().map(|t| 0.7 * (-0.05 * t).exp() + 0.25).collect();
        let fit = fit_envelope(&times, &values, 0.25).unwrap();
        assert!(fit.is_valid());
        assert!((fit.a - 0.7).abs() / 0.7 < 1e-6, "a = {}", fit.a);
        assert!((fit.b - 0.05).abs() / 0.05 < 1e-6, "b = {}", fit.b);
        assert!(fit.residual < 1e-12);
    }

    #[test]
    fn refines_noisy_data_beyond_log_linear_start() {
        let times: Vec<f64> = (0..20).map(|k| k as f64).collect();
        let values: Vec<f64> = times
            .iter()
            .enumerate()
            .map(|(k, t)| 0.5 * (-0.1 * t).exp() + 0.1 + if k % 2 == 0 { 2e-3 } else { -2e-3 })
            .collect();
        let fit = fit_envelope(&times, &values, 0.1).unwrap();
        assert!(fit.converged);
        assert!((fit.a - 0.5).abs() < 0.01 && (fit.b - 0.1).abs() < 0.01);
        assert!(fit.residual < 2.1e-3);
    }

    #[test]
    fn maxima_of_damped_cosine() {
        let v: Vec<f64> = (0..200).map(|k| (k as f64 * 0.1).cos().powi(2) * (-0.01 * k as f64).exp()).collect();
        let interior = local_maxima(&v, false);
        assert!(!interior.contains(&0));
        let with_ends = local_maxima(&v, true);
        assert_eq!(with_ends[0], 0);
        assert_eq!(&with_ends[1..], &interior[..]);
    }

    #[test]
    fn plateaus_are_not_maxima() {
        assert!(local_maxima(&[0.0, 1.0, 1.0, 0.0], true).is_empty());
    }

    #[test]
    fn too_few_points() {
        assert!(fit_envelope(&[1.0], &[0.5], 0.25).is_err());
        assert!(fit_envelope(&[1.0, 2.0], &[0.1, 0.2], 0.25).is_err());
    }
}
