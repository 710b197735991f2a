//! Closed-form reference curves used as ground truth.
//!
//! Apart from [`rescaled_reference`], which is by definition the unpercolated
//! walk at rescaled time, these are plain scalar formulas and never touch a
//! matrix.

use crate::error::Result;
use crate::graph::{check_lambda, Graph};
use crate::walk::{check_node, SpectralWalk, WalkConfig};

/// A named map from time to probability.
pub struct OracleCurve {
    label: String,
    eval: Box<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl OracleCurve {
    pub fn new(label: impl Into<String>, eval: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        OracleCurve {
            label: label.into(),
            eval: Box::new(eval),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn evaluate(&self, t: f64) -> f64 {
        (self.eval)(t)
    }
}

impl std::fmt::Debug for OracleCurve {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OracleCurve").field("label", &self.label).finish()
    }
}

/// `t ↦ |⟨b|e^{-iHλt}|a⟩|²` on the unpercolated graph.
pub fn rescaled_reference(
    g: &Graph,
    cfg: &WalkConfig,
    lambda: f64,
    a: usize,
    b: usize,
) -> Result<OracleCurve> {
    check_lambda(lambda)?;
    check_node(a, g.node_count())?;
    check_node(b, g.node_count())?;
    let walk = SpectralWalk::new(g, cfg)?;
    Ok(OracleCurve::new(
        format!("rescaled_quantum({a}->{b}, lambda={lambda})"),
        move |t| {
            walk.transition_probability(a, b, lambda * t)
                .expect("nodes validated at construction")
        },
    ))
}

/// Classical counterpart of [`rescaled_reference`]: `t ↦ (e^{-Hλt})_{b,a}`.
pub fn rescaled_classical_reference(
    g: &Graph,
    cfg: &WalkConfig,
    lambda: f64,
    a: usize,
    b: usize,
) -> Result<OracleCurve> {
    check_lambda(lambda)?;
    check_node(a, g.node_count())?;
    check_node(b, g.node_count())?;
    let walk = SpectralWalk::new(g, cfg)?;
    Ok(OracleCurve::new(
        format!("rescaled_classical({a}->{b}, lambda={lambda})"),
        move |t| {
            walk.classical_transition(a, b, lambda * t.max(0.0))
                .expect("nodes validated at construction")
        },
    ))
}

/// Quantum return probability on the complete graph `K_n` (γ = 1).
pub fn complete_graph_quantum_return(n: usize, t: f64) -> f64 {
    let nf = n as f64;
    ((nf - 1.0).powi(2) + 1.0 + 2.0 * (nf - 1.0) * (nf * t).cos()) / (nf * nf)
}

/// Classical return probability on `K_n` (γ = 1).
pub fn complete_graph_classical_return(n: usize, t: f64) -> f64 {
    let nf = n as f64;
    ((nf - 1.0) * (-nf * t).exp() + 1.0) / nf
}

/// Classical return probability on the 4-cycle at rescaled time `λt`.
pub fn ring4_classical_return(lambda: f64, t: f64) -> f64 {
    0.25 + (-2.0 * lambda * t).exp() / 2.0 + (-4.0 * lambda * t).exp() / 4.0
}

/// Quantum return probability on the 4-cycle at rescaled time `λt`.
pub fn ring4_quantum_return(lambda: f64, t: f64) -> f64 {
    (lambda * t).cos().powi(4)
}

/// Uniform site probability `1/n`.
pub fn flat_limit(n: usize) -> f64 {
    1.0 / n as f64
}
