//! Exact single-step propagators of a percolated realization.
//!
//! A realization's Hamiltonian is block diagonal over the connected components
//! of the kept edges, and isolated nodes do not move. A step propagator
//! therefore stores one dense block per component with at least two nodes,
//! each obtained from its own eigendecomposition.

use std::num::NonZeroUsize;
use std::sync::Arc;

use lru::LruCache;
use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;

use crate::error::Result;
use crate::graph::{Graph, Realization};
use crate::spectral::{decompose, stochastic_exp, unitary_exp, SymmetricMatrix};
use crate::walk::WalkConfig;

#[derive(Debug, Clone)]
struct Block<T: ComplexField> {
    nodes: Vec<usize>,
    matrix: DMatrix<T>,
}

#[derive(Debug, Clone)]
pub struct StepPropagator<T: ComplexField> {
    blocks: Vec<Block<T>>,
}

fn component_hamiltonians(
    g: &Graph,
    mask: &Realization,
    cfg: &WalkConfig,
) -> Vec<(Vec<usize>, SymmetricMatrix)> {
    let components = g.components(mask);
    let mut local = vec![(usize::MAX, 0usize); g.node_count()];
    for (ci, nodes) in components.iter().enumerate() {
        for (li, &node) in nodes.iter().enumerate() {
            local[node] = (ci, li);
        }
    }
    let mut mats: Vec<DMatrix<f64>> = components
        .iter()
        .map(|nodes| DMatrix::zeros(nodes.len(), nodes.len()))
        .collect();
    let gamma = cfg.gamma();
    for k in mask.kept_edges() {
        let (u, v) = g.edges()[k];
        let ((ci, lu), (_, lv)) = (local[u], local[v]);
        let h = &mut mats[ci];
        h[(lu, lu)] += gamma;
        h[(lv, lv)] += gamma;
        h[(lu, lv)] -= gamma;
        h[(lv, lu)] -= gamma;
    }
    components
        .into_iter()
        .zip(mats)
        .map(|(nodes, h)| (nodes, SymmetricMatrix::new_unchecked(h)))
        .collect()
}

impl StepPropagator<Complex64> {
    /// `e^{-i H_r tau}` for the realization `mask`.
    pub fn quantum(g: &Graph, cfg: &WalkConfig, mask: &Realization, tau: f64) -> Result<Self> {
        let blocks = component_hamiltonians(g, mask, cfg)
            .into_iter()
            .map(|(nodes, h)| {
                let u = unitary_exp(&decompose(&h)?, tau)?;
                Ok(Block {
                    nodes,
                    matrix: u.into_matrix(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(StepPropagator { blocks })
    }
}

impl StepPropagator<f64> {
    /// `e^{-H_r tau}` for the realization `mask`.
    pub fn classical(g: &Graph, cfg: &WalkConfig, mask: &Realization, tau: f64) -> Result<Self> {
        let blocks = component_hamiltonians(g, mask, cfg)
            .into_iter()
            .map(|(nodes, h)| {
                Ok(Block {
                    nodes,
                    matrix: stochastic_exp(&decompose(&h)?, tau)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(StepPropagator { blocks })
    }
}

impl<T: ComplexField + Copy> StepPropagator<T> {
    pub fn apply(&self, v: &mut DVector<T>) {
        for block in &self.blocks {
            let local = DVector::from_iterator(block.nodes.len(), block.nodes.iter().map(|&i| v[i]));
            let out = &block.matrix * local;
            for (&i, x) in block.nodes.iter().zip(out.iter()) {
                v[i] = *x;
            }
        }
    }

    /// `M ρ M†` with `M` the full propagator.
    pub fn conjugate(&self, rho: &mut DMatrix<T>) {
        for block in &self.blocks {
            let n = rho.ncols();
            // rows
            for c in 0..n {
                let local = DVector::from_iterator(block.nodes.len(), block.nodes.iter().map(|&i| rho[(i, c)]));
                let out = &block.matrix * local;
                for (&i, x) in block.nodes.iter().zip(out.iter()) {
                    rho[(i, c)] = *x;
                }
            }
            // columns: (ρ M†)_{r, j} = Σ_k ρ_{r,k} conj(M_{j,k})
            let adj = block.matrix.adjoint();
            for r in 0..n {
                let local = DVector::from_iterator(block.nodes.len(), block.nodes.iter().map(|&j| rho[(r, j)]));
                let out = adj.tr_mul(&local);
                for (&j, x) in block.nodes.iter().zip(out.iter()) {
                    rho[(r, j)] = *x;
                }
            }
        }
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    fn stored_entries(&self) -> usize {
        self.blocks.iter().map(|b| b.matrix.len()).sum()
    }
}

/// Entry cap of the propagator cache.
pub const CACHE_CAPACITY: usize = 1 << 16;
/// Memory budget of one cache, sized for the largest possible entry.
pub const CACHE_BYTE_BUDGET: usize = 256 << 20;

/// Least-recently-used map from realization to step propagator.
pub struct PropagatorCache<T: ComplexField> {
    map: LruCache<Realization, Arc<StepPropagator<T>>>,
    hits: u64,
    misses: u64,
}

impl<T: ComplexField + Copy> PropagatorCache<T> {
    pub fn new(capacity: usize) -> Self {
        PropagatorCache {
            map: LruCache::new(NonZeroUsize::new(capacity.max(1)).unwrap()),
            hits: 0,
            misses: 0,
        }
    }

    /// Capacity for a graph with `node_count` nodes: [`CACHE_CAPACITY`]
    /// entries, reduced so that full-size entries fit [`CACHE_BYTE_BUDGET`].
    pub fn for_nodes(node_count: usize) -> Self {
        Self::with_budget(node_count, CACHE_BYTE_BUDGET)
    }

    pub fn with_budget(node_count: usize, bytes: usize) -> Self {
        let entry_bytes = node_count * node_count * std::mem::size_of::<T>();
        let by_budget = bytes / entry_bytes.max(1);
        Self::new(by_budget.clamp(1, CACHE_CAPACITY))
    }

    pub fn get_or_build(
        &mut self,
        mask: &Realization,
        build: impl FnOnce() -> Result<StepPropagator<T>>,
    ) -> Result<Arc<StepPropagator<T>>> {
        if let Some(p) = self.map.get(mask) {
            self.hits += 1;
            return Ok(Arc::clone(p));
        }
        self.misses += 1;
        let p = Arc::new(build()?);
        if p.stored_entries() > 0 {
            self.map.put(mask.clone(), Arc::clone(&p));
        }
        Ok(p)
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    pub fn misses(&self) -> u64 {
        self.misses
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.map.cap().get()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{make_complete, make_lattice2d, make_ring};
    use crate::walk::hamiltonian;

    fn dense(g: &Graph, p: &StepPropagator<Complex64>) -> DMatrix<Complex64> {
        let n = g.node_count();
        let mut m = DMatrix::zeros(n, n);
        for c in 0..n {
            let mut e = DVector::zeros(n);
            e[c] = Complex64::new(1.0, 0.0);
            p.apply(&mut e);
            m.set_column(c, &e);
        }
        m
    }

    #[test]
    fn blockwise_equals_full_exponential() {
        let g = make_lattice2d(4, 3).unwrap();
        let cfg = WalkConfig::default();
        let mask = Realization::from_edges(g.edge_count(), [0, 1, 5, 9, 10, 16]).unwrap();
        let p = StepPropagator::quantum(&g, &cfg, &mask, 0.37).unwrap();
        assert!(p.block_count() >= 2);
        let full = unitary_exp(&decompose(&hamiltonian(&g, &mask, &cfg).unwrap()).unwrap(), 0.37).unwrap();
        let diff = dense(&g, &p) - full.as_matrix();
        assert!(diff.iter().all(|x| x.norm() < 1e-13));
    }

    #[test]
    fn conjugate_matches_dense_product() {
        let g = make_ring(5).unwrap();
        let cfg = WalkConfig::default();
        let mask = Realization::from_edges(5, [0, 2, 3]).unwrap();
        let p = StepPropagator::quantum(&g, &cfg, &mask, 0.8).unwrap();
        let u = dense(&g, &p);
        let mut rho = DMatrix::from_fn(5, 5, |i, j| Complex64::new((i + 2 * j) as f64, i as f64 - j as f64));
        let want = &u * &rho * u.adjoint();
        p.conjugate(&mut rho);
        assert!((rho - want).iter().all(|x| x.norm() < 1e-12));
    }

    #[test]
    fn classical_blocks_are_stochastic() {
        let g = make_complete(6).unwrap();
        let mask = Realization::from_edges(g.edge_count(), [0, 3, 7, 14]).unwrap();
        let p = StepPropagator::classical(&g, &WalkConfig::default(), &mask, 0.5).unwrap();
        let mut v = DVector::from_element(6, 1.0 / 6.0);
        p.apply(&mut v);
        assert!((v.sum() - 1.0).abs() < 1e-14);
        assert!(v.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn cache_counts_hits_and_evicts() {
        let g = make_ring(4).unwrap();
        let cfg = WalkConfig::default();
        let mut cache = PropagatorCache::<Complex64>::new(2);
        let masks: Vec<_> = (1..4u64).map(|b| Realization::from_bits(b, 4).unwrap()).collect();
        for m in masks.iter().chain(masks.iter()) {
            cache.get_or_build(m, || StepPropagator::quantum(&g, &cfg, m, 0.1)).unwrap();
        }
        assert_eq!(cache.len(), 2);
        assert_eq!(cache.misses(), 6);
        let last = &masks[2];
        cache.get_or_build(last, || StepPropagator::quantum(&g, &cfg, last, 0.1)).unwrap();
        assert_eq!(cache.hits(), 1);
    }

    #[test]
    fn cache_capacity_respects_budget() {
        assert_eq!(PropagatorCache::<Complex64>::for_nodes(15).capacity(), CACHE_CAPACITY);
        let big = PropagatorCache::<Complex64>::for_nodes(100);
        assert_eq!(big.capacity(), CACHE_BYTE_BUDGET / (100 * 100 * 16));
    }
}
