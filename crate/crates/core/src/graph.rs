//! Graphs, the named test geometries, and bond-percolation realizations.
//!
//! Nodes are 0-indexed. The order of `Graph::edges` is fixed at construction
//! and defines the bit position of each edge inside a [`Realization`].

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use rand::Rng;

use crate::error::{Result, WalkError};

/// Largest edge count accepted by [`enumerate_realizations`] (2^24 masks).
pub const ENUMERATION_LIMIT: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    node_count: usize,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Builds a graph from an explicit edge list. Edges are stored as given
    /// (orientation included) but compared as unordered pairs.
    pub fn new(node_count: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if node_count == 0 {
            return Err(WalkError::invalid("graph needs at least one node"));
        }
        let mut seen = HashSet::with_capacity(edges.len());
        for &(u, v) in &edges {
            if u >= node_count || v >= node_count {
                return Err(WalkError::invalid(format!(
                    "edge ({u}, {v}) references a node outside 0..{node_count}"
                )));
            }
            if u == v {
                return Err(WalkError::invalid(format!("self-loop at node {u}")));
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(WalkError::invalid(format!("duplicate edge ({u}, {v})")));
            }
        }
        Ok(Graph { node_count, edges })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.node_count];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    pub fn full_realization(&self) -> Realization {
        Realization::full(self.edge_count())
    }

    /// Connected components of the subgraph kept by `mask`, restricted to
    /// components with at least two nodes. Each component lists its nodes in
    /// ascending order; components are ordered by their smallest node.
    pub fn components(&self, mask: &Realization) -> Vec<Vec<usize>> {
        let mut parent: Vec<usize> = (0..self.node_count).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (k, &(u, v)) in self.edges.iter().enumerate() {
            if mask.contains(k) {
                let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
                if ru != rv {
                    parent[ru.max(rv)] = ru.min(rv);
                }
            }
        }
        let mut slot = vec![usize::MAX; self.node_count];
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for node in 0..self.node_count {
            let root = find(&mut parent, node);
            if slot[root] == usize::MAX {
                slot[root] = groups.len();
                groups.push(Vec::new());
            }
            groups[slot[root]].push(node);
        }
        groups.retain(|g| g.len() > 1);
        groups
    }
}

fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(WalkError::InvalidArgument(msg()))
    }
}

/// Cycle graph `i -- (i+1) mod n`. For `n = 2` this is a single edge.
pub fn make_ring(n: usize) -> Result<Graph> {
    require(n >= 2, || format!("ring needs at least 2 nodes, got {n}"))?;
    let edges = if n == 2 {
        vec![(0, 1)]
    } else {
        (0..n).map(|i| (i, (i + 1) % n)).collect()
    };
    Graph::new(n, edges)
}

/// Open-boundary square lattice; node index is `row * width + col`.
pub fn make_lattice2d(width: usize, height: usize) -> Result<Graph> {
    require(width >= 1 && height >= 1, || {
        format!("lattice dimensions must be positive, got {width}x{height}")
    })?;
    let idx = |r: usize, c: usize| r * width + c;
    let mut edges = Vec::with_capacity(2 * width * height);
    for r in 0..height {
        for c in 0..width {
            if c + 1 < width {
                edges.push((idx(r, c), idx(r, c + 1)));
            }
            if r + 1 < height {
                edges.push((idx(r, c), idx(r + 1, c)));
            }
        }
    }
    Graph::new(width * height, edges)
}

/// Periodic variant of [`make_lattice2d`]. Wrap-around bonds that would
/// duplicate an existing bond (a dimension of 2) or close a self-loop
/// (a dimension of 1) are dropped.
pub fn make_torus2d(width: usize, height: usize) -> Result<Graph> {
    require(width >= 1 && height >= 1, || {
        format!("torus dimensions must be positive, got {width}x{height}")
    })?;
    let idx = |r: usize, c: usize| r * width + c;
    let mut seen = HashSet::new();
    let mut edges = Vec::with_capacity(2 * width * height);
    let mut push = |a: usize, b: usize| {
        if a != b && seen.insert((a.min(b), a.max(b))) {
            edges.push((a, b));
        }
    };
    for r in 0..height {
        for c in 0..width {
            push(idx(r, c), idx(r, (c + 1) % width));
            push(idx(r, c), idx((r + 1) % height, c));
        }
    }
    Graph::new(width * height, edges)
}

pub fn make_complete(n: usize) -> Result<Graph> {
    require(n >= 2, || format!("complete graph needs at least 2 nodes, got {n}"))?;
    let edges = (0..n)
        .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
        .collect();
    Graph::new(n, edges)
}

/// Reads the edge-list format: a `nodes <N>` header, then one `u v` pair per
/// line. Blank lines and lines starting with `#` are ignored.
pub fn parse_edge_list(text: &str) -> Result<Graph> {
    let mut node_count = None;
    let mut edges = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let bad = || WalkError::Parse(format!("line {}: cannot parse {raw:?}", lineno + 1));
        match (node_count, fields.as_slice()) {
            (None, ["nodes", n]) => node_count = Some(n.parse::<usize>().map_err(|_| bad())?),
            (None, _) => {
                return Err(WalkError::Parse(format!(
                    "line {}: expected `nodes <N>` header before any edge",
                    lineno + 1
                )))
            }
            (Some(_), [u, v]) => {
                edges.push((u.parse().map_err(|_| bad())?, v.parse().map_err(|_| bad())?))
            }
            (Some(_), _) => return Err(bad()),
        }
    }
    let n = node_count.ok_or_else(|| WalkError::Parse("missing `nodes <N>` header".into()))?;
    Graph::new(n, edges)
}

pub fn write_edge_list(g: &Graph) -> String {
    let mut out = format!("nodes {}\n", g.node_count());
    for &(u, v) in g.edges() {
        out.push_str(&format!("{u} {v}\n"));
    }
    out
}

pub fn load_edge_list(path: &Path) -> Result<Graph> {
    let text = std::fs::read_to_string(path).map_err(|e| WalkError::io(path, e))?;
    parse_edge_list(&text)
}

/// Parses `ring:N`, `lattice2d:WxH`, `torus2d:WxH`, `complete:N` or `file:PATH`.
pub fn parse_graph_spec(spec: &str) -> Result<Graph> {
    let (kind, arg) = spec
        .split_once(':')
        .ok_or_else(|| WalkError::invalid(format!("graph spec {spec:?} is missing ':'")))?;
    let num = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| WalkError::invalid(format!("bad size {s:?} in graph spec {spec:?}")))
    };
    let dims = |s: &str| -> Result<(usize, usize)> {
        let (w, h) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| WalkError::invalid(format!("expected WxH in graph spec {spec:?}")))?;
        Ok((num(w)?, num(h)?))
    };
    match kind {
        "ring" => make_ring(num(arg)?),
        "complete" => make_complete(num(arg)?),
        "lattice2d" => {
            let (w, h) = dims(arg)?;
            make_lattice2d(w, h)
        }
        "torus2d" => {
            let (w, h) = dims(arg)?;
            make_torus2d(w, h)
        }
        "file" => load_edge_list(Path::new(arg)),
        other => Err(WalkError::invalid(format!("unknown graph kind {other:?}"))),
    }
}

/// Subset of a graph's edges, stored as a bitset over edge indices.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Realization {
    words: Vec<u64>,
    edge_count: usize,
}

impl Realization {
    pub fn empty(edge_count: usize) -> Self {
        Realization {
            words: vec![0; edge_count.div_ceil(64)],
            edge_count,
        }
    }

    pub fn full(edge_count: usize) -> Self {
        let mut r = Self::empty(edge_count);
        for k in 0..edge_count {
            r.insert(k);
        }
        r
    }

    /// Mask from the low `edge_count` bits of `bits`.
    pub fn from_bits(bits: u64, edge_count: usize) -> Result<Self> {
        require(edge_count <= 64, || format!("{edge_count} edges do not fit in a u64 mask"))?;
        require(edge_count == 64 || bits >> edge_count == 0, || {
            format!("mask {bits:#x} has bits beyond edge {edge_count}")
        })?;
        let mut r = Self::empty(edge_count);
        if edge_count > 0 {
            r.words[0] = bits;
        }
        Ok(r)
    }

    pub fn from_edges(edge_count: usize, kept: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut r = Self::empty(edge_count);
        for k in kept {
            require(k < edge_count, || format!("edge index {k} out of range 0..{edge_count}"))?;
            r.insert(k);
        }
        Ok(r)
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn kept_count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn contains(&self, k: usize) -> bool {
        k < self.edge_count && self.words[k / 64] >> (k % 64) & 1 == 1
    }

    fn insert(&mut self, k: usize) {
        self.words[k / 64] |= 1 << (k % 64);
    }

    pub fn kept_edges(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.edge_count).filter(|&k| self.contains(k))
    }

    pub fn is_disjoint(&self, other: &Realization) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & b == 0)
    }

    pub fn union(&self, other: &Realization) -> Result<Realization> {
        require(self.edge_count == other.edge_count, || {
            "realizations over different edge sets".to_string()
        })?;
        let words = self.words.iter().zip(&other.words).map(|(a, b)| a | b).collect();
        Ok(Realization {
            words,
            edge_count: self.edge_count,
        })
    }

    /// Probability `lambda^k (1 - lambda)^(N - k)` of drawing exactly this mask.
    pub fn probability(&self, lambda: f64) -> f64 {
        let k = self.kept_count();
        realization_probability(lambda, k, self.edge_count)
    }
}

impl fmt::Debug for Realization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Realization(")?;
        for k in 0..self.edge_count {
            write!(f, "{}", if self.contains(k) { '1' } else { '0' })?;
        }
        write!(f, ")")
    }
}

pub fn realization_probability(lambda: f64, kept: usize, edge_count: usize) -> f64 {
    lambda.powi(kept as i32) * (1.0 - lambda).powi((edge_count - kept) as i32)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PercolationParams {
    lambda: f64,
    pub seed: u64,
}

impl PercolationParams {
    pub fn new(lambda: f64, seed: u64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(PercolationParams { lambda, seed })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    require((0.0..=1.0).contains(&lambda), || {
        format!("edge-keep probability must lie in [0, 1], got {lambda}")
    })
}

/// Keeps every edge independently with probability `lambda`.
pub fn sample_realization<R: Rng + ?Sized>(g: &Graph, lambda: f64, rng: &mut R) -> Realization {
    let mut r = Realization::empty(g.edge_count());
    for k in 0..g.edge_count() {
        if rng.random::<f64>() < lambda {
            r.insert(k);
        }
    }
    r
}

/// All `2^N` edge subsets of a graph, produced in increasing mask order.
#[derive(Debug, Clone, Copy)]
pub struct RealizationSpace {
    edge_count: usize,
}

pub fn enumerate_realizations(g: &Graph) -> Result<RealizationSpace> {
    if g.edge_count() > ENUMERATION_LIMIT {
        return Err(WalkError::Capacity {
            edges: g.edge_count(),
            limit: ENUMERATION_LIMIT,
        });
    }
    Ok(RealizationSpace {
        edge_count: g.edge_count(),
    })
}

impl RealizationSpace {
    pub fn len(&self) -> usize {
        1 << self.edge_count
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    /// Mask number `index` together with its probability under `lambda`.
    pub fn get(&self, index: usize, lambda: f64) -> (Realization, f64) {
        let bits = index as u64;
        let kept = bits.count_ones() as usize;
        let mut r = Realization::empty(self.edge_count);
        if self.edge_count > 0 {
            r.words[0] = bits;
        }
        (r, realization_probability(lambda, kept, self.edge_count))
    }

    pub fn iter(&self, lambda: f64) -> impl Iterator<Item = (Realization, f64)> + '_ {
        (0..self.len()).map(move |i| self.get(i, lambda))
    }

    /// `Σ_r p_r` with Neumaier compensation; 1 up to rounding of the terms.
    pub fn total_probability(&self, lambda: f64) -> f64 {
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for i in 0..self.len() {
            let p = self.get(i, lambda).1;
            let t = sum + p;
            comp += if sum.abs() >= p.abs() { (sum - t) + p } else { (p - t) + sum };
            sum = t;
        }
        sum + comp
    }
}
