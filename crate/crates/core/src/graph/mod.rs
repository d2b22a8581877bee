//! Graph representation and the operations the attack is built from:
//! permutation machinery, trigger injection, canonical hashing, and
//! chemical-validity rules.
//!
//! Node types are indices in `0..a`, edge types indices in `0..d` with
//! index 0 reserved for "no edge" everywhere. Storing type indices instead
//! of raw one-hot tensors makes the one-hot invariants (rows sum to one,
//! entries in {0,1}) hold by construction; the one-hot views are derived.

mod hash;
mod trigger;
mod valence;

pub use hash::{brute_force_isomorphic, canonical_hash};
pub use trigger::{apply_masked_overwrite, inject_trigger, TriggerMasks, TriggerSpec};
pub use valence::{is_valid_molecule, ValenceTable};

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("edge tensor is not symmetric at ({0}, {1})")]
    NotSymmetric(usize, usize),
    #[error("self edge at node {0} (diagonal must be the no-edge type)")]
    SelfEdge(usize),
    #[error("type index {index} out of range (count {count})")]
    TypeOutOfRange { index: usize, count: usize },
    #[error("host graph has {host} nodes but the trigger needs {needed}")]
    HostTooSmall { host: usize, needed: usize },
    #[error("invalid trigger: {0}")]
    InvalidTrigger(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("not a permutation of 0..{0}")]
    NotAPermutation(usize),
    #[error("type index {0} missing from the valence table")]
    UnknownType(usize),
}

/// A graph with categorical node and edge attributes.
///
/// Conceptually `X` is the `n x a` one-hot node-type matrix and `E` the
/// symmetric `n x n x d` one-hot edge tensor with a no-edge diagonal.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Graph {
    a: usize,
    d: usize,
    nodes: Vec<usize>,
    /// Row-major `n*n` edge-type indices; symmetric with zero diagonal.
    edges: Vec<usize>,
}

impl Graph {
    pub fn new(a: usize, d: usize, nodes: Vec<usize>, edges: Vec<usize>) -> Result<Self, GraphError> {
        let n = nodes.len();
        if edges.len() != n * n {
            return Err(GraphError::DimensionMismatch(format!(
                "edge vector has {} entries, expected {}",
                edges.len(),
                n * n
            )));
        }
        for &t in &nodes {
            if t >= a {
                return Err(GraphError::TypeOutOfRange { index: t, count: a });
            }
        }
        for i in 0..n {
            if edges[i * n + i] != 0 {
                return Err(GraphError::SelfEdge(i));
            }
            for j in 0..n {
                let e = edges[i * n + j];
                if e >= d {
                    return Err(GraphError::TypeOutOfRange { index: e, count: d });
                }
                if e != edges[j * n + i] {
                    return Err(GraphError::NotSymmetric(i, j));
                }
            }
        }
        Ok(Self { a, d, nodes, edges })
    }

    /// Graph with `n` nodes of type 0 and no edges.
    pub fn empty(a: usize, d: usize, n: usize) -> Self {
        Self { a, d, nodes: vec![0; n], edges: vec![0; n * n] }
    }

    /// Builds a graph from node types and an `(i, j, type)` edge list over
    /// unordered pairs; unlisted pairs are no-edge.
    pub fn from_edges(
        a: usize,
        d: usize,
        nodes: Vec<usize>,
        edge_list: &[(usize, usize, usize)],
    ) -> Result<Self, GraphError> {
        let n = nodes.len();
        let mut edges = vec![0usize; n * n];
        for &(i, j, e) in edge_list {
            if i >= n || j >= n {
                return Err(GraphError::DimensionMismatch(format!(
                    "edge ({i}, {j}) out of range for {n} nodes"
                )));
            }
            if i == j {
                return Err(GraphError::SelfEdge(i));
            }
            edges[i * n + j] = e;
            edges[j * n + i] = e;
        }
        Self::new(a, d, nodes, edges)
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_type_count(&self) -> usize {
        self.a
    }

    pub fn edge_type_count(&self) -> usize {
        self.d
    }

    pub fn node_type(&self, i: usize) -> usize {
        self.nodes[i]
    }

    pub fn edge_type(&self, i: usize, j: usize) -> usize {
        self.edges[i * self.n() + j]
    }

    pub fn node_types(&self) -> &[usize] {
        &self.nodes
    }

    /// Edges over unordered pairs `i < j` with a nonzero type.
    pub fn edge_list(&self) -> Vec<(usize, usize, usize)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let e = self.edge_type(i, j);
                if e != 0 {
                    out.push((i, j, e));
                }
            }
        }
        out
    }

    /// Degree counting incident nonzero-type edges.
    pub fn degree(&self, i: usize) -> usize {
        (0..self.n()).filter(|&j| j != i && self.edge_type(i, j) != 0).count()
    }

    /// One-hot node matrix, row-major `n x a`.
    pub fn node_onehot(&self) -> Vec<f64> {
        let n = self.n();
        let mut x = vec![0.0; n * self.a];
        for (i, &t) in self.nodes.iter().enumerate() {
            x[i * self.a + t] = 1.0;
        }
        x
    }

    /// One-hot edge tensor, row-major `n*n x d`.
    pub fn edge_onehot(&self) -> Vec<f64> {
        let n = self.n();
        let mut e = vec![0.0; n * n * self.d];
        for p in 0..n * n {
            e[p * self.d + self.edges[p]] = 1.0;
        }
        e
    }

    pub(crate) fn set_node_type(&mut self, i: usize, t: usize) {
        debug_assert!(t < self.a);
        self.nodes[i] = t;
    }

    pub(crate) fn set_edge_type(&mut self, i: usize, j: usize, e: usize) {
        debug_assert!(e < self.d);
        debug_assert_ne!(i, j);
        let n = self.n();
        self.edges[i * n + j] = e;
        self.edges[j * n + i] = e;
    }
}

/// Per-node and per-pair categorical distributions over types.
///
/// This is the shape both of the forward marginals `q(G^t | G)` and of the
/// denoiser's predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftGraph {
    a: usize,
    d: usize,
    n: usize,
    /// Row-major `n x a`.
    px: Vec<f64>,
    /// Row-major `n*n x d`; symmetric slices, no-edge diagonal.
    pe: Vec<f64>,
}

const ROW_SUM_TOL: f64 = 1e-9;

impl SoftGraph {
    pub fn new(a: usize, d: usize, n: usize, px: Vec<f64>, pe: Vec<f64>) -> Result<Self, GraphError> {
        if px.len() != n * a || pe.len() != n * n * d {
            return Err(GraphError::DimensionMismatch(format!(
                "px/pe lengths {}/{} do not match n={n}, a={a}, d={d}",
                px.len(),
                pe.len()
            )));
        }
        let sg = Self { a, d, n, px, pe };
        sg.check_invariants()?;
        Ok(sg)
    }

    fn check_invariants(&self) -> Result<(), GraphError> {
        for i in 0..self.n {
            let row = self.px_row(i);
            check_distribution_row(row, &format!("node {i}"))?;
        }
        for i in 0..self.n {
            for j in 0..self.n {
                let row = self.pe_row(i, j);
                check_distribution_row(row, &format!("edge ({i},{j})"))?;
                if i == j {
                    if row[0] != 1.0 {
                        return Err(GraphError::SelfEdge(i));
                    }
                } else {
                    let mirror = self.pe_row(j, i);
                    if row != mirror {
                        return Err(GraphError::NotSymmetric(i, j));
                    }
                }
            }
        }
        Ok(())
    }

    /// One-hot soft graph matching `g` exactly.
    pub fn from_graph(g: &Graph) -> Self {
        Self {
            a: g.node_type_count(),
            d: g.edge_type_count(),
            n: g.n(),
            px: g.node_onehot(),
            pe: g.edge_onehot(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn node_type_count(&self) -> usize {
        self.a
    }

    pub fn edge_type_count(&self) -> usize {
        self.d
    }

    pub fn px_row(&self, i: usize) -> &[f64] {
        &self.px[i * self.a..(i + 1) * self.a]
    }

    pub fn pe_row(&self, i: usize, j: usize) -> &[f64] {
        let p = i * self.n + j;
        &self.pe[p * self.d..(p + 1) * self.d]
    }

    pub(crate) fn px_row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.px[i * self.a..(i + 1) * self.a]
    }

    pub(crate) fn pe_row_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let p = i * self.n + j;
        &mut self.pe[p * self.d..(p + 1) * self.d]
    }

    /// Builds a soft graph from per-node rows and upper-triangle pair rows,
    /// mirroring `i < j` slices and fixing the diagonal to no-edge.
    pub fn from_rows(
        a: usize,
        d: usize,
        n: usize,
        node_rows: impl Fn(usize) -> Vec<f64>,
        pair_rows: impl Fn(usize, usize) -> Vec<f64>,
    ) -> Result<Self, GraphError> {
        let mut px = Vec::with_capacity(n * a);
        for i in 0..n {
            let row = node_rows(i);
            if row.len() != a {
                return Err(GraphError::DimensionMismatch(format!("node row {i} has {} entries", row.len())));
            }
            px.extend_from_slice(&row);
        }
        let mut pe = vec![0.0; n * n * d];
        for i in 0..n {
            pe[(i * n + i) * d] = 1.0;
            for j in (i + 1)..n {
                let row = pair_rows(i, j);
                if row.len() != d {
                    return Err(GraphError::DimensionMismatch(format!("pair row ({i},{j}) has {} entries", row.len())));
                }
                pe[(i * n + j) * d..(i * n + j + 1) * d].copy_from_slice(&row);
                pe[(j * n + i) * d..(j * n + i + 1) * d].copy_from_slice(&row);
            }
        }
        Self::new(a, d, n, px, pe)
    }
}

fn check_distribution_row(row: &[f64], what: &str) -> Result<(), GraphError> {
    let mut sum = 0.0;
    for &p in row {
        if !(p >= 0.0) {
            return Err(GraphError::DimensionMismatch(format!("negative or NaN mass in {what}: {p}")));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(GraphError::DimensionMismatch(format!("{what} sums to {sum}")));
    }
    Ok(())
}

/// Relabels nodes: `X'[pi(i)] = X[i]`, `E'[pi(i), pi(j)] = E[i, j]`.
pub fn permute(g: &Graph, pi: &[usize]) -> Result<Graph, GraphError> {
    let n = g.n();
    check_permutation(pi, n)?;
    let mut nodes = vec![0usize; n];
    let mut edges = vec![0usize; n * n];
    for i in 0..n {
        nodes[pi[i]] = g.node_type(i);
        for j in 0..n {
            edges[pi[i] * n + pi[j]] = g.edge_type(i, j);
        }
    }
    Ok(Graph { a: g.a, d: g.d, nodes, edges })
}

/// The same relabeling applied to a distribution-valued graph.
pub fn permute_soft(sg: &SoftGraph, pi: &[usize]) -> Result<SoftGraph, GraphError> {
    let n = sg.n();
    check_permutation(pi, n)?;
    let (a, d) = (sg.a, sg.d);
    let mut px = vec![0.0; n * a];
    let mut pe = vec![0.0; n * n * d];
    for i in 0..n {
        px[pi[i] * a..(pi[i] + 1) * a].copy_from_slice(sg.px_row(i));
        for j in 0..n {
            let dst = (pi[i] * n + pi[j]) * d;
            pe[dst..dst + d].copy_from_slice(sg.pe_row(i, j));
        }
    }
    Ok(SoftGraph { a, d, n, px, pe })
}

pub(crate) fn check_permutation(pi: &[usize], n: usize) -> Result<(), GraphError> {
    if pi.len() != n {
        return Err(GraphError::NotAPermutation(n));
    }
    let mut seen = vec![false; n];
    for &p in pi {
        if p >= n || seen[p] {
            return Err(GraphError::NotAPermutation(n));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Inverse of a permutation.
pub fn invert_permutation(pi: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; pi.len()];
    for (i, &p) in pi.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded, Rng};
    use rand::RngExt;

    pub(crate) fn random_graph(rng: &mut Rng, n: usize, a: usize, d: usize) -> Graph {
        let nodes = (0..n).map(|_| rng.random_range(0..a)).collect();
        let mut g = Graph { a, d, nodes, edges: vec![0; n * n] };
        for i in 0..n {
            for j in (i + 1)..n {
                g.set_edge_type(i, j, rng.random_range(0..d));
            }
        }
        g
    }

    fn random_permutation(rng: &mut Rng, n: usize) -> Vec<usize> {
        let mut pi: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            pi.swap(i, j);
        }
        pi
    }

    #[test]
    fn constructor_rejects_asymmetry() {
        let mut edges = vec![0usize; 9];
        edges[1] = 1; // (0,1) set without mirror
        assert_eq!(
            Graph::new(2, 2, vec![0, 0, 0], edges),
            Err(GraphError::NotSymmetric(0, 1))
        );
    }

    #[test]
    fn constructor_rejects_self_edge() {
        let mut edges = vec![0usize; 4];
        edges[0] = 1;
        assert_eq!(Graph::new(2, 2, vec![0, 0], edges), Err(GraphError::SelfEdge(0)));
    }

    #[test]
    fn identity_permutation_is_noop() {
        let mut rng = seeded(11);
        let g = random_graph(&mut rng, 5, 3, 3);
        let pi: Vec<usize> = (0..5).collect();
        assert_eq!(permute(&g, &pi).unwrap(), g);
    }

    #[test]
    fn swap_on_two_node_single_bond() {
        let mut g = Graph::empty(2, 2, 2);
        g.set_node_type(0, 0);
        g.set_node_type(1, 1);
        g.set_edge_type(0, 1, 1);
        let p = permute(&g, &[1, 0]).unwrap();
        assert_eq!(p.node_type(0), 1);
        assert_eq!(p.node_type(1), 0);
        // E unchanged by symmetry of the single (0,1) bond.
        assert_eq!(p.edge_type(0, 1), 1);
    }

    #[test]
    fn permute_roundtrip_inverse() {
        let mut rng = seeded(5);
        for _ in 0..50 {
            let n = rng.random_range(1..8);
            let g = random_graph(&mut rng, n, 4, 4);
            let pi = random_permutation(&mut rng, n);
            let inv = invert_permutation(&pi);
            let back = permute(&permute(&g, &pi).unwrap(), &inv).unwrap();
            assert_eq!(back, g);
        }
    }

    #[test]
    fn permute_rejects_non_bijection() {
        let g = Graph::empty(2, 2, 3);
        assert_eq!(permute(&g, &[0, 0, 1]), Err(GraphError::NotAPermutation(3)));
        assert_eq!(permute(&g, &[0, 1]), Err(GraphError::NotAPermutation(3)));
        assert_eq!(permute(&g, &[0, 1, 3]), Err(GraphError::NotAPermutation(3)));
    }

    #[test]
    fn soft_graph_checks_rows() {
        let bad = SoftGraph::new(2, 2, 1, vec![0.6, 0.6], vec![1.0, 0.0]);
        assert!(bad.is_err());
        let ok = SoftGraph::new(2, 2, 1, vec![0.4, 0.6], vec![1.0, 0.0]).unwrap();
        assert_eq!(ok.px_row(0), &[0.4, 0.6]);
    }

    #[test]
    fn soft_permute_matches_hard_permute_on_onehots() {
        let mut rng = seeded(9);
        for _ in 0..30 {
            let n = rng.random_range(1..7);
            let g = random_graph(&mut rng, n, 3, 3);
            let pi = random_permutation(&mut rng, n);
            let a = SoftGraph::from_graph(&permute(&g, &pi).unwrap());
            let b = permute_soft(&SoftGraph::from_graph(&g), &pi).unwrap();
            assert_eq!(a, b);
        }
    }
}
