//! Subgraph trigger injection and the masks that pin it through diffusion.

use super::{Graph, GraphError, SoftGraph};
use crate::rng::{sample_distinct_sorted, seeded};

/// The subgraph trigger plus its attachment parameters.
///
/// `nodes`/`edges` describe the trigger itself (edge index 0 = no edge,
/// symmetric, no-edge diagonal). `connector_edges` is the number of
/// trigger-to-host attachment edges added on injection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriggerSpec {
    a: usize,
    d: usize,
    nodes: Vec<usize>,
    edges: Vec<usize>,
    connector_edges: usize,
    connector_type: usize,
}

impl TriggerSpec {
    pub fn new(
        a: usize,
        d: usize,
        nodes: Vec<usize>,
        edges: Vec<usize>,
        connector_edges: usize,
        connector_type: usize,
    ) -> Result<Self, GraphError> {
        let n_s = nodes.len();
        // Reuse Graph validation for symmetry/diagonal/type-range checks.
        Graph::new(a, d, nodes.clone(), edges.clone())
            .map_err(|e| GraphError::InvalidTrigger(e.to_string()))?;
        if n_s > 0 {
            if connector_edges == 0 {
                return Err(GraphError::InvalidTrigger("connector edge count must be >= 1".into()));
            }
            if connector_type == 0 || connector_type >= d {
                return Err(GraphError::InvalidTrigger(format!(
                    "connector type {connector_type} is not a real edge type (d={d})"
                )));
            }
        }
        Ok(Self { a, d, nodes, edges, connector_edges, connector_type })
    }

    /// The default artificial molecule: `n_s` oxygen-like atoms chained by
    /// triple bonds, which violates valence as soon as it is attached.
    pub fn triple_bond_chain(
        a: usize,
        d: usize,
        node_type: usize,
        triple_type: usize,
        n_s: usize,
        connector_edges: usize,
        connector_type: usize,
    ) -> Result<Self, GraphError> {
        let nodes = vec![node_type; n_s];
        let mut edges = vec![0usize; n_s * n_s];
        for i in 0..n_s.saturating_sub(1) {
            edges[i * n_s + (i + 1)] = triple_type;
            edges[(i + 1) * n_s + i] = triple_type;
        }
        Self::new(a, d, nodes, edges, connector_edges, connector_type)
    }

    /// Cyclic variant: the trigger atoms form a ring of rare bonds, packing
    /// more trigger-bond mass into the backdoored marginals for the same
    /// node count.
    pub fn triple_bond_cycle(
        a: usize,
        d: usize,
        node_type: usize,
        triple_type: usize,
        n_s: usize,
        connector_edges: usize,
        connector_type: usize,
    ) -> Result<Self, GraphError> {
        let nodes = vec![node_type; n_s];
        let mut edges = vec![0usize; n_s * n_s];
        if n_s >= 2 {
            for i in 0..n_s {
                let j = (i + 1) % n_s;
                if i != j {
                    edges[i * n_s + j] = triple_type;
                    edges[j * n_s + i] = triple_type;
                }
            }
        }
        Self::new(a, d, nodes, edges, connector_edges, connector_type)
    }

    pub fn n_s(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_type_count(&self) -> usize {
        self.a
    }

    pub fn edge_type_count(&self) -> usize {
        self.d
    }

    pub fn node_type(&self, k: usize) -> usize {
        self.nodes[k]
    }

    pub fn edge_type(&self, k1: usize, k2: usize) -> usize {
        self.edges[k1 * self.n_s() + k2]
    }

    pub fn connector_edges(&self) -> usize {
        self.connector_edges
    }

    pub fn connector_type(&self) -> usize {
        self.connector_type
    }
}

/// Host positions occupied by the trigger, with node/edge mask views.
///
/// `ME[i, j]` is true iff both endpoints sit in the trigger node set, so
/// connector edges stay unmasked and keep diffusing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriggerMasks {
    n: usize,
    /// Sorted host positions; trigger node `k` lives at `node_set[k]`.
    node_set: Vec<usize>,
    /// `node_set` membership, indexed by host position.
    slot: Vec<Option<usize>>,
}

impl TriggerMasks {
    pub fn new(n: usize, node_set: Vec<usize>) -> Result<Self, GraphError> {
        let mut slot = vec![None; n];
        let mut prev: Option<usize> = None;
        for (k, &i) in node_set.iter().enumerate() {
            if i >= n {
                return Err(GraphError::DimensionMismatch(format!("mask position {i} out of 0..{n}")));
            }
            if prev.is_some_and(|p| p >= i) {
                return Err(GraphError::DimensionMismatch("mask node set must be strictly sorted".into()));
            }
            slot[i] = Some(k);
            prev = Some(i);
        }
        Ok(Self { n, node_set, slot })
    }

    pub fn empty(n: usize) -> Self {
        Self { n, node_set: Vec::new(), slot: vec![None; n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn node_set(&self) -> &[usize] {
        &self.node_set
    }

    pub fn is_empty(&self) -> bool {
        self.node_set.is_empty()
    }

    /// `MX[i]`.
    pub fn node_masked(&self, i: usize) -> bool {
        self.slot[i].is_some()
    }

    /// `ME[i, j]`: both endpoints masked.
    pub fn edge_masked(&self, i: usize, j: usize) -> bool {
        self.slot[i].is_some() && self.slot[j].is_some()
    }

    /// Which trigger node occupies host position `i`, if any.
    pub fn trigger_index(&self, i: usize) -> Option<usize> {
        self.slot[i]
    }
}

/// Injects the trigger into a host graph: overwrites `n_s` uniformly chosen
/// host positions with the trigger's node types and internal edges, then adds
/// `connector_edges` distinct trigger-to-host edges of the connector type.
pub fn inject_trigger(
    g: &Graph,
    spec: &TriggerSpec,
    rng_seed: u64,
) -> Result<(Graph, TriggerMasks), GraphError> {
    if spec.a != g.node_type_count() || spec.d != g.edge_type_count() {
        return Err(GraphError::DimensionMismatch(format!(
            "trigger types ({}, {}) vs host types ({}, {})",
            spec.a,
            spec.d,
            g.node_type_count(),
            g.edge_type_count()
        )));
    }
    let n = g.n();
    let n_s = spec.n_s();
    if n_s == 0 {
        return Ok((g.clone(), TriggerMasks::empty(n)));
    }
    if n < n_s {
        return Err(GraphError::HostTooSmall { host: n, needed: n_s });
    }
    let k = spec.connector_edges;
    let pair_budget = n_s * (n - n_s);
    if k > pair_budget {
        // Not enough distinct trigger-to-host pairs for the requested connectors.
        return Err(GraphError::HostTooSmall { host: n, needed: n_s + 1 });
    }

    let mut rng = seeded(rng_seed);
    let node_set = sample_distinct_sorted(&mut rng, n, n_s);
    let masks = TriggerMasks::new(n, node_set.clone())?;

    let mut out = g.clone();
    for (t_idx, &host) in node_set.iter().enumerate() {
        out.set_node_type(host, spec.node_type(t_idx));
    }
    for k1 in 0..n_s {
        for k2 in (k1 + 1)..n_s {
            out.set_edge_type(node_set[k1], node_set[k2], spec.edge_type(k1, k2));
        }
    }

    // Connector edges: k distinct (trigger node, non-trigger node) pairs.
    let hosts: Vec<usize> = (0..n).filter(|i| !masks.node_masked(*i)).collect();
    let chosen = sample_distinct_sorted(&mut rng, pair_budget, k);
    for flat in chosen {
        let t_idx = flat / hosts.len();
        let h_idx = flat % hosts.len();
        out.set_edge_type(node_set[t_idx], hosts[h_idx], spec.connector_type);
    }
    Ok((out, masks))
}

/// Pins the trigger into a distribution-valued graph: masked node rows and
/// masked pair slices are replaced by the exact trigger one-hots; everything
/// else is untouched. Idempotent.
pub fn apply_masked_overwrite(
    soft: &SoftGraph,
    spec: &TriggerSpec,
    masks: &TriggerMasks,
) -> Result<SoftGraph, GraphError> {
    if masks.n() != soft.n() {
        return Err(GraphError::DimensionMismatch(format!(
            "mask over {} nodes applied to a {}-node graph",
            masks.n(),
            soft.n()
        )));
    }
    if spec.a != soft.node_type_count() || spec.d != soft.edge_type_count() {
        return Err(GraphError::DimensionMismatch("trigger/soft type counts differ".into()));
    }
    for &i in masks.node_set() {
        if spec.n_s() == 0 || i >= soft.n() {
            return Err(GraphError::DimensionMismatch("mask refers to positions outside the trigger".into()));
        }
    }
    let mut out = soft.clone();
    let n = soft.n();
    for i in 0..n {
        if let Some(k) = masks.trigger_index(i) {
            let row = out.px_row_mut(i);
            row.fill(0.0);
            row[spec.node_type(k)] = 1.0;
        }
    }
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if let (Some(k1), Some(k2)) = (masks.trigger_index(i), masks.trigger_index(j)) {
                let e = spec.edge_type(k1, k2);
                let row = out.pe_row_mut(i, j);
                row.fill(0.0);
                row[e] = 1.0;
            }
        }
    }
    Ok(out)
}
