//! Structural input features computed from adjacency algebra and type
//! counts only, so they are permutation-equivariant by construction.
//!
//! Per node: degree and the number of simple cycles of length 3, 4, 5
//! through the node, extracted from diagonals of adjacency powers with the
//! usual correction terms for degenerate closed walks. Per graph: normalized
//! timestep, normalized size, global cycle counts, a sinusoidal timestep
//! embedding, and the node/edge type histograms.

use crate::graph::Graph;

pub const NODE_STRUCT_DIM: usize = 4;
const SINUSOID_PAIRS: usize = 8;

/// Width of the global feature vector for `a` node types and `d` edge types.
pub fn global_dim(a: usize, d: usize) -> usize {
    5 + 2 * SINUSOID_PAIRS + a + d
}

#[derive(Debug, Clone)]
pub struct StructuralFeatures {
    /// Row-major `n x NODE_STRUCT_DIM`.
    pub node: Vec<f64>,
    /// Length `GLOBAL_DIM`.
    pub global: Vec<f64>,
}

/// Per-node cycle counts through each vertex: `(c3, c4, c5)`.
pub fn node_cycle_counts(g: &Graph) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = g.n();
    let adj: Vec<f64> = {
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j && g.edge_type(i, j) != 0 {
                    a[i * n + j] = 1.0;
                }
            }
        }
        a
    };
    let a2 = matmul(&adj, &adj, n);
    let a3 = matmul(&a2, &adj, n);
    let a4 = matmul(&a3, &adj, n);
    let a5 = matmul(&a4, &adj, n);

    let deg: Vec<f64> = (0..n).map(|i| row_sum(&adj, n, i)).collect();
    let tri: Vec<f64> = (0..n).map(|i| a3[i * n + i] / 2.0).collect();

    let mut c4 = vec![0.0; n];
    let mut c5 = vec![0.0; n];
    for i in 0..n {
        let ad: f64 = (0..n).map(|u| adj[i * n + u] * deg[u]).sum();
        c4[i] = (a4[i * n + i] - deg[i] * (deg[i] - 1.0) - ad) / 2.0;

        // s = sum over neighbors u of (common neighbors with u) * deg(u).
        let s: f64 = (0..n).map(|u| adj[i * n + u] * a2[i * n + u] * deg[u]).sum();
        let a_tri: f64 = (0..n).map(|u| adj[i * n + u] * tri[u]).sum();
        c5[i] = (a5[i * n + i] - 4.0 * tri[i] * deg[i] + 10.0 * tri[i] - 2.0 * s - 2.0 * a_tri) / 2.0;
    }
    (tri, c4, c5)
}

pub fn compute_features(g: &Graph, t: usize, t_max: usize, max_n: usize) -> StructuralFeatures {
    let n = g.n();
    let (c3, c4, c5) = node_cycle_counts(g);
    let mut node = Vec::with_capacity(n * NODE_STRUCT_DIM);
    for i in 0..n {
        node.push(g.degree(i) as f64 / max_n.max(1) as f64);
        node.push(c3[i] / 4.0);
        node.push(c4[i] / 8.0);
        node.push(c5[i] / 8.0);
    }
    let tau = t as f64 / t_max.max(1) as f64;
    let (a, d) = (g.node_type_count(), g.edge_type_count());
    let mut global = Vec::with_capacity(global_dim(a, d));
    global.push(tau);
    global.push(n as f64 / max_n.max(1) as f64);
    global.push(c3.iter().sum::<f64>() / 3.0 / 8.0);
    global.push(c4.iter().sum::<f64>() / 4.0 / 8.0);
    global.push(c5.iter().sum::<f64>() / 5.0 / 8.0);
    for k in 0..SINUSOID_PAIRS {
        let freq = (1u64 << k) as f64 * std::f64::consts::PI;
        global.push((freq * tau).sin());
        global.push((freq * tau).cos());
    }
    // Type histograms: the graph-level statistics separating the clean and
    // backdoored limit distributions.
    let mut node_hist = vec![0.0; a];
    for i in 0..n {
        node_hist[g.node_type(i)] += 1.0;
    }
    node_hist.iter_mut().for_each(|v| *v /= n.max(1) as f64);
    global.extend_from_slice(&node_hist);
    let mut edge_hist = vec![0.0; d];
    let mut pair_count = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            edge_hist[g.edge_type(i, j)] += 1.0;
            pair_count += 1.0;
        }
    }
    if pair_count > 0.0 {
        edge_hist.iter_mut().for_each(|v| *v /= pair_count);
    }
    global.extend_from_slice(&edge_hist);
    debug_assert_eq!(global.len(), global_dim(a, d));
    StructuralFeatures { node, global }
}

fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let v = a[i * n + k];
            if v == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += v * b[k * n + j];
            }
        }
    }
    out
}

fn row_sum(a: &[f64], n: usize, i: usize) -> f64 {
    a[i * n..(i + 1) * n].iter().sum()
}
