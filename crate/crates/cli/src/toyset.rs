//! Synthetic molecule-like training data: small connected graphs built as
//! random trees with an occasional extra ring edge, bond orders picked
//! against the remaining valence, and the whole graph rejection-sampled
//! against the validity rules.

use dgdm_core::graph::{is_valid_molecule, Graph, ValenceTable};
use dgdm_core::rng::{derive_seed, seeded, Rng};
use rand::RngExt;

/// Node-type weights used when the table has the qm9-like four elements;
/// any other arity falls back to uniform. Triples and oxygens occur
/// naturally (so trigger-like fragments are not unambiguous backdoor cues
/// in noisy clean trajectories) but stay rare enough that clean generation
/// is not polluted by them.
const TYPE_WEIGHTS_4: [f64; 4] = [0.50, 0.20, 0.20, 0.10];
const BOND_WEIGHTS: [f64; 3] = [0.74, 0.16, 0.10];

fn sample_weighted(rng: &mut Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (k, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return k;
        }
    }
    weights.len() - 1
}

fn is_connected(g: &Graph) -> bool {
    let n = g.n();
    if n == 0 {
        return false;
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(i) = stack.pop() {
        for j in 0..n {
            if !seen[j] && g.edge_type(i, j) != 0 {
                seen[j] = true;
                count += 1;
                stack.push(j);
            }
        }
    }
    count == n
}

fn try_molecule(rng: &mut Rng, n: usize, vt: &ValenceTable) -> Option<Graph> {
    let a = vt.node_type_count();
    let d = vt.edge_type_count();
    let type_weights: Vec<f64> = if a == 4 {
        TYPE_WEIGHTS_4.to_vec()
    } else {
        vec![1.0; a]
    };
    let bond_candidates: Vec<usize> = (1..d.min(4)).collect();

    let mut nodes = Vec::with_capacity(n);
    let mut capacity = Vec::with_capacity(n); // remaining valence, half units
    for _ in 0..n {
        let t = sample_weighted(rng, &type_weights);
        nodes.push(t);
        capacity.push(vt.max_valence_x2(t).unwrap_or(0));
    }

    let mut edges: Vec<(usize, usize, usize)> = Vec::new();
    for i in 1..n {
        // Attach to a previous node that still has room for a single bond.
        let open: Vec<usize> = (0..i).filter(|&p| capacity[p] >= 2).collect();
        if open.is_empty() || capacity[i] < 2 {
            return None;
        }
        let parent = open[rng.random_range(0..open.len())];
        let mut bond = bond_candidates[sample_weighted(rng, &BOND_WEIGHTS[..bond_candidates.len()])];
        loop {
            let order = vt.order_x2(bond).unwrap_or(0);
            if order <= capacity[i] && order <= capacity[parent] {
                break;
            }
            bond -= 1; // downgrade toward a single bond
            if bond == 0 {
                return None;
            }
        }
        let order = vt.order_x2(bond).unwrap();
        capacity[i] -= order;
        capacity[parent] -= order;
        edges.push((parent, i, bond));
    }

    // One optional ring edge.
    if n >= 3 && rng.random::<f64>() < 0.25 {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i != j
            && capacity[i] >= 2
            && capacity[j] >= 2
            && !edges.iter().any(|&(p, q, _)| (p, q) == (i.min(j), i.max(j)))
        {
            edges.push((i.min(j), i.max(j), 1));
        }
    }

    Graph::from_edges(a, d, nodes, &edges).ok()
}

/// Size weights mimicking the strong large-molecule skew of QM9-style
/// datasets: most graphs sit at the top of the size range, with a thin
/// tail of small fragments keeping the whole range populated.
fn size_weights(max_n: usize) -> Vec<f64> {
    (2..=max_n).map(|n| (n * n * n) as f64).collect()
}

/// Deterministic per seed; every emitted graph is connected and passes the
/// validity oracle. Sizes spread over `[2, max_n]` with a QM9-like skew
/// toward the top of the range.
pub fn generate_toy_dataset(count: usize, max_n: usize, vt: &ValenceTable, rng_seed: u64) -> Vec<Graph> {
    let max_n = max_n.max(2);
    let weights = size_weights(max_n);
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let mut attempt = 0u64;
        let g = loop {
            let mut rng = seeded(derive_seed(rng_seed, (k as u64) << 16 | attempt));
            let n = 2 + sample_weighted(&mut rng, &weights);
            if let Some(g) = try_molecule(&mut rng, n, vt) {
                if is_connected(&g) && is_valid_molecule(&g, vt).unwrap_or(false) {
                    break g;
                }
            }
            attempt += 1;
            assert!(attempt < 10_000, "toy generator failed to produce a valid molecule");
        };
        out.push(g);
    }
    out
}

/// Empirical node-type frequencies of a corpus, for reporting.
pub fn node_type_marginal(graphs: &[Graph], a: usize) -> Vec<f64> {
    let mut counts = vec![0u64; a];
    for g in graphs {
        for i in 0..g.n() {
            counts[g.node_type(i)] += 1;
        }
    }
    let total: u64 = counts.iter().sum::<u64>().max(1);
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}
