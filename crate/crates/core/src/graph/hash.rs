//! Canonical hashing: a 64-bit digest equal across isomorphic graphs.
//!
//! Small graphs (n <= 8) take the lexicographic minimum over all node
//! orderings. Larger graphs use individualization-refinement: color
//! refinement over (node type, incident edge-type multiset) partitions the
//! nodes, and remaining ties are broken by branching on every member of the
//! first non-singleton cell and keeping the minimal canonical string. Both
//! paths produce the exact canonical form, so digest equality coincides with
//! isomorphism up to 64-bit collisions.

use super::Graph;

const EXHAUSTIVE_LIMIT: usize = 8;

pub fn canonical_hash(g: &Graph) -> u64 {
    let canon = if g.n() <= EXHAUSTIVE_LIMIT {
        exhaustive_canonical_string(g)
    } else {
        refine_canonical_string(g)
    };
    fnv1a64(&canon)
}

/// Canonical byte string under a node ordering: header, node types in order,
/// then the upper triangle of edge types row by row.
fn encode(g: &Graph, order: &[usize]) -> Vec<u8> {
    let n = g.n();
    let mut out = Vec::with_capacity(4 + n + n * n / 2);
    out.push(n as u8);
    out.push(g.node_type_count() as u8);
    out.push(g.edge_type_count() as u8);
    for &i in order {
        out.push(g.node_type(i) as u8);
    }
    for p in 0..n {
        for q in (p + 1)..n {
            out.push(g.edge_type(order[p], order[q]) as u8);
        }
    }
    out
}

fn exhaustive_canonical_string(g: &Graph) -> Vec<u8> {
    let n = g.n();
    let mut order: Vec<usize> = (0..n).collect();
    let mut best: Option<Vec<u8>> = None;
    permute_heap(&mut order, &mut |perm| {
        let enc = encode(g, perm);
        if best.as_ref().is_none_or(|b| enc < *b) {
            best = Some(enc);
        }
    });
    best.unwrap_or_else(|| encode(g, &[]))
}

/// Heap's algorithm over `items`, calling `f` on every permutation.
fn permute_heap(items: &mut [usize], f: &mut impl FnMut(&[usize])) {
    let n = items.len();
    if n == 0 {
        f(items);
        return;
    }
    let mut c = vec![0usize; n];
    f(items);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                items.swap(0, i);
            } else {
                items.swap(c[i], i);
            }
            f(items);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// Stable color refinement: colors start as node types and are refined by the
/// multiset of (edge type, neighbor color) pairs until fixed point.
fn refine_colors(g: &Graph, seed_colors: &[u64]) -> Vec<u64> {
    let n = g.n();
    let mut colors = seed_colors.to_vec();
    for _ in 0..n {
        let mut sigs: Vec<(u64, Vec<(usize, u64)>)> = Vec::with_capacity(n);
        for i in 0..n {
            let mut neigh: Vec<(usize, u64)> = (0..n)
                .filter(|&j| j != i && g.edge_type(i, j) != 0)
                .map(|j| (g.edge_type(i, j), colors[j]))
                .collect();
            neigh.sort_unstable();
            sigs.push((colors[i], neigh));
        }
        let mut sorted = sigs.clone();
        sorted.sort();
        sorted.dedup();
        let new: Vec<u64> = sigs
            .iter()
            .map(|s| sorted.binary_search(s).unwrap() as u64)
            .collect();
        if new == colors {
            break;
        }
        colors = new;
    }
    colors
}

fn refine_canonical_string(g: &Graph) -> Vec<u8> {
    let n = g.n();
    let seed: Vec<u64> = (0..n).map(|i| g.node_type(i) as u64).collect();
    let mut best: Option<Vec<u8>> = None;
    canonical_search(g, seed, &mut best);
    best.expect("nonempty search")
}

/// Individualization-refinement search for the minimal encoding.
fn canonical_search(g: &Graph, seed_colors: Vec<u64>, best: &mut Option<Vec<u8>>) {
    let n = g.n();
    let colors = refine_colors(g, &seed_colors);

    // Group nodes by color, ordered by color value.
    let mut by_color: Vec<(u64, Vec<usize>)> = Vec::new();
    let mut order: Vec<(u64, usize)> = colors.iter().copied().zip(0..n).collect();
    order.sort_unstable();
    for (c, i) in order {
        match by_color.last_mut() {
            Some((lc, v)) if *lc == c => v.push(i),
            _ => by_color.push((c, vec![i])),
        }
    }

    if let Some((_, cell)) = by_color.iter().find(|(_, v)| v.len() > 1) {
        // Branch: individualize each member of the first non-singleton cell.
        let cell = cell.clone();
        for &pick in &cell {
            let mut next = colors.clone();
            // Give the picked node a color strictly below its cellmates.
            for c in next.iter_mut() {
                *c = *c * 2 + 1;
            }
            next[pick] -= 1;
            canonical_search(g, next, best);
        }
    } else {
        let order: Vec<usize> = by_color.into_iter().map(|(_, v)| v[0]).collect();
        let enc = encode(g, &order);
        if best.as_ref().is_none_or(|b| enc < *b) {
            *best = Some(enc);
        }
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Brute-force isomorphism by trying every node bijection. Test oracle for
/// the canonical hash; exported for the acceptance suite.
pub fn brute_force_isomorphic(g1: &Graph, g2: &Graph) -> bool {
    if g1.n() != g2.n()
        || g1.node_type_count() != g2.node_type_count()
        || g1.edge_type_count() != g2.edge_type_count()
    {
        return false;
    }
    let n = g1.n();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut found = false;
    permute_heap(&mut perm, &mut |pi| {
        if found {
            return;
        }
        let ok = (0..n).all(|i| g1.node_type(i) == g2.node_type(pi[i]))
            && (0..n).all(|i| (i + 1..n).all(|j| g1.edge_type(i, j) == g2.edge_type(pi[i], pi[j])));
        if ok {
            found = true;
        }
    });
    found
}
