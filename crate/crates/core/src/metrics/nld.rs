//! Normalized Laplacian spectral distance between two graphs.

use super::jacobi::jacobi_eigen;
use crate::graph::Graph;

const JACOBI_TOL: f64 = 1e-10;

/// Symmetric normalized Laplacian `I - D^{-1/2} A D^{-1/2}` over the binary
/// adjacency (any nonzero edge type counts). Isolated nodes get a zero row.
pub fn normalized_laplacian(g: &Graph) -> Vec<f64> {
    let n = g.n();
    let deg: Vec<f64> = (0..n).map(|i| g.degree(i) as f64).collect();
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        if deg[i] > 0.0 {
            l[i * n + i] = 1.0;
        }
        for j in 0..n {
            if i != j && g.edge_type(i, j) != 0 {
                l[i * n + j] = -1.0 / (deg[i] * deg[j]).sqrt();
            }
        }
    }
    l
}

/// Sorted normalized-Laplacian spectrum of a graph.
pub fn laplacian_spectrum(g: &Graph) -> Vec<f64> {
    let n = g.n();
    if n == 0 {
        return Vec::new();
    }
    let l = normalized_laplacian(g);
    let (eigs, _) = jacobi_eigen(&l, n, JACOBI_TOL);
    eigs
}

/// Euclidean distance between the sorted spectra (shorter spectrum
/// zero-padded), divided by `sqrt(max(n1, n2))`.
pub fn nld(g1: &Graph, g2: &Graph) -> f64 {
    let s1 = laplacian_spectrum(g1);
    let s2 = laplacian_spectrum(g2);
    let len = s1.len().max(s2.len());
    if len == 0 {
        return 0.0;
    }
    let pad = |s: &[f64]| -> Vec<f64> {
        let mut v = vec![0.0; len - s.len()];
        v.extend_from_slice(s);
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    };
    let a = pad(&s1);
    let b = pad(&s2);
    let sq: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
    sq.sqrt() / (len as f64).sqrt()
}
