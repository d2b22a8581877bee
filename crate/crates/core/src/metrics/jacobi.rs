//! Cyclic Jacobi eigendecomposition for small dense symmetric matrices.
//!
//! Sweeps plane rotations over every off-diagonal entry until the
//! off-diagonal Frobenius mass drops below the tolerance. Foolproof for
//! real symmetric input; more than enough for normalized Laplacians of
//! molecule-sized graphs.

/// Returns `(eigenvalues, eigenvectors)` of the symmetric `n x n` matrix
/// `a` (row-major). Eigenvalues are sorted ascending; `eigenvectors` is
/// row-major with column `k` the unit eigenvector of `eigenvalues[k]`.
pub fn jacobi_eigen(a: &[f64], n: usize, tol: f64) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(a.len(), n * n, "matrix must be n x n");
    let mut m = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    if n <= 1 {
        return (m.iter().step_by(n.max(1) + 1).copied().collect(), v);
    }

    const MAX_SWEEPS: usize = 64;
    for _ in 0..MAX_SWEEPS {
        let off: f64 = {
            let mut s = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    s += m[p * n + q] * m[p * n + q];
                }
            }
            s.sqrt()
        };
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq.abs() <= f64::EPSILON * 1e-2 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                // Smaller-angle root for stability.
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut pairs: Vec<(f64, usize)> = (0..n).map(|i| (m[i * n + i], i)).collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let eigenvalues: Vec<f64> = pairs.iter().map(|(l, _)| *l).collect();
    let mut vectors = vec![0.0; n * n];
    for (new_col, (_, old_col)) in pairs.iter().enumerate() {
        for r in 0..n {
            vectors[r * n + new_col] = v[r * n + old_col];
        }
    }
    (eigenvalues, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::RngExt;

    fn reconstruct(eigs: &[f64], vecs: &[f64], n: usize) -> Vec<f64> {
        // Q L Q^T.
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += vecs[i * n + k] * eigs[k] * vecs[j * n + k];
                }
                out[i * n + j] = s;
            }
        }
        out
    }

    #[test]
    fn diagonal_matrix_is_its_own_spectrum() {
        let a = [3.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 2.0];
        let (eigs, _) = jacobi_eigen(&a, 3, 1e-12);
        assert!((eigs[0] + 1.0).abs() < 1e-12);
        assert!((eigs[1] - 2.0).abs() < 1e-12);
        assert!((eigs[2] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn known_2x2_spectrum() {
        // [[1, -1], [-1, 1]] has eigenvalues {0, 2}.
        let a = [1.0, -1.0, -1.0, 1.0];
        let (eigs, _) = jacobi_eigen(&a, 2, 1e-12);
        assert!(eigs[0].abs() < 1e-12);
        assert!((eigs[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn reconstruction_matches_input_on_random_symmetric() {
        let mut rng = seeded(3);
        for _ in 0..50 {
            let n = rng.random_range(1..=16);
            let mut a = vec![0.0; n * n];
            for i in 0..n {
                for j in i..n {
                    let x = rng.random::<f64>() * 4.0 - 2.0;
                    a[i * n + j] = x;
                    a[j * n + i] = x;
                }
            }
            let (eigs, vecs) = jacobi_eigen(&a, n, 1e-12);
            let back = reconstruct(&eigs, &vecs, n);
            let mut frob = 0.0;
            for k in 0..n * n {
                frob += (a[k] - back[k]) * (a[k] - back[k]);
            }
            assert!(frob.sqrt() <= 1e-8, "Frobenius error {} at n={n}", frob.sqrt());
        }
    }

    #[test]
    fn eigenvalues_satisfy_characteristic_polynomial_and_trace_identities() {
        // Newton-identity style oracle: eigenvalues must reproduce
        // trace(A^k) for k = 1..n, which pins the spectrum with
        // multiplicities without any root-finding.
        let mut rng = seeded(5);
        for _ in 0..40 {
            let n = rng.random_range(2..=4);
            let mut a = vec![0.0; n * n];
            for i in 0..n {
                for j in i..n {
                    let x = rng.random::<f64>() * 2.0 - 1.0;
                    a[i * n + j] = x;
                    a[j * n + i] = x;
                }
            }
            let (eigs, _) = jacobi_eigen(&a, n, 1e-12);
            let mut power = a.clone();
            for k in 1..=n {
                let trace: f64 = (0..n).map(|i| power[i * n + i]).sum();
                let newton: f64 = eigs.iter().map(|l| l.powi(k as i32)).sum();
                assert!((trace - newton).abs() <= 1e-8, "k={k}: {trace} vs {newton}");
                // power = power * a
                let mut next = vec![0.0; n * n];
                for i in 0..n {
                    for l in 0..n {
                        let x = power[i * n + l];
                        if x == 0.0 {
                            continue;
                        }
                        for j in 0..n {
                            next[i * n + j] += x * a[l * n + j];
                        }
                    }
                }
                power = next;
            }
        }
    }
}
