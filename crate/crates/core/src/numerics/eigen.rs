//! Symmetric eigendecomposition via cyclic Jacobi rotations.
//!
//! Matrix sizes here are bounded by the spectral sampling (a few hundred),
//! where Jacobi is accurate, simple and fast enough. A block subspace
//! iteration is provided for callers that only need the leading eigenpairs.

use crate::error::{Error, Result};
use crate::numerics::mat::{norm2, Mat};

/// Full spectrum of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct EigenResult {
    /// Eigenvalues in descending order.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors; column `k` pairs with `eigenvalues[k]`.
    pub eigenvectors: Mat,
}

fn check_symmetric(a: &Mat) -> Result<()> {
    if a.rows != a.cols {
        return Err(Error::Contract(format!(
            "expected a square matrix, got {}x{}",
            a.rows, a.cols
        )));
    }
    let scale = a.max_abs();
    let tol = 1e-10 * scale.max(f64::MIN_POSITIVE);
    for i in 0..a.rows {
        for j in (i + 1)..a.cols {
            if (a.at(i, j) - a.at(j, i)).abs() > tol {
                return Err(Error::Contract(format!(
                    "matrix is not symmetric at ({i},{j}): {} vs {}",
                    a.at(i, j),
                    a.at(j, i)
                )));
            }
        }
    }
    Ok(())
}

/// Fix each eigenvector's sign so its largest-magnitude entry is positive.
/// Ties resolve to the lowest index, which keeps results run-to-run stable.
fn fix_signs(v: &mut Mat) {
    let n = v.rows;
    for k in 0..v.cols {
        let mut best = 0;
        let mut best_abs = -1.0;
        for i in 0..n {
            let a = v.at(i, k).abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if v.at(best, k) < 0.0 {
            for i in 0..n {
                let x = v.at(i, k);
                v.set(i, k, -x);
            }
        }
    }
}

/// Full symmetric eigendecomposition.
///
/// Eigenvalues come back in descending order and each eigenvector's sign is
/// fixed deterministically. Non-symmetric input (beyond 1e-10 relative) is a
/// contract error.
pub fn sym_eigen(a: &Mat) -> Result<EigenResult> {
    check_symmetric(a)?;
    let n = a.rows;
    let mut m = a.clone();
    // Symmetrize exactly so rotations preserve symmetry bit-for-bit.
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m.at(i, j) + m.at(j, i));
            m.set(i, j, avg);
            m.set(j, i, avg);
        }
    }
    let mut v = Mat::identity(n);
    let scale = m.max_abs().max(f64::MIN_POSITIVE);

    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off = off.max(m.at(i, j).abs());
            }
        }
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.at(p, q);
                // Skip rotations that cannot change the matrix in f64.
                if apq.abs() <= 1e-300
                    || apq.abs() <= f64::EPSILON * 0.5 * (m.at(p, p).abs() + m.at(q, q).abs())
                {
                    continue;
                }
                let tau = (m.at(q, q) - m.at(p, p)) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for k in 0..n {
                    let mkp = m.at(k, p);
                    let mkq = m.at(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.at(p, k);
                    let mqk = m.at(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = v.at(k, p);
                    let vkq = v.at(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    // Sort descending by eigenvalue; stable so exact ties keep Jacobi order.
    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| m.at(i, i)).collect();
    order.sort_by(|&i, &j| diag[j].partial_cmp(&diag[i]).unwrap());

    let eigenvalues: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let mut eigenvectors = Mat::zeros(n, n);
    for (k, &src) in order.iter().enumerate() {
        for i in 0..n {
            eigenvectors.set(i, k, v.at(i, src));
        }
    }
    fix_signs(&mut eigenvectors);
    Ok(EigenResult { eigenvalues, eigenvectors })
}

/// Leading `p` eigenpairs of a symmetric positive-semidefinite matrix via
/// block subspace iteration with a Rayleigh–Ritz step.
///
/// Used on spectral scatter matrices where only a handful of components are
/// needed; it avoids the full Jacobi sweep cost. Fully deterministic: the
/// start block is built from the columns with the largest diagonal entries.
pub fn top_eigenpairs(a: &Mat, p: usize) -> Result<EigenResult> {
    check_symmetric(a)?;
    let n = a.rows;
    if p == 0 || p > n {
        return Err(Error::InvalidParameter(format!(
            "component count {p} out of range 1..={n}"
        )));
    }
    if p == n || n <= 8 {
        let full = sym_eigen(a)?;
        return Ok(truncate(full, p));
    }

    // Seed block: unit vectors at the p largest diagonal entries.
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| a.at(j, j).partial_cmp(&a.at(i, i)).unwrap());
    let mut q = Mat::zeros(n, p);
    for (k, &i) in idx.iter().take(p).enumerate() {
        q.set(i, k, 1.0);
    }

    let mut prev_ritz = vec![f64::INFINITY; p];
    let mut basis = q;
    let mut ritz_vals = vec![0.0; p];
    let mut ritz_vecs = Mat::zeros(n, p);
    for iter in 0..300 {
        // Z = A * basis
        let mut z = Mat::zeros(n, p);
        for i in 0..n {
            let arow = a.row(i);
            for k in 0..p {
                let mut s = 0.0;
                for j in 0..n {
                    s += arow[j] * basis.at(j, k);
                }
                z.set(i, k, s);
            }
        }
        orthonormalize(&mut z, iter);
        // Rayleigh-Ritz on the small projected matrix.
        let az = {
            let mut az = Mat::zeros(n, p);
            for i in 0..n {
                let arow = a.row(i);
                for k in 0..p {
                    let mut s = 0.0;
                    for j in 0..n {
                        s += arow[j] * z.at(j, k);
                    }
                    az.set(i, k, s);
                }
            }
            az
        };
        let mut small = Mat::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                let mut s = 0.0;
                for r in 0..n {
                    s += z.at(r, i) * az.at(r, j);
                }
                small.set(i, j, s);
            }
        }
        // Exact symmetrization guards tiny asymmetry from rounding.
        for i in 0..p {
            for j in (i + 1)..p {
                let avg = 0.5 * (small.at(i, j) + small.at(j, i));
                small.set(i, j, avg);
                small.set(j, i, avg);
            }
        }
        let er = sym_eigen(&small)?;
        ritz_vals = er.eigenvalues.clone();
        ritz_vecs = z.mul(&er.eigenvectors);

        let scale = ritz_vals[0].abs().max(f64::MIN_POSITIVE);
        let converged = ritz_vals
            .iter()
            .zip(&prev_ritz)
            .all(|(cur, prev)| (cur - prev).abs() <= 1e-13 * scale);
        prev_ritz = ritz_vals.clone();
        basis = ritz_vecs.clone();
        if converged && iter >= 2 {
            break;
        }
    }
    fix_signs(&mut ritz_vecs);
    Ok(EigenResult { eigenvalues: ritz_vals, eigenvectors: ritz_vecs })
}

fn truncate(full: EigenResult, p: usize) -> EigenResult {
    let n = full.eigenvectors.rows;
    let mut vecs = Mat::zeros(n, p);
    for k in 0..p {
        for i in 0..n {
            vecs.set(i, k, full.eigenvectors.at(i, k));
        }
    }
    EigenResult { eigenvalues: full.eigenvalues[..p].to_vec(), eigenvectors: vecs }
}

/// In-place modified Gram-Schmidt. A column that collapses to zero norm is
/// replaced with a deterministic fallback basis vector.
fn orthonormalize(q: &mut Mat, round: usize) {
    let n = q.rows;
    let p = q.cols;
    for k in 0..p {
        let mut col: Vec<f64> = (0..n).map(|i| q.at(i, k)).collect();
        for prev in 0..k {
            let proj: f64 = (0..n).map(|i| q.at(i, prev) * col[i]).sum();
            for (i, c) in col.iter_mut().enumerate() {
                *c -= proj * q.at(i, prev);
            }
        }
        let mut nrm = norm2(&col);
        if nrm <= 1e-300 {
            // Deterministic restart direction for a degenerate column.
            col = vec![0.0; n];
            col[(k + round) % n] = 1.0;
            for prev in 0..k {
                let proj: f64 = (0..n).map(|i| q.at(i, prev) * col[i]).sum();
                for (i, c) in col.iter_mut().enumerate() {
                    *c -= proj * q.at(i, prev);
                }
            }
            nrm = norm2(&col).max(1e-300);
        }
        for (i, c) in col.iter().enumerate() {
            q.set(i, k, c / nrm);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::mat::dot;
    use rand::Rng;

    fn random_symmetric(n: usize, seed: u64) -> Mat {
        let mut rng = crate::rng::seeded(seed);
        let mut a = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v: f64 = rng.gen_range(-1.0..1.0);
                a.set(i, j, v);
                a.set(j, i, v);
            }
        }
        a
    }

    #[test]
    fn identity_has_unit_eigenvalues() {
        let r = sym_eigen(&Mat::identity(3)).unwrap();
        for v in &r.eigenvalues {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn diagonal_matrix_sorts_descending() {
        let mut a = Mat::zeros(3, 3);
        a.set(0, 0, 3.0);
        a.set(1, 1, 1.0);
        a.set(2, 2, 2.0);
        let r = sym_eigen(&a).unwrap();
        assert_eq!(r.eigenvalues, vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn reconstruction_matches_input_on_random_matrix() {
        let a = random_symmetric(10, 42);
        let r = sym_eigen(&a).unwrap();
        // V Λ Vᵀ
        let n = 10;
        let mut lam = Mat::zeros(n, n);
        for i in 0..n {
            lam.set(i, i, r.eigenvalues[i]);
        }
        let recon = r.eigenvectors.mul(&lam).mul(&r.eigenvectors.transpose());
        let mut err = 0.0f64;
        for (x, y) in recon.data.iter().zip(&a.data) {
            err = err.max((x - y).abs());
        }
        assert!(err < 1e-8, "reconstruction error {err}");
    }

    #[test]
    fn eigenpairs_satisfy_defining_relation() {
        let a = random_symmetric(12, 7);
        let r = sym_eigen(&a).unwrap();
        let scale = a.fro_norm();
        for k in 0..12 {
            let v = r.eigenvectors.col(k);
            let av = a.matvec(&v);
            let mut res = 0.0f64;
            for i in 0..12 {
                res = res.max((av[i] - r.eigenvalues[k] * v[i]).abs());
            }
            assert!(res <= 1e-8 * scale, "pair {k} residual {res}");
        }
    }

    #[test]
    fn eigenvectors_are_orthonormal() {
        let a = random_symmetric(9, 3);
        let r = sym_eigen(&a).unwrap();
        for i in 0..9 {
            for j in 0..9 {
                let d = dot(&r.eigenvectors.col(i), &r.eigenvectors.col(j));
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((d - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn trace_equals_eigenvalue_sum() {
        let a = random_symmetric(8, 11);
        let r = sym_eigen(&a).unwrap();
        let trace: f64 = (0..8).map(|i| a.at(i, i)).sum();
        let sum: f64 = r.eigenvalues.iter().sum();
        assert!((trace - sum).abs() <= 1e-10 * trace.abs().max(1.0));
    }

    #[test]
    fn non_symmetric_input_is_rejected() {
        let a = Mat::from_vec(2, 2, vec![1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(sym_eigen(&a), Err(Error::Contract(_))));
    }

    #[test]
    fn top_eigenpairs_agree_with_full_decomposition() {
        // PSD matrix with clear spectral gaps.
        let x = {
            let mut rng = crate::rng::seeded(5);
            let mut x = Mat::zeros(40, 20);
            for v in &mut x.data {
                *v = rng.gen_range(0.0..1.0);
            }
            x
        };
        let g = x.gram();
        let full = sym_eigen(&g).unwrap();
        let top = top_eigenpairs(&g, 3).unwrap();
        for k in 0..3 {
            let rel = (top.eigenvalues[k] - full.eigenvalues[k]).abs()
                / full.eigenvalues[0].max(1e-300);
            assert!(rel < 1e-9, "eigenvalue {k} mismatch rel {rel}");
            let cos = dot(&top.eigenvectors.col(k), &full.eigenvectors.col(k)).abs();
            assert!(cos > 1.0 - 1e-7, "eigenvector {k} cosine {cos}");
        }
    }
}
