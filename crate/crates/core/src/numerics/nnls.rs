//! Nonnegative least squares via Lawson–Hanson active-set iteration.

use crate::error::{Error, Result};
use crate::numerics::mat::{solve_spd, Mat};

const KKT_TOL: f64 = 1e-8;

/// Solve `min ‖A x − b‖₂` subject to `x ≥ 0`.
///
/// At the solution the KKT conditions hold to 1e-8: clamped coordinates have
/// gradient ≥ −1e-8 and free coordinates have |gradient| ≤ 1e-8. The outer
/// loop is capped at `10·n` activations; exceeding it is a convergence error.
pub fn nnls(a: &Mat, b: &[f64]) -> Result<Vec<f64>> {
    let (m, n) = (a.rows, a.cols);
    assert_eq!(m, b.len(), "rhs length must equal row count");
    if m == 0 || n == 0 {
        return Err(Error::InvalidParameter(
            "nnls needs at least one row and one column".into(),
        ));
    }

    let mut x = vec![0.0f64; n];
    let mut passive = vec![false; n];
    let max_outer = 10 * n;

    for _ in 0..=max_outer {
        // Negative gradient w = Aᵀ(b − A x).
        let ax = a.matvec(&x);
        let resid: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let w = a.tr_matvec(&resid);

        let mut best: Option<(usize, f64)> = None;
        for j in 0..n {
            if !passive[j] && w[j] > KKT_TOL {
                if best.map_or(true, |(_, bw)| w[j] > bw) {
                    best = Some((j, w[j]));
                }
            }
        }
        let Some((enter, _)) = best else {
            return Ok(x);
        };
        passive[enter] = true;

        // Inner loop: least squares on the passive set, clipping negatives.
        loop {
            let active: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let z = passive_lstsq(a, b, &active)?;

            if z.iter().all(|&v| v > 0.0) {
                for xi in x.iter_mut() {
                    *xi = 0.0;
                }
                for (k, &j) in active.iter().enumerate() {
                    x[j] = z[k];
                }
                break;
            }

            // Step from x toward z until the first coordinate hits zero,
            // then drop that coordinate from the passive set.
            let mut alpha = f64::INFINITY;
            let mut drop = None;
            for (k, &j) in active.iter().enumerate() {
                if z[k] <= 0.0 {
                    let denom = x[j] - z[k];
                    let ratio = if denom > 0.0 { x[j] / denom } else { 0.0 };
                    if ratio < alpha {
                        alpha = ratio;
                        drop = Some(j);
                    }
                }
            }
            let Some(drop) = drop else {
                return Err(Error::Convergence(
                    "nnls inner step failed to make progress".into(),
                ));
            };
            for (k, &j) in active.iter().enumerate() {
                x[j] += alpha * (z[k] - x[j]);
            }
            x[drop] = 0.0;
            passive[drop] = false;
            for &j in &active {
                if passive[j] && x[j] <= 0.0 {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
        }
    }
    Err(Error::Convergence(format!(
        "nnls exceeded the {max_outer}-activation budget"
    )))
}

/// Least squares restricted to the passive columns.
fn passive_lstsq(a: &Mat, b: &[f64], active: &[usize]) -> Result<Vec<f64>> {
    let p = active.len();
    let mut gram = Mat::zeros(p, p);
    let mut atb = vec![0.0; p];
    for r in 0..a.rows {
        let row = a.row(r);
        for (ki, &ji) in active.iter().enumerate() {
            let v = row[ji];
            if v == 0.0 {
                continue;
            }
            atb[ki] += v * b[r];
            for (kj, &jj) in active.iter().enumerate().skip(ki) {
                let g = gram.at(ki, kj) + v * row[jj];
                gram.set(ki, kj, g);
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            let v = gram.at(j, i);
            gram.set(i, j, v);
        }
    }
    solve_spd(&gram, &atb)
}
