//! Damped nonlinear least squares (Levenberg–Marquardt).

use crate::error::{Error, Result};
use crate::numerics::mat::{invert_spd, solve_spd, Mat};

/// Damping and termination settings.
#[derive(Debug, Clone)]
pub struct LmConfig {
    pub max_iter: usize,
    /// Relative step-size termination threshold.
    pub step_tol: f64,
    /// Relative cost-change termination threshold.
    pub cost_tol: f64,
    pub lambda_init: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    pub lambda_max: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            max_iter: 200,
            step_tol: 1e-10,
            cost_tol: 1e-12,
            lambda_init: 1e-6,
            lambda_up: 7.0,
            lambda_down: 3.0,
            lambda_max: 1e12,
        }
    }
}

/// Fit outcome.
#[derive(Debug, Clone)]
pub struct LmFit {
    pub params: Vec<f64>,
    /// `σ²(JᵀJ)⁻¹` with `σ² = cost/(m−n)`; `None` when `m ≤ n` or the
    /// normal matrix is singular at the solution.
    pub covariance: Option<Mat>,
    pub converged: bool,
    /// Final sum of squared residuals.
    pub cost: f64,
    pub accepted_steps: usize,
}

/// Central-difference Jacobian with step `max(1e-6, 1e-6·|xᵢ|)`.
fn numeric_jacobian<F>(residual: &F, x: &[f64], m: usize) -> Mat
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = x.len();
    let mut j = Mat::zeros(m, n);
    let mut xp = x.to_vec();
    for k in 0..n {
        let h = 1e-6f64.max(1e-6 * x[k].abs());
        xp[k] = x[k] + h;
        let rp = residual(&xp);
        xp[k] = x[k] - h;
        let rm = residual(&xp);
        xp[k] = x[k];
        for i in 0..m {
            j.set(i, k, (rp[i] - rm[i]) / (2.0 * h));
        }
    }
    j
}

/// Minimize `‖residual(x)‖₂²` starting from `x0`.
///
/// `jacobian` may be `None`, in which case central differences are used.
/// Accepted steps never increase the cost; iteration stops when the relative
/// step falls below `step_tol`, the relative cost change falls below
/// `cost_tol`, or `max_iter` is reached (the last sets `converged = false`).
pub fn lm_fit<F, J>(
    residual: F,
    jacobian: Option<J>,
    x0: &[f64],
    cfg: &LmConfig,
) -> Result<LmFit>
where
    F: Fn(&[f64]) -> Vec<f64>,
    J: Fn(&[f64]) -> Mat,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut r = residual(&x);
    let m = r.len();
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "residual is not finite at the initial parameters".into(),
        ));
    }
    let mut cost: f64 = r.iter().map(|v| v * v).sum();
    let mut lambda = cfg.lambda_init;
    let mut accepted = 0usize;
    let mut converged = false;

    let eval_jacobian = |x: &[f64]| -> Mat {
        match &jacobian {
            Some(j) => j(x),
            None => numeric_jacobian(&residual, x, m),
        }
    };

    'outer: for _ in 0..cfg.max_iter {
        let j = eval_jacobian(&x);
        let h = j.gram();
        let g = j.tr_matvec(&r);
        let max_diag = (0..n).map(|i| h.at(i, i)).fold(0.0f64, f64::max);
        if max_diag <= 0.0 || !max_diag.is_finite() {
            return Err(Error::Singular(
                "JᵀJ is zero or non-finite; the fit is degenerate".into(),
            ));
        }

        loop {
            // Marquardt scaling: damp each diagonal entry proportionally,
            // with a floor so zero-curvature directions stay solvable.
            let mut hd = h.clone();
            for i in 0..n {
                let d = h.at(i, i).max(1e-12 * max_diag);
                hd.set(i, i, d * (1.0 + lambda));
            }
            let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
            let step = match solve_spd(&hd, &neg_g) {
                Ok(s) => s,
                Err(_) => {
                    if lambda >= cfg.lambda_max {
                        return Err(Error::Singular(
                            "JᵀJ remained singular at maximum damping".into(),
                        ));
                    }
                    lambda *= cfg.lambda_up;
                    continue;
                }
            };

            let xnorm: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let snorm: f64 = step.iter().map(|v| v * v).sum::<f64>().sqrt();
            if snorm <= cfg.step_tol * (xnorm + cfg.step_tol) {
                converged = true;
                break 'outer;
            }

            let x_try: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a + s).collect();
            let r_try = residual(&x_try);
            let cost_try: f64 = r_try.iter().map(|v| v * v).sum();

            if cost_try.is_finite() && cost_try < cost {
                let rel_drop = (cost - cost_try) / cost.max(f64::MIN_POSITIVE);
                x = x_try;
                r = r_try;
                cost = cost_try;
                accepted += 1;
                lambda = (lambda / cfg.lambda_down).max(1e-12);
                if rel_drop <= cfg.cost_tol {
                    converged = true;
                    break 'outer;
                }
                break;
            }

            if lambda >= cfg.lambda_max {
                // No downhill direction left at maximum damping: treat the
                // current point as final.
                converged = true;
                break 'outer;
            }
            lambda *= cfg.lambda_up;
        }
    }

    // Covariance at the solution.
    let covariance = if m > n {
        let j = eval_jacobian(&x);
        let h = j.gram();
        invert_spd(&h).ok().map(|mut inv| {
            let sigma2 = cost / (m - n) as f64;
            for v in &mut inv.data {
                *v *= sigma2;
            }
            inv
        })
    } else {
        None
    };

    Ok(LmFit { params: x, covariance, converged, cost, accepted_steps: accepted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::mat::lstsq;

    /// Quadratic cost: residual = A x − b.
    #[test]
    fn linear_problem_converges_in_two_accepted_steps() {
        let a = Mat::from_vec(4, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, -1.0]);
        let b = vec![1.0, 2.0, 2.5, -0.5];
        let residual = {
            let a = a.clone();
            let b = b.clone();
            move |x: &[f64]| {
                let ax = a.matvec(x);
                ax.iter().zip(&b).map(|(axi, bi)| axi - bi).collect()
            }
        };
        let fit = lm_fit(
            residual,
            None::<fn(&[f64]) -> Mat>,
            &[5.0, -3.0],
            &LmConfig::default(),
        )
        .unwrap();
        assert!(fit.converged);
        assert!(
            fit.accepted_steps <= 2,
            "expected at most 2 accepted steps, got {}",
            fit.accepted_steps
        );
        let exact = lstsq(&a, &b).unwrap();
        for (p, e) in fit.params.iter().zip(&exact) {
            assert!((p - e).abs() < 1e-6, "params {:?} vs {:?}", fit.params, exact);
        }
    }

    #[test]
    fn already_optimal_start_accepts_no_steps() {
        let a = Mat::from_vec(3, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = vec![1.0, 2.0, 3.0];
        let exact = lstsq(&a, &b).unwrap();
        let residual = move |x: &[f64]| {
            let ax = a.matvec(x);
            ax.iter().zip(&b).map(|(axi, bi)| axi - bi).collect::<Vec<_>>()
        };
        let fit = lm_fit(residual, None::<fn(&[f64]) -> Mat>, &exact, &LmConfig::default()).unwrap();
        assert!(fit.converged);
        assert_eq!(fit.accepted_steps, 0);
    }

    #[test]
    fn exponential_decay_parameters_are_recovered() {
        let ts: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let truth = [2.0, 1.3];
        let data: Vec<f64> = ts.iter().map(|t| truth[0] * (-truth[1] * t).exp()).collect();
        let residual = move |p: &[f64]| {
            ts.iter()
                .zip(&data)
                .map(|(t, d)| p[0] * (-p[1] * t).exp() - d)
                .collect::<Vec<_>>()
        };
        let fit = lm_fit(residual, None::<fn(&[f64]) -> Mat>, &[1.0, 0.5], &LmConfig::default())
            .unwrap();
        assert!(fit.converged);
        assert!((fit.params[0] - truth[0]).abs() < 1e-6);
        assert!((fit.params[1] - truth[1]).abs() < 1e-6);
        assert!(fit.cost < 1e-15);
    }

    #[test]
    fn covariance_scales_with_residual_noise() {
        // Straight line with exact data: covariance must be ~0.
        let ts: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let data: Vec<f64> = ts.iter().map(|t| 3.0 * t + 1.0).collect();
        let residual = move |p: &[f64]| {
            ts.iter()
                .zip(&data)
                .map(|(t, d)| p[0] * t + p[1] - d)
                .collect::<Vec<_>>()
        };
        let fit = lm_fit(residual, None::<fn(&[f64]) -> Mat>, &[0.0, 0.0], &LmConfig::default())
            .unwrap();
        let cov = fit.covariance.unwrap();
        assert!(cov.max_abs() < 1e-12, "noiseless covariance {}", cov.max_abs());
    }
}
