//! Deterministic full-batch minimization for reference solutions.

use ndarray::Array1;

/// Gradient descent with Armijo backtracking on an explicit
/// objective/gradient pair. Used to pin down reference optima (for
/// instance, the minimum of a fixed evaluation set's empirical loss) that
/// suboptimality gaps are measured against.
pub fn minimize_smooth(
    mut f: impl FnMut(&Array1<f64>) -> f64,
    mut grad: impl FnMut(&Array1<f64>) -> Array1<f64>,
    x0: &Array1<f64>,
    tol: f64,
    max_iters: usize,
) -> (Array1<f64>, f64, bool) {
    let mut x = x0.clone();
    let mut fx = f(&x);
    let mut step = 1.0f64;
    let mut converged = false;
    for _ in 0..max_iters {
        let g = grad(&x);
        let gnorm_sq = g.dot(&g);
        if gnorm_sq.sqrt() <= tol {
            converged = true;
            break;
        }
        step = (step * 2.0).min(1e6);
        let mut accepted = false;
        for _ in 0..60 {
            let cand = &x - &(&g * step);
            let fc = f(&cand);
            if fc.is_finite() && fc <= fx - 1e-4 * step * gnorm_sq {
                x = cand;
                fx = fc;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if !converged {
        let g = grad(&x);
        converged = g.dot(&g).sqrt() <= tol;
    }
    (x, fx, converged)
}
