//! The conditional-stochastic-optimization problem abstraction and its
//! plug-in estimators.
//!
//! A problem supplies an outer law for scenarios `xi`, a conditional inner
//! law for `eta | xi`, an inner map `g_eta(x, xi)` into `R^k`, and an outer
//! map `f_xi : R^k -> R`. The estimators replace the inner expectation with
//! an m-sample average:
//!
//! ```text
//!     Fhat(x; xi, eta_1..eta_m) = f_xi( (1/m) sum_j g_{eta_j}(x, xi) )
//! ```
//!
//! `Fhat` is biased for `F` whenever `f_xi` is nonlinear, and
//! [`estimate_gradient`] returns the *exact* gradient of `Fhat` — the bias
//! lives in the objective being sampled, not in extra approximation. For an
//! `S`-smooth outer map the bias decays like `S sigma_g^2 / (2m)`; for a
//! merely `L_f`-Lipschitz one, like `L_f sigma_g / sqrt(m)`.
//! [`estimate_bias`] measures it by Monte Carlo, and [`fit_loglog_slope`]
//! recovers the decay exponent from such measurements.

use ndarray::Array1;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::stats;

#[derive(Debug, Error, PartialEq)]
pub enum CsoError {
    #[error("inner batch is empty; the estimators need m >= 1")]
    EmptyBatch,
    #[error("non-finite {what} (component {component})")]
    NonFinite { what: &'static str, component: usize },
    #[error("problem does not provide a closed-form or reference objective")]
    NoTrueObjective,
    #[error("log-log fit needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("log-log fit needs positive coordinates, got {value:e} at point {index}")]
    NonPositivePoint { value: f64, index: usize },
}

/// How regular the outer maps `f_xi` are, which selects the bias bound that
/// applies to the problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmoothnessClass {
    /// `f_xi` Lipschitz but possibly kinked: bias `<= L_f sigma_g / sqrt(m)`.
    LipschitzOnly,
    /// `f_xi` Lipschitz with Lipschitz gradient: bias `<= S sigma_g^2 / (2m)`.
    LipschitzSmooth,
}

/// Regularity constants of an instance, when known. Everything is optional:
/// a neural problem knows none of these, a quadratic knows all of them.
/// The bound reports in [`crate::diagnostics`] error out on the ones they
/// need but do not find.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProblemMeta {
    /// `L_f`: uniform Lipschitz constant of `f_xi`.
    pub lipschitz_f: Option<f64>,
    /// `S`: uniform Lipschitz constant of `grad f_xi`.
    pub smoothness_f: Option<f64>,
    /// `sigma_g`: uniform bound on the inner standard deviation,
    /// `E ||g - E g||^2 <= sigma_g^2`.
    pub sigma_g: Option<f64>,
    /// Strong-convexity modulus of `Fhat(.; xi, eta)`; negative means
    /// weakly convex with that curvature lower bound.
    pub strong_convexity: Option<f64>,
    /// `M^2`: uniform bound on the second moment of the gradient estimate
    /// over the feasible set.
    pub grad_second_moment: Option<f64>,
}

/// A conditional stochastic optimization instance.
///
/// `Outer` carries one scenario draw (everything `f_xi` needs), `Inner` one
/// conditional draw given that scenario. Implementations must keep both laws
/// driven purely by the passed generator so that seeded runs reproduce.
pub trait CsoProblem {
    type Outer;
    type Inner;

    /// Dimension of the decision variable.
    fn dim_x(&self) -> usize;
    /// Dimension `k` of the inner map's value.
    fn dim_inner(&self) -> usize;

    /// Draw one scenario from the outer law.
    fn sample_outer(&self, rng: &mut ChaCha8Rng) -> Self::Outer;

    /// Draw `m` i.i.d. samples from the conditional law `eta | xi`.
    fn sample_inner(&self, outer: &Self::Outer, m: usize, rng: &mut ChaCha8Rng)
        -> Vec<Self::Inner>;

    /// `g_eta(x, xi)`.
    fn g_value(&self, x: &Array1<f64>, outer: &Self::Outer, inner: &Self::Inner) -> Array1<f64>;

    /// `v -> (dg/dx)^T v` for one inner sample: the transposed Jacobian of
    /// `g_eta(., xi)` at `x` applied to `v`. Problems with huge Jacobians
    /// (the meta-learning instance has a d-by-d one) implement this without
    /// ever materializing the matrix.
    fn g_jacobian_t_apply(
        &self,
        x: &Array1<f64>,
        outer: &Self::Outer,
        inner: &Self::Inner,
        v: &Array1<f64>,
    ) -> Array1<f64>;

    /// `f_xi(u)`.
    fn f_value(&self, outer: &Self::Outer, u: &Array1<f64>) -> f64;

    /// A (sub)gradient of `f_xi` at `u`.
    fn f_grad(&self, outer: &Self::Outer, u: &Array1<f64>) -> Array1<f64>;

    /// The exact objective `F(x)` where a closed form or a fixed
    /// high-precision reference exists; `None` otherwise.
    fn true_objective(&self, x: &Array1<f64>) -> Option<f64>;

    /// Which bias regime the outer maps fall in.
    fn smoothness(&self) -> SmoothnessClass;

    /// Known regularity constants, for bound reporting.
    fn meta(&self) -> ProblemMeta {
        ProblemMeta::default()
    }
}

fn ensure_finite(v: &Array1<f64>, what: &'static str) -> Result<(), CsoError> {
    if let Some(component) = v.iter().position(|c| !c.is_finite()) {
        return Err(CsoError::NonFinite { what, component });
    }
    Ok(())
}

/// Average of `g` over the inner batch, with finiteness checking.
fn mean_g<P: CsoProblem>(
    p: &P,
    x: &Array1<f64>,
    outer: &P::Outer,
    batch: &[P::Inner],
) -> Result<Array1<f64>, CsoError> {
    if batch.is_empty() {
        return Err(CsoError::EmptyBatch);
    }
    let mut acc = p.g_value(x, outer, &batch[0]);
    for inner in &batch[1..] {
        acc += &p.g_value(x, outer, inner);
    }
    acc /= batch.len() as f64;
    ensure_finite(&acc, "inner-map average")?;
    Ok(acc)
}

/// The biased plug-in value `Fhat(x; xi, batch) = f_xi(mean_j g_{eta_j})`.
pub fn estimate_value<P: CsoProblem>(
    p: &P,
    x: &Array1<f64>,
    outer: &P::Outer,
    batch: &[P::Inner],
) -> Result<f64, CsoError> {
    let gbar = mean_g(p, x, outer, batch)?;
    let val = p.f_value(outer, &gbar);
    if !val.is_finite() {
        return Err(CsoError::NonFinite { what: "outer value", component: 0 });
    }
    Ok(val)
}

/// The exact gradient of the plug-in value:
///
/// ```text
///     grad Fhat = ( (1/m) sum_j dg_{eta_j}/dx )^T  grad f_xi( gbar )
/// ```
///
/// computed as the batch average of transposed-Jacobian products against the
/// single outer gradient at the averaged inner value.
pub fn estimate_gradient<P: CsoProblem>(
    p: &P,
    x: &Array1<f64>,
    outer: &P::Outer,
    batch: &[P::Inner],
) -> Result<Array1<f64>, CsoError> {
    let gbar = mean_g(p, x, outer, batch)?;
    let v = p.f_grad(outer, &gbar);
    ensure_finite(&v, "outer gradient")?;
    let mut acc = p.g_jacobian_t_apply(x, outer, &batch[0], &v);
    for inner in &batch[1..] {
        acc += &p.g_jacobian_t_apply(x, outer, inner, &v);
    }
    acc /= batch.len() as f64;
    ensure_finite(&acc, "gradient estimate")?;
    Ok(acc)
}

/// A Monte-Carlo measurement of the plug-in bias `|E Fhat(x) - F(x)|` at one
/// inner batch size.
#[derive(Debug, Clone)]
pub struct BiasEstimate {
    /// Inner batch size probed.
    pub m: usize,
    /// `| (1/n) sum_i Fhat_i - F(x) |`.
    pub mean_gap: f64,
    /// Standard error of the Monte-Carlo mean of `Fhat`.
    pub std_err: f64,
    /// Number of independent (scenario, batch) draws.
    pub n_mc: usize,
}

/// Measure the estimator bias at a fixed point `x` by `n_mc` independent
/// (scenario, inner batch) draws.
///
/// The point is held fixed for the whole probe — the bias bounds are
/// statements about a point chosen independently of the samples, and a probe
/// that adapted `x` to its own draws would measure something else.
pub fn estimate_bias<P: CsoProblem>(
    p: &P,
    x: &Array1<f64>,
    m: usize,
    n_mc: usize,
    rng: &mut ChaCha8Rng,
) -> Result<BiasEstimate, CsoError> {
    if m == 0 {
        return Err(CsoError::EmptyBatch);
    }
    let truth = p.true_objective(x).ok_or(CsoError::NoTrueObjective)?;
    let mut gaps = Vec::with_capacity(n_mc);
    for _ in 0..n_mc {
        let outer = p.sample_outer(rng);
        let batch = p.sample_inner(&outer, m, rng);
        gaps.push(estimate_value(p, x, &outer, &batch)? - truth);
    }
    Ok(BiasEstimate {
        m,
        mean_gap: stats::mean(&gaps).abs(),
        std_err: stats::std_err(&gaps),
        n_mc,
    })
}

/// Least-squares fit of `ln value` against `ln key`.
#[derive(Debug, Clone, Copy)]
pub struct SlopeFit {
    /// Fitted decay exponent.
    pub slope: f64,
    /// Fitted intercept in log space.
    pub intercept: f64,
    /// Coefficient of determination of the log-log fit.
    pub r2: f64,
}

/// Fit a power law `value ~ C * key^slope` through `(key, value)` pairs by
/// ordinary least squares in log-log space. At least three points with
/// strictly positive coordinates are required.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<SlopeFit, CsoError> {
    if points.len() < 3 {
        return Err(CsoError::TooFewPoints(points.len()));
    }
    for (index, &(k, v)) in points.iter().enumerate() {
        if !(k > 0.0) {
            return Err(CsoError::NonPositivePoint { value: k, index });
        }
        if !(v > 0.0) {
            return Err(CsoError::NonPositivePoint { value: v, index });
        }
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = stats::mean(&xs);
    let my = stats::mean(&ys);
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return Err(CsoError::TooFewPoints(1));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(SlopeFit { slope, intercept, r2 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loglog_fit_recovers_exact_power_law() {
        // y = 3 * x^{-1/2}, exact: slope -0.5, r2 = 1.
        let pts: Vec<(f64, f64)> =
            [1.0f64, 4.0, 16.0, 64.0].iter().map(|&x| (x, 3.0 * x.powf(-0.5))).collect();
        let fit = fit_loglog_slope(&pts).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12, "slope {} != -0.5", fit.slope);
        assert!((fit.intercept - 3.0f64.ln()).abs() < 1e-12);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn loglog_fit_rejects_bad_inputs() {
        match fit_loglog_slope(&[(1.0, 1.0), (2.0, 2.0)]) {
            Err(CsoError::TooFewPoints(2)) => {}
            other => panic!("expected TooFewPoints(2), got {other:?}"),
        }
        match fit_loglog_slope(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]) {
            Err(CsoError::NonPositivePoint { index: 1, .. }) => {}
            other => panic!("expected NonPositivePoint at index 1, got {other:?}"),
        }
        match fit_loglog_slope(&[(1.0, 1.0), (-2.0, 1.0), (3.0, 1.0)]) {
            Err(CsoError::NonPositivePoint { index: 1, .. }) => {}
            other => panic!("expected NonPositivePoint at index 1, got {other:?}"),
        }
    }
}
