//! Post-hoc measurements on solver outputs: suboptimality against a
//! reference, Moreau gradient-mapping estimates for the weakly convex
//! regime, and predicted-versus-observed bound reports.

use ndarray::Array1;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cso::{estimate_gradient, CsoError, CsoProblem, ProblemMeta, SmoothnessClass};
use crate::engine::BatchSchedule;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("problem exposes no true objective, so no gap can be computed")]
    NoObjective,
    #[error("missing constants for {theorem}: {symbols:?}")]
    MissingConstants { theorem: &'static str, symbols: Vec<&'static str> },
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Estimator(#[from] CsoError),
}

/// What to compare a candidate point against.
pub enum Reference {
    /// A precomputed optimal value (a closed form, or a high-precision
    /// solver output).
    OptimalValue(f64),
    /// A point believed optimal; its objective value is used.
    Minimizer(Array1<f64>),
}

/// `F(x) - F(reference)` through the problem's own objective evaluator.
pub fn suboptimality<P: CsoProblem>(
    problem: &P,
    x: &Array1<f64>,
    reference: &Reference,
) -> Result<f64, DiagnosticsError> {
    let fx = problem.true_objective(x).ok_or(DiagnosticsError::NoObjective)?;
    let fstar = match reference {
        Reference::OptimalValue(v) => *v,
        Reference::Minimizer(xs) => {
            problem.true_objective(xs).ok_or(DiagnosticsError::NoObjective)?
        }
    };
    Ok(fx - fstar)
}

#[derive(Debug, Clone, Copy)]
pub struct MoreauConfig {
    /// Envelope parameter; the prox subproblem is strongly convex as long
    /// as `lambda` stays below one over the problem's weak-convexity
    /// curvature.
    pub lambda: f64,
    /// Subproblem gradient steps.
    pub prox_iters: usize,
    /// Inner mini-batch per subproblem step.
    pub prox_samples: usize,
    /// Mean-gradient norm under which the subproblem counts as solved.
    pub tol: f64,
}

impl MoreauConfig {
    pub fn new(lambda: f64) -> Self {
        MoreauConfig { lambda, prox_iters: 600, prox_samples: 1000, tol: 1e-2 }
    }

    /// The envelope parameter matched to a weak-convexity curvature `mu`
    /// (negative): half the largest admissible value.
    pub fn for_curvature(mu: f64) -> Self {
        Self::new(1.0 / (2.0 * mu.abs().max(f64::MIN_POSITIVE)))
    }
}

#[derive(Debug, Clone)]
pub struct MoreauEstimate {
    /// `|| zhat - x || / lambda`, the gradient-mapping magnitude.
    pub grad_mapping: f64,
    /// The approximate prox point.
    pub prox_point: Array1<f64>,
    /// Mean subproblem gradient norm at the prox point — the quality tag.
    pub subproblem_grad_norm: f64,
    pub converged: bool,
}

/// Approximate `prox_{lambda F}(x)` by stochastic gradient descent on
/// `z -> Fhat(z) + ||z - x||^2 / (2 lambda)`, with decaying steps and a
/// tail-averaged iterate, then report the scaled displacement. A rough
/// solve yields a value with the `converged` flag down rather than an
/// error: the mapping is a diagnostic, not a guarantee.
pub fn moreau_grad_mapping<P: CsoProblem>(
    problem: &P,
    x: &Array1<f64>,
    cfg: &MoreauConfig,
    rng: &mut ChaCha8Rng,
) -> Result<MoreauEstimate, DiagnosticsError> {
    if !(cfg.lambda > 0.0) {
        return Err(DiagnosticsError::InvalidConfig("lambda must be positive"));
    }
    if cfg.prox_iters == 0 || cfg.prox_samples == 0 {
        return Err(DiagnosticsError::InvalidConfig("prox iterations and samples must be >= 1"));
    }
    let inv_lambda = 1.0 / cfg.lambda;
    let mut z = x.clone();
    let tail_start = cfg.prox_iters - cfg.prox_iters / 2;
    let mut tail_sum = Array1::<f64>::zeros(x.len());
    let mut tail_count = 0usize;
    for k in 1..=cfg.prox_iters {
        let outer = problem.sample_outer(rng);
        let batch = problem.sample_inner(&outer, cfg.prox_samples, rng);
        let mut g = estimate_gradient(problem, &z, &outer, &batch)?;
        g += &((&z - x) * inv_lambda);
        let gamma = 0.5 * cfg.lambda / (k as f64).sqrt();
        z -= &(g * gamma);
        if k >= tail_start {
            tail_sum += &z;
            tail_count += 1;
        }
    }
    let zhat = tail_sum / tail_count as f64;

    // Quality check: mean subproblem gradient at the returned point.
    let checks = 32;
    let mut gbar = Array1::<f64>::zeros(x.len());
    for _ in 0..checks {
        let outer = problem.sample_outer(rng);
        let batch = problem.sample_inner(&outer, cfg.prox_samples, rng);
        gbar += &estimate_gradient(problem, &zhat, &outer, &batch)?;
    }
    gbar /= checks as f64;
    gbar += &((&zhat - x) * inv_lambda);
    let subproblem_grad_norm = gbar.dot(&gbar).sqrt();

    let diff = &zhat - x;
    Ok(MoreauEstimate {
        grad_mapping: diff.dot(&diff).sqrt() * inv_lambda,
        prox_point: zhat,
        subproblem_grad_norm,
        converged: subproblem_grad_norm <= cfg.tol,
    })
}

/// Which convergence guarantee to evaluate.
#[derive(Debug, Clone, Copy)]
pub enum TheoremBound {
    /// Decaying `1/(mu t)` steps on a strongly convex objective.
    StronglyConvex,
    /// Flat `c/sqrt(T)` steps on a convex objective whose optimum lies
    /// within `dist_init` of the start. `assumed_dist` marks a
    /// user-supplied distance rather than a computed one.
    ConvexBounded { step_c: f64, dist_init: f64, assumed_dist: bool },
}

#[derive(Debug, Clone, Copy)]
pub struct RunSummary {
    pub iters: usize,
    pub batch: BatchSchedule,
    pub observed_gap: f64,
    pub seeds: usize,
}

#[derive(Debug, Clone)]
pub struct GapReport {
    pub iters: usize,
    pub batch: BatchSchedule,
    pub observed_gap: f64,
    pub predicted_bound: f64,
    pub seeds: usize,
    pub theorem: &'static str,
    /// True when the bound was evaluated with a user-supplied initial
    /// distance instead of a computed one.
    pub assumed_dist: bool,
}

/// Average bias contribution `(1/T) sum_t biasbound(m_t)` by direct
/// summation over the actual schedule.
fn mean_bias_bound(
    class: SmoothnessClass,
    meta: &ProblemMeta,
    batch: &BatchSchedule,
    iters: usize,
    missing: &mut Vec<&'static str>,
) -> f64 {
    let sigma = match meta.sigma_g {
        Some(s) => s,
        None => {
            missing.push("sigma_g");
            return f64::NAN;
        }
    };
    let per_step: Box<dyn Fn(f64) -> f64> = match class {
        SmoothnessClass::LipschitzOnly => match meta.lipschitz_f {
            Some(l) => Box::new(move |m: f64| 2.0 * l * sigma / m.sqrt()),
            None => {
                missing.push("L_f");
                return f64::NAN;
            }
        },
        SmoothnessClass::LipschitzSmooth => match meta.smoothness_f {
            Some(s) => Box::new(move |m: f64| s * sigma * sigma / m),
            None => {
                missing.push("S");
                return f64::NAN;
            }
        },
    };
    if sigma == 0.0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for t in 1..=iters {
        acc += per_step(batch.size(t) as f64);
    }
    acc / iters as f64
}

/// Evaluate the selected guarantee's right-hand side with the run's own
/// schedule and pair it with the observed gap.
pub fn bound_report(
    meta: &ProblemMeta,
    class: SmoothnessClass,
    run: &RunSummary,
    bound: &TheoremBound,
) -> Result<GapReport, DiagnosticsError> {
    if run.iters == 0 {
        return Err(DiagnosticsError::InvalidConfig("run must have at least one iteration"));
    }
    let mut missing = Vec::new();
    let t = run.iters as f64;
    let bias = mean_bias_bound(class, meta, &run.batch, run.iters, &mut missing);
    let (theorem, lead, assumed_dist) = match bound {
        TheoremBound::StronglyConvex => {
            let m2 = meta.grad_second_moment.unwrap_or_else(|| {
                missing.push("M^2");
                f64::NAN
            });
            let mu = match meta.strong_convexity {
                Some(mu) if mu > 0.0 => mu,
                _ => {
                    missing.push("mu");
                    f64::NAN
                }
            };
            ("strongly-convex decaying-step bound", m2 * (t.ln() + 1.0) / (mu * t), false)
        }
        TheoremBound::ConvexBounded { step_c, dist_init, assumed_dist } => {
            if !(*step_c > 0.0) {
                return Err(DiagnosticsError::InvalidConfig("step constant must be positive"));
            }
            let m2 = meta.grad_second_moment.unwrap_or_else(|| {
                missing.push("M^2");
                f64::NAN
            });
            let lead =
                (m2 * step_c * step_c + dist_init * dist_init) / (2.0 * step_c * t.sqrt());
            ("convex flat-step bound", lead, *assumed_dist)
        }
    };
    if !missing.is_empty() {
        return Err(DiagnosticsError::MissingConstants {
            theorem,
            symbols: missing,
        });
    }
    Ok(GapReport {
        iters: run.iters,
        batch: run.batch,
        observed_gap: run.observed_gap,
        predicted_bound: lead + bias,
        seeds: run.seeds,
        theorem,
        assumed_dist,
    })
}
