//! The solver engine: a projected stochastic gradient loop over any
//! [`CsoProblem`], plus an Adam variant used as a comparison optimizer.
//!
//! One run executes, for `t = 1 .. T-1`,
//!
//! ```text
//!     draw xi_t;  draw m_t inner samples from eta | xi_t
//!     x_{t+1} = project( x_t - gamma_t * grad Fhat(x_t; xi_t, batch) )
//! ```
//!
//! and reports an output point assembled from the iterates `x_1 .. x_T`
//! (their average by default). Outer and inner draws use separate streams
//! of the run seed, so changing the inner batch schedule never perturbs the
//! scenario sequence, and identical configurations reproduce traces
//! bit-for-bit.

use ndarray::Array1;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cso::{estimate_gradient, CsoError, CsoProblem};
use crate::rng::{seeded_stream, STREAM_INNER, STREAM_OUTER, STREAM_POLICY};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid run configuration: {0}")]
    BadConfig(String),
    #[error("start point has dim {got}, problem has dim {want}")]
    DimMismatch { want: usize, got: usize },
    #[error("start point violates the domain by {dist:e}")]
    InfeasibleStart { dist: f64 },
    #[error("iteration {t}: gradient estimate is non-finite")]
    NonFiniteGradient { t: usize },
    #[error("iteration {t}: {source}")]
    Estimator { t: usize, source: CsoError },
}

/// Feasible sets with cheap exact projections.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Unconstrained,
    /// Coordinate-wise interval constraints.
    Box { lower: Array1<f64>, upper: Array1<f64> },
    /// Euclidean ball.
    Ball { center: Array1<f64>, radius: f64 },
}

impl Domain {
    /// A box with the same interval in every coordinate.
    pub fn symmetric_box(dim: usize, half_width: f64) -> Domain {
        Domain::Box {
            lower: Array1::from_elem(dim, -half_width),
            upper: Array1::from_elem(dim, half_width),
        }
    }

    /// A ball around the origin.
    pub fn origin_ball(dim: usize, radius: f64) -> Domain {
        Domain::Ball { center: Array1::zeros(dim), radius }
    }

    pub fn validate(&self, dim: usize) -> Result<(), EngineError> {
        match self {
            Domain::Unconstrained => Ok(()),
            Domain::Box { lower, upper } => {
                if lower.len() != dim || upper.len() != dim {
                    return Err(EngineError::BadConfig(format!(
                        "box bounds have dims {}/{}, problem has {dim}",
                        lower.len(),
                        upper.len()
                    )));
                }
                if lower.iter().zip(upper.iter()).any(|(l, u)| l > u) {
                    return Err(EngineError::BadConfig("box has lower > upper".into()));
                }
                Ok(())
            }
            Domain::Ball { center, radius } => {
                if center.len() != dim {
                    return Err(EngineError::BadConfig(format!(
                        "ball center has dim {}, problem has {dim}",
                        center.len()
                    )));
                }
                if !(*radius > 0.0) {
                    return Err(EngineError::BadConfig(format!("ball radius {radius} <= 0")));
                }
                Ok(())
            }
        }
    }

    /// Euclidean projection onto the set. Exact for both supported shapes.
    pub fn project(&self, x: &Array1<f64>) -> Array1<f64> {
        match self {
            Domain::Unconstrained => x.clone(),
            Domain::Box { lower, upper } => {
                let mut out = x.clone();
                for ((o, l), u) in out.iter_mut().zip(lower.iter()).zip(upper.iter()) {
                    *o = o.max(*l).min(*u);
                }
                out
            }
            Domain::Ball { center, radius } => {
                let offset = x - center;
                let norm = offset.dot(&offset).sqrt();
                if norm <= *radius {
                    x.clone()
                } else {
                    center + &(offset * (*radius / norm))
                }
            }
        }
    }

    /// Distance from feasibility (0 inside the set).
    pub fn violation(&self, x: &Array1<f64>) -> f64 {
        let p = self.project(x);
        let d = x - &p;
        d.dot(&d).sqrt()
    }
}

/// Stepsize rules `gamma_t`, evaluated at `t = 1, 2, ...`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    /// `gamma_t = 1/(mu t)`: the rule for strongly convex objectives.
    InverseTime { mu: f64 },
    /// `gamma_t = c/sqrt(horizon)`: flat over a fixed horizon `T`.
    FlatHorizon { c: f64, horizon: usize },
    /// `gamma_t = c/sqrt(t)`: horizon-free decay.
    InverseSqrt { c: f64 },
}

impl StepSchedule {
    pub fn validate(&self) -> Result<(), EngineError> {
        let ok = match self {
            StepSchedule::InverseTime { mu } => *mu > 0.0,
            StepSchedule::FlatHorizon { c, horizon } => *c > 0.0 && *horizon >= 1,
            StepSchedule::InverseSqrt { c } => *c > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(EngineError::BadConfig(format!("invalid step schedule {self:?}")))
        }
    }

    pub fn gamma(&self, t: usize) -> f64 {
        assert!(t >= 1, "schedules are defined for t >= 1");
        match self {
            StepSchedule::InverseTime { mu } => 1.0 / (mu * t as f64),
            StepSchedule::FlatHorizon { c, horizon } => c / (*horizon as f64).sqrt(),
            StepSchedule::InverseSqrt { c } => c / (t as f64).sqrt(),
        }
    }
}

/// Inner batch size rules `m_t`, evaluated at `t = 1, 2, ...`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchSchedule {
    /// `m_t = m`.
    Fixed(usize),
    /// `m_t = t`: growing batches, constant-in-T averaged bias for smooth
    /// outer maps.
    Linear,
    /// `m_t = ceil(sqrt(t))`.
    CeilSqrt,
}

impl BatchSchedule {
    pub fn validate(&self) -> Result<(), EngineError> {
        if let BatchSchedule::Fixed(0) = self {
            return Err(EngineError::BadConfig("fixed inner batch size must be >= 1".into()));
        }
        Ok(())
    }

    pub fn size(&self, t: usize) -> usize {
        assert!(t >= 1, "schedules are defined for t >= 1");
        match self {
            BatchSchedule::Fixed(m) => *m,
            BatchSchedule::Linear => t,
            BatchSchedule::CeilSqrt => (t as f64).sqrt().ceil() as usize,
        }
    }
}

/// How the run's output point is assembled from the iterates `x_1 .. x_T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputPolicy {
    /// `(1/T) sum_t x_t`.
    Average,
    /// One iterate drawn uniformly.
    UniformRandom,
    /// One iterate drawn with probability proportional to its stepsize,
    /// the rule under which decaying-step weakly-convex guarantees hold.
    StepsizeWeighted,
}

/// Everything one run needs besides the problem itself.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Number of iterates `T` (so `T - 1` update steps).
    pub iters: usize,
    pub step: StepSchedule,
    pub batch: BatchSchedule,
    pub domain: Domain,
    pub x1: Array1<f64>,
    pub output: OutputPolicy,
    pub seed: u64,
    /// Record every `trace_every`-th iterate (plus the first and last);
    /// 0 records endpoints only.
    pub trace_every: usize,
    /// Scenarios averaged per update. 1 is the analyzed algorithm; larger
    /// values only reduce outer variance and carry no rate claims.
    pub outer_batch: usize,
}

impl RunConfig {
    pub fn validate<P: CsoProblem>(&self, problem: &P) -> Result<(), EngineError> {
        if self.iters < 1 {
            return Err(EngineError::BadConfig("iters must be >= 1".into()));
        }
        if self.outer_batch < 1 {
            return Err(EngineError::BadConfig("outer_batch must be >= 1".into()));
        }
        self.step.validate()?;
        self.batch.validate()?;
        self.domain.validate(problem.dim_x())?;
        if self.x1.len() != problem.dim_x() {
            return Err(EngineError::DimMismatch { want: problem.dim_x(), got: self.x1.len() });
        }
        let dist = self.domain.violation(&self.x1);
        if dist > 1e-9 {
            return Err(EngineError::InfeasibleStart { dist });
        }
        Ok(())
    }
}

/// Recorded history of one run.
#[derive(Debug, Clone)]
pub struct RunTrace {
    /// `(t, x_t)` at the recording stride; always includes `t = 1` and
    /// `t = T`.
    pub iterates: Vec<(usize, Array1<f64>)>,
    /// Samples consumed before reaching each recorded iterate, aligned with
    /// `iterates`. Counts `outer_batch * (m_t + 1)` per executed step: the
    /// inner draws plus one scenario draw each.
    pub samples_cumulative: Vec<(usize, u64)>,
    /// `gamma_t` for `t = 1 ..= T`. Steps `1 .. T-1` were applied; the last
    /// entry exists because stepsize-weighted output weights all `T`
    /// iterates.
    pub gamma_history: Vec<f64>,
    /// Output point per the run's policy.
    pub output_point: Array1<f64>,
    /// `x_T`.
    pub final_iterate: Array1<f64>,
    /// Total samples consumed by the whole run.
    pub total_samples: u64,
}

/// Update rule used by [`run_with`].
#[derive(Debug, Clone)]
pub enum UpdateRule {
    /// Projected SGD with the config's step schedule.
    Projected,
    /// Adam with the given parameters, projected onto the domain after each
    /// step (a no-op when unconstrained).
    Adam(AdamParams),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment accumulators for Adam.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Array1<f64>,
    v: Array1<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        AdamState { m: Array1::zeros(dim), v: Array1::zeros(dim), t: 0 }
    }
}

/// One bias-corrected Adam update of `x` in place.
pub fn adam_step(state: &mut AdamState, params: &AdamParams, x: &mut Array1<f64>, grad: &Array1<f64>) {
    state.t += 1;
    let b1 = params.beta1;
    let b2 = params.beta2;
    for i in 0..x.len() {
        let g = grad[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let m_hat = state.m[i] / (1.0 - b1.powi(state.t as i32));
        let v_hat = state.v[i] / (1.0 - b2.powi(state.t as i32));
        x[i] -= params.lr * m_hat / (v_hat.sqrt() + params.eps);
    }
}

/// Index of the iterate an output policy selects, or `None` for averaging.
/// Drawing happens here so the engine (which streams iterates) and
/// [`select_output`] (which takes a list) make identical choices from
/// identical generator states.
fn pick_index(
    policy: OutputPolicy,
    n: usize,
    gammas: &[f64],
    rng: &mut ChaCha8Rng,
) -> Option<usize> {
    match policy {
        OutputPolicy::Average => None,
        OutputPolicy::UniformRandom => Some(rng.random_range(0..n)),
        OutputPolicy::StepsizeWeighted => {
            let total: f64 = gammas[..n].iter().sum();
            let u: f64 = rng.random::<f64>() * total;
            let mut acc = 0.0;
            for (i, g) in gammas[..n].iter().enumerate() {
                acc += g;
                if u < acc {
                    return Some(i);
                }
            }
            Some(n - 1)
        }
    }
}

/// Assemble an output point from an explicit iterate list.
pub fn select_output(
    iterates: &[Array1<f64>],
    gammas: &[f64],
    policy: OutputPolicy,
    rng: &mut ChaCha8Rng,
) -> Array1<f64> {
    assert!(!iterates.is_empty(), "select_output needs at least one iterate");
    assert!(gammas.len() >= iterates.len(), "need a stepsize per iterate");
    match pick_index(policy, iterates.len(), gammas, rng) {
        Some(i) => iterates[i].clone(),
        None => {
            let mut acc = Array1::zeros(iterates[0].len());
            for x in iterates {
                acc += x;
            }
            acc / iterates.len() as f64
        }
    }
}

/// The solver loop with a pluggable gradient source and update rule.
///
/// `grad_fn` receives `(problem, x_t, scenario, inner batch)` and returns a
/// direction; the plug-in estimator is the standard choice, first-order
/// meta-learning a deliberately degraded one. With an outer batch larger
/// than one, directions from independent scenarios at the same `x_t` are
/// averaged.
pub fn run_with<P, G>(
    problem: &P,
    cfg: &RunConfig,
    update: &UpdateRule,
    mut grad_fn: G,
) -> Result<RunTrace, EngineError>
where
    P: CsoProblem,
    G: FnMut(&P, &Array1<f64>, &P::Outer, &[P::Inner]) -> Result<Array1<f64>, CsoError>,
{
    cfg.validate(problem)?;
    let t_total = cfg.iters;
    let dim = problem.dim_x();

    let mut outer_rng = seeded_stream(cfg.seed, STREAM_OUTER);
    let mut inner_rng = seeded_stream(cfg.seed, STREAM_INNER);
    let mut policy_rng = seeded_stream(cfg.seed, STREAM_POLICY);

    let gammas: Vec<f64> = (1..=t_total).map(|t| cfg.step.gamma(t)).collect();
    let picked = pick_index(cfg.output, t_total, &gammas, &mut policy_rng);

    let mut adam = match update {
        UpdateRule::Adam(_) => Some(AdamState::new(dim)),
        UpdateRule::Projected => None,
    };

    let mut x = cfg.domain.project(&cfg.x1);
    let mut sum = Array1::<f64>::zeros(dim);
    let mut picked_x: Option<Array1<f64>> = None;
    let mut iterates = Vec::new();
    let mut samples_cumulative = Vec::new();
    let mut total_samples: u64 = 0;

    let observe = |t: usize,
                       x: &Array1<f64>,
                       samples: u64,
                       sum: &mut Array1<f64>,
                       picked_x: &mut Option<Array1<f64>>,
                       iterates: &mut Vec<(usize, Array1<f64>)>,
                       samples_cumulative: &mut Vec<(usize, u64)>| {
        *sum += x;
        if picked == Some(t - 1) {
            *picked_x = Some(x.clone());
        }
        let on_stride = cfg.trace_every > 0 && (t - 1) % cfg.trace_every == 0;
        if t == 1 || t == t_total || on_stride {
            iterates.push((t, x.clone()));
            samples_cumulative.push((t, samples));
        }
    };

    observe(1, &x, 0, &mut sum, &mut picked_x, &mut iterates, &mut samples_cumulative);

    for t in 1..t_total {
        let m_t = cfg.batch.size(t);
        let mut dir = Array1::<f64>::zeros(dim);
        for _ in 0..cfg.outer_batch {
            let outer = problem.sample_outer(&mut outer_rng);
            let batch = problem.sample_inner(&outer, m_t, &mut inner_rng);
            let g = grad_fn(problem, &x, &outer, &batch)
                .map_err(|source| EngineError::Estimator { t, source })?;
            dir += &g;
            total_samples += m_t as u64 + 1;
        }
        if cfg.outer_batch > 1 {
            dir /= cfg.outer_batch as f64;
        }
        if dir.iter().any(|v| !v.is_finite()) {
            return Err(EngineError::NonFiniteGradient { t });
        }
        match (update, adam.as_mut()) {
            (UpdateRule::Projected, _) => {
                x = cfg.domain.project(&(&x - &(dir * gammas[t - 1])));
            }
            (UpdateRule::Adam(params), Some(state)) => {
                adam_step(state, params, &mut x, &dir);
                x = cfg.domain.project(&x);
            }
            (UpdateRule::Adam(_), None) => unreachable!("adam state allocated above"),
        }
        observe(
            t + 1,
            &x,
            total_samples,
            &mut sum,
            &mut picked_x,
            &mut iterates,
            &mut samples_cumulative,
        );
    }

    let output_point = match picked {
        Some(_) => picked_x.expect("picked index is within 0..T"),
        None => sum / t_total as f64,
    };

    Ok(RunTrace {
        iterates,
        samples_cumulative,
        gamma_history: gammas,
        output_point,
        final_iterate: x,
        total_samples,
    })
}

/// The biased-gradient method itself: plug-in gradient estimates, projected
/// steps, output per the config's policy.
pub fn bsgd_run<P: CsoProblem>(problem: &P, cfg: &RunConfig) -> Result<RunTrace, EngineError> {
    run_with(problem, cfg, &UpdateRule::Projected, |p, x, outer, batch| {
        estimate_gradient(p, x, outer, batch)
    })
}

/// The same sampling scheme driven by Adam updates instead of projected
/// SGD. The step schedule in the config is ignored; everything else applies.
pub fn adam_run<P: CsoProblem>(
    problem: &P,
    cfg: &RunConfig,
    params: AdamParams,
) -> Result<RunTrace, EngineError> {
    run_with(problem, cfg, &UpdateRule::Adam(params), |p, x, outer, batch| {
        estimate_gradient(p, x, outer, batch)
    })
}
