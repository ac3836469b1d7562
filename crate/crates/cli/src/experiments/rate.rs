//! Suboptimality-versus-horizon study on the closed-form family.
//!
//! One run per (horizon, seed) pair, stepped by the regime's schedule:
//! `step_c/(mu t)` under strong convexity, flat `step_c/sqrt(T)` without
//! it. Rows are emitted at log-spaced checkpoints; each reports the
//! objective gap of the running average of the iterates so far, so the
//! last row of a run is exactly the guarantee's output point.

use bsgd::diagnostics::{moreau_grad_mapping, suboptimality, MoreauConfig, Reference};
use bsgd::problems::quadratic::{OuterKind, OuterLaw, QuadraticProblem, QuadraticSpec};
use bsgd::rng::{derive_seed, seeded_rng};
use bsgd::{bsgd_run, BatchSchedule, Domain, OutputPolicy, RunConfig, StepSchedule};
use ndarray::Array1;
use rayon::prelude::*;

use crate::config::{KindName, RateStudyCfg, Regime, ShiftLaw};
use crate::csvfmt;
use crate::experiments::{RunError, SUB_EVAL, TAG_RATE};

pub const HEADER: &str =
    "run_id,seed,t,samples_cumulative,gamma_t,m_t,suboptimality,grad_mapping";

/// Curvature of the squared kind (`f_y(u) = ||u - y||^2` has Hessian `2I`
/// through an identity inner mean, at any dimension and shift law).
pub const SQUARED_MU: f64 = 2.0;

/// One checkpoint of one run, in numeric form.
#[derive(Debug, Clone)]
pub struct CheckPoint {
    pub t: usize,
    pub samples: u64,
    pub gamma: f64,
    pub m: usize,
    pub suboptimality: f64,
    pub grad_mapping: Option<f64>,
}

fn problem_for(cfg: &RateStudyCfg) -> QuadraticProblem {
    let shift = match cfg.shift {
        ShiftLaw::Constant(a) => OuterLaw::Constant(a),
        ShiftLaw::TwoPoint(a, b) => OuterLaw::TwoPoint(a, b),
        ShiftLaw::Normal(mean, std) => OuterLaw::Normal { mean, std },
    };
    QuadraticProblem::new(QuadraticSpec {
        dim: cfg.dim,
        sigma_inner: cfg.sigma,
        shift,
        kind: match cfg.kind {
            KindName::Quadratic => OuterKind::Squared,
            KindName::Absolute => OuterKind::Absolute,
        },
        domain_radius: Some(cfg.domain_radius),
    })
}

fn schedule_for(cfg: &RateStudyCfg, horizon: usize) -> StepSchedule {
    match cfg.regime {
        // gamma_t = step_c / (mu t), phrased through the engine's 1/(mu' t).
        Regime::StronglyConvex => StepSchedule::InverseTime { mu: SQUARED_MU / cfg.step_c },
        Regime::Convex => StepSchedule::FlatHorizon { c: cfg.step_c, horizon },
    }
}

/// Descending-by-thirds checkpoint ladder `T, 2T/3, ...` down to 1,
/// returned ascending. Integer arithmetic keeps it platform-stable.
pub fn checkpoints(horizon: usize) -> Vec<usize> {
    let mut cs = Vec::new();
    let mut c = horizon;
    while c >= 1 {
        cs.push(c);
        if c == 1 {
            break;
        }
        c = c * 2 / 3;
    }
    cs.reverse();
    cs.dedup();
    cs
}

/// Execute one (horizon, seed) run and measure every checkpoint.
pub fn run_points(
    cfg: &RateStudyCfg,
    root: u64,
    seed: u64,
    horizon: usize,
) -> Result<Vec<CheckPoint>, RunError> {
    let problem = problem_for(cfg);
    let fstar = problem.optimal_value().ok_or_else(|| {
        RunError::Setup("configured instance has no closed-form objective".into())
    })?;
    let run_cfg = RunConfig {
        iters: horizon,
        step: schedule_for(cfg, horizon),
        batch: BatchSchedule::Fixed(cfg.m),
        domain: Domain::origin_ball(cfg.dim, cfg.domain_radius),
        x1: Array1::zeros(cfg.dim),
        output: OutputPolicy::Average,
        seed: derive_seed(root, &[TAG_RATE, horizon as u64, seed]),
        trace_every: 1,
        outer_batch: cfg.outer_batch,
    };
    let trace = bsgd_run(&problem, &run_cfg)
        .map_err(|e| RunError::Setup(format!("run T = {horizon}, seed {seed}: {e}")))?;

    let marks = checkpoints(horizon);
    let mut points = Vec::with_capacity(marks.len());
    let mut sum = Array1::<f64>::zeros(cfg.dim);
    let mut next = 0usize;
    for (i, (t, x)) in trace.iterates.iter().enumerate() {
        sum += x;
        if next < marks.len() && *t == marks[next] {
            let avg = &sum / *t as f64;
            let gap = suboptimality(&problem, &avg, &Reference::OptimalValue(fstar))
                .map_err(|e| RunError::Setup(format!("objective gap at t = {t}: {e}")))?;
            let mapping = if cfg.measure_mapping && *t == horizon {
                let mut rng =
                    seeded_rng(derive_seed(root, &[TAG_RATE, horizon as u64, seed, SUB_EVAL]));
                let est = moreau_grad_mapping(
                    &problem,
                    &avg,
                    &MoreauConfig::new(cfg.moreau_lambda),
                    &mut rng,
                )
                .map_err(|e| RunError::Setup(format!("gradient mapping: {e}")))?;
                Some(est.grad_mapping)
            } else {
                None
            };
            points.push(CheckPoint {
                t: *t,
                samples: trace.samples_cumulative[i].1,
                gamma: trace.gamma_history[*t - 1],
                m: cfg.m,
                suboptimality: gap,
                grad_mapping: mapping,
            });
            next += 1;
        }
    }
    Ok(points)
}

pub fn run(
    cfg: &RateStudyCfg,
    root: u64,
    seeds: &[u64],
) -> Result<(String, Vec<String>, Vec<String>), RunError> {
    let mut ts = cfg.t_list.clone();
    ts.sort_unstable();
    ts.dedup();

    let mut units = Vec::new();
    for (ti, &t) in ts.iter().enumerate() {
        for (si, &seed) in seeds.iter().enumerate() {
            units.push((ti * seeds.len() + si, t, seed));
        }
    }
    let results: Result<Vec<Vec<String>>, RunError> = units
        .par_iter()
        .map(|&(run_id, t, seed)| {
            let points = run_points(cfg, root, seed, t)?;
            Ok(points
                .into_iter()
                .map(|p| {
                    format!(
                        "{},{},{},{},{},{},{},{}",
                        run_id,
                        seed,
                        p.t,
                        p.samples,
                        csvfmt::float(p.gamma),
                        p.m,
                        csvfmt::float(p.suboptimality),
                        csvfmt::opt_float(p.grad_mapping),
                    )
                })
                .collect())
        })
        .collect();
    let rows: Vec<String> = results?.into_iter().flatten().collect();

    let problem = problem_for(cfg);
    let meta = vec![
        format!("regime = {}", cfg.regime.name()),
        format!(
            "step_rule = {}",
            match cfg.regime {
                Regime::StronglyConvex =>
                    format!("step_c/(mu*t), mu = {SQUARED_MU}, step_c = {}", cfg.step_c),
                Regime::Convex => format!("step_c/sqrt(T), step_c = {}", cfg.step_c),
            }
        ),
        format!(
            "reference_optimal_value = {}",
            csvfmt::opt_float(problem.optimal_value()),
        ),
        "suboptimality is measured at the running average of iterates 1..t".to_string(),
    ];
    Ok((HEADER.to_string(), rows, meta))
}
