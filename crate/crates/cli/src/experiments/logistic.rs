//! Noisy-view logistic regression: tuned BSGD against pooled empirical
//! risk minimization at one shared sample budget.
//!
//! For every (view-noise level, inner batch size) cell the stepsize is
//! selected from the grid by mean objective gap across seeds — candidates
//! reuse the cell's per-seed noise paths, so the selection compares
//! stepsizes and nothing else — and the chosen stepsize's per-seed runs
//! become the rows. The pooled solver sees the same budget split into
//! `Q/(m+1)` scenarios of `m` views each.

use bsgd::baselines::{saa_solve, SaaInstance};
use bsgd::problems::logistic::{LogisticProblem, LogisticSpec};
use bsgd::rng::{derive_seed, seeded_rng};
use bsgd::{bsgd_run, BatchSchedule, Domain, OutputPolicy, RunConfig, StepSchedule};
use ndarray::Array1;
use rayon::prelude::*;

use crate::config::LogisticCfg;
use crate::csvfmt;
use crate::experiments::{argmin_finite, budget_iters, RunError, SUB_DATA, TAG_LOGISTIC};

pub const HEADER: &str = "sigma2_sq,m,method,step,seed,final_gap,samples,status";

/// A noise level's problem together with the optimum of the clean
/// reference objective every gap is measured against.
pub struct Instance {
    pub problem: LogisticProblem,
    pub f_star: f64,
}

pub fn instance(cfg: &LogisticCfg, sigma2_sq: f64) -> Result<Instance, RunError> {
    let problem = LogisticProblem::new(LogisticSpec {
        dim: cfg.dim,
        sigma1_sq: cfg.sigma1_sq,
        sigma2_sq,
        pool: None,
        seed: cfg.instance_seed,
        ref_samples: cfg.ref_samples,
    });
    // Gradient tolerance 1e-7 puts the reference value within ~1e-14 of
    // the true minimum (the value gap is quadratic in the gradient norm)
    // while staying certifiable in f64: tighter thresholds stall on
    // objective differences below the evaluation's rounding floor.
    let (_, f_star, converged) = crate::optim::minimize_smooth(
        |x| problem.reference_objective(x),
        |x| problem.reference_gradient(x),
        &Array1::zeros(cfg.dim),
        1e-7,
        20_000,
    );
    if !converged {
        return Err(RunError::Setup(
            "reference objective minimization did not converge".into(),
        ));
    }
    Ok(Instance { problem, f_star })
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub gap: f64,
    pub samples: u64,
    pub status: String,
}

#[derive(Debug, Clone)]
pub struct TunedCell {
    /// Selected stepsize, when any candidate scored a finite mean gap.
    pub step: Option<f64>,
    pub runs: Vec<SeedRun>,
}

fn bsgd_single(
    inst: &Instance,
    cfg: &LogisticCfg,
    m: usize,
    step: f64,
    run_seed: u64,
) -> SeedRun {
    let iters = budget_iters(cfg.budget, m);
    let run_cfg = RunConfig {
        iters,
        step: StepSchedule::FlatHorizon { c: step, horizon: iters },
        batch: BatchSchedule::Fixed(m),
        domain: Domain::origin_ball(cfg.dim, cfg.domain_radius),
        x1: Array1::zeros(cfg.dim),
        output: OutputPolicy::Average,
        seed: run_seed,
        trace_every: 0,
        outer_batch: 1,
    };
    match bsgd_run(&inst.problem, &run_cfg) {
        Ok(trace) => {
            let f_out = inst.problem.reference_objective(&trace.output_point);
            SeedRun {
                seed: run_seed,
                gap: f_out - inst.f_star,
                samples: trace.total_samples,
                status: "ok".into(),
            }
        }
        Err(e) => SeedRun {
            seed: run_seed,
            gap: f64::NAN,
            samples: 0,
            status: e.to_string().replace(',', ";"),
        },
    }
}

/// Grid-tuned BSGD for one (noise level, batch size) cell.
pub fn bsgd_cell(
    inst: &Instance,
    cfg: &LogisticCfg,
    sigma2_sq: f64,
    m: usize,
    root: u64,
    seeds: &[u64],
) -> TunedCell {
    let mut all: Vec<Vec<SeedRun>> = cfg
        .step_grid
        .par_iter()
        .map(|&step| {
            seeds
                .iter()
                .map(|&seed| {
                    // One seed per (cell, seed): candidates share noise.
                    let run_seed =
                        derive_seed(root, &[TAG_LOGISTIC, sigma2_sq.to_bits(), m as u64, seed]);
                    let mut run = bsgd_single(inst, cfg, m, step, run_seed);
                    run.seed = seed;
                    run
                })
                .collect()
        })
        .collect();
    let scores: Vec<f64> = all
        .iter()
        .map(|runs| runs.iter().map(|r| r.gap).sum::<f64>() / runs.len() as f64)
        .collect();
    match argmin_finite(&scores) {
        Some(best) => TunedCell { step: Some(cfg.step_grid[best]), runs: all.swap_remove(best) },
        None => TunedCell {
            step: None,
            runs: seeds
                .iter()
                .map(|&seed| SeedRun {
                    seed,
                    gap: f64::NAN,
                    samples: 0,
                    status: "no stepsize reached a finite mean gap".into(),
                })
                .collect(),
        },
    }
}

/// Pooled empirical-risk minimization for one cell, one row per seed.
pub fn saa_cell(
    inst: &Instance,
    cfg: &LogisticCfg,
    sigma2_sq: f64,
    m: usize,
    root: u64,
    seeds: &[u64],
) -> Vec<SeedRun> {
    seeds
        .par_iter()
        .map(|&seed| {
            let mut rng = seeded_rng(derive_seed(
                root,
                &[TAG_LOGISTIC, sigma2_sq.to_bits(), m as u64, seed, SUB_DATA],
            ));
            let n = cfg.budget / (m + 1);
            match SaaInstance::draw(&inst.problem, n, m, &mut rng) {
                Ok(pools) => {
                    let sol = saa_solve(
                        &pools,
                        &Array1::zeros(cfg.dim),
                        cfg.saa_tol,
                        cfg.saa_max_iters,
                    );
                    let f_out = inst.problem.reference_objective(&sol.x);
                    SeedRun {
                        seed,
                        gap: f_out - inst.f_star,
                        samples: pools.total_samples() as u64,
                        status: "ok".into(),
                    }
                }
                Err(e) => SeedRun {
                    seed,
                    gap: f64::NAN,
                    samples: 0,
                    status: e.to_string().replace(',', ";"),
                },
            }
        })
        .collect()
}

pub fn run(
    cfg: &LogisticCfg,
    root: u64,
    seeds: &[u64],
) -> Result<(String, Vec<String>, Vec<String>), RunError> {
    let mut s2s = cfg.sigma2_sq_list.clone();
    s2s.sort_by(f64::total_cmp);
    s2s.dedup();
    let mut ms = cfg.m_list.clone();
    ms.sort_unstable();
    ms.dedup();

    let mut rows = Vec::new();
    let mut f_star = f64::NAN;
    for &s2 in &s2s {
        let inst = instance(cfg, s2)?;
        f_star = inst.f_star;
        for &m in &ms {
            let tuned = bsgd_cell(&inst, cfg, s2, m, root, seeds);
            for r in &tuned.runs {
                rows.push(format!(
                    "{},{},bsgd,{},{},{},{},{}",
                    csvfmt::float(s2),
                    m,
                    csvfmt::opt_float(tuned.step),
                    r.seed,
                    if r.gap.is_nan() { String::new() } else { csvfmt::float(r.gap) },
                    r.samples,
                    r.status,
                ));
            }
            if cfg.saa {
                for r in saa_cell(&inst, cfg, s2, m, root, seeds) {
                    rows.push(format!(
                        "{},{},saa,,{},{},{},{}",
                        csvfmt::float(s2),
                        m,
                        r.seed,
                        if r.gap.is_nan() { String::new() } else { csvfmt::float(r.gap) },
                        r.samples,
                        r.status,
                    ));
                }
            }
        }
    }
    let meta = vec![
        format!("reference_optimum = {}", csvfmt::float(f_star)),
        "final_gap charges the output point on the clean reference objective".to_string(),
        "step column is empty for the pooled solver (it has no stepsize)".to_string(),
    ];
    Ok((HEADER.to_string(), rows, meta))
}
