//! Sine-wave meta-learning: the nested-gradient solver against its
//! first-order approximation and Adam, at one shared task budget.
//!
//! All methods at one (batch size, seed) share the weight init and the
//! task stream, and every candidate is scored on the same held-out
//! adaptation protocol, so the rows differ only in what each method did
//! with identical data. The stepsize column is the grid-selected stepsize
//! (the learning rate, for Adam).

use bsgd::baselines::fo_maml_gradient;
use bsgd::engine::{adam_run, run_with, UpdateRule};
use bsgd::problems::maml::{maml_empirical_objective, MamlProblem, MamlSpec};
use bsgd::rng::{derive_seed, seeded_rng};
use bsgd::{
    bsgd_run, AdamParams, BatchSchedule, Domain, Mlp, OutputPolicy, RunConfig, StepSchedule,
};
use ndarray::Array1;
use rayon::prelude::*;

use crate::config::{MamlCfg, MamlMethod};
use crate::csvfmt;
use crate::experiments::{
    argmin_finite, budget_iters, tail_average, RunError, SUB_EVAL, SUB_FIT, TAG_MAML,
};

pub const HEADER: &str = "m,method,step,seed,final_objective,samples,status";

pub fn problem_for(cfg: &MamlCfg) -> MamlProblem {
    MamlProblem::new(MamlSpec {
        net_dims: cfg.net_dims.clone(),
        inner_lr: cfg.inner_lr,
        ..MamlSpec::default()
    })
}

/// Per-seed starting weights, shared by every method and batch size.
pub fn init_weights(cfg: &MamlCfg, root: u64, seed: u64) -> Array1<f64> {
    let net = Mlp::seeded_init(cfg.net_dims.clone(), derive_seed(root, &[TAG_MAML, seed, SUB_FIT]))
        .expect("architecture validated at parse");
    net.weights().clone()
}

/// Score weights on the held-out protocol: fresh tasks, adapt on a support
/// batch, charge the query loss. The generator is rebuilt from the same
/// derived seed on every call, so every method and stepsize candidate at
/// one (batch size, seed) faces identical evaluation tasks.
pub fn evaluate(problem: &MamlProblem, cfg: &MamlCfg, root: u64, m: usize, seed: u64, w: &Array1<f64>) -> f64 {
    let mut rng = seeded_rng(derive_seed(root, &[TAG_MAML, m as u64, seed, SUB_EVAL]));
    maml_empirical_objective(problem, w, cfg.eval_tasks, cfg.eval_query, cfg.eval_support, &mut rng)
}

/// One training run; returns the tail-averaged weights and the samples
/// consumed.
pub fn train_one(
    problem: &MamlProblem,
    cfg: &MamlCfg,
    root: u64,
    seed: u64,
    m: usize,
    method: MamlMethod,
    step: f64,
) -> Result<(Array1<f64>, u64), RunError> {
    let iters = budget_iters(cfg.budget, m);
    let run_cfg = RunConfig {
        iters,
        step: StepSchedule::FlatHorizon { c: step, horizon: iters },
        batch: BatchSchedule::Fixed(m),
        domain: Domain::Unconstrained,
        x1: init_weights(cfg, root, seed),
        output: OutputPolicy::Average,
        seed: derive_seed(root, &[TAG_MAML, m as u64, seed]),
        trace_every: (iters / 200).max(1),
        outer_batch: 1,
    };
    let trace = match method {
        MamlMethod::Bsgd => bsgd_run(problem, &run_cfg),
        MamlMethod::FoMaml => run_with(problem, &run_cfg, &UpdateRule::Projected, |p, w, task, support| {
            Ok(fo_maml_gradient(p, w, task, support))
        }),
        MamlMethod::Adam => {
            adam_run(problem, &run_cfg, AdamParams { lr: step, ..AdamParams::default() })
        }
    }
    .map_err(|e| RunError::Setup(format!("m = {m}, seed {seed}: {e}")))?;
    Ok((tail_average(&trace.iterates), trace.total_samples))
}

#[derive(Debug, Clone)]
struct CellRow {
    seed: u64,
    objective: f64,
    samples: u64,
    status: String,
}

/// Grid-tuned rows for one (batch size, method) cell.
fn tuned_cell(
    problem: &MamlProblem,
    cfg: &MamlCfg,
    root: u64,
    seeds: &[u64],
    m: usize,
    method: MamlMethod,
) -> (Option<f64>, Vec<CellRow>) {
    let all: Vec<Vec<CellRow>> = cfg
        .step_grid
        .par_iter()
        .map(|&step| {
            seeds
                .iter()
                .map(|&seed| match train_one(problem, cfg, root, seed, m, method, step) {
                    Ok((w, samples)) => {
                        let objective = evaluate(problem, cfg, root, m, seed, &w);
                        CellRow {
                            seed,
                            objective,
                            samples,
                            status: if objective.is_finite() {
                                "ok".into()
                            } else {
                                "non-finite evaluation".into()
                            },
                        }
                    }
                    Err(e) => CellRow {
                        seed,
                        objective: f64::NAN,
                        samples: 0,
                        status: e.to_string().replace(',', ";"),
                    },
                })
                .collect()
        })
        .collect();
    let scores: Vec<f64> = all
        .iter()
        .map(|rows| rows.iter().map(|r| r.objective).sum::<f64>() / rows.len() as f64)
        .collect();
    match argmin_finite(&scores) {
        Some(best) => (Some(cfg.step_grid[best]), all.into_iter().nth(best).unwrap()),
        None => (
            None,
            seeds
                .iter()
                .map(|&seed| CellRow {
                    seed,
                    objective: f64::NAN,
                    samples: 0,
                    status: "no stepsize reached a finite mean objective".into(),
                })
                .collect(),
        ),
    }
}

pub fn run(
    cfg: &MamlCfg,
    root: u64,
    seeds: &[u64],
) -> Result<(String, Vec<String>, Vec<String>), RunError> {
    let problem = problem_for(cfg);
    let mut ms = cfg.m_list.clone();
    ms.sort_unstable();
    ms.dedup();

    let mut rows = Vec::new();
    for &m in &ms {
        for &method in &cfg.methods {
            let (step, cell) = tuned_cell(&problem, cfg, root, seeds, m, method);
            for r in cell {
                rows.push(format!(
                    "{},{},{},{},{},{},{}",
                    m,
                    method.name(),
                    csvfmt::opt_float(step),
                    r.seed,
                    if r.objective.is_finite() {
                        csvfmt::float(r.objective)
                    } else {
                        String::new()
                    },
                    r.samples,
                    r.status,
                ));
            }
        }
    }
    let meta = vec![
        format!("parameters = {}", problem.n_params()),
        "final_objective is the held-out adapt-then-query loss at the tail-averaged weights"
            .to_string(),
        "adam rows reuse the stepsize column for the tuned learning rate".to_string(),
    ];
    Ok((HEADER.to_string(), rows, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> MamlCfg {
        MamlCfg {
            net_dims: vec![1, 8, 1],
            inner_lr: 0.01,
            m_list: vec![5],
            budget: 1200,
            methods: vec![MamlMethod::Bsgd, MamlMethod::FoMaml],
            step_grid: vec![0.003, 0.01],
            eval_tasks: 20,
            eval_query: 10,
            eval_support: 10,
        }
    }

    #[test]
    fn training_stays_in_budget_and_improves_the_evaluation() {
        let cfg = tiny();
        let problem = problem_for(&cfg);
        let w0 = init_weights(&cfg, 11, 0);
        let before = evaluate(&problem, &cfg, 11, 5, 0, &w0);
        let (w, samples) = train_one(&problem, &cfg, 11, 0, 5, MamlMethod::Bsgd, 0.01).unwrap();
        let after = evaluate(&problem, &cfg, 11, 5, 0, &w);
        assert!(samples <= 1200 && samples > 1200 - 6, "samples {samples}");
        assert!(after < before, "no progress: {after} vs {before}");
    }

    #[test]
    fn methods_share_their_evaluation_tasks() {
        let cfg = tiny();
        let problem = problem_for(&cfg);
        let w = init_weights(&cfg, 11, 3);
        let a = evaluate(&problem, &cfg, 11, 5, 3, &w);
        let b = evaluate(&problem, &cfg, 11, 5, 3, &w);
        assert_eq!(a, b);
    }

    #[test]
    fn rows_cover_every_method_with_a_selected_step() {
        let cfg = tiny();
        let (_, rows, _) = run(&cfg, 11, &[0, 1]).unwrap();
        assert_eq!(rows.len(), 4);
        for r in &rows {
            assert!(r.ends_with(",ok"), "{r}");
            let step_field = r.split(',').nth(2).unwrap();
            assert!(!step_field.is_empty());
        }
    }
}
