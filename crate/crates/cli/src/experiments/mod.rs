//! Experiment drivers: each turns a resolved config into sorted CSV rows.
//!
//! Reproducibility contract: the seed of every stochastic unit of work is
//! `derive_seed(root_seed, [experiment tag, coordinates.., seed index])`,
//! where the coordinates identify the sweep point (float coordinates enter
//! as their IEEE-754 bit patterns). Stepsize-grid candidates at the same
//! sweep point share one seed, so tuning compares candidates on common
//! random numbers. Workers may run in any order and in parallel; rows are
//! sorted by their sweep position before rendering, so output bytes never
//! depend on scheduling.

pub mod bias;
pub mod floor;
pub mod iv;
pub mod logistic;
pub mod maml;
pub mod rate;

use std::time::{SystemTime, UNIX_EPOCH};

use thiserror::Error;

use crate::config::{ExperimentConfig, ExperimentParams};
use crate::csvfmt;

/// Experiment tags for seed derivation (first coordinate).
pub const TAG_BIAS: u64 = 1;
pub const TAG_RATE: u64 = 2;
pub const TAG_LOGISTIC: u64 = 3;
pub const TAG_MAML: u64 = 4;
pub const TAG_IV: u64 = 5;
pub const TAG_FLOOR: u64 = 6;

/// Purpose sub-tags appended after the sweep coordinates when one sweep
/// point needs several independent streams.
pub const SUB_EVAL: u64 = 101;
pub const SUB_DATA: u64 = 102;
pub const SUB_FIT: u64 = 103;

/// Iterate count bought by a sample budget at inner batch size `m`: the
/// run performs `floor(Q/(m+1))` sampled steps (one scenario plus `m`
/// inner draws each), hence one more iterate than steps. Total consumption
/// lands in `(Q - (m+1), Q]`.
pub fn budget_iters(q: usize, m: usize) -> usize {
    q / (m + 1) + 1
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration rejected at run time: {0}")]
    Setup(String),
    #[error("could not write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Everything one experiment execution produced, before any file I/O.
pub struct RunOutput {
    pub csv_name: String,
    pub csv: String,
    pub config_echo: String,
    pub metadata: String,
}

/// Mean of already-validated values; drivers use it on per-seed results.
pub fn mean_of(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Average of the recorded iterates from the second half of a run
/// (`t > T/2`), the output point the network trainings report: unlike the
/// full average it is not dragged by the far-from-converged early
/// iterates, and unlike the last iterate it is not hostage to one noisy
/// final step.
pub fn tail_average(iterates: &[(usize, ndarray::Array1<f64>)]) -> ndarray::Array1<f64> {
    let horizon = iterates.last().expect("traces record at least one iterate").0;
    let tail: Vec<&ndarray::Array1<f64>> =
        iterates.iter().filter(|(t, _)| 2 * *t > horizon).map(|(_, x)| x).collect();
    let mut sum = ndarray::Array1::<f64>::zeros(tail[0].len());
    for x in &tail {
        sum += *x;
    }
    sum / tail.len() as f64
}

/// Index of the grid entry with the smallest finite score; ties keep the
/// earliest entry so selection is deterministic. `None` when every score
/// is non-finite.
pub fn argmin_finite(scores: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s.is_finite() && best.map(|(_, b)| s < b).unwrap_or(true) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

/// Run the configured experiment. `jobs = 0` uses the process-wide thread
/// pool; a positive count installs a dedicated pool of that size. Either
/// way the output bytes are identical.
pub fn execute(cfg: &ExperimentConfig, jobs: usize) -> Result<RunOutput, RunError> {
    let started = SystemTime::now();
    let run = || -> Result<(String, Vec<String>, Vec<String>), RunError> {
        match &cfg.params {
            ExperimentParams::BiasSweep(c) => bias::run(c, cfg.root_seed, &cfg.seeds),
            ExperimentParams::RateStudy(c) => rate::run(c, cfg.root_seed, &cfg.seeds),
            ExperimentParams::Logistic(c) => logistic::run(c, cfg.root_seed, &cfg.seeds),
            ExperimentParams::Maml(c) => maml::run(c, cfg.root_seed, &cfg.seeds),
            ExperimentParams::Iv(c) => iv::run(c, cfg.root_seed, &cfg.seeds),
            ExperimentParams::Floor(c) => floor::run(c, cfg.root_seed, &cfg.seeds),
        }
    };
    let (header, rows, extra_meta) = if jobs > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| RunError::Setup(format!("thread pool: {e}")))?;
        pool.install(run)?
    } else {
        run()?
    };

    let csv = csvfmt::table(&header, &rows);
    let elapsed = started.elapsed().map(|d| d.as_secs_f64()).unwrap_or(f64::NAN);
    let started_unix =
        started.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);

    let mut metadata = String::new();
    metadata.push_str(&format!("experiment = {}\n", cfg.experiment.name()));
    metadata.push_str(&format!(
        "tool = bsgd-cli {} (library bsgd {})\n",
        env!("CARGO_PKG_VERSION"),
        env!("CARGO_PKG_VERSION"),
    ));
    metadata.push_str(&format!("started_unix = {started_unix}\n"));
    metadata.push_str(&format!("elapsed_seconds = {elapsed:.3}\n"));
    metadata.push_str(&format!(
        "jobs = {}\n",
        if jobs == 0 { "auto".to_string() } else { jobs.to_string() }
    ));
    metadata.push_str(&format!("rows = {}\n", rows.len()));
    metadata.push_str(
        "seed_rule = derive_seed(root_seed, [experiment_tag, sweep coordinates.., seed]); \
         float coordinates contribute their IEEE-754 bits; stepsize-grid candidates share \
         the sweep point's seed\n",
    );
    metadata.push_str(&format!(
        "experiment_tags = bias_sweep:{TAG_BIAS} rate_study:{TAG_RATE} logistic:{TAG_LOGISTIC} \
         maml:{TAG_MAML} iv:{TAG_IV} floor:{TAG_FLOOR}\n",
    ));
    for line in extra_meta {
        metadata.push_str(&line);
        metadata.push('\n');
    }

    Ok(RunOutput {
        csv_name: format!("{}.csv", cfg.experiment.name()),
        csv,
        config_echo: crate::config::echo_config(cfg),
        metadata,
    })
}

/// Run and write `config.txt`, the experiment CSV, and `metadata.txt`
/// into `dir`, creating it if needed. Returns the CSV path.
pub fn execute_to_dir(
    cfg: &ExperimentConfig,
    jobs: usize,
    dir: &std::path::Path,
) -> Result<std::path::PathBuf, RunError> {
    let out = execute(cfg, jobs)?;
    let write = |name: &str, content: &str| -> Result<std::path::PathBuf, RunError> {
        let path = dir.join(name);
        std::fs::write(&path, content).map_err(|e| RunError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Ok(path)
    };
    std::fs::create_dir_all(dir).map_err(|e| RunError::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    write("config.txt", &out.config_echo)?;
    write("metadata.txt", &out.metadata)?;
    write(&out.csv_name, &out.csv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_consumption_lands_in_the_promised_window() {
        for q in [100usize, 1000, 99_999] {
            for m in [1usize, 7, 10, 99] {
                let iters = budget_iters(q, m);
                let consumed = (iters - 1) * (m + 1);
                assert!(consumed <= q, "q={q} m={m}: consumed {consumed}");
                assert!(consumed > q.saturating_sub(m + 1), "q={q} m={m}: consumed {consumed}");
            }
        }
    }

    #[test]
    fn tail_average_uses_only_the_second_half() {
        let iterates: Vec<(usize, ndarray::Array1<f64>)> = (1..=10)
            .map(|t| (t, ndarray::Array1::from_elem(1, t as f64)))
            .collect();
        // t in 6..=10 -> mean 8.
        assert_eq!(tail_average(&iterates)[0], 8.0);
        let single = vec![(1usize, ndarray::Array1::from_elem(1, 3.0))];
        assert_eq!(tail_average(&single)[0], 3.0);
    }

    #[test]
    fn argmin_skips_non_finite_scores_and_breaks_ties_low() {
        assert_eq!(argmin_finite(&[f64::NAN, 2.0, 1.0, 1.0]), Some(2));
        assert_eq!(argmin_finite(&[f64::NAN, f64::INFINITY]), None);
        assert_eq!(argmin_finite(&[]), None);
    }
}
