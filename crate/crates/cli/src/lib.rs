//! Experiment runner around the `bsgd` library: strict text configs in,
//! deterministic CSV tables out.
//!
//! Each experiment resolves a fully defaulted [`config::ExperimentConfig`],
//! fans its sweep out over a thread pool with per-work-unit derived seeds,
//! and renders sorted rows through one writer — so a rerun of the same
//! config produces byte-identical CSV bytes at any `--jobs` setting.

pub mod config;
pub mod csvfmt;
pub mod experiments;
pub mod optim;
