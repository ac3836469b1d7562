use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use bsgd_cli::config::{parse_config, Experiment, ExperimentConfig};
use bsgd_cli::experiments::execute_to_dir;

#[derive(Parser)]
#[command(
    name = "bsgd",
    version,
    about = "Run biased stochastic gradient experiments to CSV tables"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Measure estimator bias against inner batch size on closed-form instances.
    BiasSweep(RunArgs),
    /// Trace suboptimality against the horizon under the regime's stepsizes.
    RateStudy(RunArgs),
    /// Compare tuned descent with pooled risk minimization on noisy-view logistic regression.
    Logistic(RunArgs),
    /// Compare meta-learning methods on sine-wave regression.
    Maml(RunArgs),
    /// Recover structural functions under confounding against regression baselines.
    Iv(RunArgs),
    /// Measure tuned-descent error floors under a biased oracle.
    Floor(RunArgs),
}

impl Command {
    fn split(self) -> (Experiment, RunArgs) {
        match self {
            Command::BiasSweep(a) => (Experiment::BiasSweep, a),
            Command::RateStudy(a) => (Experiment::RateStudy, a),
            Command::Logistic(a) => (Experiment::Logistic, a),
            Command::Maml(a) => (Experiment::Maml, a),
            Command::Iv(a) => (Experiment::Iv, a),
            Command::Floor(a) => (Experiment::Floor, a),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config file; every key is optional, so omitting the file
    /// runs the documented defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory. Falls back to the config's `output_dir`, then to
    /// $BSGD_OUTPUT_DIR/<experiment>, then to runs/<experiment>.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Comma-separated seeds overriding the config's list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Worker threads; 0 uses every core. The output bytes do not depend
    /// on this.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

fn output_dir(cfg: &ExperimentConfig, args: &RunArgs) -> PathBuf {
    if let Some(dir) = &args.output {
        return dir.clone();
    }
    if let Some(dir) = &cfg.output_dir {
        return PathBuf::from(dir);
    }
    match std::env::var("BSGD_OUTPUT_DIR") {
        Ok(base) if !base.is_empty() => PathBuf::from(base).join(cfg.experiment.name()),
        _ => PathBuf::from("runs").join(cfg.experiment.name()),
    }
}

fn run(experiment: Experiment, args: RunArgs) -> i32 {
    let text = match &args.config {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(text) => text,
            Err(e) => {
                eprintln!("error: could not read {}: {e}", path.display());
                return 2;
            }
        },
        None => String::new(),
    };
    let mut cfg = match parse_config(&text, Some(experiment)) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    if let Some(seeds) = args.seeds.clone() {
        if seeds.is_empty() {
            eprintln!("error: --seeds must list at least one seed");
            return 2;
        }
        cfg.seeds = seeds;
    }
    let dir = output_dir(&cfg, &args);
    match execute_to_dir(&cfg, args.jobs, &dir) {
        Ok(csv_path) => {
            println!("wrote {}", csv_path.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn main() {
    let (experiment, args) = Cli::parse().command.split();
    std::process::exit(run(experiment, args));
}
