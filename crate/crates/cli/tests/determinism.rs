//! Reruns of one config must reproduce the CSV byte for byte, at any
//! worker count, and every run must respect its sample budget.

use bsgd_cli::config::{parse_config, Experiment};
use bsgd_cli::experiments::execute;

fn tiny_config(experiment: Experiment) -> &'static str {
    match experiment {
        Experiment::BiasSweep => {
            "seeds = 0\n[problem]\ndim = 2\n[sweep]\nm_list = 1,4\nn_mc = 3000\n"
        }
        Experiment::RateStudy => "seeds = 0,1\n[sweep]\nt_list = 32\nm = 4\n",
        Experiment::Logistic => {
            "seeds = 0,1\n[problem]\ndim = 3\nref_samples = 1500\n\
             [sweep]\nsigma2_sq_list = 1\nm_list = 2\nbudget = 400\n\
             [engine]\nstep_grid = 0.1,1\n[saa]\nmax_iters = 60\n"
        }
        Experiment::Maml => {
            "seeds = 0\n[problem]\nnet_dims = 1,6,1\n\
             [sweep]\nm_list = 5\nbudget = 800\nmethods = bsgd,adam\n\
             [engine]\nstep_grid = 0.003,0.01\n\
             [evaluation]\ntasks = 12\nquery = 8\nsupport = 8\n"
        }
        Experiment::Iv => {
            "seeds = 0\n[problem]\nnet_dims = 1,6,1\n\
             [sweep]\ntruth_list = linear\nbudget = 900\nm = 5\n\
             methods = bsgd,two_sls,poly_two_sls,direct_nn\n\
             [engine]\nstep_grid = 0.01,0.1\n\
             [baselines]\npoly_degrees = 1,2\npoly_lambdas = 0,0.01\n\
             nn_epochs = 3\nnn_tune_epochs = 2\n\
             [evaluation]\nval_scenarios = 40\nval_inner = 6\n"
        }
        Experiment::Floor => {
            "seeds = 0,1\n[sweep]\nb_list = 0.1,0.4\nt_list = 200\n\
             [engine]\nstep_grid = 0.01,0.03,0.1\n"
        }
    }
}

#[test]
fn every_experiment_reproduces_its_bytes_across_runs_and_worker_counts() {
    for experiment in [
        Experiment::BiasSweep,
        Experiment::RateStudy,
        Experiment::Logistic,
        Experiment::Maml,
        Experiment::Iv,
        Experiment::Floor,
    ] {
        let cfg = parse_config(tiny_config(experiment), Some(experiment)).unwrap();
        let serial = execute(&cfg, 1).unwrap();
        let serial_again = execute(&cfg, 1).unwrap();
        let parallel = execute(&cfg, 2).unwrap();
        assert_eq!(
            serial.csv, serial_again.csv,
            "{}: rerun changed the bytes",
            experiment.name()
        );
        assert_eq!(
            serial.csv, parallel.csv,
            "{}: worker count changed the bytes",
            experiment.name()
        );
        assert!(serial.csv.ends_with('\n'));
        // The echoed config re-parses to the same resolved value.
        let reparsed = parse_config(&serial.config_echo, None).unwrap();
        assert_eq!(reparsed, cfg, "{}: echo drifted", experiment.name());
    }
}

#[test]
fn budgeted_runs_consume_at_most_and_nearly_all_of_the_budget() {
    // Logistic: budget 400 at m = 2 means (m+1)-sample steps; both methods
    // must land in (400 - 3, 400].
    let cfg = parse_config(tiny_config(Experiment::Logistic), Some(Experiment::Logistic)).unwrap();
    let out = execute(&cfg, 0).unwrap();
    let mut checked = 0;
    for line in out.csv.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let samples: u64 = fields[6].parse().unwrap();
        assert_eq!(fields[7], "ok", "{line}");
        assert!(samples <= 400, "{line}");
        assert!(samples > 400 - 3, "{line}");
        checked += 1;
    }
    assert_eq!(checked, 4);

    // Meta-learning: budget 800 at m = 5 means 6-sample steps.
    let cfg = parse_config(tiny_config(Experiment::Maml), Some(Experiment::Maml)).unwrap();
    let out = execute(&cfg, 0).unwrap();
    let mut checked = 0;
    for line in out.csv.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let samples: u64 = fields[5].parse().unwrap();
        assert!(samples <= 800, "{line}");
        assert!(samples > 800 - 6, "{line}");
        checked += 1;
    }
    assert_eq!(checked, 2);
}
