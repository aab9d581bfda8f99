use mllfc_core::harness::commands::{aggregate, simulate_trials, trials_csv, SimulationSetup};
use mllfc_core::harness::ExperimentConfig;
use mllfc_core::par::{with_threads, Execution};

fn setup(overrides: &[&str]) -> (ExperimentConfig, SimulationSetup) {
    let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    let cfg = ExperimentConfig::from_toml_str("", &o).unwrap();
    let setup = SimulationSetup::from_config(&cfg).unwrap();
    (cfg, setup)
}

#[test]
fn split_runs_merge_to_the_single_run() {
    // margin 0 puts the rate on the boundary, so some trials fail
    let (cfg, s) = setup(&["ol.margin=0.0", "mllfc.beta=0.7"]);
    let whole = simulate_trials(&s, cfg.seed, 0..120, Execution::Parallel).unwrap();
    let first = simulate_trials(&s, cfg.seed, 0..45, Execution::Parallel).unwrap();
    let second = simulate_trials(&s, cfg.seed, 45..120, Execution::Sequential).unwrap();
    let merged = aggregate(&first).merge(aggregate(&second));
    assert_eq!(aggregate(&whole), merged);
    let reversed = aggregate(&second).merge(aggregate(&first));
    assert_eq!(merged, reversed);
    assert!(merged.alias.hits > 0);
    let joined: Vec<_> = first.into_iter().chain(second).collect();
    assert_eq!(trials_csv(&whole), trials_csv(&joined));
}

#[test]
fn thread_count_does_not_change_trials() {
    let (cfg, s) = setup(&["mllfc.beta=0.7"]);
    let run = |threads| {
        with_threads(threads, || {
            simulate_trials(&s, cfg.seed, 0..64, Execution::Parallel).unwrap()
        })
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one, run(8));
    assert_eq!(
        one,
        simulate_trials(&s, cfg.seed, 0..64, Execution::Sequential).unwrap()
    );
}

#[test]
fn seeds_change_the_outcome() {
    let (_, s) = setup(&["mllfc.beta=0.7"]);
    let a = simulate_trials(&s, 1, 0..16, Execution::Parallel).unwrap();
    let b = simulate_trials(&s, 2, 0..16, Execution::Parallel).unwrap();
    assert_ne!(a, b);
}
