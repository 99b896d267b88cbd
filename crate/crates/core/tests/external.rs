use std::path::Path;

use metares::error::Error;
use metares::experiment::{
    run_complexity_sweep, run_pipeline, run_simulate, ExperimentConfig, ExternalData,
};

#[test]
fn ingested_record_reproduces_simulated_scores() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig::default();
    let sim = dir.path().join("sim");
    run_simulate(&config, &sim).unwrap();
    let (_, direct) = run_pipeline(&config, &dir.path().join("direct")).unwrap();

    let p = |f: &str| sim.join(f);
    let external = ExperimentConfig {
        external: Some(ExternalData {
            state_csv: p("state.csv"),
            state_meta: p("state.meta.json"),
            input_csv: p("input.csv"),
            input_meta: p("input.meta.json"),
            force_csv: Some(p("force.csv")),
            force_meta: Some(p("force.meta.json")),
        }),
        ..config
    };
    let (_, ingested) = run_pipeline(&external, &dir.path().join("ingested")).unwrap();
    for (a, b) in direct.iter().zip(&ingested) {
        assert_eq!(a.task, b.task);
        assert!(
            (a.r2_test - b.r2_test).abs() < 1e-6,
            "{}: {} vs {}",
            a.task,
            a.r2_test,
            b.r2_test
        );
    }

    match run_complexity_sweep(&external, &dir.path().join("sweep")) {
        Err(Error::Stage { stage, source, .. }) => {
            assert_eq!(stage, "sweep");
            assert!(matches!(*source, Error::Config(_)));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn mismatched_external_lengths_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let short = ExperimentConfig {
        input: metares::experiment::InputConfig {
            duration_s: 2.0,
            ..Default::default()
        },
        ..Default::default()
    };
    run_simulate(&ExperimentConfig::default(), &sim).unwrap();
    run_simulate(&short, &dir.path().join("short")).unwrap();
    let external = ExperimentConfig {
        external: Some(ExternalData {
            state_csv: sim.join("state.csv"),
            state_meta: sim.join("state.meta.json"),
            input_csv: dir.path().join("short/input.csv"),
            input_meta: dir.path().join("short/input.meta.json"),
            force_csv: None,
            force_meta: None,
        }),
        ..Default::default()
    };
    let err = run_pipeline(&external, Path::new(&dir.path().join("out"))).unwrap_err();
    assert!(err.to_string().contains("stage `ingest`"), "{err}");
    assert!(err.to_string().contains("3000 vs 1000"), "{err}");
}
