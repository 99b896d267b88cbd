use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bundle::{Bundle, Manifest};
use super::{prepare, stage, stage_seed, ExperimentConfig, Scenario, Variant};
use crate::error::{Error, Result};
use crate::metrics::{
    analyze, correlation_matrix, dft_basis, memory, pca_spectra, series_nonlinearity, snr,
    SensorProfile, HIGH_SNR_DB,
};
use crate::pipeline::{
    export_series_csv, export_state_csv, format_value, trim_series, trim_transient, write_json,
    write_overlay_csv, write_table_csv,
};
use crate::readout::{predict, train_and_score, Score};
use crate::selection::{select, selection_report, SelectionConfig, SelectionReport};
use crate::signals::{central_difference, TaskSpec};
use crate::state::StateMatrix;

fn opt(v: Option<f64>) -> String {
    v.map(format_value).unwrap_or_default()
}

fn begin(config: &ExperimentConfig, out: &Path) -> Result<Bundle> {
    config.stage("config", config.validate())?;
    let mut bundle = config.stage("output", Bundle::new(out))?;
    config.stage("output", write_json(&bundle.file("config.json"), config))?;
    Ok(bundle)
}

fn write_record(config: &ExperimentConfig, bundle: &mut Bundle, scn: &Scenario) -> Result<()> {
    let r = (|| {
        export_series_csv(
            &scn.input,
            &bundle.file("input.csv"),
            &bundle.file("input.meta.json"),
        )?;
        export_series_csv(
            &scn.force,
            &bundle.file("force.csv"),
            &bundle.file("force.meta.json"),
        )?;
        export_state_csv(
            &scn.state,
            &bundle.file("state.csv"),
            &bundle.file("state.meta.json"),
        )?;
        if let Some(model) = &scn.model {
            write_json(&bundle.file("lattice.json"), model)?;
        }
        Ok(())
    })();
    config.stage("output", r)
}

/// Simulate (or ingest) the configured record and export it.
pub fn run_simulate(config: &ExperimentConfig, out: &Path) -> Result<Manifest> {
    let mut bundle = begin(config, out)?;
    let scn = prepare(config, config.input.k, Variant::Nonlinear)?;
    write_record(config, &mut bundle, &scn)?;
    config.stage(
        "output",
        bundle.finish("simulate", config.seed, config.fingerprint()),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    pub task: String,
    pub r2_train: f64,
    pub r2_test: f64,
    pub lambda: f64,
}

/// Full pipeline: record, one trained readout per task, overlays and scores.
pub fn run_pipeline(config: &ExperimentConfig, out: &Path) -> Result<(Manifest, Vec<TaskScore>)> {
    let mut bundle = begin(config, out)?;
    let scn = prepare(config, config.input.k, Variant::Nonlinear)?;
    write_record(config, &mut bundle, &scn)?;
    let mut scores = Vec::new();
    for task in &config.tasks {
        let label = task.label();
        let split = config.stage("window", scn.split(task, &config.window))?;
        let (mut model, score) = config.stage("train", train_and_score(&split, config.ridge))?;
        model.task = Some(label.clone());
        let r = (|| {
            let pred_train = predict(&model, &split.train)?;
            let pred_test = predict(&model, &split.test)?;
            write_json(&bundle.file(&format!("tasks/{label}/model.json")), &model)?;
            write_overlay_csv(
                &bundle.file(&format!("tasks/{label}/train.csv")),
                split.train.t_start(),
                split.train_target.values(),
                pred_train.values(),
            )?;
            write_overlay_csv(
                &bundle.file(&format!("tasks/{label}/test.csv")),
                split.test.t_start(),
                split.test_target.values(),
                pred_test.values(),
            )
        })();
        config.stage("output", r)?;
        scores.push(TaskScore {
            task: label,
            r2_train: score.r2_train,
            r2_test: score.r2_test,
            lambda: model.lambda,
        });
    }
    let rows: Vec<Vec<String>> = scores
        .iter()
        .map(|s| {
            vec![
                s.task.clone(),
                format_value(s.r2_train),
                format_value(s.r2_test),
                format_value(s.lambda),
            ]
        })
        .collect();
    config.stage(
        "output",
        write_table_csv(
            &bundle.file("scores.csv"),
            &["task", "r2_train", "r2_test", "lambda"],
            &rows,
        ),
    )?;
    let manifest = config.stage(
        "output",
        bundle.finish("run", config.seed, config.fingerprint()),
    )?;
    Ok((manifest, scores))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub variant: Variant,
    pub task: String,
    pub r2_train: f64,
    pub r2_test: f64,
}

/// Score every task for each tone count on the nonlinear lattice and its
/// linearized twin. Both variants share the orientation and noise seeds.
pub fn run_complexity_sweep(
    config: &ExperimentConfig,
    out: &Path,
) -> Result<(Manifest, Vec<SweepRow>)> {
    let mut bundle = begin(config, out)?;
    if config.external.is_some() {
        return config.stage(
            "sweep",
            Err(Error::Config("the sweep needs the simulator".into())),
        );
    }
    let cells: Vec<(usize, Variant)> = config
        .sweep
        .ks
        .iter()
        .flat_map(|&k| [(k, Variant::Nonlinear), (k, Variant::Linearized)])
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(k, variant)| {
            let scn = prepare(config, k, variant)?;
            config
                .tasks
                .iter()
                .map(|task| {
                    let split = config.stage("window", scn.split(task, &config.window))?;
                    let (_, s) = config.stage("train", train_and_score(&split, config.ridge))?;
                    Ok(SweepRow {
                        k,
                        variant,
                        task: task.label(),
                        r2_train: s.r2_train,
                        r2_test: s.r2_test,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect::<Vec<_>>();
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.k.to_string(),
                r.variant.name().to_owned(),
                r.task.clone(),
                format_value(r.r2_train),
                format_value(r.r2_test),
            ]
        })
        .collect();
    config.stage(
        "output",
        write_table_csv(
            &bundle.file("sweep.csv"),
            &["k", "variant", "task", "r2_train", "r2_test"],
            &table,
        ),
    )?;
    let manifest = config.stage(
        "output",
        bundle.finish("sweep", config.seed, config.fingerprint()),
    )?;
    Ok((manifest, rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task: String,
    /// `input`, `independent` (computed from the input) or `embodied`.
    pub family: String,
    /// Sensor the target derives from, for strain-rate tasks.
    pub source: Option<String>,
    pub nu: Option<f64>,
    pub m: Option<f64>,
    pub tau_opt: Option<usize>,
    pub r2_train: Option<f64>,
    pub r2_test: Option<f64>,
    pub snr_db: Option<f64>,
}

impl TaskRecord {
    /// Targets without an SNR are computed exactly and count as clean.
    pub fn high_snr(&self) -> bool {
        self.snr_db.is_none_or(|s| s >= HIGH_SNR_DB)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtlasReport {
    pub k: usize,
    pub tones_hz: Vec<f64>,
    pub sensors: Vec<SensorProfile>,
    pub tasks: Vec<TaskRecord>,
}

fn tolerate<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::ConstantSignal(_) | Error::EmptyContent | Error::ZeroEnergyTask) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Time derivative of every readout.
pub fn derivative_state(x: &StateMatrix) -> Result<StateMatrix> {
    let mut data = DMatrix::zeros(x.len(), x.n_sensors());
    for j in 0..x.n_sensors() {
        let d = central_difference(&x.column(j)?, x.sample_rate())?;
        data.set_column(j, &nalgebra::DVector::from_vec(d));
    }
    StateMatrix::with_start(data, x.sample_rate(), x.sensors().to_vec(), x.t_start())
}

fn atlas_tasks(n_sensors: usize) -> Vec<TaskSpec> {
    let mut tasks = vec![
        TaskSpec::Relu10,
        TaskSpec::Delay { steps: 2 },
        TaskSpec::Delay { steps: 5 },
        TaskSpec::Delay { steps: 10 },
        TaskSpec::Narma { order: 5 },
        TaskSpec::Narma { order: 10 },
        TaskSpec::InputForce,
    ];
    tasks.extend((0..n_sensors).map(|sensor| TaskSpec::StrainRate { sensor }));
    tasks
}

/// Place sensors and a family of tasks on shared (nonlinearity, memory) axes.
pub fn run_task_atlas(config: &ExperimentConfig, out: &Path) -> Result<(Manifest, AtlasReport)> {
    let mut bundle = begin(config, out)?;
    let k = config.atlas.k;
    let scn = prepare(config, k, Variant::Nonlinear)?;
    let (xw, uw) = config.stage("window", scn.analysis_window(&config.window))?;
    let metrics = config.stage("metrics", analyze(&xw, &uw, &scn.tones, &config.metrics))?;
    let rate_snr = config.stage(
        "metrics",
        (|| {
            let d = trim_transient(
                &derivative_state(&scn.state)?,
                config.window.head_frac,
                config.window.tail_frac,
            )?
            .rows(0, xw.len())?;
            snr(&d, &dft_basis(&d)?)
        })(),
    )?;
    let u_trim = config.stage(
        "window",
        trim_series(&scn.input, config.window.head_frac, config.window.tail_frac),
    )?;
    let fs = scn.state.sample_rate();
    let specs = atlas_tasks(scn.state.n_sensors());
    let mut tasks = vec![TaskRecord {
        task: "input".into(),
        family: "input".into(),
        source: None,
        nu: Some(0.0),
        m: Some(0.0),
        tau_opt: Some(0),
        r2_train: None,
        r2_test: None,
        snr_db: None,
    }];
    let records = specs
        .par_iter()
        .map(|task| -> Result<TaskRecord> {
            let split = config.stage("window", scn.split(task, &config.window))?;
            let score: Option<Score> = config.stage(
                "train",
                tolerate(train_and_score(&split, config.ridge).map(|r| r.1)),
            )?;
            let y = &split.train_target;
            let u = config.stage("window", u_trim.window(0, y.len()))?;
            let valid = &y.values()[y.valid_from()..];
            let even = &valid[valid.len() % 2..];
            let nu = config.stage(
                "metrics",
                tolerate(series_nonlinearity(even, &scn.tones, fs, &config.metrics)),
            )?;
            let mem = config.stage("metrics", tolerate(memory(y, &u)))?;
            let (family, source, snr_db) = match *task {
                TaskSpec::StrainRate { sensor } => (
                    "embodied",
                    Some(scn.state.sensors()[sensor].id.clone()),
                    Some(rate_snr[sensor]),
                ),
                _ => ("independent", None, None),
            };
            Ok(TaskRecord {
                task: task.label(),
                family: family.into(),
                source,
                nu,
                m: mem.map(|m| m.m),
                tau_opt: mem.map(|m| m.tau_opt),
                r2_train: score.map(|s| s.r2_train),
                r2_test: score.map(|s| s.r2_test),
                snr_db,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    tasks.extend(records);
    let report = AtlasReport {
        k,
        tones_hz: scn.tones.clone(),
        sensors: metrics.sensors,
        tasks,
    };
    let sensor_rows: Vec<Vec<String>> = report
        .sensors
        .iter()
        .map(|s| {
            vec![
                s.id.clone(),
                format!("{:?}", s.kind).to_lowercase(),
                opt(s.nu),
                opt(s.m),
                s.tau_opt.map(|t| t.to_string()).unwrap_or_default(),
                format_value(s.snr_db),
                u8::from(s.high_snr()).to_string(),
            ]
        })
        .collect();
    let task_rows: Vec<Vec<String>> = report
        .tasks
        .iter()
        .map(|t| {
            vec![
                t.task.clone(),
                t.family.clone(),
                t.source.clone().unwrap_or_default(),
                opt(t.nu),
                opt(t.m),
                t.tau_opt.map(|v| v.to_string()).unwrap_or_default(),
                opt(t.r2_train),
                opt(t.r2_test),
                opt(t.snr_db),
                u8::from(t.high_snr()).to_string(),
            ]
        })
        .collect();
    let r = (|| {
        write_json(&bundle.file("atlas.json"), &report)?;
        write_table_csv(
            &bundle.file("atlas_sensors.csv"),
            &["id", "kind", "nu", "m", "tau_opt", "snr_db", "high_snr"],
            &sensor_rows,
        )?;
        write_table_csv(
            &bundle.file("atlas_tasks.csv"),
            &[
                "task", "family", "source", "nu", "m", "tau_opt", "r2_train", "r2_test", "snr_db",
                "high_snr",
            ],
            &task_rows,
        )
    })();
    config.stage("output", r)?;
    let manifest = config.stage(
        "output",
        bundle.finish("atlas", config.seed, config.fingerprint()),
    )?;
    Ok((manifest, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MetricsSummary {
    effective_rank: usize,
    high_snr_sensors: usize,
    /// Sensors left out of the correlation matrix because they are constant.
    constant_sensors: Vec<String>,
}

/// Per-sensor metrics, frequency content, spectra PCA and sensor
/// correlations over the analysis window.
pub fn run_metrics(config: &ExperimentConfig, out: &Path) -> Result<Manifest> {
    let mut bundle = begin(config, out)?;
    let scn = prepare(config, config.input.k, Variant::Nonlinear)?;
    let (xw, uw) = config.stage("window", scn.analysis_window(&config.window))?;
    let report = config.stage("metrics", analyze(&xw, &uw, &scn.tones, &config.metrics))?;
    let (varying, constant): (Vec<usize>, Vec<usize>) = (0..xw.n_sensors()).partition(|&j| {
        let c = xw.data().column(j);
        let first = c[0];
        c.iter().any(|&v| v != first)
    });
    let corr = if varying.len() >= 2 {
        let sub = config.stage("metrics", xw.select(&varying))?;
        Some((
            sub.sensor_ids(),
            config.stage("metrics", correlation_matrix(&sub))?,
        ))
    } else {
        None
    };
    let pca = if xw.n_sensors() >= 2 {
        Some(config.stage("metrics", pca_spectra(&xw, config.metrics.pca_normalize))?)
    } else {
        None
    };
    let r = (|| {
        report.write(&bundle.file("metrics.json"), &bundle.file("metrics.csv"))?;
        let chi_rows: Vec<Vec<String>> = report
            .chi
            .iter()
            .enumerate()
            .map(|(i, c)| {
                vec![
                    i.to_string(),
                    format_value(i as f64 * report.bin_hz),
                    format_value(*c),
                    u8::from(report.input_bins.contains(&i)).to_string(),
                ]
            })
            .collect();
        write_table_csv(
            &bundle.file("chi.csv"),
            &["bin", "freq_hz", "chi", "input"],
            &chi_rows,
        )?;
        if let Some(p) = &pca {
            let rows: Vec<Vec<String>> = p
                .explained_variance
                .iter()
                .zip(p.cumulative_explained())
                .enumerate()
                .map(|(i, (e, c))| vec![(i + 1).to_string(), format_value(*e), format_value(c)])
                .collect();
            write_table_csv(
                &bundle.file("pca.csv"),
                &["component", "explained", "cumulative"],
                &rows,
            )?;
        }
        if let Some((ids, m)) = &corr {
            let mut header = vec!["id"];
            header.extend(ids.iter().map(String::as_str));
            let rows: Vec<Vec<String>> = ids
                .iter()
                .enumerate()
                .map(|(i, id)| {
                    let mut row = vec![id.clone()];
                    row.extend(m.row(i).iter().map(|v| format_value(*v)));
                    row
                })
                .collect();
            write_table_csv(&bundle.file("correlation.csv"), &header, &rows)?;
        }
        write_json(
            &bundle.file("summary.json"),
            &MetricsSummary {
                effective_rank: report.effective_rank,
                high_snr_sensors: report.sensors.iter().filter(|s| s.high_snr()).count(),
                constant_sensors: constant
                    .iter()
                    .map(|&j| xw.sensors()[j].id.clone())
                    .collect(),
            },
        )
    })();
    config.stage("output", r)?;
    config.stage(
        "output",
        bundle.finish("metrics", config.seed, config.fingerprint()),
    )
}

/// Greedy sensor ranking against the random-subset baseline.
pub fn run_selection(config: &ExperimentConfig, out: &Path) -> Result<(Manifest, SelectionReport)> {
    let mut bundle = begin(config, out)?;
    let s = &config.selection;
    let scn = prepare(config, s.k, Variant::Nonlinear)?;
    let split = config.stage("window", scn.split(&s.task, &config.window))?;
    let sel_config = SelectionConfig {
        trials: s.trials,
        baseline_sizes: s.baseline_sizes.clone(),
        ridge: config.ridge,
    };
    let result = config.stage(
        "selection",
        select(
            &split,
            &sel_config,
            stage_seed(config.seed, stage::BASELINE),
        ),
    )?;
    let report = selection_report(&result);
    config.stage(
        "output",
        report.write(
            &bundle.file("selection.json"),
            &bundle.file("selection.csv"),
        ),
    )?;
    let manifest = config.stage(
        "output",
        bundle.finish("select", config.seed, config.fingerprint()),
    )?;
    Ok((manifest, report))
}
