//! End-to-end experiments driven by a single JSON config: simulation (or
//! ingest), windowing, task training, metric reports, and a hashed manifest
//! for every output bundle.

mod bundle;
mod run;

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use bundle::{verify_bundle, FileEntry, Manifest, MANIFEST_FILE};
pub use run::{
    run_complexity_sweep, run_metrics, run_pipeline, run_selection, run_simulate, run_task_atlas,
    AtlasReport, SweepRow, TaskRecord, TaskScore,
};

use crate::error::{Error, Result};
use crate::lattice::{build_lattice, simulate, LatticeConfig, LatticeModel};
use crate::metrics::MetricOptions;
use crate::pipeline::{
    ingest_csv, ingest_series_csv, split_train_test, trim_series, trim_transient, SplitData,
    DEFAULT_HEAD_FRAC, DEFAULT_TAIL_FRAC, DEFAULT_TRAIN_FRAC,
};
use crate::readout::Ridge;
use crate::selection::DEFAULT_TRIALS;
use crate::series::TimeSeries;
use crate::signals::{
    make_multitone, normalize_rms, MultiToneSpec, TaskContext, TaskSpec, PAPER_FREQUENCIES_HZ,
};
use crate::state::{SensorKind, StateMatrix};

/// Environment variable that overrides the master seed.
pub const SEED_ENV: &str = "METARES_SEED";

/// Stage counters for [`stage_seed`].
pub mod stage {
    pub const LATTICE: u64 = 0;
    pub const NOISE: u64 = 1;
    pub const BASELINE: u64 = 2;
}

/// Seed of a randomized stage: output number `stage + 1` of a SplitMix64
/// stream started at the master seed.
pub fn stage_seed(master: u64, stage: u64) -> u64 {
    let mut z = master.wrapping_add(stage.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    /// Number of tones used, taken from the front of `frequencies`.
    pub k: usize,
    pub frequencies: Vec<f64>,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    /// Peak scale of the force, N per unit of the RMS-normalized input.
    pub force_amplitude: f64,
}

impl Default for InputConfig {
    fn default() -> Self {
        Self {
            k: 2,
            frequencies: PAPER_FREQUENCIES_HZ.to_vec(),
            duration_s: 6.0,
            sample_rate_hz: 500.0,
            force_amplitude: 0.005,
        }
    }
}

impl InputConfig {
    pub fn tones(&self, k: usize) -> Result<Vec<f64>> {
        if k == 0 || k > self.frequencies.len() {
            return Err(Error::Config(format!(
                "k = {k} needs 1..={} frequencies",
                self.frequencies.len()
            )));
        }
        Ok(self.frequencies[..k].to_vec())
    }
}

/// Recorded data used instead of the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalData {
    pub state_csv: PathBuf,
    pub state_meta: PathBuf,
    pub input_csv: PathBuf,
    pub input_meta: PathBuf,
    /// Measured force; the input doubles as force when absent.
    #[serde(default)]
    pub force_csv: Option<PathBuf>,
    #[serde(default)]
    pub force_meta: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub head_frac: f64,
    pub tail_frac: f64,
    pub train_frac: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            head_frac: DEFAULT_HEAD_FRAC,
            tail_frac: DEFAULT_TAIL_FRAC,
            train_frac: DEFAULT_TRAIN_FRAC,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionSettings {
    pub task: TaskSpec,
    pub k: usize,
    pub trials: usize,
    pub baseline_sizes: Option<Vec<usize>>,
}

impl Default for SelectionSettings {
    fn default() -> Self {
        Self {
            task: TaskSpec::StrainRate {
                sensor: DEFAULT_STRAIN_SENSOR,
            },
            k: 4,
            trials: DEFAULT_TRIALS,
            baseline_sizes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub ks: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            ks: (1..=8).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AtlasConfig {
    pub k: usize,
}

impl Default for AtlasConfig {
    fn default() -> Self {
        Self { k: 4 }
    }
}

/// Horizontal edge between nodes (2,1) and (2,2), next to the drive point.
pub const DEFAULT_STRAIN_SENSOR: usize = 9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Lattice parameters. Its `seed` is ignored: orientations come from
    /// the master seed.
    pub lattice: LatticeConfig,
    pub external: Option<ExternalData>,
    pub input: InputConfig,
    /// Standard deviation of additive sensor noise, rad. Curvature readouts
    /// receive the same value divided by the edge spacing.
    pub measurement_noise: f64,
    pub window: WindowConfig,
    pub tasks: Vec<TaskSpec>,
    pub ridge: Ridge,
    pub metrics: MetricOptions,
    pub selection: SelectionSettings,
    pub sweep: SweepConfig,
    pub atlas: AtlasConfig,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            lattice: LatticeConfig::default(),
            external: None,
            input: InputConfig::default(),
            measurement_noise: 5e-5,
            window: WindowConfig::default(),
            tasks: vec![
                TaskSpec::Relu10,
                TaskSpec::StrainRate {
                    sensor: DEFAULT_STRAIN_SENSOR,
                },
            ],
            ridge: Ridge::default(),
            metrics: MetricOptions::default(),
            selection: SelectionSettings::default(),
            sweep: SweepConfig::default(),
            atlas: AtlasConfig::default(),
            output_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        crate::pipeline::read_json(path)
    }

    /// Short hash of the serialized config, used to tag errors and
    /// manifests.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(bytes)[..8])
    }

    pub fn validate(&self) -> Result<()> {
        self.input.tones(self.input.k)?;
        if !(self.measurement_noise >= 0.0 && self.measurement_noise.is_finite()) {
            return Err(Error::Config(
                "measurement_noise must be finite and >= 0".into(),
            ));
        }
        if !(self.input.force_amplitude.is_finite() && self.input.force_amplitude > 0.0) {
            return Err(Error::Config("force_amplitude must be > 0".into()));
        }
        for &k in self
            .sweep
            .ks
            .iter()
            .chain([&self.atlas.k, &self.selection.k])
        {
            self.input.tones(k)?;
        }
        Ok(())
    }

    /// Wrap a stage result so failures carry the stage and fingerprint.
    pub fn stage<T>(&self, stage: &'static str, r: Result<T>) -> Result<T> {
        r.map_err(|e| match e {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                fingerprint: self.fingerprint(),
                source: Box::new(e),
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Nonlinear,
    Linearized,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Nonlinear => "nonlinear",
            Variant::Linearized => "linearized",
        }
    }
}

/// Full-length signals of one experiment before windowing.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: Option<LatticeModel>,
    /// RMS-normalized drive signal.
    pub input: TimeSeries,
    pub force: TimeSeries,
    pub state: StateMatrix,
    pub tones: Vec<f64>,
}

/// Lattice built with the orientation seed derived from `master`.
pub fn build_model(
    config: &ExperimentConfig,
    master: u64,
    variant: Variant,
) -> Result<LatticeModel> {
    let lattice = LatticeConfig {
        seed: stage_seed(master, stage::LATTICE),
        ..config.lattice.clone()
    };
    let model = build_lattice(&lattice)?;
    Ok(match variant {
        Variant::Nonlinear => model,
        Variant::Linearized => model.linearized(),
    })
}

/// Add zero-mean Gaussian noise to every readout. Curvatures are scaled by
/// `1 / spacing` so all readouts see the same angular noise level.
pub fn add_measurement_noise(
    x: &StateMatrix,
    sigma: f64,
    spacing: f64,
    seed: u64,
) -> Result<StateMatrix> {
    if sigma == 0.0 {
        return Ok(x.clone());
    }
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = x.data().clone();
    for (j, mut col) in data.column_iter_mut().enumerate() {
        let scale = match x.sensors()[j].kind {
            SensorKind::Kxx | SensorKind::Kyy => sigma / spacing,
            _ => sigma,
        };
        for v in col.iter_mut() {
            *v += scale * unit.sample(&mut rng);
        }
    }
    StateMatrix::with_start(data, x.sample_rate(), x.sensors().to_vec(), x.t_start())
}

/// Simulate (or ingest) the record for `k` tones.
pub fn prepare(config: &ExperimentConfig, k: usize, variant: Variant) -> Result<Scenario> {
    let tones = config.input.tones(k)?;
    if let Some(ext) = &config.external {
        if variant == Variant::Linearized {
            return Err(Error::Config(
                "external data has no linearized variant".into(),
            ));
        }
        let state = config.stage("ingest", ingest_csv(&ext.state_csv, &ext.state_meta))?;
        let input = config.stage("ingest", ingest_series_csv(&ext.input_csv, &ext.input_meta))?;
        let force = match (&ext.force_csv, &ext.force_meta) {
            (Some(c), Some(m)) => config.stage("ingest", ingest_series_csv(c, m))?,
            _ => input.clone(),
        };
        if let Some(len) = [input.len(), force.len()]
            .into_iter()
            .find(|&l| l != state.len())
        {
            return config.stage(
                "ingest",
                Err(Error::LengthMismatch {
                    what: "state rows vs input/force samples",
                    left: state.len(),
                    right: len,
                }),
            );
        }
        let input = config.stage("ingest", normalize_rms(&input))?;
        return Ok(Scenario {
            model: None,
            input,
            force,
            state,
            tones,
        });
    }
    let fs = config.input.sample_rate_hz;
    let input = config.stage(
        "input",
        make_multitone(
            &MultiToneSpec::new(tones.clone()),
            config.input.duration_s,
            fs,
        )
        .and_then(|s| normalize_rms(&s)),
    )?;
    let amp = config.input.force_amplitude;
    let force =
        TimeSeries::new(input.values().iter().map(|v| amp * v).collect(), fs)?.with_label("force");
    let model = config.stage("lattice", build_model(config, config.seed, variant))?;
    let clean = config.stage("simulate", simulate(&model, &force, model.drive_node, fs))?;
    let state = config.stage(
        "noise",
        add_measurement_noise(
            &clean,
            config.measurement_noise,
            model.spacing,
            stage_seed(config.seed, stage::NOISE),
        ),
    )?;
    Ok(Scenario {
        model: Some(model),
        input,
        force,
        state,
        tones,
    })
}

impl Scenario {
    pub fn target(&self, task: &TaskSpec) -> Result<TimeSeries> {
        task.target(&TaskContext {
            input: &self.input,
            force: &self.force,
            state: &self.state,
        })
    }

    /// Trimmed, split data of one task.
    pub fn split(&self, task: &TaskSpec, window: &WindowConfig) -> Result<SplitData> {
        let y = trim_series(&self.target(task)?, window.head_frac, window.tail_frac)?;
        let x = trim_transient(&self.state, window.head_frac, window.tail_frac)?;
        split_train_test(&x, &y, window.train_frac)
    }

    /// Training window of the trimmed record, used for every metric.
    pub fn analysis_window(&self, window: &WindowConfig) -> Result<(StateMatrix, TimeSeries)> {
        let x = trim_transient(&self.state, window.head_frac, window.tail_frac)?;
        let u = trim_series(&self.input, window.head_frac, window.tail_frac)?;
        let cut = (window.train_frac * x.len() as f64).floor() as usize;
        let cut = cut - cut % 2;
        Ok((x.rows(0, cut)?, u.window(0, cut)?))
    }
}
