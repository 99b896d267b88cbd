//! Frequency-domain and correlation metrics of reservoir states.

mod memory;
mod pca;
mod spectral;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use memory::{
    correlation_matrix, correlation_matrix_signed, lagged_correlation, memory, pearson, Memory,
    MAX_LAG,
};
pub use pca::{magnitude_spectra, pca_spectra, PcaNormalize, PcaResult};
use spectral::column_content;
pub use spectral::{
    dft_basis, effective_rank, frequency_alignment, frequency_content, input_bins, low_rank,
    low_rank_state, nonlinearity, sensor_content, snr, spectrum_matrix, task_power,
    FrequencyContent, SpectralBasis, Taper, EFFECTIVE_RANK_VARIANCE, INPUT_GUARD_BINS, SNR_CAP_DB,
};

use crate::error::{Error, Result};
use crate::pipeline::{format_value, write_json, write_table_csv};
use crate::series::TimeSeries;
use crate::state::{SensorKind, StateMatrix};

/// Sensors at or above this SNR count as reliable.
pub const HIGH_SNR_DB: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricOptions {
    /// Window used for the per-sensor spectra behind nonlinearity.
    pub nu_taper: Taper,
    pub guard_bins: usize,
    pub pca_normalize: PcaNormalize,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            nu_taper: Taper::Hann,
            guard_bins: INPUT_GUARD_BINS,
            pca_normalize: PcaNormalize::Unit,
        }
    }
}

/// Nonlinearity, memory and SNR of one sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorProfile {
    pub id: String,
    pub kind: SensorKind,
    pub row: usize,
    pub col: usize,
    pub snr_db: f64,
    /// `None` for a silent sensor.
    pub nu: Option<f64>,
    pub m: Option<f64>,
    pub tau_opt: Option<usize>,
    pub r_opt: Option<f64>,
    pub pc_scores: [f64; 3],
}

impl SensorProfile {
    pub fn high_snr(&self) -> bool {
        self.snr_db >= HIGH_SNR_DB
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sensors: Vec<SensorProfile>,
    pub chi: Vec<f64>,
    pub explained_variance: Vec<f64>,
    pub input_bins: Vec<usize>,
    pub effective_rank: usize,
    pub bin_hz: f64,
}

/// Nonlinearity of one series against the driven tones.
pub fn series_nonlinearity(
    y: &[f64],
    tones_hz: &[f64],
    sample_rate: f64,
    options: &MetricOptions,
) -> Result<f64> {
    let m = nalgebra::DMatrix::from_column_slice(y.len(), 1, y);
    let xf = spectrum_matrix(&m, options.nu_taper)?;
    let content = column_content(&xf.column(0).into_owned(), sample_rate / y.len() as f64)
        .with_input_tones(tones_hz, options.guard_bins);
    nonlinearity(&content)
}

/// Full metric suite over one analysis window. `input` is the drive signal
/// over the same samples as `x`.
pub fn analyze(
    x: &StateMatrix,
    input: &TimeSeries,
    tones_hz: &[f64],
    options: &MetricOptions,
) -> Result<MetricsReport> {
    if input.len() != x.len() {
        return Err(Error::LengthMismatch {
            what: "state rows vs input samples",
            left: x.len(),
            right: input.len(),
        });
    }
    let basis = dft_basis(x)?;
    let content = frequency_content(&basis).with_input_tones(tones_hz, options.guard_bins);
    let snr_db = snr(x, &basis)?;
    let pca = if x.n_sensors() >= 2 {
        Some(pca_spectra(x, options.pca_normalize)?)
    } else {
        None
    };
    let tapered = spectrum_matrix(x.data(), options.nu_taper)?;
    let bin_hz = basis.bin_hz();
    let sensors = x
        .sensors()
        .par_iter()
        .enumerate()
        .map(|(j, meta)| {
            let col = tapered.column(j).into_owned();
            let nu = match nonlinearity(
                &column_content(&col, bin_hz).with_input_tones(tones_hz, options.guard_bins),
            ) {
                Ok(v) => Some(v),
                Err(Error::EmptyContent) => None,
                Err(e) => return Err(e),
            };
            let mem = match memory(&x.column_series(j)?, input) {
                Ok(m) => Some(m),
                Err(Error::ConstantSignal(_)) => None,
                Err(e) => return Err(e),
            };
            Ok(SensorProfile {
                id: meta.id.clone(),
                kind: meta.kind,
                row: meta.row,
                col: meta.col,
                snr_db: snr_db[j],
                nu,
                m: mem.map(|m| m.m),
                tau_opt: mem.map(|m| m.tau_opt),
                r_opt: mem.map(|m| m.r_opt),
                pc_scores: pca.as_ref().map_or([0.0; 3], |p| p.leading_scores(j)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsReport {
        sensors,
        chi: content.chi,
        explained_variance: pca.map(|p| p.explained_variance).unwrap_or_default(),
        input_bins: content.input_bins,
        effective_rank: basis.effective_rank(),
        bin_hz,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(format_value).unwrap_or_default()
}

impl MetricsReport {
    pub fn write(&self, json_path: &Path, csv_path: &Path) -> Result<()> {
        write_json(json_path, self)?;
        let rows: Vec<Vec<String>> = self
            .sensors
            .iter()
            .map(|s| {
                vec![
                    s.id.clone(),
                    format_value(s.snr_db),
                    opt(s.nu),
                    opt(s.m),
                    s.tau_opt.map(|t| t.to_string()).unwrap_or_default(),
                    opt(s.r_opt),
                    format_value(s.pc_scores[0]),
                    format_value(s.pc_scores[1]),
                    format_value(s.pc_scores[2]),
                    u8::from(s.high_snr()).to_string(),
                ]
            })
            .collect();
        write_table_csv(
            csv_path,
            &[
                "id", "snr_db", "nu", "m", "tau_opt", "r_opt", "pc1", "pc2", "pc3", "high_snr",
            ],
            &rows,
        )
    }
}
