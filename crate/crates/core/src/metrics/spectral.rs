//! Orthonormal real DFT of state matrices and the projection-based frequency
//! content built on top of it.

use nalgebra::{DMatrix, DVector};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;
use crate::state::StateMatrix;

/// Fraction of variance the retained principal components must explain.
pub const EFFECTIVE_RANK_VARIANCE: f64 = 0.9999;

/// Half-width, in bins, of the band kept around each driven tone.
pub const INPUT_GUARD_BINS: usize = 1;

/// Window applied to each centered column before the transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Taper {
    #[default]
    Rectangular,
    /// Periodic Hann window rescaled to unit mean square, so a broadband
    /// signal keeps its power.
    Hann,
}

/// Frequency-domain view of a state matrix.
///
/// Row `i < n` holds the cosine coefficient of bin `i` and row `n + i` the
/// sine coefficient. The sine of bin 0 vanishes identically, so row `n`
/// carries the Nyquist cosine instead; bin 0 therefore pairs DC with Nyquist.
/// Columns are mean-centered before the transform.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    xf: DMatrix<f64>,
    n: usize,
    sample_rate: f64,
    singular_values: Vec<f64>,
    rank: usize,
    u: DMatrix<f64>,
    v: DMatrix<f64>,
}

impl SpectralBasis {
    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.xf
    }

    /// Number of frequency bins.
    pub fn n_bins(&self) -> usize {
        self.n
    }

    pub fn bin_hz(&self) -> f64 {
        self.sample_rate / (2 * self.n) as f64
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn effective_rank(&self) -> usize {
        self.rank
    }

    /// Retained left singular vectors, `2n x k`.
    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    /// Retained right singular vectors, `N x k`.
    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn n_sensors(&self) -> usize {
        self.xf.ncols()
    }
}

/// Smallest `k` whose leading squared singular values reach the variance
/// threshold. Expects `sigma` sorted descending.
pub fn effective_rank(sigma: &[f64]) -> usize {
    let energy: Vec<f64> = sigma.iter().map(|s| s * s).collect();
    let total: f64 = energy.iter().sum();
    if total <= 0.0 {
        return 0;
    }
    let mut acc = 0.0;
    for (k, e) in energy.iter().enumerate() {
        acc += e;
        if acc >= EFFECTIVE_RANK_VARIANCE * total {
            return k + 1;
        }
    }
    energy.len()
}

fn taper_weights(taper: Taper, len: usize) -> Option<Vec<f64>> {
    match taper {
        Taper::Rectangular => None,
        Taper::Hann => {
            // Periodic Hann has mean square 3/8.
            let scale = (8.0f64 / 3.0).sqrt();
            Some(
                (0..len)
                    .map(|t| {
                        let s = (std::f64::consts::PI * t as f64 / len as f64).sin();
                        scale * s * s
                    })
                    .collect(),
            )
        }
    }
}

/// Orthonormal cosine/sine coefficients of every centered column.
pub fn spectrum_matrix(data: &DMatrix<f64>, taper: Taper) -> Result<DMatrix<f64>> {
    let len = data.nrows();
    if !len.is_multiple_of(2) {
        return Err(Error::OddLength(len));
    }
    if len < 4 {
        return Err(Error::TooShort { need: 4, got: len });
    }
    let n = len / 2;
    let window = taper_weights(taper, len);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(len);
    let mut out = DMatrix::zeros(len, data.ncols());
    let mut buf = vec![Complex::new(0.0, 0.0); len];
    let edge = 1.0 / (len as f64).sqrt();
    let inner = 1.0 / (n as f64).sqrt();
    for (j, col) in data.column_iter().enumerate() {
        let mean = col.mean();
        for (t, b) in buf.iter_mut().enumerate() {
            let w = window.as_ref().map_or(1.0, |w| w[t]);
            *b = Complex::new((col[t] - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        out[(0, j)] = buf[0].re * edge;
        out[(n, j)] = buf[n].re * edge;
        for i in 1..n {
            out[(i, j)] = buf[i].re * inner;
            out[(n + i, j)] = -buf[i].im * inner;
        }
    }
    Ok(out)
}

/// Transform the state matrix and compute its truncated SVD.
pub fn dft_basis(x: &StateMatrix) -> Result<SpectralBasis> {
    basis_from_coefficients(
        spectrum_matrix(x.data(), Taper::Rectangular)?,
        x.sample_rate(),
    )
}

pub(crate) fn basis_from_coefficients(xf: DMatrix<f64>, sample_rate: f64) -> Result<SpectralBasis> {
    let n = xf.nrows() / 2;
    let svd = xf.clone().svd(true, true);
    let u_full = svd.u.expect("u requested");
    let v_full = svd.v_t.expect("v_t requested").transpose();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let singular_values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let rank = effective_rank(&singular_values);
    let u = DMatrix::from_fn(xf.nrows(), rank, |r, k| u_full[(r, order[k])]);
    let v = DMatrix::from_fn(xf.ncols(), rank, |r, k| v_full[(r, order[k])]);
    Ok(SpectralBasis {
        xf,
        n,
        sample_rate,
        singular_values,
        rank,
        u,
        v,
    })
}

/// Capability of a reservoir to produce each frequency bin with arbitrary
/// phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyContent {
    pub chi: Vec<f64>,
    pub bin_hz: f64,
    /// Sorted bins treated as driven; everything else counts as nonlinear.
    pub input_bins: Vec<usize>,
}

impl FrequencyContent {
    pub fn n_bins(&self) -> usize {
        self.chi.len()
    }

    pub fn nonlinear_bins(&self) -> Vec<usize> {
        (0..self.chi.len())
            .filter(|i| self.input_bins.binary_search(i).is_err())
            .collect()
    }

    /// Mark the nearest bin of each tone, with a guard band, as driven.
    pub fn with_input_tones(mut self, tones_hz: &[f64], guard: usize) -> Self {
        self.input_bins = input_bins(tones_hz, self.bin_hz, self.chi.len(), guard);
        self
    }

    pub fn with_input_bins(mut self, mut bins: Vec<usize>) -> Self {
        bins.sort_unstable();
        bins.dedup();
        bins.retain(|&b| b < self.chi.len());
        self.input_bins = bins;
        self
    }
}

pub fn input_bins(tones_hz: &[f64], bin_hz: f64, n_bins: usize, guard: usize) -> Vec<usize> {
    let mut bins = Vec::new();
    for &f in tones_hz {
        let centre = (f / bin_hz).round() as usize;
        let lo = centre.saturating_sub(guard);
        let hi = (centre + guard).min(n_bins.saturating_sub(1));
        bins.extend(lo..=hi);
    }
    bins.sort_unstable();
    bins.dedup();
    bins
}

fn content_from_u(u: &DMatrix<f64>, n: usize, bin_hz: f64) -> FrequencyContent {
    let mut chi = vec![0.0; n];
    for col in u.column_iter() {
        for (i, c) in chi.iter_mut().enumerate() {
            *c += 0.5 * (col[i] * col[i] + col[n + i] * col[n + i]);
        }
    }
    FrequencyContent {
        chi,
        bin_hz,
        input_bins: Vec::new(),
    }
}

/// `chi_i = (|P u_i|^2 + |P u_{i+n}|^2) / 2` for the projector onto the
/// retained left singular vectors.
pub fn frequency_content(basis: &SpectralBasis) -> FrequencyContent {
    content_from_u(&basis.u, basis.n, basis.bin_hz())
}

/// Rank-1 frequency content of a single sensor column.
pub fn sensor_content(basis: &SpectralBasis, sensor: usize) -> Result<FrequencyContent> {
    if sensor >= basis.n_sensors() {
        return Err(Error::SensorOutOfRange {
            index: sensor,
            count: basis.n_sensors(),
        });
    }
    Ok(column_content(
        &basis.xf.column(sensor).into_owned(),
        basis.bin_hz(),
    ))
}

pub(crate) fn column_content(col: &DVector<f64>, bin_hz: f64) -> FrequencyContent {
    let n = col.len() / 2;
    let norm = col.norm();
    if norm == 0.0 {
        return content_from_u(&DMatrix::zeros(col.len(), 0), n, bin_hz);
    }
    let u = DMatrix::from_column_slice(col.len(), 1, (col / norm).as_slice());
    content_from_u(&u, n, bin_hz)
}

/// Squared DFT magnitude of a centered task per bin.
pub fn task_power(task: &[f64]) -> Result<Vec<f64>> {
    let m = DMatrix::from_column_slice(task.len(), 1, task);
    let xf = spectrum_matrix(&m, Taper::Rectangular)?;
    let n = task.len() / 2;
    Ok((0..n)
        .map(|i| xf[(i, 0)].powi(2) + xf[(n + i, 0)].powi(2))
        .collect())
}

/// Energy-weighted mean of `chi` over the task spectrum. The task is
/// centered first, matching the centering of the state columns.
pub fn frequency_alignment(content: &FrequencyContent, task: &TimeSeries) -> Result<f64> {
    let n = content.n_bins();
    if task.len() != 2 * n {
        return Err(Error::LengthMismatch {
            what: "task samples vs 2n",
            left: task.len(),
            right: 2 * n,
        });
    }
    let power = task_power(task.values())?;
    weighted_alignment(&content.chi, &power)
}

pub(crate) fn weighted_alignment(chi: &[f64], power: &[f64]) -> Result<f64> {
    let total: f64 = power.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroEnergyTask);
    }
    Ok(chi.iter().zip(power).map(|(c, p)| c * p).sum::<f64>() / total)
}

/// Fraction of the total frequency content outside the input bins.
pub fn nonlinearity(content: &FrequencyContent) -> Result<f64> {
    let total: f64 = content.chi.iter().sum();
    if total <= 0.0 {
        return Err(Error::EmptyContent);
    }
    let outside: f64 = content
        .chi
        .iter()
        .enumerate()
        .filter(|(i, _)| content.input_bins.binary_search(i).is_err())
        .map(|(_, c)| c)
        .sum();
    Ok((outside / total).clamp(0.0, 1.0))
}

pub const SNR_CAP_DB: f64 = 100.0;

/// Per-sensor ratio of rank-k signal power to residual power, in decibels,
/// clamped to `[-100, 100]`.
pub fn snr(x: &StateMatrix, basis: &SpectralBasis) -> Result<Vec<f64>> {
    if x.n_sensors() != basis.n_sensors() {
        return Err(Error::LengthMismatch {
            what: "state sensors vs basis sensors",
            left: x.n_sensors(),
            right: basis.n_sensors(),
        });
    }
    let xk = low_rank(basis);
    Ok((0..basis.n_sensors())
        .map(|j| {
            let signal = xk.column(j).norm_squared();
            let noise = (basis.xf.column(j) - xk.column(j)).norm_squared();
            snr_db(signal, noise)
        })
        .collect())
}

fn snr_db(signal: f64, noise: f64) -> f64 {
    if signal <= 0.0 {
        return -SNR_CAP_DB;
    }
    if noise < 1e-10 * signal {
        return SNR_CAP_DB;
    }
    (10.0 * (signal / noise).log10()).clamp(-SNR_CAP_DB, SNR_CAP_DB)
}

/// Rank-k reconstruction of the coefficient matrix.
pub fn low_rank(basis: &SpectralBasis) -> DMatrix<f64> {
    let sigma = DMatrix::from_diagonal(&DVector::from_column_slice(
        &basis.singular_values[..basis.rank],
    ));
    &basis.u * sigma * basis.v.transpose()
}

/// Rank-k reconstruction of the centered state in the time domain, with the
/// original column means restored.
pub fn low_rank_state(x: &StateMatrix, basis: &SpectralBasis) -> Result<StateMatrix> {
    let n = basis.n;
    let len = 2 * n;
    if x.len() != len {
        return Err(Error::LengthMismatch {
            what: "state rows vs 2n",
            left: x.len(),
            right: len,
        });
    }
    let xk = low_rank(basis);
    let mut data = DMatrix::zeros(len, x.n_sensors());
    let edge = 1.0 / (len as f64).sqrt();
    let inner = 1.0 / (n as f64).sqrt();
    let w = 2.0 * std::f64::consts::PI / len as f64;
    for j in 0..x.n_sensors() {
        let mean = x.data().column(j).mean();
        for t in 0..len {
            let sign = if t % 2 == 0 { 1.0 } else { -1.0 };
            let mut v = mean + xk[(0, j)] * edge + xk[(n, j)] * edge * sign;
            for i in 1..n {
                let phase = w * (i * t % len) as f64;
                v += inner * (xk[(i, j)] * phase.cos() + xk[(n + i, j)] * phase.sin());
            }
            data[(t, j)] = v;
        }
    }
    StateMatrix::with_start(data, x.sample_rate(), x.sensors().to_vec(), x.t_start())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{SensorKind, SensorMeta};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    const FS: f64 = 500.0;

    fn meta(n: usize) -> Vec<SensorMeta> {
        (0..n)
            .map(|j| SensorMeta {
                id: format!("s{j}"),
                kind: SensorKind::Other,
                row: 0,
                col: j,
            })
            .collect()
    }

    fn state(data: DMatrix<f64>) -> StateMatrix {
        let n = data.ncols();
        StateMatrix::new(data, FS, meta(n)).unwrap()
    }

    fn tone(len: usize, bin: usize, phase: f64) -> Vec<f64> {
        (0..len)
            .map(|t| (2.0 * PI * (bin * t) as f64 / len as f64 + phase).cos())
            .collect()
    }

    /// Direct evaluation of the orthonormal cosine/sine projections.
    fn direct_coefficients(x: &[f64]) -> Vec<f64> {
        let len = x.len();
        let n = len / 2;
        let mean = x.iter().sum::<f64>() / len as f64;
        let mut out = vec![0.0; len];
        for i in 0..n {
            let (mut c, mut s) = (0.0, 0.0);
            for (t, v) in x.iter().enumerate() {
                let a = 2.0 * PI * (i * t) as f64 / len as f64;
                c += (v - mean) * a.cos();
                s += (v - mean) * a.sin();
            }
            if i == 0 {
                out[0] = c / (len as f64).sqrt();
                let nyq: f64 = x
                    .iter()
                    .enumerate()
                    .map(|(t, v)| (v - mean) * if t % 2 == 0 { 1.0 } else { -1.0 })
                    .sum();
                out[n] = nyq / (len as f64).sqrt();
            } else {
                out[i] = c / (n as f64).sqrt();
                out[n + i] = s / (n as f64).sqrt();
            }
        }
        out
    }

    #[test]
    fn fft_matches_direct_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fast =
            spectrum_matrix(&DMatrix::from_column_slice(64, 1, &x), Taper::Rectangular).unwrap();
        for (a, b) in fast.iter().zip(direct_coefficients(&x)) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn transform_preserves_centered_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..100).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mean = x.iter().sum::<f64>() / 100.0;
        let energy: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
        let xf =
            spectrum_matrix(&DMatrix::from_column_slice(100, 1, &x), Taper::Rectangular).unwrap();
        assert_abs_diff_eq!(xf.norm_squared(), energy, epsilon = 1e-10);
    }

    #[test]
    fn unit_cosine_maps_to_its_basis_vector() {
        let len = 64;
        let scale = (2.0 / len as f64).sqrt();
        let x: Vec<f64> = tone(len, 7, 0.0).iter().map(|v| v * scale).collect();
        let b = dft_basis(&state(DMatrix::from_column_slice(len, 1, &x))).unwrap();
        for (i, v) in b.coefficients().iter().enumerate() {
            let expect = if i == 7 { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(*v, expect, epsilon = 1e-10);
        }
    }

    #[test]
    fn paper_window_has_600_bins() {
        let b = dft_basis(&state(DMatrix::from_fn(1200, 1, |t, _| {
            (t as f64 * 0.3).sin()
        })))
        .unwrap();
        assert_eq!(b.n_bins(), 600);
        assert_abs_diff_eq!(b.bin_hz(), 500.0 / 1200.0, epsilon = 1e-15);
    }

    #[test]
    fn odd_or_tiny_windows_rejected() {
        let odd = state(DMatrix::from_fn(7, 1, |t, _| t as f64));
        assert!(matches!(dft_basis(&odd), Err(Error::OddLength(7))));
        let tiny = state(DMatrix::from_fn(2, 1, |t, _| t as f64));
        assert!(matches!(dft_basis(&tiny), Err(Error::TooShort { .. })));
    }

    #[test]
    fn zero_matrix_has_rank_zero_and_no_content() {
        let b = dft_basis(&state(DMatrix::zeros(32, 3))).unwrap();
        assert_eq!(b.effective_rank(), 0);
        assert!(frequency_content(&b).chi.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn retained_vectors_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = dft_basis(&state(DMatrix::from_fn(80, 6, |_, _| {
            rng.gen_range(-1.0..1.0)
        })))
        .unwrap();
        let gram = b.u().transpose() * b.u();
        assert_abs_diff_eq!(
            (gram - DMatrix::identity(b.effective_rank(), b.effective_rank())).amax(),
            0.0,
            epsilon = 1e-10
        );
    }

    #[test]
    fn effective_rank_threshold() {
        assert_eq!(effective_rank(&[1.0, 0.0, 0.0]), 1);
        assert_eq!(effective_rank(&[]), 0);
        // 1e-4 of the variance left in the tail is still enough to stop.
        let s = [1.0, (1e-4f64 / (1.0 - 1e-4)).sqrt()];
        assert_eq!(effective_rank(&s), 1);
        assert_eq!(effective_rank(&[1.0, 0.011]), 2);
    }

    #[test]
    fn cosine_and_sine_pair_fills_one_bin() {
        let len = 120;
        let data = DMatrix::from_fn(len, 2, |t, j| {
            tone(len, 5, if j == 0 { 0.0 } else { -PI / 2.0 })[t]
        });
        let chi = frequency_content(&dft_basis(&state(data)).unwrap()).chi;
        for (i, c) in chi.iter().enumerate() {
            if i == 5 {
                assert_abs_diff_eq!(*c, 1.0, epsilon = 1e-9);
            } else {
                assert!(c.abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn lone_cosine_fills_half_a_bin() {
        let len = 120;
        let data = DMatrix::from_column_slice(len, 1, &tone(len, 5, 0.0));
        let chi = frequency_content(&dft_basis(&state(data)).unwrap()).chi;
        assert_abs_diff_eq!(chi[5], 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(chi.iter().sum::<f64>(), 0.5, epsilon = 1e-9);
    }

    #[test]
    fn content_bounded_and_sums_to_half_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b = dft_basis(&state(DMatrix::from_fn(60, 5, |_, _| {
            rng.gen_range(-1.0..1.0)
        })))
        .unwrap();
        let c = frequency_content(&b);
        assert!(c.chi.iter().all(|&v| (0.0..=1.0 + 1e-9).contains(&v)));
        assert_abs_diff_eq!(
            c.chi.iter().sum::<f64>(),
            0.5 * b.effective_rank() as f64,
            epsilon = 1e-9
        );
    }

    #[test]
    fn sensor_content_is_rank_one() {
        let len = 120;
        let data = DMatrix::from_fn(len, 2, |t, j| tone(len, 3 + 4 * j, 0.3)[t]);
        let b = dft_basis(&state(data)).unwrap();
        let c1 = sensor_content(&b, 1).unwrap();
        assert_abs_diff_eq!(c1.chi[7], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(c1.chi[3], 0.0, epsilon = 1e-12);
        assert!(matches!(
            sensor_content(&b, 2),
            Err(Error::SensorOutOfRange { .. })
        ));
    }

    #[test]
    fn alignment_examples() {
        let content = FrequencyContent {
            chi: vec![0.1, 0.9, 0.3, 0.5, 0.0, 0.0, 0.0, 0.0],
            bin_hz: 1.0,
            input_bins: vec![],
        };
        let single = TimeSeries::new(tone(16, 3, 0.4), FS).unwrap();
        assert_abs_diff_eq!(
            frequency_alignment(&content, &single).unwrap(),
            0.5,
            epsilon = 1e-12
        );
        let pair: Vec<f64> = tone(16, 1, 0.0)
            .iter()
            .zip(tone(16, 2, 1.0))
            .map(|(a, b)| a + b)
            .collect();
        let pair = TimeSeries::new(pair, FS).unwrap();
        assert_abs_diff_eq!(
            frequency_alignment(&content, &pair).unwrap(),
            0.6,
            epsilon = 1e-12
        );
        let full = FrequencyContent {
            chi: vec![1.0; 8],
            ..content.clone()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise =
            TimeSeries::new((0..16).map(|_| rng.gen_range(-1.0..1.0)).collect(), FS).unwrap();
        assert_abs_diff_eq!(
            frequency_alignment(&full, &noise).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        let flat = TimeSeries::new(vec![2.0; 16], FS).unwrap();
        assert!(matches!(
            frequency_alignment(&content, &flat),
            Err(Error::ZeroEnergyTask)
        ));
        assert!(matches!(
            frequency_alignment(&content, &TimeSeries::new(vec![0.0, 1.0], FS).unwrap()),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn nonlinearity_examples() {
        let base = |chi: Vec<f64>| FrequencyContent {
            chi,
            bin_hz: 1.0,
            input_bins: vec![1, 2],
        };
        assert_eq!(nonlinearity(&base(vec![0.0, 0.4, 0.2, 0.0])).unwrap(), 0.0);
        assert_eq!(nonlinearity(&base(vec![0.3, 0.0, 0.0, 0.5])).unwrap(), 1.0);
        assert_eq!(
            nonlinearity(&base(vec![0.25, 0.25, 0.25, 0.25])).unwrap(),
            0.5
        );
        assert!(matches!(
            nonlinearity(&base(vec![0.0; 4])),
            Err(Error::EmptyContent)
        ));
    }

    #[test]
    fn input_bins_use_nearest_bin_and_guard() {
        let bins = input_bins(&[9.3, 24.1], 500.0 / 1200.0, 600, 1);
        assert_eq!(bins, vec![21, 22, 23, 57, 58, 59]);
        assert_eq!(input_bins(&[0.1], 1.0, 10, 1), vec![0, 1]);
        let c = FrequencyContent {
            chi: vec![0.0; 6],
            bin_hz: 1.0,
            input_bins: vec![],
        }
        .with_input_bins(vec![4, 1, 4, 9]);
        assert_eq!(c.input_bins, vec![1, 4]);
        assert_eq!(c.nonlinear_bins(), vec![0, 2, 3, 5]);
    }

    #[test]
    fn bin_centred_input_has_zero_nonlinearity() {
        let len = 1200;
        let x: Vec<f64> = tone(len, 22, 0.0)
            .iter()
            .zip(tone(len, 58, 0.0))
            .map(|(a, b)| a + b)
            .collect();
        let b = dft_basis(&state(DMatrix::from_column_slice(len, 1, &x))).unwrap();
        let c = sensor_content(&b, 0)
            .unwrap()
            .with_input_tones(&[22.0 * b.bin_hz(), 58.0 * b.bin_hz()], 1);
        assert!(nonlinearity(&c).unwrap() < 1e-12);
    }

    #[test]
    fn hann_taper_confines_leakage_of_off_bin_tones() {
        let len = 1200;
        let fs = 500.0;
        let x: Vec<f64> = (0..len)
            .map(|t| (2.0 * PI * 9.3 * t as f64 / fs).sin())
            .collect();
        let m = DMatrix::from_column_slice(len, 1, &x);
        let nu = |taper| {
            let xf = spectrum_matrix(&m, taper).unwrap();
            let c = column_content(&xf.column(0).into_owned(), fs / len as f64)
                .with_input_tones(&[9.3], 1);
            nonlinearity(&c).unwrap()
        };
        assert!(nu(Taper::Hann) < 0.02, "{}", nu(Taper::Hann));
        assert!(nu(Taper::Rectangular) > nu(Taper::Hann));
    }

    #[test]
    fn snr_cap_and_constructed_split() {
        let len = 200;
        let n = len / 2;
        // Orthonormal columns at distinct bins.
        let unit = |bin: usize, phase: f64| -> Vec<f64> {
            tone(len, bin, phase)
                .iter()
                .map(|v| v / (n as f64).sqrt())
                .collect()
        };
        let u = [unit(3, 0.0), unit(8, 0.0), unit(8, -PI / 2.0)];
        let sigma = [100.0, 10.0, 0.05];
        let phi = 20.0f64.atan();
        let v = [
            [0.0, phi.cos(), phi.sin()],
            [0.0, -phi.sin(), phi.cos()],
            [1.0, 0.0, 0.0],
        ];
        let data = DMatrix::from_fn(len, 3, |t, j| {
            (0..3).map(|r| u[r][t] * sigma[r] * v[j][r]).sum()
        });
        let x = state(data);
        let b = dft_basis(&x).unwrap();
        assert_eq!(b.effective_rank(), 2);
        let db = snr(&x, &b).unwrap();
        assert_abs_diff_eq!(db[0], 20.0, epsilon = 0.01);
        assert_eq!(db[2], SNR_CAP_DB);

        let exact = state(DMatrix::from_fn(len, 3, |t, j| u[0][t] * (j + 1) as f64));
        let b = dft_basis(&exact).unwrap();
        assert!(snr(&exact, &b).unwrap().iter().all(|&d| d == SNR_CAP_DB));
    }

    #[test]
    fn snr_equal_split_is_zero_db() {
        assert_abs_diff_eq!(snr_db(2.5, 2.5), 0.0, epsilon = 1e-12);
        assert_eq!(snr_db(0.0, 0.0), -SNR_CAP_DB);
        assert_eq!(snr_db(1.0, 0.0), SNR_CAP_DB);
    }

    #[test]
    fn low_rank_state_of_exact_low_rank_input_is_identity() {
        let len = 64;
        let data = DMatrix::from_fn(len, 3, |t, j| 2.0 + tone(len, 4, 0.2 * j as f64)[t]);
        let x = state(data.clone());
        let b = dft_basis(&x).unwrap();
        let back = low_rank_state(&x, &b).unwrap();
        assert_abs_diff_eq!((back.data() - data).amax(), 0.0, epsilon = 1e-10);
    }

    proptest! {
        #[test]
        fn content_invariant_under_invertible_recombination(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = DMatrix::from_fn(64, 3, |_, _| rng.gen_range(-1.0..1.0));
            let mut a = DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
            for i in 0..3 {
                a[(i, i)] += 3.0;
            }
            let c1 = frequency_content(&dft_basis(&state(x.clone())).unwrap());
            let c2 = frequency_content(&dft_basis(&state(x * a)).unwrap());
            for (p, q) in c1.chi.iter().zip(&c2.chi) {
                prop_assert!((p - q).abs() < 1e-8);
            }
        }

        #[test]
        fn adding_exact_low_rank_structure_keeps_snr(seed in 0u64..100, extra in 0.1f64..20.0) {
            let len = 100;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sig = tone(len, 6, rng.gen_range(0.0..PI));
            let res = tone(len, 20, 0.0);
            // Residual orthogonal to the signal across time and across sensors.
            let (a, b, eps) = (5.0, 10.0, 0.05);
            let col = |t: usize, j: usize| match j {
                0 => a * sig[t] + eps * res[t],
                1 => b * sig[t] - eps * a / b * res[t],
                _ => extra * sig[t],
            };
            let x = state(DMatrix::from_fn(len, 2, col));
            let before = snr(&x, &dft_basis(&x).unwrap()).unwrap();
            let x2 = state(DMatrix::from_fn(len, 3, col));
            let after = snr(&x2, &dft_basis(&x2).unwrap()).unwrap();
            prop_assert!((before[0] - 20.0 * (a / eps).log10()).abs() < 1e-6);
            for j in 0..2 {
                prop_assert!((before[j] - after[j]).abs() < 1e-6, "{before:?} {after:?}");
            }
        }
    }
}
