//! Greedy frequency-aligned sensor selection and the random-subset baseline.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{spectrum_matrix, task_power, Taper};
use crate::pipeline::{format_value, write_json, write_table_csv, SplitData};
use crate::readout::{r_squared, Ridge};
use crate::state::{SensorMeta, StateMatrix};

pub const DEFAULT_TRIALS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub trials: usize,
    /// Subset sizes that get a baseline; `None` means every size.
    pub baseline_sizes: Option<Vec<usize>>,
    pub ridge: Ridge,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            trials: DEFAULT_TRIALS,
            baseline_sizes: None,
            ridge: Ridge::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub size: usize,
    pub r2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Sensor ids in the order greedy added them.
    pub order: Vec<String>,
    /// Subset alignment after each addition.
    pub alignment_trace: Vec<f64>,
    /// Test R² of the greedy prefix of each size, starting at size 1.
    pub r2_by_size: Vec<f64>,
    pub best_size: usize,
    pub baseline: Vec<Baseline>,
    pub sensors: Vec<SensorMeta>,
}

impl SelectionResult {
    pub fn alignment_monotone(&self) -> bool {
        self.alignment_trace
            .windows(2)
            .all(|w| w[1] >= w[0] - 1e-12)
    }

    pub fn best_sensors(&self) -> Vec<SensorMeta> {
        self.order[..self.best_size]
            .iter()
            .filter_map(|id| self.sensors.iter().find(|s| &s.id == id).cloned())
            .collect()
    }
}

/// A column whose residual after projection onto the current span is below
/// this fraction of its own norm adds no new direction.
pub const SPAN_TOLERANCE: f64 = 1e-8;

/// Alignment of column subsets with one task. The subset's centered
/// spectra are orthonormalized column by column; each new direction `q`
/// adds `sum_r w_r q_r^2`, with `w` the per-row task power weights. A
/// superset only adds directions, so the alignment cannot drop.
pub struct AlignmentModel {
    xf: DMatrix<f64>,
    weights: DVector<f64>,
}

impl AlignmentModel {
    pub fn new(x: &StateMatrix, task: &[f64]) -> Result<Self> {
        if task.len() != x.len() {
            return Err(Error::LengthMismatch {
                what: "state rows vs task samples",
                left: x.len(),
                right: task.len(),
            });
        }
        let xf = spectrum_matrix(x.data(), Taper::Rectangular)?;
        let power = task_power(task)?;
        let total: f64 = power.iter().sum();
        if total <= 0.0 {
            return Err(Error::ZeroEnergyTask);
        }
        let n = power.len();
        let weights = DVector::from_fn(xf.nrows(), |r, _| power[r % n] / (2.0 * total));
        Ok(Self { xf, weights })
    }

    pub fn n_sensors(&self) -> usize {
        self.xf.ncols()
    }

    /// Unit direction column `j` adds to `basis`, if any. Two passes of
    /// Gram-Schmidt keep the basis orthogonal to working precision.
    fn direction(&self, basis: &[DVector<f64>], j: usize) -> Option<DVector<f64>> {
        let mut r = self.xf.column(j).into_owned();
        let norm = r.norm();
        if norm == 0.0 {
            return None;
        }
        for _ in 0..2 {
            for q in basis {
                let c = q.dot(&r);
                r.axpy(-c, q, 1.0);
            }
        }
        let rn = r.norm();
        (rn > SPAN_TOLERANCE * norm).then(|| r / rn)
    }

    fn gain(&self, q: &DVector<f64>) -> f64 {
        q.iter()
            .zip(self.weights.iter())
            .map(|(v, w)| w * v * v)
            .sum()
    }

    pub fn alignment(&self, subset: &[usize]) -> f64 {
        let mut basis = Vec::with_capacity(subset.len());
        let mut total = 0.0;
        for &j in subset {
            if let Some(q) = self.direction(&basis, j) {
                total += self.gain(&q);
                basis.push(q);
            }
        }
        total.min(1.0)
    }
}

/// Ridge fits of column subsets through precomputed centered moments.
struct SubsetFitter<'a> {
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    means: Vec<f64>,
    y_mean: f64,
    test: &'a StateMatrix,
    test_target: &'a [f64],
    ridge: Ridge,
}

impl<'a> SubsetFitter<'a> {
    fn new(split: &'a SplitData, ridge: Ridge) -> Self {
        let xc = split.train.centered();
        let y = split.train_target.values();
        let y_mean = y.iter().sum::<f64>() / y.len() as f64;
        let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - y_mean));
        Self {
            gram: xc.transpose() * &xc,
            xty: xc.transpose() * yc,
            means: split.train.data().column_iter().map(|c| c.mean()).collect(),
            y_mean,
            test: &split.test,
            test_target: split.test_target.values(),
            ridge,
        }
    }

    fn weights(&self, subset: &[usize]) -> DVector<f64> {
        let g = self.gram.select_rows(subset).select_columns(subset);
        let b = self.xty.select_rows(subset);
        let lambda = match self.ridge {
            Ridge::Absolute(l) => l,
            Ridge::Relative(c) => c * g.trace() / subset.len() as f64,
        };
        let shifted = &g + DMatrix::identity(subset.len(), subset.len()) * lambda;
        if lambda > 0.0 {
            if let Some(ch) = shifted.clone().cholesky() {
                return ch.solve(&b);
            }
        }
        shifted
            .svd(true, true)
            .solve(
                &b,
                f64::EPSILON * g.amax().max(f64::MIN_POSITIVE) * subset.len() as f64,
            )
            .unwrap_or_else(|_| DVector::zeros(subset.len()))
    }

    fn test_r2(&self, subset: &[usize]) -> Result<f64> {
        let w = self.weights(subset);
        let bias = self.y_mean
            - subset
                .iter()
                .zip(w.iter())
                .map(|(&j, wj)| wj * self.means[j])
                .sum::<f64>();
        let data = self.test.data();
        let pred: Vec<f64> = (0..data.nrows())
            .map(|t| {
                bias + subset
                    .iter()
                    .zip(w.iter())
                    .map(|(&j, wj)| wj * data[(t, j)])
                    .sum::<f64>()
            })
            .collect();
        r_squared(self.test_target, &pred)
    }
}

/// Training window with an even sample count, dropping the first sample
/// when needed.
fn even_train(split: &SplitData) -> Result<(StateMatrix, Vec<f64>)> {
    let x = &split.train;
    let y = split.train_target.values();
    if x.len().is_multiple_of(2) {
        return Ok((x.clone(), y.to_vec()));
    }
    Ok((x.rows(1, x.len())?, y[1..].to_vec()))
}

/// Rank every sensor by greedy alignment gain, then score each prefix.
pub fn greedy_select(split: &SplitData, ridge: Ridge) -> Result<SelectionResult> {
    let (x, task) = even_train(split)?;
    let model = AlignmentModel::new(&x, &task)?;
    let n = model.n_sensors();
    let mut chosen: Vec<usize> = Vec::with_capacity(n);
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut trace = Vec::with_capacity(n);
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(n);
    let mut total = 0.0;
    while !remaining.is_empty() {
        let options: Vec<(f64, Option<DVector<f64>>)> = remaining
            .par_iter()
            .map(|&c| {
                let q = model.direction(&basis, c);
                (q.as_ref().map_or(0.0, |q| model.gain(q)), q)
            })
            .collect();
        let mut best = 0;
        for (i, (g, _)) in options.iter().enumerate() {
            if *g > options[best].0 {
                best = i;
            }
        }
        let (gain, q) = options.into_iter().nth(best).expect("candidate");
        basis.extend(q);
        total += gain;
        chosen.push(remaining.remove(best));
        trace.push(f64::min(total, 1.0));
    }
    let fitter = SubsetFitter::new(split, ridge);
    let r2_by_size = (1..=n)
        .into_par_iter()
        .map(|m| fitter.test_r2(&chosen[..m]))
        .collect::<Result<Vec<_>>>()?;
    let mut best_size = 1;
    for (i, &r) in r2_by_size.iter().enumerate() {
        if r > r2_by_size[best_size - 1] {
            best_size = i + 1;
        }
    }
    Ok(SelectionResult {
        order: chosen.iter().map(|&j| x.sensors()[j].id.clone()).collect(),
        alignment_trace: trace,
        r2_by_size,
        best_size,
        baseline: Vec::new(),
        sensors: x.sensors().to_vec(),
    })
}

/// Test R² of `trials` uniformly drawn subsets of `size` sensors. Trial `i`
/// draws from its own ChaCha stream, so results do not depend on threading.
pub fn random_baseline(
    split: &SplitData,
    size: usize,
    trials: usize,
    seed: u64,
    ridge: Ridge,
) -> Result<Vec<f64>> {
    let n = split.train.n_sensors();
    if size == 0 || size > n {
        return Err(Error::InvalidSubsetSize { size, count: n });
    }
    let fitter = SubsetFitter::new(split, ridge);
    (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial as u64);
            let mut subset = sample(&mut rng, n, size).into_vec();
            subset.sort_unstable();
            fitter.test_r2(&subset)
        })
        .collect()
}

/// Greedy ranking plus baselines at the configured sizes. Each size uses
/// the seed offset by its size.
pub fn select(split: &SplitData, config: &SelectionConfig, seed: u64) -> Result<SelectionResult> {
    let mut result = greedy_select(split, config.ridge)?;
    let n = split.train.n_sensors();
    let sizes = config
        .baseline_sizes
        .clone()
        .unwrap_or_else(|| (1..=n).collect());
    for size in sizes {
        let r2 = random_baseline(
            split,
            size,
            config.trials,
            seed.wrapping_add(size as u64),
            config.ridge,
        )?;
        result.baseline.push(Baseline { size, r2 });
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub size: usize,
    pub greedy_r2: f64,
    pub baseline_min: Option<f64>,
    pub baseline_median: Option<f64>,
    pub baseline_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub best_size: usize,
    pub best_sensors: Vec<SensorMeta>,
    pub r2_best: f64,
    pub r2_full: f64,
    pub alignment_monotone: bool,
    pub curve: Vec<CurveRow>,
    pub result: SelectionResult,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    })
}

pub fn selection_report(result: &SelectionResult) -> SelectionReport {
    let curve = result
        .r2_by_size
        .iter()
        .enumerate()
        .map(|(i, &greedy_r2)| {
            let size = i + 1;
            let base = result
                .baseline
                .iter()
                .find(|b| b.size == size)
                .map(|b| b.r2.as_slice())
                .unwrap_or(&[]);
            CurveRow {
                size,
                greedy_r2,
                baseline_min: base.iter().copied().reduce(f64::min),
                baseline_median: median(base),
                baseline_max: base.iter().copied().reduce(f64::max),
            }
        })
        .collect();
    SelectionReport {
        best_size: result.best_size,
        best_sensors: result.best_sensors(),
        r2_best: result.r2_by_size[result.best_size - 1],
        r2_full: *result.r2_by_size.last().expect("at least one sensor"),
        alignment_monotone: result.alignment_monotone(),
        curve,
        result: result.clone(),
    }
}

impl SelectionReport {
    pub fn write(&self, json_path: &Path, csv_path: &Path) -> Result<()> {
        write_json(json_path, self)?;
        let opt = |v: Option<f64>| v.map(format_value).unwrap_or_default();
        let rows: Vec<Vec<String>> = self
            .curve
            .iter()
            .map(|r| {
                vec![
                    r.size.to_string(),
                    format_value(r.greedy_r2),
                    opt(r.baseline_min),
                    opt(r.baseline_median),
                    opt(r.baseline_max),
                ]
            })
            .collect();
        write_table_csv(
            csv_path,
            &[
                "size",
                "greedy_r2",
                "baseline_min",
                "baseline_median",
                "baseline_max",
            ],
            &rows,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::split_train_test;
    use crate::readout::{predict, train};
    use crate::series::TimeSeries;
    use crate::state::SensorKind;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use std::f64::consts::PI;

    const LEN: usize = 200;
    /// Tests split 50/50, so tones are bin-centred on the training half.
    const HALF: usize = LEN / 2;

    fn meta(n: usize) -> Vec<SensorMeta> {
        (0..n)
            .map(|j| SensorMeta {
                id: format!("s{j}"),
                kind: SensorKind::Other,
                row: j / 4,
                col: j % 4,
            })
            .collect()
    }

    fn state(data: DMatrix<f64>) -> StateMatrix {
        let n = data.ncols();
        StateMatrix::new(data, 500.0, meta(n)).unwrap()
    }

    fn wave(bin: f64, phase: f64, t: usize, len: usize) -> f64 {
        (2.0 * PI * bin * t as f64 / len as f64 + phase).cos()
    }

    /// Sensors mixing a few bins with random phases and weights, plus a
    /// multi-bin task.
    fn random_instance(n: usize, seed: u64) -> (StateMatrix, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bins = [3.0, 5.0, 8.0, 11.0, 14.0, 17.0];
        let mix: Vec<Vec<(f64, f64, f64)>> = (0..n)
            .map(|_| {
                bins.iter()
                    .map(|&b| {
                        (
                            b,
                            rng.gen_range(0.0..1.0f64).powi(3),
                            rng.gen_range(0.0..2.0 * PI),
                        )
                    })
                    .collect()
            })
            .collect();
        let data = DMatrix::from_fn(LEN, n, |t, j| {
            mix[j]
                .iter()
                .map(|&(b, a, p)| a * wave(b, p, t, HALF))
                .sum()
        });
        let task = (0..LEN)
            .map(|t| {
                wave(3.0, 0.2, t, HALF)
                    + 0.5 * wave(8.0, 1.0, t, HALF)
                    + 0.3 * wave(14.0, 2.0, t, HALF)
            })
            .collect();
        (state(data), task)
    }

    /// Subset alignment computed the direct way: orthonormal basis of the
    /// subset's spectra by QR, then the task-weighted projector diagonal.
    fn qr_alignment(x: &StateMatrix, task: &[f64], subset: &[usize]) -> f64 {
        let sub = x.select(subset).unwrap();
        let xf = spectrum_matrix(sub.data(), Taper::Rectangular).unwrap();
        let q = xf.qr().q();
        let power = task_power(task).unwrap();
        let total: f64 = power.iter().sum();
        let n = power.len();
        (0..q.nrows())
            .map(|r| power[r % n] / (2.0 * total) * q.row(r).norm_squared())
            .sum()
    }

    fn subsets(n: usize, size: usize) -> Vec<Vec<usize>> {
        (0u32..1 << n)
            .filter(|m| m.count_ones() as usize == size)
            .map(|m| (0..n).filter(|j| m >> j & 1 == 1).collect())
            .collect()
    }

    #[test]
    fn incremental_span_matches_qr_projector() {
        for seed in 0..5 {
            let (x, task) = random_instance(6, seed);
            let model = AlignmentModel::new(&x, &task).unwrap();
            for size in 1..=4 {
                for s in subsets(6, size) {
                    assert_abs_diff_eq!(
                        model.alignment(&s),
                        qr_alignment(&x, &task, &s),
                        epsilon = 1e-9
                    );
                }
            }
        }
    }

    #[test]
    fn first_pick_has_highest_single_alignment() {
        // Energy fractions at the task bin of 0.9, 0.3 and 0.5.
        let fractions = [0.3, 0.9, 0.5];
        let data = DMatrix::from_fn(LEN, 3, |t, j| {
            let f: f64 = fractions[j];
            f.sqrt() * wave(5.0, 0.4 * j as f64, t, HALF)
                + (1.0 - f).sqrt() * wave(9.0 + j as f64, 0.0, t, HALF)
        });
        let x = state(data);
        let task: Vec<f64> = (0..LEN).map(|t| wave(5.0, 0.0, t, HALF)).collect();
        let model = AlignmentModel::new(&x, &task).unwrap();
        for (j, f) in fractions.iter().enumerate() {
            assert_abs_diff_eq!(model.alignment(&[j]), 0.5 * f, epsilon = 1e-9);
        }
        let split = split_train_test(&x, &TimeSeries::new(task, 500.0).unwrap(), 0.5).unwrap();
        let r = greedy_select(&split, Ridge::default()).unwrap();
        assert_eq!(r.order[0], "s1");
    }

    #[test]
    fn duplicate_column_ranked_after_useful_sensors() {
        let data = DMatrix::from_fn(LEN, 3, |t, j| match j {
            0 | 1 => wave(5.0, 0.0, t, HALF),
            _ => wave(5.0, PI / 2.0, t, HALF) + 0.2 * wave(9.0, 0.0, t, HALF),
        });
        let x = state(data);
        let task: Vec<f64> = (0..LEN).map(|t| wave(5.0, 0.7, t, HALF)).collect();
        let split = split_train_test(&x, &TimeSeries::new(task, 500.0).unwrap(), 0.5).unwrap();
        let r = greedy_select(&split, Ridge::default()).unwrap();
        assert_eq!(r.order, vec!["s0", "s2", "s1"]);
        assert_abs_diff_eq!(r.alignment_trace[2], r.alignment_trace[1], epsilon = 1e-9);
    }

    #[test]
    fn greedy_pair_against_exhaustive_oracle() {
        let (x, task) = random_instance(5, 11);
        let split =
            split_train_test(&x, &TimeSeries::new(task.clone(), 500.0).unwrap(), 0.5).unwrap();
        let r = greedy_select(&split, Ridge::default()).unwrap();
        let (xe, te) = even_train(&split).unwrap();
        let best = subsets(5, 2)
            .iter()
            .map(|s| qr_alignment(&xe, &te, s))
            .fold(0.0, f64::max);
        // Greedy need not be optimal; the oracle can only do better.
        assert!(best >= r.alignment_trace[1] - 1e-9);
        let pair: Vec<usize> = r.order[..2]
            .iter()
            .map(|id| xe.position(id).unwrap())
            .collect();
        assert_abs_diff_eq!(
            qr_alignment(&xe, &te, &pair),
            r.alignment_trace[1],
            epsilon = 1e-9
        );
    }

    #[test]
    fn order_is_a_permutation_and_best_size_maximizes_r2() {
        let (x, task) = random_instance(8, 3);
        let split = split_train_test(&x, &TimeSeries::new(task, 500.0).unwrap(), 0.5).unwrap();
        let r = greedy_select(&split, Ridge::default()).unwrap();
        let mut ids = r.order.clone();
        ids.sort();
        assert_eq!(
            ids,
            x.sensor_ids()
                .into_iter()
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect::<Vec<_>>()
        );
        let best = r.r2_by_size[r.best_size - 1];
        assert!(r.r2_by_size.iter().all(|&v| v <= best));
        assert!(r.r2_by_size[..r.best_size - 1].iter().all(|&v| v < best));
    }

    #[test]
    fn subset_fits_match_readout_training() {
        let (x, task) = random_instance(6, 4);
        let split = split_train_test(&x, &TimeSeries::new(task, 500.0).unwrap(), 0.6).unwrap();
        let fitter = SubsetFitter::new(&split, Ridge::default());
        for s in [vec![0], vec![1, 4], vec![0, 2, 3, 5]] {
            let sub = SplitData {
                train: split.train.select(&s).unwrap(),
                train_target: split.train_target.clone(),
                test: split.test.select(&s).unwrap(),
                test_target: split.test_target.clone(),
            };
            let model = train(&sub, Ridge::default()).unwrap();
            let pred = predict(&model, &sub.test).unwrap();
            let direct = r_squared(sub.test_target.values(), pred.values()).unwrap();
            assert_abs_diff_eq!(fitter.test_r2(&s).unwrap(), direct, epsilon = 1e-8);
        }
    }

    #[test]
    fn baseline_examples() {
        let (x, task) = random_instance(5, 5);
        let split = split_train_test(&x, &TimeSeries::new(task, 500.0).unwrap(), 0.5).unwrap();
        let full = random_baseline(&split, 5, 4, 1, Ridge::default()).unwrap();
        assert!(full.windows(2).all(|w| w[0] == w[1]));
        assert!(random_baseline(&split, 2, 0, 1, Ridge::default())
            .unwrap()
            .is_empty());
        let a = random_baseline(&split, 2, 50, 9, Ridge::default()).unwrap();
        let b = random_baseline(&split, 2, 50, 9, Ridge::default()).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            random_baseline(&split, 6, 1, 1, Ridge::default()),
            Err(Error::InvalidSubsetSize { size: 6, count: 5 })
        ));
    }

    #[test]
    fn zero_energy_task_rejected() {
        let (x, _) = random_instance(3, 1);
        let split =
            split_train_test(&x, &TimeSeries::new(vec![1.0; LEN], 500.0).unwrap(), 0.5).unwrap();
        assert!(matches!(
            greedy_select(&split, Ridge::default()),
            Err(Error::ZeroEnergyTask)
        ));
    }

    #[test]
    fn report_summarizes_and_round_trips() {
        let (x, task) = random_instance(6, 6);
        let split = split_train_test(&x, &TimeSeries::new(task, 500.0).unwrap(), 0.5).unwrap();
        let config = SelectionConfig {
            trials: 20,
            baseline_sizes: Some(vec![2, 6]),
            ridge: Ridge::default(),
        };
        let result = select(&split, &config, 42).unwrap();
        let report = selection_report(&result);
        assert_eq!(report.curve.len(), 6);
        assert!(report.curve[0].baseline_median.is_none());
        let row = &report.curve[1];
        assert!(row.baseline_min.unwrap() <= row.baseline_median.unwrap());
        assert!(row.baseline_median.unwrap() <= row.baseline_max.unwrap());
        assert_eq!(report.best_sensors.len(), report.best_size);
        assert_eq!(report.r2_full, result.r2_by_size[5]);

        let dir = tempfile::tempdir().unwrap();
        report
            .write(&dir.path().join("sel.json"), &dir.path().join("sel.csv"))
            .unwrap();
        let back: SelectionReport =
            crate::pipeline::read_json(&dir.path().join("sel.json")).unwrap();
        assert_eq!(back, report);
        let csv = std::fs::read_to_string(dir.path().join("sel.csv")).unwrap();
        assert!(csv.starts_with("size,greedy_r2,baseline_min,baseline_median,baseline_max\n"));
        assert_eq!(csv.lines().count(), 7);
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }

    /// Span alignment is not submodular (two phase-complementary sensors
    /// are worth more together than apart), so the (1 - 1/e) gap is an
    /// empirical property. Over this sweep it holds on all but the listed
    /// instances, where greedy still never beats exhaustive search.
    #[test]
    fn greedy_within_submodular_gap_on_sweep() {
        let gap = 1.0 - 1.0 / std::f64::consts::E;
        let mut misses = Vec::new();
        for seed in 0..400u64 {
            for n in 4..10 {
                let (x, task) = random_instance(n, seed);
                let split =
                    split_train_test(&x, &TimeSeries::new(task, 500.0).unwrap(), 0.5).unwrap();
                let r = greedy_select(&split, Ridge::default()).unwrap();
                let (xe, te) = even_train(&split).unwrap();
                let model = AlignmentModel::new(&xe, &te).unwrap();
                let mut within = true;
                for size in 1..=n {
                    let best = subsets(n, size)
                        .iter()
                        .map(|s| model.alignment(s))
                        .fold(0.0, f64::max);
                    let greedy = r.alignment_trace[size - 1];
                    assert!(best >= greedy - 1e-9, "seed {seed} n {n} size {size}");
                    within &= greedy >= gap * best - 1e-9;
                }
                if !within {
                    misses.push((seed, n));
                }
            }
        }
        assert_eq!(misses, [(141, 8), (394, 7), (394, 8), (394, 9)]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn greedy_is_deterministic_and_dominates_singles(seed in 0u64..1000) {
            let (x, task) = random_instance(7, seed);
            let split = split_train_test(&x, &TimeSeries::new(task, 500.0).unwrap(), 0.5).unwrap();
            let a = greedy_select(&split, Ridge::default()).unwrap();
            let b = greedy_select(&split, Ridge::default()).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!(a.alignment_trace.iter().all(|&v| v <= 1.0));
            let best_single = a.alignment_trace[0];
            prop_assert!(a.alignment_trace.iter().all(|&v| v >= best_single - 1e-9));
        }

        #[test]
        fn supersets_never_lose_alignment(seed in 0u64..1000, mask in 1u32..255, extra in 0usize..8) {
            let (x, task) = random_instance(8, seed);
            let model = AlignmentModel::new(&x, &task).unwrap();
            let s: Vec<usize> = (0..8).filter(|j| mask >> j & 1 == 1).collect();
            let mut bigger = s.clone();
            if !bigger.contains(&extra) {
                bigger.push(extra);
            }
            prop_assert!(model.alignment(&bigger) >= model.alignment(&s) - 1e-12);
        }
    }
}
