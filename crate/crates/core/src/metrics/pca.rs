//! PCA over sensors, using each sensor's magnitude spectrum as its feature
//! vector.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::spectral::{spectrum_matrix, Taper};
use crate::error::{Error, Result};
use crate::state::StateMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcaNormalize {
    /// Scale every spectrum to unit norm so only its shape matters.
    #[default]
    Unit,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaResult {
    /// Principal directions, one row per component, in bin space.
    pub components: DMatrix<f64>,
    /// Variance fraction per component, descending. All zero for a
    /// degenerate cloud.
    pub explained_variance: Vec<f64>,
    /// Sensor coordinates, `N x n_components`.
    pub scores: DMatrix<f64>,
}

impl PcaResult {
    pub fn cumulative_explained(&self) -> Vec<f64> {
        self.explained_variance
            .iter()
            .scan(0.0, |acc, v| {
                *acc += v;
                Some(*acc)
            })
            .collect()
    }

    /// First `k` scores of one sensor, zero-padded.
    pub fn leading_scores<const K: usize>(&self, sensor: usize) -> [f64; K] {
        let mut out = [0.0; K];
        for (k, o) in out.iter_mut().enumerate().take(self.scores.ncols()) {
            *o = self.scores[(sensor, k)];
        }
        out
    }
}

/// Per-sensor magnitude spectra as rows, `N x n`.
pub fn magnitude_spectra(x: &StateMatrix, normalize: PcaNormalize) -> Result<DMatrix<f64>> {
    let xf = spectrum_matrix(x.data(), Taper::Rectangular)?;
    let n = xf.nrows() / 2;
    let mut f = DMatrix::from_fn(x.n_sensors(), n, |j, i| xf[(i, j)].hypot(xf[(n + i, j)]));
    if normalize == PcaNormalize::Unit {
        for mut row in f.row_iter_mut() {
            let norm = row.norm();
            if norm > 0.0 {
                row /= norm;
            }
        }
    }
    Ok(f)
}

pub fn pca_spectra(x: &StateMatrix, normalize: PcaNormalize) -> Result<PcaResult> {
    if x.n_sensors() < 2 {
        return Err(Error::TooShort {
            need: 2,
            got: x.n_sensors(),
        });
    }
    let mut f = magnitude_spectra(x, normalize)?;
    let scale = f.norm_squared();
    let mean = f.row_mean();
    for mut row in f.row_iter_mut() {
        row -= &mean;
    }
    let svd = f.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let energy: Vec<f64> = order
        .iter()
        .map(|&i| svd.singular_values[i].powi(2))
        .collect();
    let total: f64 = energy.iter().sum();
    // Spread at round-off level counts as a degenerate cloud.
    let degenerate = total <= 1e-24 * scale;
    let explained = energy
        .iter()
        .map(|e| if degenerate { 0.0 } else { e / total })
        .collect();
    let components = DMatrix::from_fn(order.len(), v_t.ncols(), |k, i| v_t[(order[k], i)]);
    let scores = DMatrix::from_fn(u.nrows(), order.len(), |j, k| {
        if degenerate {
            0.0
        } else {
            u[(j, order[k])] * svd.singular_values[order[k]]
        }
    });
    Ok(PcaResult {
        components,
        explained_variance: explained,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{SensorKind, SensorMeta};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn state(data: DMatrix<f64>) -> StateMatrix {
        let meta = (0..data.ncols())
            .map(|j| SensorMeta {
                id: format!("s{j}"),
                kind: SensorKind::Other,
                row: 0,
                col: j,
            })
            .collect();
        StateMatrix::new(data, 500.0, meta).unwrap()
    }

    #[test]
    fn amplitude_copies_collapse_to_a_point() {
        let len = 128;
        let x = state(DMatrix::from_fn(len, 4, |t, j| {
            (j + 1) as f64
                * ((2.0 * PI * 5.0 * t as f64 / len as f64).cos()
                    + 0.3 * (2.0 * PI * 9.0 * t as f64 / len as f64).sin())
        }));
        let p = pca_spectra(&x, PcaNormalize::Unit).unwrap();
        assert!(p.explained_variance.iter().all(|&v| v == 0.0));
        assert!(p.scores.iter().all(|&v| v == 0.0));
        let raw = pca_spectra(&x, PcaNormalize::Raw).unwrap();
        assert_abs_diff_eq!(raw.explained_variance[0], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn two_spectral_clusters_split_on_first_component() {
        let len = 256;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = state(DMatrix::from_fn(len, 10, |t, j| {
            let bin = if j < 5 { 10.0 } else { 40.0 };
            let w = 2.0 * PI * t as f64 / len as f64;
            (bin * w).cos() + 0.2 * rng.gen_range(0.5..1.5) * (3.0 * bin / 2.0 * w).sin()
        }));
        let p = pca_spectra(&x, PcaNormalize::Unit).unwrap();
        assert!(p.explained_variance[0] > p.explained_variance[1]);
        let s: Vec<f64> = (0..10).map(|j| p.scores[(j, 0)]).collect();
        let side = s[0].signum();
        assert!(s[..5].iter().all(|v| v.signum() == side));
        assert!(s[5..].iter().all(|v| v.signum() == -side));
    }

    #[test]
    fn explained_variance_is_a_sorted_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = state(DMatrix::from_fn(100, 7, |_, _| rng.gen_range(-1.0..1.0)));
        let p = pca_spectra(&x, PcaNormalize::Unit).unwrap();
        assert_abs_diff_eq!(
            p.explained_variance.iter().sum::<f64>(),
            1.0,
            epsilon = 1e-9
        );
        assert!(p.explained_variance.windows(2).all(|w| w[0] >= w[1]));
        assert!(p.explained_variance.iter().all(|&v| v >= 0.0));
        assert_abs_diff_eq!(
            *p.cumulative_explained().last().unwrap(),
            1.0,
            epsilon = 1e-9
        );
        let s: [f64; 3] = p.leading_scores(0);
        assert_eq!(s[0], p.scores[(0, 0)]);
    }

    #[test]
    fn single_sensor_rejected() {
        let x = state(DMatrix::from_fn(16, 1, |t, _| t as f64));
        assert!(matches!(
            pca_spectra(&x, PcaNormalize::Unit),
            Err(Error::TooShort { .. })
        ));
    }
}
