//! Linear readout layer: ridge regression on mean-centered states, scored by
//! the coefficient of determination.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::SplitData;
use crate::series::TimeSeries;
use crate::state::StateMatrix;

/// Ridge strength. `Relative(c)` resolves to `c * trace(Xc^T Xc) / N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ridge {
    Absolute(f64),
    Relative(f64),
}

impl Default for Ridge {
    fn default() -> Self {
        Ridge::Relative(1e-6)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Resolved absolute ridge strength.
    pub lambda: f64,
    pub trained_on: Vec<String>,
    #[serde(default)]
    pub task: Option<String>,
}

pub fn train(split: &SplitData, ridge: Ridge) -> Result<ReadoutModel> {
    fit(&split.train, &split.train_target, ridge)
}

/// Minimize `||Xc w - yc||^2 + lambda ||w||^2` on centered data; the bias
/// restores the means. Solved through a thin QR of `Xc` followed by an SVD
/// of the triangular factor.
pub fn fit(x: &StateMatrix, y: &TimeSeries, ridge: Ridge) -> Result<ReadoutModel> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            what: "state rows vs target samples",
            left: x.len(),
            right: y.len(),
        });
    }
    let (weights, bias, lambda) = solve_ridge(x.data(), y.values(), ridge)?;
    Ok(ReadoutModel {
        weights,
        bias,
        lambda,
        trained_on: x.sensor_ids(),
        task: (!y.label().is_empty()).then(|| y.label().to_owned()),
    })
}

pub(crate) fn solve_ridge(
    x: &DMatrix<f64>,
    y: &[f64],
    ridge: Ridge,
) -> Result<(Vec<f64>, f64, f64)> {
    let (rows, n) = x.shape();
    let col_means: Vec<f64> = x.column_iter().map(|c| c.mean()).collect();
    let y_mean = y.iter().sum::<f64>() / rows as f64;
    let mut xc = x.clone();
    for (mut col, m) in xc.column_iter_mut().zip(&col_means) {
        col.add_scalar_mut(-m);
    }
    let yc = DVector::from_iterator(rows, y.iter().map(|v| v - y_mean));

    let lambda = match ridge {
        Ridge::Absolute(l) => l,
        Ridge::Relative(c) => c * xc.norm_squared() / n as f64,
    };
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Config(format!(
            "ridge must be finite and >= 0, got {lambda}"
        )));
    }

    let (r, z) = if rows > n {
        let qr = xc.qr();
        let mut qty = yc.clone();
        qr.q_tr_mul(&mut qty);
        (qr.r(), qty.rows(0, n).into_owned())
    } else {
        (xc, yc)
    };
    let svd = r.svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let s = &svd.singular_values;
    let s_max = s.iter().copied().fold(0.0, f64::max);
    let tol = s_max * f64::EPSILON * rows.max(n) as f64;
    if lambda == 0.0 && s_max == 0.0 {
        return Err(Error::RankDeficient);
    }
    let uz = u.transpose() * &z;
    let mut scaled = DVector::zeros(s.len());
    for i in 0..s.len() {
        let si = s[i];
        scaled[i] = if lambda > 0.0 {
            si / (si * si + lambda) * uz[i]
        } else if si > tol {
            uz[i] / si
        } else {
            0.0
        };
    }
    let w = v_t.transpose() * scaled;
    let bias = y_mean - w.iter().zip(&col_means).map(|(a, b)| a * b).sum::<f64>();
    Ok((w.iter().copied().collect(), bias, lambda))
}

/// Affine map of the state; columns are matched to the model by sensor id.
pub fn predict(model: &ReadoutModel, x: &StateMatrix) -> Result<TimeSeries> {
    let index: HashMap<&str, usize> = x
        .sensors()
        .iter()
        .enumerate()
        .map(|(j, s)| (s.id.as_str(), j))
        .collect();
    let missing: Vec<String> = model
        .trained_on
        .iter()
        .filter(|id| !index.contains_key(id.as_str()))
        .cloned()
        .collect();
    let extra: Vec<String> = x
        .sensors()
        .iter()
        .filter(|s| !model.trained_on.contains(&s.id))
        .map(|s| s.id.clone())
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Error::SensorMismatch { missing, extra });
    }
    let data = x.data();
    let mut out = vec![model.bias; x.len()];
    for (id, w) in model.trained_on.iter().zip(&model.weights) {
        let col = data.column(index[id.as_str()]);
        for (o, v) in out.iter_mut().zip(col.iter()) {
            *o += w * v;
        }
    }
    let label = model.task.clone().unwrap_or_default();
    Ok(TimeSeries::new(out, x.sample_rate())?.with_label(label))
}

/// `1 - SS_res / SS_tot`; negative values are returned as-is.
pub fn r_squared(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch {
            what: "r_squared inputs",
            left: y_true.len(),
            right: y_pred.len(),
        });
    }
    if y_true.len() < 2 {
        return Err(Error::TooShort {
            need: 2,
            got: y_true.len(),
        });
    }
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let ss_tot: f64 = y_true.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::ConstantSignal("r_squared target".into()));
    }
    let ss_res: f64 = y_true
        .iter()
        .zip(y_pred)
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Train and test R² of one task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub r2_train: f64,
    pub r2_test: f64,
}

pub fn train_and_score(split: &SplitData, ridge: Ridge) -> Result<(ReadoutModel, Score)> {
    let model = train(split, ridge)?;
    let fit_train = predict(&model, &split.train)?;
    let fit_test = predict(&model, &split.test)?;
    let score = Score {
        r2_train: r_squared(split.train_target.values(), fit_train.values())?,
        r2_test: r_squared(split.test_target.values(), fit_test.values())?,
    };
    Ok((model, score))
}
