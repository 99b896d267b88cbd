//! Lagged input correlation and pairwise sensor correlation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;
use crate::state::StateMatrix;

/// Largest delay, in samples, considered by the memory metric.
pub const MAX_LAG: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Memory {
    /// `tau_opt * |r_opt|`.
    pub m: f64,
    pub tau_opt: usize,
    pub r_opt: f64,
}

/// Pearson correlation with the means taken over the compared segments.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len().min(b.len());
    if n < 2 {
        return None;
    }
    let (a, b) = (&a[..n], &b[..n]);
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Correlation of `y(t)` with `input(t - tau)` for `tau = 0..=MAX_LAG`.
/// Samples before either series' `valid_from` are skipped.
pub fn lagged_correlation(y: &TimeSeries, input: &TimeSeries) -> Result<Vec<f64>> {
    if y.len() != input.len() {
        return Err(Error::LengthMismatch {
            what: "memory signals",
            left: y.len(),
            right: input.len(),
        });
    }
    let start = y.valid_from().max(input.valid_from());
    let len = y.len();
    if len < start + MAX_LAG + 2 {
        return Err(Error::TooShort {
            need: start + MAX_LAG + 2,
            got: len,
        });
    }
    let (yv, uv) = (y.values(), input.values());
    (0..=MAX_LAG)
        .map(|tau| {
            let from = start + tau;
            pearson(&yv[from..], &uv[from - tau..len - tau]).ok_or_else(|| {
                let which = if is_constant(&yv[from..]) {
                    y.label()
                } else {
                    input.label()
                };
                Error::ConstantSignal(if which.is_empty() {
                    "memory input".into()
                } else {
                    which.to_owned()
                })
            })
        })
        .collect()
}

fn is_constant(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] == w[1])
}

/// Optimal delay and its weighted correlation magnitude. Magnitudes within
/// round-off of each other count as ties and resolve to the smaller delay.
pub fn memory(y: &TimeSeries, input: &TimeSeries) -> Result<Memory> {
    let r = lagged_correlation(y, input)?;
    let mut best = 0;
    for (tau, v) in r.iter().enumerate() {
        if v.abs() > r[best].abs() + 1e-12 {
            best = tau;
        }
    }
    Ok(Memory {
        m: best as f64 * r[best].abs(),
        tau_opt: best,
        r_opt: r[best],
    })
}

/// Zero-lag Pearson matrix. Fails on a constant column, naming the sensor.
pub fn correlation_matrix_signed(x: &StateMatrix) -> Result<DMatrix<f64>> {
    let centered = x.centered();
    let mut norms = Vec::with_capacity(x.n_sensors());
    for (j, col) in centered.column_iter().enumerate() {
        let norm = col.norm();
        if norm == 0.0 {
            return Err(Error::ConstantSignal(x.sensors()[j].id.clone()));
        }
        norms.push(norm);
    }
    let mut c = centered.transpose() * &centered;
    let n = x.n_sensors();
    for i in 0..n {
        for j in 0..n {
            c[(i, j)] = (c[(i, j)] / (norms[i] * norms[j])).clamp(-1.0, 1.0);
        }
        c[(i, i)] = 1.0;
    }
    Ok(c)
}

/// Absolute zero-lag Pearson matrix.
pub fn correlation_matrix(x: &StateMatrix) -> Result<DMatrix<f64>> {
    Ok(correlation_matrix_signed(x)?.abs())
}
