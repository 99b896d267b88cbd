//! Uniformly sampled real-valued signals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A uniformly sampled signal.
///
/// Samples before `valid_from` carry placeholder values (for example the
/// unfilled head of a delayed target) and are excluded from training and
/// scoring windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    values: Vec<f64>,
    sample_rate: f64,
    #[serde(default)]
    label: String,
    #[serde(default)]
    valid_from: usize,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::InvalidSeries(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        if values.len() < 2 {
            return Err(Error::InvalidSeries(format!(
                "need at least 2 samples, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries(format!(
                "non-finite value {} at index {i}",
                values[i]
            )));
        }
        Ok(Self {
            values,
            sample_rate,
            label: String::new(),
            valid_from: 0,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub(crate) fn with_valid_from(mut self, valid_from: usize) -> Self {
        self.valid_from = valid_from.min(self.values.len());
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Index of the first sample usable for training or scoring.
    pub fn valid_from(&self) -> usize {
        self.valid_from
    }

    pub fn rms(&self) -> f64 {
        let sum_sq: f64 = self.values.iter().map(|v| v * v).sum();
        (sum_sq / self.values.len() as f64).sqrt()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Contiguous sub-window `[start, end)`, keeping label and shifting the
    /// validity marker into the new index frame.
    pub fn window(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.values.len() || end - start < 2 {
            return Err(Error::InvalidSeries(format!(
                "window [{start}, {end}) invalid for length {}",
                self.values.len()
            )));
        }
        Ok(Self {
            values: self.values[start..end].to_vec(),
            sample_rate: self.sample_rate,
            label: self.label.clone(),
            valid_from: self.valid_from.saturating_sub(start).min(end - start),
        })
    }

    /// Same samples, new values; used by pointwise transforms.
    pub(crate) fn map_values(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = self.values.iter().map(|&v| f(v)).collect();
        Ok(Self::new(values, self.sample_rate)?
            .with_label(self.label.clone())
            .with_valid_from(self.valid_from))
    }
}
