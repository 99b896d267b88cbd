//! The reservoir state matrix: T time steps by N sensor readouts.

use std::collections::HashSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    /// Rotation of a horizontal (x-directed) edge.
    EdgeX,
    /// Rotation of a vertical (y-directed) edge.
    EdgeY,
    /// Second difference of displacement along x at a node.
    Kxx,
    /// Second difference of displacement along y at a node.
    Kyy,
    /// Externally measured channel (e.g. a DIC virtual gauge).
    #[serde(other)]
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorMeta {
    pub id: String,
    pub kind: SensorKind,
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateMatrix {
    data: DMatrix<f64>,
    sample_rate: f64,
    sensors: Vec<SensorMeta>,
    t_start: usize,
}

impl StateMatrix {
    pub fn new(data: DMatrix<f64>, sample_rate: f64, sensors: Vec<SensorMeta>) -> Result<Self> {
        Self::with_start(data, sample_rate, sensors, 0)
    }

    /// `t_start` is the absolute sample index of row 0 in the originating record.
    pub fn with_start(
        data: DMatrix<f64>,
        sample_rate: f64,
        sensors: Vec<SensorMeta>,
        t_start: usize,
    ) -> Result<Self> {
        if data.nrows() < 2 {
            return Err(Error::InvalidState(format!(
                "need at least 2 time steps, got {}",
                data.nrows()
            )));
        }
        if data.ncols() == 0 {
            return Err(Error::InvalidState("no sensors".into()));
        }
        if data.ncols() != sensors.len() {
            return Err(Error::LengthMismatch {
                what: "matrix columns vs sensor metadata",
                left: data.ncols(),
                right: sensors.len(),
            });
        }
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::InvalidState(format!(
                "bad sample rate {sample_rate}"
            )));
        }
        let mut seen = HashSet::new();
        for s in &sensors {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::DuplicateSensor(s.id.clone()));
            }
        }
        for (j, col) in data.column_iter().enumerate() {
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    row,
                    sensor: sensors[j].id.clone(),
                });
            }
        }
        Ok(Self {
            data,
            sample_rate,
            sensors,
            t_start,
        })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn sensors(&self) -> &[SensorMeta] {
        &self.sensors
    }

    pub fn sensor_ids(&self) -> Vec<String> {
        self.sensors.iter().map(|s| s.id.clone()).collect()
    }

    pub fn t_start(&self) -> usize {
        self.t_start
    }

    /// Half-open validity window in absolute sample indices.
    pub fn window(&self) -> (usize, usize) {
        (self.t_start, self.t_start + self.len())
    }

    /// Number of time steps.
    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn n_sensors(&self) -> usize {
        self.data.ncols()
    }

    pub fn column(&self, j: usize) -> Result<Vec<f64>> {
        if j >= self.n_sensors() {
            return Err(Error::SensorOutOfRange {
                index: j,
                count: self.n_sensors(),
            });
        }
        Ok(self.data.column(j).iter().copied().collect())
    }

    pub fn column_series(&self, j: usize) -> Result<TimeSeries> {
        Ok(TimeSeries::new(self.column(j)?, self.sample_rate)?
            .with_label(self.sensors[j].id.clone()))
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.sensors.iter().position(|s| s.id == id)
    }

    /// Rows `[start, end)` relative to this matrix.
    pub fn rows(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() || end - start < 2 {
            return Err(Error::InvalidState(format!(
                "row window [{start}, {end}) invalid for {} rows",
                self.len()
            )));
        }
        Ok(Self {
            data: self.data.rows(start, end - start).into_owned(),
            sample_rate: self.sample_rate,
            sensors: self.sensors.clone(),
            t_start: self.t_start + start,
        })
    }

    /// Column subset in the given order.
    pub fn select(&self, columns: &[usize]) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::InvalidState("empty sensor selection".into()));
        }
        let mut sensors = Vec::with_capacity(columns.len());
        for &j in columns {
            if j >= self.n_sensors() {
                return Err(Error::SensorOutOfRange {
                    index: j,
                    count: self.n_sensors(),
                });
            }
            sensors.push(self.sensors[j].clone());
        }
        let data = self.data.select_columns(columns);
        Self::with_start(data, self.sample_rate, sensors, self.t_start)
    }

    /// Vertical concatenation; both parts must share sensors and be contiguous.
    pub fn concat(&self, next: &Self) -> Result<Self> {
        if self.sensors != next.sensors {
            return Err(Error::InvalidState(
                "cannot concatenate: sensors differ".into(),
            ));
        }
        let mut data = DMatrix::zeros(self.len() + next.len(), self.n_sensors());
        data.rows_mut(0, self.len()).copy_from(&self.data);
        data.rows_mut(self.len(), next.len()).copy_from(&next.data);
        Self::with_start(data, self.sample_rate, self.sensors.clone(), self.t_start)
    }

    /// Columns with their means removed.
    pub fn centered(&self) -> DMatrix<f64> {
        let mut x = self.data.clone();
        for mut col in x.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        x
    }
}
