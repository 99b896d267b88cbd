//! Physical reservoir computing on a simulated mechanical metamaterial.
//!
//! The crate drives a lattice with bilinear (leaky-ReLU) edge stiffness with
//! multi-tone forces, trains linear readouts on its strain-like sensor
//! signals, and analyses those signals through their frequency content:
//! effective rank, per-sensor SNR, nonlinearity, memory, and PCA. A greedy
//! frequency-alignment search ranks sensors for a given task.

pub mod error;
pub mod experiment;
pub mod lattice;
pub mod metrics;
pub mod pipeline;
pub mod readout;
pub mod selection;
pub mod series;
pub mod signals;
pub mod state;

pub use error::{Error, Result};
pub use series::TimeSeries;
pub use state::{SensorKind, SensorMeta, StateMatrix};
