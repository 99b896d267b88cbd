//! Excitation inputs and task targets.
//!
//! Inputs are zero-phase multi-tone sums normalized to unit RMS. Targets are
//! either independent of the structure (ReLU-10, delays, NARMA) or embodied,
//! i.e. derived from the structure's own response (strain rate, input force).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;
use crate::state::StateMatrix;

/// Tone sequence used for complexities k = 1..8; the first k entries form the
/// k-tone input.
pub const PAPER_FREQUENCIES_HZ: [f64; 8] = [9.3, 24.1, 32.2, 18.5, 38.0, 14.5, 21.0, 11.1];

/// Divergence bound for the NARMA recurrence.
const NARMA_BOUND: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiToneSpec {
    pub frequencies: Vec<f64>,
}

impl MultiToneSpec {
    pub fn new(frequencies: Vec<f64>) -> Self {
        Self { frequencies }
    }

    /// The first `k` tones of [`PAPER_FREQUENCIES_HZ`].
    pub fn standard(k: usize) -> Result<Self> {
        if k == 0 || k > PAPER_FREQUENCIES_HZ.len() {
            return Err(Error::Config(format!(
                "complexity must be in 1..={}, got {k}",
                PAPER_FREQUENCIES_HZ.len()
            )));
        }
        Ok(Self::new(PAPER_FREQUENCIES_HZ[..k].to_vec()))
    }

    /// Number of superposed tones.
    pub fn complexity(&self) -> usize {
        self.frequencies.len()
    }

    pub fn validate(&self, sample_rate: f64) -> Result<()> {
        if self.frequencies.is_empty() {
            return Err(Error::NoTones);
        }
        let nyquist = sample_rate / 2.0;
        for (index, &frequency) in self.frequencies.iter().enumerate() {
            if !(frequency.is_finite() && frequency > 0.0) {
                return Err(Error::InvalidSeries(format!(
                    "tone {index} frequency must be positive, got {frequency}"
                )));
            }
            if frequency >= nyquist {
                return Err(Error::ToneAboveNyquist {
                    index,
                    frequency,
                    nyquist,
                });
            }
        }
        Ok(())
    }
}

/// Sum of unit-amplitude, zero-phase sines, normalized to unit RMS.
pub fn make_multitone(spec: &MultiToneSpec, duration: f64, sample_rate: f64) -> Result<TimeSeries> {
    spec.validate(sample_rate)?;
    let len = (duration * sample_rate).round();
    if !(len.is_finite() && len >= 2.0) {
        return Err(Error::TooShort {
            need: 2,
            got: len.max(0.0) as usize,
        });
    }
    let values = (0..len as usize)
        .map(|t| {
            spec.frequencies
                .iter()
                .map(|f| (2.0 * PI * f * t as f64 / sample_rate).sin())
                .sum()
        })
        .collect();
    let raw = TimeSeries::new(values, sample_rate)?;
    Ok(normalize_rms(&raw)?.with_label(format!("input-k{}", spec.complexity())))
}

pub fn normalize_rms(x: &TimeSeries) -> Result<TimeSeries> {
    let rms = x.rms();
    if rms == 0.0 {
        return Err(Error::ZeroRms);
    }
    x.map_values(|v| v / rms)
}

/// Leaky ReLU with a positive slope ten times the negative slope.
pub fn relu10_target(input: &TimeSeries) -> TimeSeries {
    input
        .map_values(relu10)
        .expect("finite input stays finite")
        .with_label("relu10")
}

fn relu10(i: f64) -> f64 {
    if i >= 0.0 {
        10.0 * i
    } else {
        i
    }
}

/// `y(t) = I(t - d)`. The first `d` samples have no source and are marked invalid.
pub fn delay_target(input: &TimeSeries, delay: usize) -> Result<TimeSeries> {
    let len = input.len();
    if delay == 0 || delay >= len {
        return Err(Error::InvalidDelay { delay, len });
    }
    let src = input.values();
    let values = (0..len)
        .map(|t| if t >= delay { src[t - delay] } else { 0.0 })
        .collect();
    Ok(TimeSeries::new(values, input.sample_rate())?
        .with_label(format!("delay-{delay}"))
        .with_valid_from(input.valid_from() + delay))
}

/// NARMA recurrence driven by an already scaled input `u`:
///
/// `y(t+1) = 0.3 y(t) + 0.05 y(t) sum_{i<order} y(t-i) + 1.5 u(t-order+1) u(t) + 0.1`
///
/// with `y(t) = 0` for `t < order`.
pub fn narma_recurrence(u: &[f64], order: usize) -> Result<Vec<f64>> {
    let len = u.len();
    if order == 0 || len <= order {
        return Err(Error::InvalidNarmaOrder { order, len });
    }
    let mut y = vec![0.0; len];
    for t in (order - 1)..(len - 1) {
        let window: f64 = y[t + 1 - order..=t].iter().sum();
        let next = 0.3 * y[t] + 0.05 * y[t] * window + 1.5 * u[t + 1 - order] * u[t] + 0.1;
        if !next.is_finite() || next.abs() > NARMA_BOUND {
            return Err(Error::NarmaDiverged {
                index: t + 1,
                value: next,
            });
        }
        y[t + 1] = next;
    }
    Ok(y)
}

/// NARMA target of the given order. The input is mapped affinely onto
/// `[0, 0.5]` before driving the recurrence; a constant input maps to zero.
pub fn narma_target(input: &TimeSeries, order: usize) -> Result<TimeSeries> {
    let values = input.values();
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = hi - lo;
    let u: Vec<f64> = if span > 0.0 {
        values.iter().map(|v| 0.5 * (v - lo) / span).collect()
    } else {
        vec![0.0; values.len()]
    };
    let y = narma_recurrence(&u, order)?;
    Ok(TimeSeries::new(y, input.sample_rate())?
        .with_label(format!("narma-{order}"))
        .with_valid_from(input.valid_from()))
}

/// Second-order central differences with one-sided endpoints.
pub fn central_difference(values: &[f64], sample_rate: f64) -> Result<Vec<f64>> {
    let len = values.len();
    if len < 3 {
        return Err(Error::TooShort { need: 3, got: len });
    }
    let mut out = Vec::with_capacity(len);
    out.push((values[1] - values[0]) * sample_rate);
    for t in 1..len - 1 {
        out.push((values[t + 1] - values[t - 1]) * sample_rate / 2.0);
    }
    out.push((values[len - 1] - values[len - 2]) * sample_rate);
    Ok(out)
}

/// Time derivative of one readout (proprioception task).
pub fn strain_rate_target(state: &StateMatrix, sensor: usize) -> Result<TimeSeries> {
    let column = state.column(sensor)?;
    let rate = central_difference(&column, state.sample_rate())?;
    Ok(TimeSeries::new(rate, state.sample_rate())?
        .with_label(format!("strain-rate-{}", state.sensors()[sensor].id)))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskSpec {
    Relu10,
    Delay { steps: usize },
    Narma { order: usize },
    StrainRate { sensor: usize },
    InputForce,
}

/// Signals a task target may be derived from.
#[derive(Debug, Clone, Copy)]
pub struct TaskContext<'a> {
    /// RMS-normalized input signal.
    pub input: &'a TimeSeries,
    /// Applied forcing, i.e. the load-cell reading.
    pub force: &'a TimeSeries,
    pub state: &'a StateMatrix,
}

impl TaskSpec {
    pub fn label(&self) -> String {
        match self {
            TaskSpec::Relu10 => "relu10".into(),
            TaskSpec::Delay { steps } => format!("delay-{steps}"),
            TaskSpec::Narma { order } => format!("narma-{order}"),
            TaskSpec::StrainRate { sensor } => format!("strain-rate-{sensor}"),
            TaskSpec::InputForce => "input-force".into(),
        }
    }

    pub fn is_embodied(&self) -> bool {
        matches!(self, TaskSpec::StrainRate { .. } | TaskSpec::InputForce)
    }

    pub fn validate(&self, n_sensors: usize) -> Result<()> {
        match *self {
            TaskSpec::Delay { steps: 0 } => {
                Err(Error::Config("delay must be at least 1 step".into()))
            }
            TaskSpec::Narma { order: 0 } => {
                Err(Error::Config("NARMA order must be at least 1".into()))
            }
            TaskSpec::StrainRate { sensor } if sensor >= n_sensors => {
                Err(Error::SensorOutOfRange {
                    index: sensor,
                    count: n_sensors,
                })
            }
            _ => Ok(()),
        }
    }

    pub fn target(&self, ctx: &TaskContext<'_>) -> Result<TimeSeries> {
        self.validate(ctx.state.n_sensors())?;
        let series = match *self {
            TaskSpec::Relu10 => relu10_target(ctx.input),
            TaskSpec::Delay { steps } => delay_target(ctx.input, steps)?,
            TaskSpec::Narma { order } => narma_target(ctx.input, order)?,
            TaskSpec::StrainRate { sensor } => strain_rate_target(ctx.state, sensor)?,
            TaskSpec::InputForce => ctx.force.clone(),
        };
        Ok(series.with_label(self.label()))
    }
}
