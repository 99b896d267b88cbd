//! Windowing, chronological splitting, and every file the toolkit reads or
//! writes: state matrices and series as CSV with JSON sidecars, other records
//! as JSON.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;
use crate::state::{SensorKind, SensorMeta, StateMatrix};

pub const DEFAULT_HEAD_FRAC: f64 = 0.30;
pub const DEFAULT_TAIL_FRAC: f64 = 0.20;
pub const DEFAULT_TRAIN_FRAC: f64 = 0.80;

/// Row window kept by a head/tail trim of a record of length `len`.
pub fn trim_window(len: usize, head_frac: f64, tail_frac: f64) -> Result<(usize, usize)> {
    let bad = |remaining| Error::InvalidTrim {
        head: head_frac,
        tail: tail_frac,
        remaining,
        len,
    };
    if !(head_frac >= 0.0 && tail_frac >= 0.0 && head_frac + tail_frac < 1.0) {
        return Err(bad(0));
    }
    let start = (head_frac * len as f64).floor() as usize;
    let end = len.saturating_sub((tail_frac * len as f64).floor() as usize);
    if end < start + 2 {
        return Err(bad(end.saturating_sub(start)));
    }
    Ok((start, end))
}

/// Keep samples `[floor(head*T), T - floor(tail*T))`.
pub fn trim_transient(x: &StateMatrix, head_frac: f64, tail_frac: f64) -> Result<StateMatrix> {
    let (start, end) = trim_window(x.len(), head_frac, tail_frac)?;
    x.rows(start, end)
}

pub fn trim_series(y: &TimeSeries, head_frac: f64, tail_frac: f64) -> Result<TimeSeries> {
    let (start, end) = trim_window(y.len(), head_frac, tail_frac)?;
    y.window(start, end)
}

/// Chronological train/test partition with targets aligned to the states.
#[derive(Debug, Clone)]
pub struct SplitData {
    pub train: StateMatrix,
    pub train_target: TimeSeries,
    pub test: StateMatrix,
    pub test_target: TimeSeries,
}

/// Split at `floor(train_frac * T)`. Target samples before the target's
/// validity marker are dropped from the head of the training partition.
pub fn split_train_test(x: &StateMatrix, y: &TimeSeries, train_frac: f64) -> Result<SplitData> {
    let len = x.len();
    if y.len() != len {
        return Err(Error::LengthMismatch {
            what: "state rows vs target samples",
            left: len,
            right: y.len(),
        });
    }
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::InvalidSplit {
            frac: train_frac,
            len,
        });
    }
    let cut = (train_frac * len as f64).floor() as usize;
    let start = y.valid_from();
    if cut < start + 2 || len - cut < 2 {
        return Err(Error::InvalidSplit {
            frac: train_frac,
            len,
        });
    }
    Ok(SplitData {
        train: x.rows(start, cut)?,
        train_target: y.window(start, cut)?,
        test: x.rows(cut, len)?,
        test_target: y.window(cut, len)?,
    })
}

/// Format used for every numeric CSV cell: 9 significant digits.
pub fn format_value(v: f64) -> String {
    format!("{v:.8e}")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SensorLocation {
    kind: SensorKind,
    row: usize,
    col: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct StateSidecar {
    #[serde(default)]
    sample_rate_hz: Option<f64>,
    sensors: BTreeMap<String, SensorLocation>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SeriesSidecar {
    #[serde(default)]
    sample_rate_hz: Option<f64>,
    #[serde(default)]
    label: String,
    #[serde(default)]
    valid_from: usize,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        kind => Error::Csv {
            path: path.to_owned(),
            line,
            message: format!("{kind:?}"),
        },
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)
        .map_err(|e| Error::json(path.display().to_string(), e))?;
    out.write_all(b"\n")
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}

/// Write `t_index,<sensor ids...>` CSV plus the metadata sidecar.
pub fn export_state_csv(x: &StateMatrix, path: &Path, metadata_path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["t_index".to_string()];
    header.extend(x.sensor_ids());
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    let mut record = Vec::with_capacity(header.len());
    for t in 0..x.len() {
        record.clear();
        record.push((x.t_start() + t).to_string());
        record.extend(x.data().row(t).iter().map(|&v| format_value(v)));
        w.write_record(&record).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;

    let sidecar = StateSidecar {
        sample_rate_hz: Some(x.sample_rate()),
        sensors: x
            .sensors()
            .iter()
            .map(|s| {
                (
                    s.id.clone(),
                    SensorLocation {
                        kind: s.kind,
                        row: s.row,
                        col: s.col,
                    },
                )
            })
            .collect(),
    };
    write_json(metadata_path, &sidecar)
}

/// Parse a state CSV and its sidecar, enforcing the state-matrix invariants.
/// The sensor count is whatever the file holds.
pub fn ingest_csv(path: &Path, metadata_path: &Path) -> Result<StateMatrix> {
    let sidecar: StateSidecar = read_json(metadata_path)?;
    let sample_rate = sidecar
        .sample_rate_hz
        .ok_or_else(|| Error::MissingSampleRate(metadata_path.to_owned()))?;

    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.get(0) != Some("t_index") || header.len() < 2 {
        return Err(Error::Csv {
            path: path.to_owned(),
            line: 1,
            message: "header must be t_index followed by sensor ids".into(),
        });
    }
    let ids: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let mut seen = HashSet::new();
    for id in &ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateSensor(id.clone()));
        }
    }
    let sensors = ids
        .iter()
        .map(|id| {
            let loc = sidecar
                .sensors
                .get(id)
                .ok_or_else(|| Error::MissingSensorMeta(id.clone()))?;
            Ok(SensorMeta {
                id: id.clone(),
                kind: loc.kind,
                row: loc.row,
                col: loc.col,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let n = ids.len();
    let mut values = Vec::new();
    let mut t_start = None;
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = row + 2;
        if record.len() != n + 1 {
            return Err(Error::Csv {
                path: path.to_owned(),
                line,
                message: format!(
                    "ragged row: expected {} fields, found {}",
                    n + 1,
                    record.len()
                ),
            });
        }
        let t_index: usize = record[0].trim().parse().map_err(|_| Error::Csv {
            path: path.to_owned(),
            line,
            message: format!("bad t_index '{}'", &record[0]),
        })?;
        t_start.get_or_insert(t_index);
        for (j, cell) in record.iter().skip(1).enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Csv {
                path: path.to_owned(),
                line,
                message: format!("bad number '{cell}' for sensor '{}'", ids[j]),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row,
                    sensor: ids[j].clone(),
                });
            }
            values.push(v);
        }
    }
    let rows = values.len() / n;
    let data = DMatrix::from_row_slice(rows, n, &values);
    StateMatrix::with_start(data, sample_rate, sensors, t_start.unwrap_or(0))
}

/// Write `t_index,value` CSV plus a `{sample_rate_hz, label}` sidecar.
pub fn export_series_csv(y: &TimeSeries, path: &Path, metadata_path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["t_index", "value"])
        .map_err(|e| csv_error(path, e))?;
    for (t, v) in y.values().iter().enumerate() {
        w.write_record([t.to_string(), format_value(*v)])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    write_json(
        metadata_path,
        &SeriesSidecar {
            sample_rate_hz: Some(y.sample_rate()),
            label: y.label().to_owned(),
            valid_from: y.valid_from(),
        },
    )
}

pub fn ingest_series_csv(path: &Path, metadata_path: &Path) -> Result<TimeSeries> {
    let sidecar: SeriesSidecar = read_json(metadata_path)?;
    let sample_rate = sidecar
        .sample_rate_hz
        .ok_or_else(|| Error::MissingSampleRate(metadata_path.to_owned()))?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let mut values = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let cell = record.get(1).ok_or_else(|| Error::Csv {
            path: path.to_owned(),
            line: row + 2,
            message: "missing value column".into(),
        })?;
        let v: f64 = cell.trim().parse().map_err(|_| Error::Csv {
            path: path.to_owned(),
            line: row + 2,
            message: format!("bad number '{cell}'"),
        })?;
        if !v.is_finite() {
            return Err(Error::NonFinite {
                row,
                sensor: "value".into(),
            });
        }
        values.push(v);
    }
    Ok(TimeSeries::new(values, sample_rate)?
        .with_label(sidecar.label)
        .with_valid_from(sidecar.valid_from))
}

/// Plot-ready overlay: `t_index,target,prediction`.
pub fn write_overlay_csv(
    path: &Path,
    t_start: usize,
    target: &[f64],
    prediction: &[f64],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["t_index", "target", "prediction"])
        .map_err(|e| csv_error(path, e))?;
    for (i, (a, b)) in target.iter().zip(prediction).enumerate() {
        w.write_record([
            (t_start + i).to_string(),
            format_value(*a),
            format_value(*b),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Generic table writer for reports. Floats are formatted by the caller.
pub fn write_table_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matrix(len: usize, n: usize) -> StateMatrix {
        let data = DMatrix::from_fn(len, n, |t, j| {
            ((t * 7 + j * 13) % 17) as f64 - 8.0 + 0.001 * t as f64
        });
        let sensors = (0..n)
            .map(|j| SensorMeta {
                id: format!("s{j}"),
                kind: SensorKind::Other,
                row: j,
                col: 0,
            })
            .collect();
        StateMatrix::new(data, 500.0, sensors).unwrap()
    }

    fn series(len: usize) -> TimeSeries {
        TimeSeries::new((0..len).map(|t| (t as f64 * 0.1).sin()).collect(), 500.0).unwrap()
    }

    #[test]
    fn default_trim_of_six_second_record() {
        let x = matrix(3000, 2);
        let trimmed = trim_transient(&x, DEFAULT_HEAD_FRAC, DEFAULT_TAIL_FRAC).unwrap();
        assert_eq!(trimmed.len(), 1500);
        assert_eq!(trimmed.window(), (900, 2400));
        assert_eq!(trimmed.data().row(0), x.data().row(900));
    }

    #[test]
    fn zero_trim_is_identity() {
        let x = matrix(40, 3);
        assert_eq!(trim_transient(&x, 0.0, 0.0).unwrap(), x);
    }

    #[test]
    fn trim_to_nothing_fails() {
        assert!(matches!(
            trim_transient(&matrix(10, 1), 0.5, 0.5),
            Err(Error::InvalidTrim { .. })
        ));
    }

    #[test]
    fn default_split_sizes() {
        let x = matrix(1500, 2);
        let y = series(1500);
        let split = split_train_test(&x, &y, DEFAULT_TRAIN_FRAC).unwrap();
        assert_eq!(split.train.len(), 1200);
        assert_eq!(split.test.len(), 300);
        assert_eq!(split.train_target.len(), 1200);
        assert_eq!(split.test.t_start(), 1200);
        assert_eq!(split.train.concat(&split.test).unwrap(), x);
    }

    #[test]
    fn full_train_fraction_rejected() {
        let x = matrix(100, 2);
        assert!(matches!(
            split_train_test(&x, &series(100), 1.0),
            Err(Error::InvalidSplit { .. })
        ));
        assert!(matches!(
            split_train_test(&x, &series(99), 0.8),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn split_skips_invalid_target_head() {
        let x = matrix(100, 2);
        let y = crate::signals::delay_target(&series(100), 5).unwrap();
        let split = split_train_test(&x, &y, 0.8).unwrap();
        assert_eq!(split.train.len(), 75);
        assert_eq!(split.train.t_start(), 5);
        assert_eq!(split.train_target.valid_from(), 0);
    }

    #[test]
    fn state_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (csv_path, meta) = (dir.path().join("x.csv"), dir.path().join("x.json"));
        let x = matrix(50, 4).rows(3, 50).unwrap();
        export_state_csv(&x, &csv_path, &meta).unwrap();
        let back = ingest_csv(&csv_path, &meta).unwrap();
        assert_eq!(back.t_start(), 3);
        assert_eq!(back.sensors(), x.sensors());
        for (a, b) in back.data().iter().zip(x.data().iter()) {
            let expected: f64 = format_value(*b).parse().unwrap();
            assert_eq!(a.to_bits(), expected.to_bits());
        }
        // Second pass is byte-identical.
        let (csv2, meta2) = (dir.path().join("y.csv"), dir.path().join("y.json"));
        export_state_csv(&back, &csv2, &meta2).unwrap();
        assert_eq!(fs::read(&csv_path).unwrap(), fs::read(&csv2).unwrap());
    }

    fn write(path: &Path, text: &str) {
        fs::write(path, text).unwrap();
    }

    #[test]
    fn ingest_reports_nan_location() {
        let dir = tempfile::tempdir().unwrap();
        let (p, m) = (dir.path().join("x.csv"), dir.path().join("x.json"));
        write(&p, "t_index,a,b\n0,1.0,2.0\n1,3.0,NaN\n2,1.0,1.0\n");
        write(
            &m,
            r#"{"sample_rate_hz": 500, "sensors": {"a": {"kind": "kxx", "row": 0, "col": 1}, "b": {"kind": "edge_x", "row": 0, "col": 0}}}"#,
        );
        match ingest_csv(&p, &m).unwrap_err() {
            Error::NonFinite { row, sensor } => {
                assert_eq!(row, 1);
                assert_eq!(sensor, "b");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn ingest_specific_errors() {
        let dir = tempfile::tempdir().unwrap();
        let (p, m) = (dir.path().join("x.csv"), dir.path().join("x.json"));
        let meta =
            r#"{"sample_rate_hz": 500, "sensors": {"a": {"kind": "kxx", "row": 0, "col": 1}}}"#;

        write(&p, "t_index,a\n0,1.0\n1,2.0,3.0\n");
        write(&m, meta);
        assert!(matches!(ingest_csv(&p, &m), Err(Error::Csv { .. })));

        write(&p, "t_index,a,a\n0,1.0,1.0\n1,2.0,2.0\n");
        assert!(matches!(ingest_csv(&p, &m), Err(Error::DuplicateSensor(_))));

        write(&p, "t_index,a\n0,1.0\n1,2.0\n");
        write(
            &m,
            r#"{"sensors": {"a": {"kind": "kxx", "row": 0, "col": 1}}}"#,
        );
        assert!(matches!(
            ingest_csv(&p, &m),
            Err(Error::MissingSampleRate(_))
        ));

        let missing = dir.path().join("nope.csv");
        write(&m, meta);
        assert!(matches!(ingest_csv(&missing, &m), Err(Error::Io { .. })));
    }

    #[test]
    fn wide_external_file_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let (p, m) = (dir.path().join("dic.csv"), dir.path().join("dic.json"));
        let ids: Vec<String> = (0..78).map(|j| format!("gauge{j}")).collect();
        let mut text = format!("t_index,{}\n", ids.join(","));
        for t in 0..10 {
            let row: Vec<String> = (0..78)
                .map(|j| format!("{}", (t * j) as f64 * 1e-4))
                .collect();
            text.push_str(&format!("{t},{}\n", row.join(",")));
        }
        write(&p, &text);
        let sensors: BTreeMap<_, _> = ids
            .iter()
            .map(|id| {
                (
                    id.clone(),
                    serde_json::json!({"kind": "exx", "row": 0, "col": 0}),
                )
            })
            .collect();
        write(
            &m,
            &serde_json::json!({"sample_rate_hz": 500.0, "sensors": sensors}).to_string(),
        );
        let x = ingest_csv(&p, &m).unwrap();
        assert_eq!(x.n_sensors(), 78);
        assert_eq!(x.sensors()[0].kind, SensorKind::Other);
    }

    #[test]
    fn series_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (p, m) = (dir.path().join("y.csv"), dir.path().join("y.json"));
        let y = crate::signals::delay_target(&series(30), 3).unwrap();
        export_series_csv(&y, &p, &m).unwrap();
        let back = ingest_series_csv(&p, &m).unwrap();
        assert_eq!(back.label(), "delay-3");
        assert_eq!(back.valid_from(), 3);
        for (a, b) in back.values().iter().zip(y.values()) {
            assert!((a - b).abs() <= 1e-8 * b.abs().max(1e-300));
        }
    }

    proptest! {
        #[test]
        fn trim_then_identity_trim(head in 0.0f64..0.45, tail in 0.0f64..0.45, len in 10usize..400) {
            let x = matrix(len, 1);
            if let Ok(once) = trim_transient(&x, head, tail) {
                prop_assert_eq!(trim_transient(&once, 0.0, 0.0).unwrap(), once);
            }
        }

        #[test]
        fn split_preserves_count(len in 10usize..300, frac in 0.2f64..0.8) {
            let x = matrix(len, 2);
            if let Ok(s) = split_train_test(&x, &series(len), frac) {
                prop_assert_eq!(s.train.len() + s.test.len(), len);
                prop_assert!(s.train.window().1 == s.test.window().0);
            }
        }
    }
}
