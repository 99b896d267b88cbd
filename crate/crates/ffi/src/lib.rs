//! C ABI over `metares-core`.
//!
//! Every function returns a [`MetaresStatus`]; on failure the message is
//! available from [`metares_last_error`] on the same thread. Objects are
//! opaque handles owned by the caller and released with their `_free`
//! function. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use metares::error::Error;
use metares::experiment::{
    build_model, run_complexity_sweep, run_metrics, run_pipeline, run_selection, run_simulate,
    run_task_atlas, verify_bundle, ExperimentConfig, Variant,
};
use metares::lattice::{simulate, LatticeModel};
use metares::pipeline::{export_state_csv, ingest_csv, split_train_test};
use metares::readout::{train_and_score, Ridge};
use metares::series::TimeSeries;
use metares::state::StateMatrix;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetaresStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Simulation = 4,
    Data = 5,
    Io = 6,
    Verification = 7,
    Panic = 8,
}

/// Lattice variant for [`metares_lattice_build`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetaresVariant {
    Nonlinear = 0,
    Linearized = 1,
}

/// Experiment configuration.
pub struct MetaresConfig(ExperimentConfig);

/// Lattice model.
pub struct MetaresLattice(LatticeModel);

/// Time x sensor readout matrix.
pub struct MetaresState(StateMatrix);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> MetaresStatus {
    match e {
        Error::Stage { source, .. } => status_of(source),
        Error::Config(_)
        | Error::Json { .. }
        | Error::InvalidLattice(_)
        | Error::DriveNodeClamped(_) => MetaresStatus::Config,
        Error::Unstable { .. } | Error::RateMismatch { .. } => MetaresStatus::Simulation,
        Error::Io { .. } => MetaresStatus::Io,
        Error::Verification(_) => MetaresStatus::Verification,
        _ => MetaresStatus::Data,
    }
}

struct Failure(MetaresStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(MetaresStatus::NullPointer, format!("{what} is null"))
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure(MetaresStatus::InvalidArgument, message.into())
}

/// Run `f`, translating errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MetaresStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            MetaresStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {message}"));
            MetaresStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread, or null after a
/// success. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn metares_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn metares_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Default experiment configuration.
///
/// # Safety
/// `out` must be a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn metares_config_default(out: *mut *mut MetaresConfig) -> MetaresStatus {
    guard(|| put(out, MetaresConfig(ExperimentConfig::default())))
}

/// Parse a configuration from JSON text. Missing fields take defaults.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn metares_config_from_json(
    json: *const c_char,
    out: *mut *mut MetaresConfig,
) -> MetaresStatus {
    guard(|| {
        let config: ExperimentConfig = serde_json::from_str(text(json, "json")?)
            .map_err(|e| Failure(MetaresStatus::Config, format!("config: {e}")))?;
        config.validate()?;
        put(out, MetaresConfig(config))
    })
}

/// # Safety
/// `config` must be a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn metares_config_set_seed(
    config: *mut MetaresConfig,
    seed: u64,
) -> MetaresStatus {
    guard(|| {
        config.as_mut().ok_or_else(|| null("config"))?.0.seed = seed;
        Ok(())
    })
}

/// # Safety
/// `config` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn metares_config_free(config: *mut MetaresConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Build the configured lattice with orientations drawn from the config's
/// master seed.
///
/// # Safety
/// `config` must be a handle from this library and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn metares_lattice_build(
    config: *const MetaresConfig,
    variant: MetaresVariant,
    out: *mut *mut MetaresLattice,
) -> MetaresStatus {
    guard(|| {
        let config = &borrow(config, "config")?.0;
        let variant = match variant {
            MetaresVariant::Nonlinear => Variant::Nonlinear,
            MetaresVariant::Linearized => Variant::Linearized,
        };
        put(
            out,
            MetaresLattice(build_model(config, config.seed, variant)?),
        )
    })
}

/// Lowest natural frequency of the linearized lattice, Hz.
///
/// # Safety
/// `lattice` must be a handle from this library and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn metares_lattice_fundamental_hz(
    lattice: *const MetaresLattice,
    out: *mut f64,
) -> MetaresStatus {
    guard(|| {
        let model = &borrow(lattice, "lattice")?.0;
        let f = model.natural_frequencies().first().copied().unwrap_or(0.0);
        *out.as_mut().ok_or_else(|| null("out"))? = f;
        Ok(())
    })
}

/// # Safety
/// `lattice` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn metares_lattice_free(lattice: *mut MetaresLattice) {
    if !lattice.is_null() {
        drop(Box::from_raw(lattice));
    }
}

/// Drive the lattice from rest with `force` (N) at its drive node and
/// sample the readouts at `sample_rate`.
///
/// # Safety
/// `force` must point to `len` doubles; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn metares_simulate(
    lattice: *const MetaresLattice,
    force: *const f64,
    len: usize,
    sample_rate: f64,
    out: *mut *mut MetaresState,
) -> MetaresStatus {
    guard(|| {
        let model = &borrow(lattice, "lattice")?.0;
        let forcing = TimeSeries::new(slice(force, len, "force")?.to_vec(), sample_rate)?;
        put(
            out,
            MetaresState(simulate(model, &forcing, model.drive_node, sample_rate)?),
        )
    })
}

/// Read a state CSV and its metadata sidecar.
///
/// # Safety
/// Paths must be NUL-terminated strings and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn metares_state_ingest_csv(
    csv_path: *const c_char,
    meta_path: *const c_char,
    out: *mut *mut MetaresState,
) -> MetaresStatus {
    guard(|| {
        let csv = PathBuf::from(text(csv_path, "csv_path")?);
        let meta = PathBuf::from(text(meta_path, "meta_path")?);
        put(out, MetaresState(ingest_csv(&csv, &meta)?))
    })
}

/// Write a state CSV and its metadata sidecar.
///
/// # Safety
/// `state` must be a handle from this library; paths NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn metares_state_export_csv(
    state: *const MetaresState,
    csv_path: *const c_char,
    meta_path: *const c_char,
) -> MetaresStatus {
    guard(|| {
        let x = &borrow(state, "state")?.0;
        let csv = PathBuf::from(text(csv_path, "csv_path")?);
        let meta = PathBuf::from(text(meta_path, "meta_path")?);
        Ok(export_state_csv(x, &csv, &meta)?)
    })
}

/// Number of time samples and of sensors.
///
/// # Safety
/// `state` must be a handle from this library; outputs may be null.
#[no_mangle]
pub unsafe extern "C" fn metares_state_shape(
    state: *const MetaresState,
    rows: *mut usize,
    cols: *mut usize,
) -> MetaresStatus {
    guard(|| {
        let x = &borrow(state, "state")?.0;
        if let Some(r) = rows.as_mut() {
            *r = x.len();
        }
        if let Some(c) = cols.as_mut() {
            *c = x.n_sensors();
        }
        Ok(())
    })
}

/// Copy the data row-major into `buf`, which must hold rows * cols values.
///
/// # Safety
/// `buf` must point to `cap` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn metares_state_copy(
    state: *const MetaresState,
    buf: *mut f64,
    cap: usize,
) -> MetaresStatus {
    guard(|| {
        let x = &borrow(state, "state")?.0;
        let need = x.len() * x.n_sensors();
        if buf.is_null() {
            return Err(null("buf"));
        }
        if cap < need {
            return Err(invalid(format!("buffer holds {cap} values, need {need}")));
        }
        let out = std::slice::from_raw_parts_mut(buf, need);
        let data = x.data();
        for t in 0..x.len() {
            for j in 0..x.n_sensors() {
                out[t * x.n_sensors() + j] = data[(t, j)];
            }
        }
        Ok(())
    })
}

/// Copy sensor `index`'s id, NUL-terminated, into `buf`. `needed`
/// receives the buffer size required, including the terminator, so a
/// first call with `cap = 0` can size the buffer.
///
/// # Safety
/// `buf` must point to `cap` writable bytes (or be null when `cap` is 0).
#[no_mangle]
pub unsafe extern "C" fn metares_state_sensor_id(
    state: *const MetaresState,
    index: usize,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> MetaresStatus {
    guard(|| {
        let x = &borrow(state, "state")?.0;
        let id = &x
            .sensors()
            .get(index)
            .ok_or_else(|| invalid(format!("sensor {index} out of range for {}", x.n_sensors())))?
            .id;
        let bytes = id.as_bytes();
        if let Some(n) = needed.as_mut() {
            *n = bytes.len() + 1;
        }
        if cap == 0 {
            return Ok(());
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        if cap <= bytes.len() {
            return Err(invalid(format!(
                "buffer holds {cap} bytes, need {}",
                bytes.len() + 1
            )));
        }
        ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, bytes.len());
        *buf.add(bytes.len()) = 0;
        Ok(())
    })
}

/// # Safety
/// `state` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn metares_state_free(state: *mut MetaresState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// Train a ridge readout on the first `train_frac` of the samples and
/// score it on the rest. `ridge` is relative to the mean feature variance;
/// pass 0 for ordinary least squares.
///
/// # Safety
/// `target` must point to as many doubles as the state has rows.
#[no_mangle]
pub unsafe extern "C" fn metares_train_score(
    state: *const MetaresState,
    target: *const f64,
    len: usize,
    train_frac: f64,
    ridge: f64,
    r2_train: *mut f64,
    r2_test: *mut f64,
) -> MetaresStatus {
    guard(|| {
        let x = &borrow(state, "state")?.0;
        let y = TimeSeries::new(slice(target, len, "target")?.to_vec(), x.sample_rate())?;
        let split = split_train_test(x, &y, train_frac)?;
        let ridge = if ridge == 0.0 {
            Ridge::Absolute(0.0)
        } else {
            Ridge::Relative(ridge)
        };
        let (_, score) = train_and_score(&split, ridge)?;
        if let Some(v) = r2_train.as_mut() {
            *v = score.r2_train;
        }
        if let Some(v) = r2_test.as_mut() {
            *v = score.r2_test;
        }
        Ok(())
    })
}

/// Run a CLI command (`simulate`, `run`, `sweep`, `select`, `atlas`,
/// `metrics`) and write its bundle to `out_dir`.
///
/// # Safety
/// `config` must be a handle from this library; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn metares_run(
    config: *const MetaresConfig,
    command: *const c_char,
    out_dir: *const c_char,
) -> MetaresStatus {
    guard(|| {
        let config = &borrow(config, "config")?.0;
        let out = PathBuf::from(text(out_dir, "out_dir")?);
        match text(command, "command")? {
            "simulate" => run_simulate(config, &out).map(drop),
            "run" => run_pipeline(config, &out).map(drop),
            "sweep" => run_complexity_sweep(config, &out).map(drop),
            "select" => run_selection(config, &out).map(drop),
            "atlas" => run_task_atlas(config, &out).map(drop),
            "metrics" => run_metrics(config, &out).map(drop),
            other => return Err(invalid(format!("unknown command '{other}'"))),
        }
        .map_err(Failure::from)
    })
}

/// Re-hash a bundle against its manifest.
///
/// # Safety
/// `dir` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn metares_verify(dir: *const c_char) -> MetaresStatus {
    guard(|| {
        verify_bundle(&PathBuf::from(text(dir, "dir")?))?;
        Ok(())
    })
}
