//! C ABI over the `eeg_plv` library.
//!
//! Every fallible function returns an [`EegStatus`]. On failure the message
//! is kept per thread and can be read with [`eeg_last_error`]. Objects cross
//! the boundary as opaque handles that the caller releases with the matching
//! `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use eeg_plv::dsp::FilterSpec;
use eeg_plv::io::config::PipelineConfig;
use eeg_plv::io::container::{read_container, write_container};
use eeg_plv::io::pipeline::{run_pipeline, RunOptions};
use eeg_plv::{analytic_phase, paired_t_test, plv_matrix, BandSpec, Condition, EpochSet, Error, Montage, Paradigm, PlvMatrix, PlvWindow};
use ndarray::Array3;

/// Result of a call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EegStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument, montage, band or epoch set was invalid.
    InvalidArgument = 2,
    /// The configuration failed to load or validate.
    Config = 3,
    /// Array sizes disagree.
    Shape = 4,
    /// Filtering, phase, PLV or statistics could not be computed.
    Compute = 5,
    /// A file could not be read or written.
    Io = 6,
    /// A file was readable but not a valid container or document.
    Format = 7,
    /// The library panicked; this is a bug.
    Panic = 99,
}

impl From<&Error> for EegStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Stage { source, .. } => EegStatus::from(source.as_ref()),
            Error::Config(_) => EegStatus::Config,
            Error::ShapeMismatch(_) | Error::SampleSize(..) => EegStatus::Shape,
            Error::Io { .. } => EegStatus::Io,
            Error::MalformedHeader(_) | Error::UnsupportedVersion(_) | Error::Json(_) | Error::IncompleteResults(_) => {
                EegStatus::Format
            }
            Error::InvalidArgument(_)
            | Error::InvalidSpec(_)
            | Error::CouplingOutOfRange(_)
            | Error::NoSubjects(_)
            | Error::InvalidEpochSet(_)
            | Error::InvalidBand { .. }
            | Error::InvalidMontage(_)
            | Error::UnknownChannel(_)
            | Error::DuplicateChannel(_)
            | Error::BandAboveNyquist { .. }
            | Error::ChannelIndex { .. }
            | Error::SameChannel(_)
            | Error::WindowOutOfBounds { .. } => EegStatus::InvalidArgument,
            _ => EegStatus::Compute,
        }
    }
}

/// Paired t-test outcome.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EegTTest {
    pub t: f64,
    pub p: f64,
    pub df: usize,
    pub mean_diff: f64,
}

/// Opaque epoch set.
pub struct EegEpochSet(EpochSet);

/// Opaque channels × channels PLV matrix.
pub struct EegPlvMatrix(PlvMatrix);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type FfiResult<T> = Result<T, Failure>;

/// Runs `f`, records any failure and converts it to a status.
fn guard(f: impl FnOnce() -> FfiResult<()>) -> EegStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EegStatus::Ok,
        Ok(Err(Failure::Null(name))) => {
            set_last_error(format!("`{name}` is null"));
            EegStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(e.to_string());
            EegStatus::from(&e)
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal error: {msg}"));
            EegStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &'static str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Lib(Error::InvalidArgument(format!("`{name}` is not valid UTF-8"))))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, name: &'static str) -> FfiResult<Option<&'a str>> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, name).map(Some)
    }
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &'static str) -> FfiResult<&'a T> {
    p.as_ref().ok_or(Failure::Null(name))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &'static str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or(Failure::Null(name))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &'static str) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a, T>(p: *mut T, len: usize, name: &'static str) -> FfiResult<&'a mut [T]> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn eeg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null after a
/// successful call. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn eeg_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds an epoch set from a trials × channels × samples array (row major).
///
/// `labels` holds `n_channels` channel names. `subject` may be null.
/// `paradigm` is `imagined-speech` or `visual-imagery`; `condition` is
/// `rest`, `imagery` or a class label.
///
/// # Safety
/// Pointers must be valid for the stated lengths; `out` receives a handle
/// owned by the caller.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn eeg_epoch_set_new(
    data: *const f32,
    n_trials: usize,
    n_channels: usize,
    n_samples: usize,
    labels: *const *const c_char,
    fs: f64,
    window_start_ms: f64,
    window_end_ms: f64,
    subject: *const c_char,
    paradigm: *const c_char,
    condition: *const c_char,
    out: *mut *mut EegEpochSet,
) -> EegStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let len = n_trials
            .checked_mul(n_channels)
            .and_then(|v| v.checked_mul(n_samples))
            .ok_or_else(|| Error::ShapeMismatch("array size overflows".into()))?;
        let values = slice_arg(data, len, "data")?;
        let label_ptrs = slice_arg(labels, n_channels, "labels")?;
        let names = label_ptrs
            .iter()
            .map(|&p| str_arg(p, "labels[i]"))
            .collect::<FfiResult<Vec<_>>>()?;
        let montage = Montage::new(&names)?;
        let paradigm_name = str_arg(paradigm, "paradigm")?;
        let paradigm = Paradigm::parse(paradigm_name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown paradigm `{paradigm_name}`")))?;
        let condition = Condition::new(str_arg(condition, "condition")?)?;
        let subject = opt_str_arg(subject, "subject")?.unwrap_or("S01");
        let array = Array3::from_shape_vec((n_trials, n_channels, n_samples), values.to_vec())
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        let set = EpochSet::try_new(montage, fs, subject, paradigm, condition, (window_start_ms, window_end_ms), array)?;
        *out = Box::into_raw(Box::new(EegEpochSet(set)));
        Ok(())
    })
}

/// Reads an epoch container.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` receives an owned handle.
#[no_mangle]
pub unsafe extern "C" fn eeg_epoch_set_read(path: *const c_char, out: *mut *mut EegEpochSet) -> EegStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let set = read_container(Path::new(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(EegEpochSet(set)));
        Ok(())
    })
}

/// Writes an epoch container, creating parent directories.
///
/// # Safety
/// `set` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn eeg_epoch_set_write(set: *const EegEpochSet, path: *const c_char) -> EegStatus {
    guard(|| {
        let set = ref_arg(set, "set")?;
        write_container(Path::new(str_arg(path, "path")?), &set.0)?;
        Ok(())
    })
}

/// Dimensions of an epoch set. Any output pointer may be null.
///
/// # Safety
/// `set` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn eeg_epoch_set_shape(
    set: *const EegEpochSet,
    n_trials: *mut usize,
    n_channels: *mut usize,
    n_samples: *mut usize,
) -> EegStatus {
    guard(|| {
        let set = &ref_arg(set, "set")?.0;
        for (p, v) in [(n_trials, set.n_trials()), (n_channels, set.n_channels()), (n_samples, set.n_samples())] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Releases an epoch set. Null is ignored.
///
/// # Safety
/// `set` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn eeg_epoch_set_free(set: *mut EegEpochSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Analytic phase and window-averaged PLV of an already band-filtered set.
///
/// The band (`band_name`, `lo_hz`, `hi_hz`) labels the result. The window is
/// given in ms on the epoch time axis, and `edge_trim` is the fraction of
/// samples dropped at each end before averaging.
///
/// # Safety
/// `set` must come from this library; `out` receives an owned handle.
#[no_mangle]
pub unsafe extern "C" fn eeg_plv_matrix_compute(
    set: *const EegEpochSet,
    band_name: *const c_char,
    lo_hz: f64,
    hi_hz: f64,
    window_start_ms: f64,
    window_end_ms: f64,
    edge_trim: f64,
    out: *mut *mut EegPlvMatrix,
) -> EegStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let set = &ref_arg(set, "set")?.0;
        let band = BandSpec::new(str_arg(band_name, "band_name")?, lo_hz, hi_hz)?;
        let phase = analytic_phase(set, &band)?;
        let m = plv_matrix(&phase, &PlvWindow::new((window_start_ms, window_end_ms), edge_trim))?;
        *out = Box::into_raw(Box::new(EegPlvMatrix(m)));
        Ok(())
    })
}

/// Number of channels (rows and columns) of a PLV matrix; 0 for null.
///
/// # Safety
/// `m` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn eeg_plv_matrix_channels(m: *const EegPlvMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.n_channels())
}

/// One entry of a PLV matrix.
///
/// # Safety
/// `m` must come from this library; `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eeg_plv_matrix_get(m: *const EegPlvMatrix, i: usize, k: usize, value: *mut f64) -> EegStatus {
    guard(|| {
        let m = &ref_arg(m, "m")?.0;
        let value = out_arg(value, "value")?;
        let count = m.n_channels();
        if let Some(&index) = [i, k].iter().find(|&&x| x >= count) {
            return Err(Error::ChannelIndex { index, count }.into());
        }
        *value = m.get(i, k);
        Ok(())
    })
}

/// Copies the matrix row major into `dst`, which holds `len` doubles and
/// must have room for channels × channels.
///
/// # Safety
/// `m` must come from this library; `dst` must be valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn eeg_plv_matrix_copy(m: *const EegPlvMatrix, dst: *mut f64, len: usize) -> EegStatus {
    guard(|| {
        let m = &ref_arg(m, "m")?.0;
        let need = m.values.len();
        if len < need {
            return Err(Error::ShapeMismatch(format!("buffer holds {len} values, matrix needs {need}")).into());
        }
        let dst = slice_out(dst, need, "dst")?;
        for (d, v) in dst.iter_mut().zip(m.values.iter()) {
            *d = *v;
        }
        Ok(())
    })
}

/// Releases a PLV matrix. Null is ignored.
///
/// # Safety
/// `m` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn eeg_plv_matrix_free(m: *mut EegPlvMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Two-sided paired t-test of `x` against `y`, each of length `n`.
///
/// # Safety
/// `x` and `y` must be valid for `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eeg_paired_t_test(x: *const f64, y: *const f64, n: usize, out: *mut EegTTest) -> EegStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let r = paired_t_test(slice_arg(x, n, "x")?, slice_arg(y, n, "y")?)?;
        *out = EegTTest {
            t: r.t,
            p: r.p,
            df: r.df,
            mean_diff: r.mean_diff,
        };
        Ok(())
    })
}

/// Zero-phase Butterworth band-pass of one signal. `order` counts poles
/// and must be even; `x` and `y` may alias.
///
/// # Safety
/// `x` and `y` must be valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn eeg_bandpass(
    x: *const f64,
    y: *mut f64,
    len: usize,
    fs: f64,
    lo_hz: f64,
    hi_hz: f64,
    order: usize,
) -> EegStatus {
    guard(|| {
        let input = slice_arg(x, len, "x")?.to_vec();
        let sos = FilterSpec::bandpass(lo_hz, hi_hz).with_order(order).design(fs)?;
        let filtered = sos.filtfilt(&input);
        slice_out(y, len, "y")?.copy_from_slice(&filtered);
        Ok(())
    })
}

/// Runs the whole pipeline from raw containers in `input` to reports in
/// `output`. `config_path` may be null for the bundled defaults and
/// `threads` may be 0 for the default worker count.
///
/// # Safety
/// String arguments must be NUL-terminated or null where allowed.
#[no_mangle]
pub unsafe extern "C" fn eeg_run_pipeline(
    config_path: *const c_char,
    input: *const c_char,
    output: *const c_char,
    threads: usize,
) -> EegStatus {
    guard(|| {
        let config = PipelineConfig::load(opt_str_arg(config_path, "config_path")?.map(Path::new))?;
        let options = RunOptions {
            threads: (threads > 0).then_some(threads),
            ..RunOptions::default()
        };
        run_pipeline(&config, Path::new(str_arg(input, "input")?), Path::new(str_arg(output, "output")?), &options)?;
        Ok(())
    })
}
