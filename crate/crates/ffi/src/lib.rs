//! C ABI for the iscap optimizer.
//!
//! Objects cross the boundary as opaque handles created by `iscap_*_new` /
//! `iscap_*_generate` / `iscap_run` and released by the matching `*_free`.
//! Every fallible call returns an [`IscapStatus`]; on failure the message is
//! available from [`iscap_last_error`] on the same thread until the next
//! failing call. Panics are caught and reported as `ISCAP_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use iscap::rsma::{objective_with_optimal_split, optimal_mmf, total_power};
use iscap::sensing::{crb_trace_with_tol, fim};
use iscap::{Error, Mode, PrecoderState, RunRecord, Scenario, SystemConfig};
use num_complex::Complex64;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IscapStatus {
    Ok = 0,
    NullPointer = 1,
    /// Bad UTF-8, unknown mode, or a buffer of the wrong length.
    InvalidArgument = 2,
    InvalidConfig = 3,
    DimensionMismatch = 4,
    SingularFim = 5,
    ThresholdUnreachable = 6,
    ZeroPrecoder = 7,
    Parse = 8,
    /// Any other library error.
    Other = 9,
    Panic = 10,
}

pub const ISCAP_MODE_RSMA: u32 = 0;
pub const ISCAP_MODE_SDMA: u32 = 1;

/// Opaque system configuration.
pub struct IscapConfig(SystemConfig);

/// Opaque channel realization.
pub struct IscapScenario(Scenario);

/// Opaque optimizer output.
pub struct IscapResult(RunRecord);

/// Scalar summary of a run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IscapSummary {
    /// Nats.
    pub objective: f64,
    /// Bits per channel use.
    pub mmf_rate: f64,
    pub crb: f64,
    pub converged: bool,
    pub feasible: bool,
    pub min_slack: f64,
    pub outer_iterations: usize,
    pub middle_iterations: usize,
    pub inner_iterations: usize,
    pub total_seconds: f64,
}

/// Metrics of a caller-supplied precoder.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IscapEvaluation {
    /// Objective with the common rate split optimally, nats.
    pub objective: f64,
    /// Bits per channel use.
    pub mmf_rate: f64,
    pub crb: f64,
    pub total_power: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: IscapStatus, msg: impl Into<String>) -> IscapStatus {
    set_error(msg.into());
    status
}

fn from_error(err: Error) -> IscapStatus {
    let status = match err {
        Error::InvalidConfig(_) => IscapStatus::InvalidConfig,
        Error::DimensionMismatch(_) => IscapStatus::DimensionMismatch,
        Error::SingularFim { .. } => IscapStatus::SingularFim,
        Error::ThresholdUnreachable { .. } => IscapStatus::ThresholdUnreachable,
        Error::ZeroPrecoder => IscapStatus::ZeroPrecoder,
        Error::Parse(_) => IscapStatus::Parse,
        _ => IscapStatus::Other,
    };
    fail(status, err.to_string())
}

fn guard(f: impl FnOnce() -> IscapStatus) -> IscapStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(IscapStatus::Panic, msg)
        }
    }
}

/// # Safety
/// `p` must be null or a valid NUL-terminated string.
unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, IscapStatus> {
    if p.is_null() {
        return Err(fail(IscapStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(IscapStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

fn mode_from(mode: u32) -> Result<Mode, IscapStatus> {
    match mode {
        ISCAP_MODE_RSMA => Ok(Mode::Rsma),
        ISCAP_MODE_SDMA => Ok(Mode::Sdma),
        m => Err(fail(IscapStatus::InvalidArgument, format!("unknown mode {m}"))),
    }
}

macro_rules! deref {
    ($p:expr, $what:literal) => {
        match $p.as_ref() {
            Some(v) => v,
            None => return fail(IscapStatus::NullPointer, concat!($what, " is null")),
        }
    };
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Message of the last failure on this thread, or null. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn iscap_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn iscap_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Default configuration (N_t = N_r = K = 4, L = 2, 25 dB, λ = 0.1).
#[no_mangle]
pub extern "C" fn iscap_config_new() -> *mut IscapConfig {
    Box::into_raw(Box::new(IscapConfig(SystemConfig::default())))
}

/// Parse a TOML configuration; missing keys take their defaults.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn iscap_config_from_toml(toml: *const c_char, out: *mut *mut IscapConfig) -> IscapStatus {
    guard(|| {
        if out.is_null() {
            return fail(IscapStatus::NullPointer, "out is null");
        }
        let text = tri!(read_str(toml, "toml"));
        match SystemConfig::from_toml_str(text) {
            Ok(cfg) => {
                *out = Box::into_raw(Box::new(IscapConfig(cfg)));
                IscapStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Set one key, e.g. `("eh_threshold", "[0.004, 0.004]")`. The configuration
/// is left unchanged on failure.
///
/// # Safety
/// `cfg` must come from this library; `key` and `value` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn iscap_config_set(cfg: *mut IscapConfig, key: *const c_char, value: *const c_char) -> IscapStatus {
    guard(|| {
        let cfg = match cfg.as_mut() {
            Some(c) => c,
            None => return fail(IscapStatus::NullPointer, "config is null"),
        };
        let key = tri!(read_str(key, "key"));
        let value = tri!(read_str(value, "value"));
        let mut next = cfg.0.clone();
        if let Err(e) = next.set(key, value).and_then(|_| next.validate()) {
            return from_error(e);
        }
        cfg.0 = next;
        IscapStatus::Ok
    })
}

/// # Safety
/// `cfg` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn iscap_config_free(cfg: *mut IscapConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Draw the channels of stream `seed` under `cfg`.
///
/// # Safety
/// `cfg` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn iscap_scenario_generate(cfg: *const IscapConfig, seed: u64, out: *mut *mut IscapScenario) -> IscapStatus {
    guard(|| {
        let cfg = deref!(cfg, "config");
        if out.is_null() {
            return fail(IscapStatus::NullPointer, "out is null");
        }
        match iscap::generate_scenario(&cfg.0, seed) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(IscapScenario(s)));
                IscapStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `s` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn iscap_scenario_free(s: *mut IscapScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Run the optimizer. `mode` is `ISCAP_MODE_RSMA` or `ISCAP_MODE_SDMA`.
///
/// # Safety
/// Handles must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn iscap_run(
    s: *const IscapScenario,
    cfg: *const IscapConfig,
    mode: u32,
    out: *mut *mut IscapResult,
) -> IscapStatus {
    guard(|| {
        let s = deref!(s, "scenario");
        let cfg = deref!(cfg, "config");
        if out.is_null() {
            return fail(IscapStatus::NullPointer, "out is null");
        }
        let mode = tri!(mode_from(mode));
        match iscap::run(&s.0, &cfg.0, mode) {
            Ok(rec) => {
                *out = Box::into_raw(Box::new(IscapResult(rec)));
                IscapStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `r` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn iscap_result_summary(r: *const IscapResult, out: *mut IscapSummary) -> IscapStatus {
    guard(|| {
        let r = &deref!(r, "result").0;
        let out = match out.as_mut() {
            Some(o) => o,
            None => return fail(IscapStatus::NullPointer, "out is null"),
        };
        *out = IscapSummary {
            objective: r.objective,
            mmf_rate: r.mmf_rate,
            crb: r.crb,
            converged: r.converged,
            feasible: r.feasibility.is_feasible(),
            min_slack: r.feasibility.min_slack(),
            outer_iterations: r.iterations.outer,
            middle_iterations: r.iterations.middle,
            inner_iterations: r.iterations.inner,
            total_seconds: r.timing.total_s,
        };
        IscapStatus::Ok
    })
}

/// Copy the optimized precoder into `buf` (see [`iscap_evaluate`] for the
/// layout). `len` must equal `2·N_t·(K+1)`.
///
/// # Safety
/// `r` must come from this library and `buf` point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn iscap_result_precoder(r: *const IscapResult, buf: *mut f64, len: usize) -> IscapStatus {
    guard(|| {
        let p = &deref!(r, "result").0.precoder;
        if buf.is_null() {
            return fail(IscapStatus::NullPointer, "buffer is null");
        }
        let need = 2 * p.n_tx() * (p.n_users() + 1);
        if len != need {
            return fail(IscapStatus::InvalidArgument, format!("buffer holds {len} doubles, need {need}"));
        }
        let out = std::slice::from_raw_parts_mut(buf, len);
        for (z, o) in p.columns().flatten().zip(out.chunks_exact_mut(2)) {
            o[0] = z.re;
            o[1] = z.im;
        }
        IscapStatus::Ok
    })
}

/// The full run record as JSON; release with [`iscap_string_free`].
///
/// # Safety
/// `r` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn iscap_result_to_json(r: *const IscapResult, out: *mut *mut c_char) -> IscapStatus {
    guard(|| {
        let r = deref!(r, "result");
        if out.is_null() {
            return fail(IscapStatus::NullPointer, "out is null");
        }
        match serde_json::to_string(&r.0) {
            Ok(text) => {
                *out = CString::new(text).unwrap_or_default().into_raw();
                IscapStatus::Ok
            }
            Err(e) => fail(IscapStatus::Other, e.to_string()),
        }
    })
}

/// # Safety
/// `r` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn iscap_result_free(r: *mut IscapResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn iscap_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Evaluate a precoder on a scenario. `precoder` holds `2·N_t·(K+1)` doubles:
/// the common column then the K private columns, each as `N_t` interleaved
/// (re, im) pairs. In SDMA mode the common column is ignored.
///
/// # Safety
/// Handles must come from this library, `precoder` point to `len` doubles and
/// `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn iscap_evaluate(
    s: *const IscapScenario,
    cfg: *const IscapConfig,
    mode: u32,
    precoder: *const f64,
    len: usize,
    out: *mut IscapEvaluation,
) -> IscapStatus {
    guard(|| {
        let s = &deref!(s, "scenario").0;
        let cfg = &deref!(cfg, "config").0;
        let mode = tri!(mode_from(mode));
        if precoder.is_null() || out.is_null() {
            return fail(IscapStatus::NullPointer, "precoder or out is null");
        }
        let (n, k) = (s.n_tx(), s.n_users());
        if len != 2 * n * (k + 1) {
            return fail(IscapStatus::InvalidArgument, format!("precoder holds {len} doubles, need {}", 2 * n * (k + 1)));
        }
        let data = std::slice::from_raw_parts(precoder, len);
        let mut p = PrecoderState::zeros(n, k);
        for (z, pair) in p.columns_mut().flatten().zip(data.chunks_exact(2)) {
            *z = Complex64::new(pair[0], pair[1]);
        }
        if mode == Mode::Sdma {
            p.p_common.fill(Complex64::new(0.0, 0.0));
        }
        let eval = || -> iscap::Result<IscapEvaluation> {
            let (mmf, _) = optimal_mmf(&p, s, mode)?;
            Ok(IscapEvaluation {
                objective: objective_with_optimal_split(&p, s, cfg.tradeoff, cfg.fim_det_tol, mode)?,
                mmf_rate: mmf / std::f64::consts::LN_2,
                crb: crb_trace_with_tol(&fim(&p, s)?, cfg.fim_det_tol)?,
                total_power: total_power(&p),
            })
        };
        match eval() {
            Ok(v) => {
                *out = v;
                IscapStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}
