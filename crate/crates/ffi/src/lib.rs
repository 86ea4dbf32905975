//! C ABI over the peakshaver engines.
//!
//! Instances and runs are opaque heap handles owned by the caller and
//! released with their `_free` function. Every fallible call returns a
//! [`PsStatus`]; on failure a description is available from
//! [`ps_last_error_message`] on the same thread until the next failing call.
//! Strings handed out by the library must be released with
//! [`ps_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use peakshaver::baseline::run_greedy_rtl;
use peakshaver::gen::{generate_instance, GenConfig};
use peakshaver::metrics::{compute_metrics, MetricsReport};
use peakshaver::model::{approximation_bound, validate_instance, Instance, Schedule};
use peakshaver::oracle::brute_force_opt;
use peakshaver::{ModelError, OracleError, ScheduleError};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// A JSON document could not be parsed or has the wrong shape.
    Json = 3,
    /// The instance or generator config failed validation.
    InvalidInstance = 4,
    /// The engine's preconditions do not hold for this instance.
    Precondition = 5,
    /// An internal consistency check failed.
    Contract = 6,
    /// The requested value does not exist for this input.
    Unsupported = 7,
    /// An id or buffer length is out of range.
    OutOfRange = 8,
    /// The instance is too large for exact enumeration.
    TooLarge = 9,
    /// A panic was caught at the boundary.
    Panic = 10,
}

/// Summary metrics of a run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PsMetrics {
    pub revenue: f64,
    pub normalized_revenue: f64,
    pub utilization: f64,
    pub acceptance_rate: f64,
    pub actual_peak: f64,
}

impl From<&MetricsReport> for PsMetrics {
    fn from(m: &MetricsReport) -> Self {
        Self {
            revenue: m.revenue,
            normalized_revenue: m.normalized_revenue,
            utilization: m.utilization,
            acceptance_rate: m.acceptance_rate,
            actual_peak: m.actual_peak,
        }
    }
}

/// Opaque instance handle.
pub struct PsInstance {
    inner: Instance,
}

/// Opaque handle to a finished engine run.
pub struct PsRun {
    schedule: Schedule,
    metrics: MetricsReport,
    dual_objective: Option<f64>,
}

struct Failure(PsStatus, String);

type FfiResult<T> = Result<T, Failure>;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn guard(f: impl FnOnce() -> FfiResult<()>) -> PsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PsStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("panic inside peakshaver".into());
            PsStatus::Panic
        }
    }
}

fn model_failure(e: ModelError) -> Failure {
    let status = match e {
        ModelError::Json(_) => PsStatus::Json,
        ModelError::UnsupportedVersion(_) => PsStatus::Unsupported,
        ModelError::UndefinedRatio { .. } | ModelError::UnboundedRatio(_) => PsStatus::Unsupported,
        ModelError::InvalidInstance(_) => PsStatus::InvalidInstance,
    };
    Failure(status, e.to_string())
}

fn schedule_failure(e: ScheduleError) -> Failure {
    match e {
        ScheduleError::Model(m) => model_failure(m),
        ScheduleError::Precondition(m) => Failure(PsStatus::Precondition, m),
        ScheduleError::Contract(m) => Failure(PsStatus::Contract, m),
    }
}

fn oracle_failure(e: OracleError) -> Failure {
    let msg = e.to_string();
    match e {
        OracleError::TooLarge { .. } => Failure(PsStatus::TooLarge, msg),
        OracleError::UnknownRequest(_) => Failure(PsStatus::OutOfRange, msg),
        OracleError::Model(m) => model_failure(m),
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref()
        .ok_or_else(|| Failure(PsStatus::NullPointer, format!("{what} is null")))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> FfiResult<()> {
    if out.is_null() {
        return Err(Failure(PsStatus::NullPointer, format!("{what} is null")));
    }
    out.write(value);
    Ok(())
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(Failure(PsStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(PsStatus::InvalidUtf8, format!("{what}: {e}")))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .expect("interior nul removed")
        .into_raw()
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ps_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failing call on this thread, or null if none.
/// The pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn ps_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn ps_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses an instance from JSON. The instance is not validated; see
/// [`ps_instance_validate`].
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_instance_from_json(
    json: *const c_char,
    out: *mut *mut PsInstance,
) -> PsStatus {
    guard(|| {
        let text = read_str(json, "json")?;
        let inner = Instance::from_json(text).map_err(model_failure)?;
        write_out(out, Box::into_raw(Box::new(PsInstance { inner })), "out")
    })
}

/// Samples an instance. `config_json` may be null for the default config;
/// `seed` overrides any seed in the config.
///
/// # Safety
/// `config_json` must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_instance_generate(
    config_json: *const c_char,
    seed: u64,
    out: *mut *mut PsInstance,
) -> PsStatus {
    guard(|| {
        let mut config = if config_json.is_null() {
            GenConfig::default()
        } else {
            let text = read_str(config_json, "config_json")?;
            serde_json::from_str(text).map_err(|e| Failure(PsStatus::Json, e.to_string()))?
        };
        config.seed = seed;
        let inner = generate_instance(&config)
            .map_err(|e| Failure(PsStatus::InvalidInstance, e.to_string()))?;
        write_out(out, Box::into_raw(Box::new(PsInstance { inner })), "out")
    })
}

/// Serializes an instance to JSON; free the result with [`ps_string_free`].
///
/// # Safety
/// `instance` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_instance_to_json(
    instance: *const PsInstance,
    out: *mut *mut c_char,
) -> PsStatus {
    guard(|| {
        let inst = deref(instance, "instance")?;
        write_out(out, into_c_string(inst.inner.to_json()), "out")
    })
}

/// Releases an instance. Null is ignored.
///
/// # Safety
/// `instance` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn ps_instance_free(instance: *mut PsInstance) {
    if !instance.is_null() {
        drop(Box::from_raw(instance));
    }
}

/// Number of requests in the instance.
///
/// # Safety
/// `instance` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_instance_num_requests(
    instance: *const PsInstance,
    out: *mut usize,
) -> PsStatus {
    guard(|| {
        write_out(
            out,
            deref(instance, "instance")?.inner.requests.len(),
            "out",
        )
    })
}

/// Number of time slots in the instance.
///
/// # Safety
/// `instance` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_instance_horizon(
    instance: *const PsInstance,
    out: *mut usize,
) -> PsStatus {
    guard(|| write_out(out, deref(instance, "instance")?.inner.horizon, "out"))
}

/// Counts validation problems: `errors` make the instance unusable,
/// `flags` are advisory. Either output may be null.
///
/// # Safety
/// `instance` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ps_instance_validate(
    instance: *const PsInstance,
    errors: *mut usize,
    flags: *mut usize,
) -> PsStatus {
    guard(|| {
        let violations = validate_instance(&deref(instance, "instance")?.inner);
        let n_flags = violations.iter().filter(|v| v.is_flag()).count();
        if !errors.is_null() {
            errors.write(violations.len() - n_flags);
        }
        if !flags.is_null() {
            flags.write(n_flags);
        }
        Ok(())
    })
}

/// Competitive-ratio bound of the instance.
///
/// # Safety
/// `instance` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_approximation_bound(
    instance: *const PsInstance,
    out: *mut f64,
) -> PsStatus {
    guard(|| {
        let bound =
            approximation_bound(&deref(instance, "instance")?.inner).map_err(model_failure)?;
        write_out(out, bound, "out")
    })
}

/// Schedules the instance with SCS.
///
/// # Safety
/// `instance` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_run_scs(instance: *const PsInstance, out: *mut *mut PsRun) -> PsStatus {
    guard(|| {
        let inst = &deref(instance, "instance")?.inner;
        let outcome = peakshaver::run_scs(inst).map_err(schedule_failure)?;
        let run = PsRun {
            metrics: compute_metrics(inst, &outcome.schedule),
            dual_objective: Some(outcome.certificate.dual_objective),
            schedule: outcome.schedule,
        };
        write_out(out, Box::into_raw(Box::new(run)), "out")
    })
}

/// Schedules the instance with the per-station right-to-left baseline.
///
/// # Safety
/// `instance` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_run_greedy_rtl(
    instance: *const PsInstance,
    reconsider: bool,
    out: *mut *mut PsRun,
) -> PsStatus {
    guard(|| {
        let inst = &deref(instance, "instance")?.inner;
        let outcome = run_greedy_rtl(inst, reconsider).map_err(schedule_failure)?;
        let run = PsRun {
            schedule: outcome.schedule,
            metrics: outcome.metrics,
            dual_objective: None,
        };
        write_out(out, Box::into_raw(Box::new(run)), "out")
    })
}

/// Releases a run. Null is ignored.
///
/// # Safety
/// `run` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn ps_run_free(run: *mut PsRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Summary metrics of a run.
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_run_metrics(run: *const PsRun, out: *mut PsMetrics) -> PsStatus {
    guard(|| write_out(out, PsMetrics::from(&deref(run, "run")?.metrics), "out"))
}

/// Dual objective of the run's certificate; `Unsupported` for engines that
/// do not produce one.
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_run_dual_objective(run: *const PsRun, out: *mut f64) -> PsStatus {
    guard(|| {
        let value = deref(run, "run")?.dual_objective.ok_or_else(|| {
            Failure(
                PsStatus::Unsupported,
                "this engine has no dual certificate".into(),
            )
        })?;
        write_out(out, value, "out")
    })
}

/// Whether request `request_id` is in the selected set.
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_run_is_selected(
    run: *const PsRun,
    request_id: usize,
    out: *mut bool,
) -> PsStatus {
    guard(|| {
        write_out(
            out,
            deref(run, "run")?.schedule.is_selected(request_id),
            "out",
        )
    })
}

/// Copies the per-slot energy of request `request_id` into `buf`, which must
/// hold at least `horizon` values. Unserved requests yield zeros.
///
/// # Safety
/// `run` must be a live handle; `buf` must be writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ps_run_allocation(
    run: *const PsRun,
    request_id: usize,
    buf: *mut f64,
    len: usize,
) -> PsStatus {
    guard(|| {
        let schedule = &deref(run, "run")?.schedule;
        if buf.is_null() {
            return Err(Failure(PsStatus::NullPointer, "buf is null".into()));
        }
        if len < schedule.horizon {
            return Err(Failure(
                PsStatus::OutOfRange,
                format!("buffer holds {len} values, horizon is {}", schedule.horizon),
            ));
        }
        let out = std::slice::from_raw_parts_mut(buf, schedule.horizon);
        for (slot, x) in out.iter_mut().enumerate() {
            *x = schedule.energy(request_id, slot + 1);
        }
        Ok(())
    })
}

/// Serializes the run's schedule to JSON; free with [`ps_string_free`].
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_run_schedule_json(
    run: *const PsRun,
    out: *mut *mut c_char,
) -> PsStatus {
    guard(|| {
        let schedule = &deref(run, "run")?.schedule;
        let text =
            serde_json::to_string(schedule).map_err(|e| Failure(PsStatus::Json, e.to_string()))?;
        write_out(out, into_c_string(text), "out")
    })
}

/// Exact optimal revenue by enumeration; `TooLarge` above `limit` requests.
///
/// # Safety
/// `instance` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_brute_force_opt(
    instance: *const PsInstance,
    limit: usize,
    out: *mut f64,
) -> PsStatus {
    guard(|| {
        let opt =
            brute_force_opt(&deref(instance, "instance")?.inner, limit).map_err(oracle_failure)?;
        write_out(out, opt.revenue, "out")
    })
}
