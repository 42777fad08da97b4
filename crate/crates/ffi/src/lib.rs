//! C ABI over the `byzsense` library.
//!
//! Every fallible call returns a [`BzStatus`]; on failure a message for the
//! calling thread is available from [`bz_last_error`]. Objects crossing the
//! boundary are opaque handles released with their matching `*_free`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use byzsense::detection::{iterative_threshold, lower_threshold, DetectorParams, ThresholdResult};
use byzsense::estimators::{self, Sample};
use byzsense::fusion::{pd_from_evaluations, score_evaluations, InstantEvaluation};
use byzsense::harness::{self, RunOptions, ScenarioReport};
use byzsense::sim::ScenarioConfig;
use byzsense::{Error, ThresholdMethod};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BzStatus {
    Ok = 0,
    InvalidInput = 1,
    DegenerateSample = 2,
    MissingInput = 3,
    InvalidConfig = 4,
    Io = 5,
    Invariant = 6,
    NullPointer = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BzMethod {
    Medcouple = 0,
    MeanDifference = 1,
    Mad = 2,
    Sn = 3,
    Qn = 4,
}

impl From<BzMethod> for ThresholdMethod {
    fn from(m: BzMethod) -> Self {
        match m {
            BzMethod::Medcouple => ThresholdMethod::Medcouple,
            BzMethod::MeanDifference => ThresholdMethod::MeanDifference,
            BzMethod::Mad => ThresholdMethod::Mad,
            BzMethod::Sn => ThresholdMethod::Sn,
            BzMethod::Qn => ThresholdMethod::Qn,
        }
    }
}

/// Adjusted-boxplot record.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BzFences {
    pub mc: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub h_l: f64,
    pub h_r: f64,
    pub lower_fence: f64,
    pub upper_fence: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BzDetectorParams {
    pub k: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub two_sided: bool,
}

/// Scenario configuration handle.
pub struct BzConfig(ScenarioConfig);

/// Result of an iterative threshold computation.
pub struct BzThreshold(ThresholdResult);

/// Simulated and evaluated scenario.
pub struct BzScenario(ScenarioReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(BzStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::InvalidInput(_) => BzStatus::InvalidInput,
            Error::DegenerateSample(_) => BzStatus::DegenerateSample,
            Error::MissingInput { .. } => BzStatus::MissingInput,
            Error::InvalidConfig { .. } => BzStatus::InvalidConfig,
            Error::Io { .. } => BzStatus::Io,
            Error::Invariant(_) => BzStatus::Invariant,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(BzStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> BzStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BzStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_last_error(format!("internal panic: {msg}"));
            BzStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(data: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn sample(values: *const f64, len: usize) -> Result<Sample, Failure> {
    Ok(Sample::from_slice(slice(values, len, "values")?)?)
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Failure(BzStatus::InvalidInput, format!("{what} is not valid UTF-8")))
}

unsafe fn methods(data: *const BzMethod, len: usize) -> Result<Vec<ThresholdMethod>, Failure> {
    Ok(slice(data, len, "methods")?
        .iter()
        .map(|&m| m.into())
        .collect())
}

/// Copies `ids` into a caller buffer. `written` always receives the full count.
unsafe fn write_ids(
    ids: impl ExactSizeIterator<Item = usize>,
    buf: *mut usize,
    cap: usize,
    written: *mut usize,
) -> Result<(), Failure> {
    let n = ids.len();
    *out(written, "written")? = n;
    if n > cap {
        return Err(Failure(
            BzStatus::BufferTooSmall,
            format!("{n} ids do not fit in a buffer of {cap}"),
        ));
    }
    if n > 0 && buf.is_null() {
        return Err(null("buffer"));
    }
    for (i, id) in ids.enumerate() {
        *buf.add(i) = id;
    }
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bz_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Exit code the command-line tool would use for `status`.
#[no_mangle]
pub extern "C" fn bz_status_exit_code(status: BzStatus) -> i32 {
    match status {
        BzStatus::Ok => 0,
        BzStatus::MissingInput => 2,
        BzStatus::InvalidConfig => 3,
        BzStatus::Io => 4,
        _ => 5,
    }
}

#[no_mangle]
pub extern "C" fn bz_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

unsafe fn scalar(
    values: *const f64,
    len: usize,
    result: *mut f64,
    f: fn(&Sample) -> byzsense::Result<f64>,
) -> BzStatus {
    guard(|| {
        let s = sample(values, len)?;
        *out(result, "result")? = f(&s)?;
        Ok(())
    })
}

/// Mean absolute pairwise difference over all ordered pairs, divided by n².
#[no_mangle]
pub unsafe extern "C" fn bz_mean_difference(
    values: *const f64,
    len: usize,
    result: *mut f64,
) -> BzStatus {
    scalar(values, len, result, estimators::mean_difference)
}

/// Unscaled median absolute deviation.
#[no_mangle]
pub unsafe extern "C" fn bz_mad(values: *const f64, len: usize, result: *mut f64) -> BzStatus {
    scalar(values, len, result, estimators::mad)
}

#[no_mangle]
pub unsafe extern "C" fn bz_sn(values: *const f64, len: usize, result: *mut f64) -> BzStatus {
    scalar(values, len, result, estimators::sn_estimator)
}

#[no_mangle]
pub unsafe extern "C" fn bz_qn(values: *const f64, len: usize, result: *mut f64) -> BzStatus {
    scalar(values, len, result, estimators::qn_estimator)
}

#[no_mangle]
pub unsafe extern "C" fn bz_medcouple(
    values: *const f64,
    len: usize,
    result: *mut f64,
) -> BzStatus {
    scalar(values, len, result, estimators::medcouple)
}

#[no_mangle]
pub unsafe extern "C" fn bz_median(values: *const f64, len: usize, result: *mut f64) -> BzStatus {
    scalar(values, len, result, estimators::median)
}

#[no_mangle]
pub unsafe extern "C" fn bz_adjusted_fences(
    values: *const f64,
    len: usize,
    result: *mut BzFences,
) -> BzStatus {
    guard(|| {
        let f = estimators::adjusted_fences(&sample(values, len)?)?;
        *out(result, "result")? = BzFences {
            mc: f.mc,
            q1: f.q1,
            q3: f.q3,
            iqr: f.iqr,
            h_l: f.h_l,
            h_r: f.h_r,
            lower_fence: f.lower_fence,
            upper_fence: f.upper_fence,
        };
        Ok(())
    })
}

/// Single-pass lower exclusion threshold.
#[no_mangle]
pub unsafe extern "C" fn bz_lower_threshold(
    values: *const f64,
    len: usize,
    method: BzMethod,
    k: f64,
    result: *mut f64,
) -> BzStatus {
    guard(|| {
        *out(result, "result")? = lower_threshold(&sample(values, len)?, method.into(), k)?;
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn bz_detector_params_default() -> BzDetectorParams {
    let p = DetectorParams::default();
    BzDetectorParams {
        k: p.k,
        max_iterations: p.max_iterations,
        tolerance: p.tolerance,
        two_sided: p.two_sided,
    }
}

/// Runs the iterative exclusion loop; `result` receives a new handle.
#[no_mangle]
pub unsafe extern "C" fn bz_iterative_threshold(
    values: *const f64,
    len: usize,
    method: BzMethod,
    params: *const BzDetectorParams,
    result: *mut *mut BzThreshold,
) -> BzStatus {
    guard(|| {
        let p = handle(params, "params")?;
        let params = DetectorParams {
            k: p.k,
            max_iterations: p.max_iterations,
            tolerance: p.tolerance,
            two_sided: p.two_sided,
        };
        let slot = out(result, "result")?;
        let r = iterative_threshold(&sample(values, len)?, method.into(), &params)?;
        *slot = Box::into_raw(Box::new(BzThreshold(r)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn bz_threshold_free(t: *mut BzThreshold) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

#[no_mangle]
pub unsafe extern "C" fn bz_threshold_lower(t: *const BzThreshold, result: *mut f64) -> BzStatus {
    guard(|| {
        *out(result, "result")? = handle(t, "threshold")?.0.lower_threshold;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn bz_threshold_iterations(
    t: *const BzThreshold,
    result: *mut usize,
) -> BzStatus {
    guard(|| {
        *out(result, "result")? = handle(t, "threshold")?.0.iterations_used;
        Ok(())
    })
}

/// True when the loop stopped because another round would leave too few values.
#[no_mangle]
pub unsafe extern "C" fn bz_threshold_truncated(
    t: *const BzThreshold,
    result: *mut bool,
) -> BzStatus {
    guard(|| {
        *out(result, "result")? = handle(t, "threshold")?.0.truncated();
        Ok(())
    })
}

/// Excluded sample indices in ascending order. Returns `BufferTooSmall` with
/// `written` set to the required length when `cap` is insufficient.
#[no_mangle]
pub unsafe extern "C" fn bz_threshold_excluded(
    t: *const BzThreshold,
    buf: *mut usize,
    cap: usize,
    written: *mut usize,
) -> BzStatus {
    guard(|| {
        let t = handle(t, "threshold")?;
        write_ids(t.0.excluded_ids.iter().copied(), buf, cap, written)
    })
}

#[no_mangle]
pub extern "C" fn bz_config_default() -> *mut BzConfig {
    Box::into_raw(Box::new(BzConfig(ScenarioConfig::default())))
}

#[no_mangle]
pub unsafe extern "C" fn bz_config_parse(
    toml: *const c_char,
    result: *mut *mut BzConfig,
) -> BzStatus {
    guard(|| {
        let slot = out(result, "result")?;
        let cfg = byzsense::parse_config(text(toml, "toml")?)?;
        *slot = Box::into_raw(Box::new(BzConfig(cfg)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn bz_config_load(
    path: *const c_char,
    result: *mut *mut BzConfig,
) -> BzStatus {
    guard(|| {
        let slot = out(result, "result")?;
        let cfg = byzsense::load_config(Path::new(text(path, "path")?))?;
        *slot = Box::into_raw(Box::new(BzConfig(cfg)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn bz_config_free(cfg: *mut BzConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

#[no_mangle]
pub unsafe extern "C" fn bz_config_set_seed(cfg: *mut BzConfig, seed: u64) -> BzStatus {
    guard(|| {
        out(cfg, "config")?.0.master_seed = seed;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn bz_config_set_malicious(
    cfg: *mut BzConfig,
    n_malicious: usize,
) -> BzStatus {
    guard(|| {
        let c = out(cfg, "config")?;
        let mut next = c.0.clone();
        next.n_malicious = n_malicious;
        next.validate()?;
        c.0 = next;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn bz_config_seed(cfg: *const BzConfig, result: *mut u64) -> BzStatus {
    guard(|| {
        *out(result, "result")? = handle(cfg, "config")?.0.master_seed;
        Ok(())
    })
}

/// Simulates the scenario and applies every listed method plus the
/// unfiltered baseline.
#[no_mangle]
pub unsafe extern "C" fn bz_scenario_evaluate(
    cfg: *const BzConfig,
    methods_ptr: *const BzMethod,
    n_methods: usize,
    parallel: bool,
    result: *mut *mut BzScenario,
) -> BzStatus {
    guard(|| {
        let cfg = handle(cfg, "config")?;
        let methods = methods(methods_ptr, n_methods)?;
        let slot = out(result, "result")?;
        let report = harness::evaluate_scenario(&cfg.0, &methods, RunOptions { parallel })?;
        *slot = Box::into_raw(Box::new(BzScenario(report)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn bz_scenario_free(s: *mut BzScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

#[no_mangle]
pub unsafe extern "C" fn bz_scenario_instant_count(
    s: *const BzScenario,
    result: *mut usize,
) -> BzStatus {
    guard(|| {
        *out(result, "result")? = handle(s, "scenario")?.0.instants.len();
        Ok(())
    })
}

fn evaluations(s: &BzScenario, method: Option<BzMethod>) -> Result<&[InstantEvaluation], Failure> {
    match method {
        None => Ok(&s.0.baseline),
        Some(m) => s.0.evaluations(m.into()).ok_or_else(|| {
            Failure(
                BzStatus::InvalidInput,
                format!("method {} was not evaluated", ThresholdMethod::from(m)),
            )
        }),
    }
}

/// Instants whose flagged set equals the true malicious set.
#[no_mangle]
pub unsafe extern "C" fn bz_scenario_setmatch(
    s: *const BzScenario,
    method: BzMethod,
    result: *mut usize,
) -> BzStatus {
    guard(|| {
        let evals = evaluations(handle(s, "scenario")?, Some(method))?;
        *out(result, "result")? = score_evaluations(evals).correct_setmatch;
        Ok(())
    })
}

/// Detection probability of `method` at a global threshold.
#[no_mangle]
pub unsafe extern "C" fn bz_scenario_pd(
    s: *const BzScenario,
    method: BzMethod,
    global_threshold: f64,
    result: *mut f64,
) -> BzStatus {
    guard(|| {
        let evals = evaluations(handle(s, "scenario")?, Some(method))?;
        *out(result, "result")? = pd_from_evaluations(evals, global_threshold)?;
        Ok(())
    })
}

/// Detection probability without any exclusion.
#[no_mangle]
pub unsafe extern "C" fn bz_scenario_baseline_pd(
    s: *const BzScenario,
    global_threshold: f64,
    result: *mut f64,
) -> BzStatus {
    guard(|| {
        let evals = evaluations(handle(s, "scenario")?, None)?;
        *out(result, "result")? = pd_from_evaluations(evals, global_threshold)?;
        Ok(())
    })
}

fn instant(evals: &[InstantEvaluation], index: usize) -> Result<&InstantEvaluation, Failure> {
    evals.get(index).ok_or_else(|| {
        Failure(
            BzStatus::InvalidInput,
            format!("instant {index} out of range for {} instants", evals.len()),
        )
    })
}

/// Users flagged by `method` at one instant, ascending.
#[no_mangle]
pub unsafe extern "C" fn bz_scenario_flagged(
    s: *const BzScenario,
    method: BzMethod,
    instant_index: usize,
    buf: *mut usize,
    cap: usize,
    written: *mut usize,
) -> BzStatus {
    guard(|| {
        let evals = evaluations(handle(s, "scenario")?, Some(method))?;
        let e = instant(evals, instant_index)?;
        write_ids(e.flagged.iter().copied(), buf, cap, written)
    })
}

#[no_mangle]
pub unsafe extern "C" fn bz_scenario_fused_level(
    s: *const BzScenario,
    method: BzMethod,
    instant_index: usize,
    result: *mut f64,
) -> BzStatus {
    guard(|| {
        let evals = evaluations(handle(s, "scenario")?, Some(method))?;
        *out(result, "result")? = instant(evals, instant_index)?.fused_level;
        Ok(())
    })
}

/// Runs one scenario and writes CSV files plus `manifest.json` to `out_dir`.
#[no_mangle]
pub unsafe extern "C" fn bz_run(
    cfg: *const BzConfig,
    methods_ptr: *const BzMethod,
    n_methods: usize,
    out_dir: *const c_char,
    parallel: bool,
) -> BzStatus {
    guard(|| {
        let cfg = handle(cfg, "config")?;
        let methods = methods(methods_ptr, n_methods)?;
        let dir = Path::new(text(out_dir, "out_dir")?);
        harness::run_scenario(&cfg.0, &methods, dir, RunOptions { parallel })?;
        Ok(())
    })
}

/// Runs one scenario per attacker count under `out_dir/m<count>/`.
#[no_mangle]
pub unsafe extern "C" fn bz_sweep(
    cfg: *const BzConfig,
    counts: *const usize,
    n_counts: usize,
    methods_ptr: *const BzMethod,
    n_methods: usize,
    out_dir: *const c_char,
    parallel: bool,
) -> BzStatus {
    guard(|| {
        let cfg = handle(cfg, "config")?;
        let counts = slice(counts, n_counts, "counts")?;
        let methods = methods(methods_ptr, n_methods)?;
        let dir = Path::new(text(out_dir, "out_dir")?);
        harness::sweep(&cfg.0, counts, &methods, dir, RunOptions { parallel })?;
        Ok(())
    })
}
