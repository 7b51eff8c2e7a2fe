//! C ABI over the purrfessor statistics, assignment, overlap and scale
//! scoring routines.
//!
//! Conventions:
//! - Every fallible function returns a [`PfStatus`]; results go through out
//!   pointers that are written only on `PF_STATUS_OK`.
//! - Handles are opaque and must be released with their `*_free` function.
//! - Strings returned through `char **` are owned by the caller and released
//!   with [`pf_string_free`].
//! - After a failure, [`pf_last_error`] copies a message for the calling
//!   thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use purrfessor::eval::{extract_food_terms, krippendorff_alpha, overlap_score, EvalError, FoodLexicon, Metric, OverlapMode};
use purrfessor::experiment::{BlockAssigner, ExperimentError, ParticipantRecord, StudyConfig};
use purrfessor::domain::Condition;
use purrfessor::jsonl;
use purrfessor::stats::{cronbach_alpha, f_sf, ols, t_two_sided_p, Matrix, StatsError};
use thiserror::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InsufficientData = 3,
    Degenerate = 4,
    Numeric = 5,
    Parse = 6,
    Io = 7,
    BufferTooSmall = 8,
    Panic = 99,
}

/// Distance metric for Krippendorff's alpha.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PfMetric {
    Interval = 0,
    Ordinal = 1,
    Nominal = 2,
}

/// Overlap rate definition.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PfOverlapMode {
    Recall = 0,
    Jaccard = 1,
}

#[derive(Debug, Error)]
enum FfiError {
    #[error("{0} is null")]
    Null(&'static str),
    #[error("{0}")]
    Invalid(String),
    #[error("buffer too small: {need} bytes needed")]
    BufferTooSmall { need: usize },
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Jsonl(#[from] jsonl::JsonlError),
}

impl FfiError {
    fn status(&self) -> PfStatus {
        match self {
            FfiError::Null(_) => PfStatus::NullPointer,
            FfiError::Invalid(_) => PfStatus::InvalidArgument,
            FfiError::BufferTooSmall { .. } => PfStatus::BufferTooSmall,
            FfiError::Stats(e) => stats_status(e),
            FfiError::Eval(EvalError::InsufficientData(_)) => PfStatus::InsufficientData,
            FfiError::Eval(EvalError::Io(_)) => PfStatus::Io,
            FfiError::Eval(EvalError::Jsonl(_) | EvalError::Lexicon(_)) => PfStatus::Parse,
            FfiError::Eval(_) => PfStatus::InvalidArgument,
            FfiError::Experiment(ExperimentError::InsufficientData(_)) => PfStatus::InsufficientData,
            FfiError::Experiment(ExperimentError::Stats(e)) => stats_status(e),
            FfiError::Experiment(ExperimentError::Config(_)) => PfStatus::Parse,
            FfiError::Experiment(_) => PfStatus::InvalidArgument,
            FfiError::Jsonl(jsonl::JsonlError::Io(_)) => PfStatus::Io,
            FfiError::Jsonl(_) => PfStatus::Parse,
        }
    }
}

fn stats_status(e: &StatsError) -> PfStatus {
    match e {
        StatsError::InsufficientObservations { .. } => PfStatus::InsufficientData,
        StatsError::RankDeficient { .. } | StatsError::DegenerateVariance => PfStatus::Degenerate,
        StatsError::NonConvergence { .. } => PfStatus::Numeric,
        StatsError::DimensionMismatch(_) | StatsError::InvalidInput(_) => PfStatus::InvalidArgument,
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

/// Runs `f`, turning errors and panics into a status plus a message.
fn guard(f: impl FnOnce() -> Result<(), FfiError>) -> PfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            PfStatus::Ok
        }
        Ok(Err(e)) => {
            let status = e.status();
            set_last_error(e.to_string());
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            PfStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, name: &'static str) -> Result<&'a [T], FfiError> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(FfiError::Null(name));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn string<'a>(ptr: *const c_char, name: &'static str) -> Result<&'a str, FfiError> {
    if ptr.is_null() {
        return Err(FfiError::Null(name));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| FfiError::Invalid(format!("{name} is not UTF-8")))
}

unsafe fn write<T>(out: *mut T, value: T, name: &'static str) -> Result<(), FfiError> {
    if out.is_null() {
        return Err(FfiError::Null(name));
    }
    out.write(value);
    Ok(())
}

fn checked_len(rows: usize, cols: usize) -> Result<usize, FfiError> {
    rows.checked_mul(cols).ok_or_else(|| FfiError::Invalid("dimensions overflow".into()))
}

unsafe fn out_string(out: *mut *mut c_char, s: String) -> Result<(), FfiError> {
    let c = CString::new(s).map_err(|_| FfiError::Invalid("output contains a nul byte".into()))?;
    write(out, c.into_raw(), "out")
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated when `len > 0`). Returns the full message length
/// excluding the NUL; 0 when there is no error.
///
/// # Safety
/// `buf` must be valid for `len` bytes or null with `len == 0`.
#[no_mangle]
pub unsafe extern "C" fn pf_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else {
            if !buf.is_null() && len > 0 {
                *buf = 0;
            }
            return 0;
        };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn pf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Cronbach's alpha of a row-major `rows × cols` (respondents × items)
/// matrix.
///
/// # Safety
/// `data` must hold `rows * cols` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pf_cronbach_alpha(data: *const f64, rows: usize, cols: usize, out: *mut f64) -> PfStatus {
    guard(|| {
        let values = slice(data, checked_len(rows, cols)?, "data")?;
        let m = Matrix::new(rows, cols, values.to_vec())?;
        write(out, cronbach_alpha(&m)?.alpha, "out")
    })
}

/// Krippendorff's alpha over a row-major `units × coders` matrix; NaN marks
/// a missing rating.
///
/// # Safety
/// `data` must hold `units * coders` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pf_krippendorff_alpha(
    data: *const f64,
    units: usize,
    coders: usize,
    metric: PfMetric,
    out: *mut f64,
) -> PfStatus {
    guard(|| {
        let values = slice(data, checked_len(units, coders)?, "data")?;
        let rows: Vec<Vec<Option<f64>>> = if coders == 0 {
            Vec::new()
        } else {
            values.chunks(coders).map(|u| u.iter().map(|v| (!v.is_nan()).then_some(*v)).collect()).collect()
        };
        let metric = match metric {
            PfMetric::Interval => Metric::Interval,
            PfMetric::Ordinal => Metric::Ordinal,
            PfMetric::Nominal => Metric::Nominal,
        };
        let result = krippendorff_alpha(&rows, metric)?;
        if result.degenerate {
            return Err(FfiError::Stats(StatsError::DegenerateVariance));
        }
        write(out, result.alpha, "out")
    })
}

/// Least squares fit of `y` on the row-major `n × p` design `x` (include an
/// intercept column yourself). Writes `p` estimates and standard errors and
/// the residual degrees of freedom. `se` and `df_resid` may be null.
///
/// # Safety
/// `x` must hold `n * p` doubles, `y` `n`, `coef` (and `se` if non-null) `p`.
#[no_mangle]
pub unsafe extern "C" fn pf_ols(
    x: *const f64,
    n: usize,
    p: usize,
    y: *const f64,
    coef: *mut f64,
    se: *mut f64,
    df_resid: *mut usize,
) -> PfStatus {
    guard(|| {
        let xs = slice(x, checked_len(n, p)?, "x")?;
        let ys = slice(y, n, "y")?;
        if coef.is_null() {
            return Err(FfiError::Null("coef"));
        }
        let fit = ols(&Matrix::new(n, p, xs.to_vec())?, ys)?;
        for (i, c) in fit.coefficients.iter().enumerate() {
            *coef.add(i) = c.estimate;
            if !se.is_null() {
                *se.add(i) = c.std_error;
            }
        }
        if !df_resid.is_null() {
            *df_resid = fit.df_resid;
        }
        Ok(())
    })
}

/// Two-sided p-value of a t statistic.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pf_t_two_sided_p(t: f64, df: f64, out: *mut f64) -> PfStatus {
    guard(|| write(out, t_two_sided_p(t, df)?, "out"))
}

/// Upper tail of the F distribution.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pf_f_sf(f: f64, d1: f64, d2: f64, out: *mut f64) -> PfStatus {
    guard(|| write(out, f_sf(f, d1, d2)?, "out"))
}

/// Number of experiment conditions.
#[no_mangle]
pub extern "C" fn pf_condition_count() -> usize {
    Condition::ALL.len()
}

/// Writes the `profile:model` label of condition `index` into `buf`.
///
/// # Safety
/// `buf` must be valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn pf_condition_label(index: usize, buf: *mut c_char, len: usize) -> PfStatus {
    guard(|| {
        let c = Condition::ALL
            .get(index)
            .ok_or_else(|| FfiError::Invalid(format!("condition index {index} out of range")))?;
        copy_to(&c.to_string(), buf, len)
    })
}

unsafe fn copy_to(s: &str, buf: *mut c_char, len: usize) -> Result<(), FfiError> {
    if buf.is_null() {
        return Err(FfiError::Null("buf"));
    }
    if s.len() + 1 > len {
        return Err(FfiError::BufferTooSmall { need: s.len() + 1 });
    }
    std::ptr::copy_nonoverlapping(s.as_ptr().cast(), buf, s.len());
    *buf.add(s.len()) = 0;
    Ok(())
}

/// Seeded block randomizer over the experiment conditions.
pub struct PfAssigner(BlockAssigner);

/// Creates an assigner; `draws` replays that many earlier draws so a
/// restarted service continues the same sequence.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pf_assigner_new(seed: u64, draws: u64, out: *mut *mut PfAssigner) -> PfStatus {
    guard(|| write(out, Box::into_raw(Box::new(PfAssigner(BlockAssigner::resume(seed, draws)))), "out"))
}

/// Draws the next condition; writes its index (see [`pf_condition_label`]).
///
/// # Safety
/// `assigner` must come from [`pf_assigner_new`]; `index` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pf_assigner_next(assigner: *mut PfAssigner, index: *mut usize) -> PfStatus {
    guard(|| {
        let a = assigner.as_mut().ok_or(FfiError::Null("assigner"))?;
        if index.is_null() {
            return Err(FfiError::Null("index"));
        }
        *index = a.0.next_condition().index();
        Ok(())
    })
}

/// # Safety
/// `assigner` must come from [`pf_assigner_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pf_assigner_free(assigner: *mut PfAssigner) {
    if !assigner.is_null() {
        drop(Box::from_raw(assigner));
    }
}

/// Food vocabulary used for term extraction.
pub struct PfLexicon(FoodLexicon);

/// The built-in lexicon, or one parsed from `text` when it is non-null.
///
/// # Safety
/// `text` must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pf_lexicon_new(text: *const c_char, out: *mut *mut PfLexicon) -> PfStatus {
    guard(|| {
        let lexicon = if text.is_null() { FoodLexicon::shipped() } else { FoodLexicon::parse(string(text, "text")?)? };
        write(out, Box::into_raw(Box::new(PfLexicon(lexicon))), "out")
    })
}

/// Overlap between the food terms found in `response` and the
/// newline-separated `reference` terms.
///
/// # Safety
/// Strings must be NUL-terminated; `lexicon` from [`pf_lexicon_new`].
#[no_mangle]
pub unsafe extern "C" fn pf_overlap(
    lexicon: *const PfLexicon,
    response: *const c_char,
    reference: *const c_char,
    mode: PfOverlapMode,
    out: *mut f64,
) -> PfStatus {
    guard(|| {
        let lexicon = &lexicon.as_ref().ok_or(FfiError::Null("lexicon"))?.0;
        let response = string(response, "response")?;
        let reference = string(reference, "reference")?
            .lines()
            .filter_map(|t| {
                let t = t.trim().to_lowercase();
                (!t.is_empty()).then(|| lexicon.canonical(&t).map(str::to_owned).unwrap_or(t))
            })
            .collect();
        let mode = match mode {
            PfOverlapMode::Recall => OverlapMode::Recall,
            PfOverlapMode::Jaccard => OverlapMode::Jaccard,
        };
        let candidate = extract_food_terms(response, lexicon);
        write(out, overlap_score(&reference, &candidate, mode)?, "out")
    })
}

/// # Safety
/// `lexicon` must come from [`pf_lexicon_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pf_lexicon_free(lexicon: *mut PfLexicon) {
    if !lexicon.is_null() {
        drop(Box::from_raw(lexicon));
    }
}

/// Study definition: questionnaires, scales, covariates.
pub struct PfStudy(StudyConfig);

/// The built-in study, or one loaded from the TOML file at `path` when it
/// is non-null.
///
/// # Safety
/// `path` must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pf_study_new(path: *const c_char, out: *mut *mut PfStudy) -> PfStatus {
    guard(|| {
        let study = if path.is_null() {
            StudyConfig::shipped()
        } else {
            StudyConfig::load(Path::new(string(path, "path")?))?
        };
        write(out, Box::into_raw(Box::new(PfStudy(study))), "out")
    })
}

/// Scale summaries (JSON) for participant records given as JSON lines.
///
/// # Safety
/// `study` from [`pf_study_new`]; `participants` NUL-terminated; the string
/// written to `out` must be released with [`pf_string_free`].
#[no_mangle]
pub unsafe extern "C" fn pf_study_scales_json(
    study: *const PfStudy,
    participants: *const c_char,
    out: *mut *mut c_char,
) -> PfStatus {
    guard(|| {
        let study = &study.as_ref().ok_or(FfiError::Null("study"))?.0;
        let records: Vec<ParticipantRecord> = jsonl::parse(string(participants, "participants")?)?;
        let report = study.scales_report(&records)?;
        out_string(out, serde_json::to_string(&report).map_err(|e| FfiError::Invalid(e.to_string()))?)
    })
}

/// Regression of every outcome (JSON) for participant records given as
/// JSON lines.
///
/// # Safety
/// As for [`pf_study_scales_json`].
#[no_mangle]
pub unsafe extern "C" fn pf_study_regression_json(
    study: *const PfStudy,
    participants: *const c_char,
    passed_only: bool,
    out: *mut *mut c_char,
) -> PfStatus {
    guard(|| {
        let study = &study.as_ref().ok_or(FfiError::Null("study"))?.0;
        let records: Vec<ParticipantRecord> = jsonl::parse(string(participants, "participants")?)?;
        let report = study.regression_report(&records, None, passed_only)?;
        out_string(out, serde_json::to_string(&report).map_err(|e| FfiError::Invalid(e.to_string()))?)
    })
}

/// # Safety
/// `study` must come from [`pf_study_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pf_study_free(study: *mut PfStudy) {
    if !study.is_null() {
        drop(Box::from_raw(study));
    }
}
