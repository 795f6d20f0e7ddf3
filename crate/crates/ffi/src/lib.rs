//! C ABI for extraction, context statements, scoring and metrics.
//!
//! Conventions:
//!
//! * Every fallible function returns a [`CitefnStatus`]. On failure a message
//!   is kept per thread; fetch it with [`citefn_last_error_message`].
//! * Strings passed in are NUL-terminated UTF-8 and are borrowed for the call.
//! * Strings handed out (`char **out`) are owned by the caller and must be
//!   released with [`citefn_string_free`].
//! * Handles (`CitefnRegistry`, `CitefnEvaluation`) are opaque and released
//!   with their `_free` function. Passing NULL to a `_free` function is a
//!   no-op.
//! * Structured values cross the boundary as JSON using the library's serde
//!   shapes.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use citefn::context::TemplateRegistry;
use citefn::corpus::{AnnotationRecord, Identifier};
use citefn::jats::ExtractionParams;
use citefn::metrics::CostInputs;
use citefn::orchestrator::AnswerKind;
use citefn::sargo::{self, EvaluationMatrix, PairAdjudication, SargoError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CitefnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidJson = 3,
    InvalidInput = 4,
    Conflict = 5,
    Incomplete = 6,
    UnknownItem = 7,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CitefnAnswerKind {
    Boolean = 0,
    Text = 1,
    StringArray = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CitefnCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CitefnMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub hallucination_rate: f64,
}

/// Opaque statement template registry.
pub struct CitefnRegistry(TemplateRegistry);

/// Opaque evaluation matrix for one gold/machine pair.
pub struct CitefnEvaluation(EvaluationMatrix);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(CitefnStatus, String);

impl From<SargoError> for Failure {
    fn from(e: SargoError) -> Self {
        let status = match e {
            SargoError::Conflict { .. } => CitefnStatus::Conflict,
            SargoError::Incomplete(_) => CitefnStatus::Incomplete,
            SargoError::UnknownItem { .. } => CitefnStatus::UnknownItem,
            _ => CitefnStatus::InvalidInput,
        };
        Failure(status, e.to_string())
    }
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CitefnStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CitefnStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            CitefnStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(CitefnStatus::NullPointer, format!("`{name}` is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(CitefnStatus::InvalidUtf8, format!("`{name}`: {e}")))
}

unsafe fn json_arg<T: serde::de::DeserializeOwned>(p: *const c_char, name: &str) -> Result<T, Failure> {
    serde_json::from_str(str_arg(p, name)?)
        .map_err(|e| Failure(CitefnStatus::InvalidJson, format!("`{name}`: {e}")))
}

fn check_out<T>(out: *mut T) -> Result<(), Failure> {
    if out.is_null() {
        Err(Failure(CitefnStatus::NullPointer, "output pointer is NULL".into()))
    } else {
        Ok(())
    }
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|e| Failure(CitefnStatus::InvalidInput, e.to_string()))?;
    *out = c.into_raw();
    Ok(())
}

fn invalid(e: impl ToString) -> Failure {
    Failure(CitefnStatus::InvalidInput, e.to_string())
}

/// Message for the last failed call on this thread, or NULL. Free it with
/// `citefn_string_free`.
#[no_mangle]
pub extern "C" fn citefn_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| match &*e.borrow() {
        Some(msg) => msg.clone().into_raw(),
        None => ptr::null_mut(),
    })
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be NULL or a pointer obtained from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn citefn_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn citefn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Extracts plain text from JATS XML. `params_json` may be NULL for the
/// defaults (tables and figure text kept; front/back matter and headers
/// dropped).
///
/// # Safety
/// String arguments must be NULL or valid NUL-terminated strings; `out_text`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn citefn_extract_text(
    xml: *const c_char,
    params_json: *const c_char,
    out_text: *mut *mut c_char,
) -> CitefnStatus {
    guard(|| {
        check_out(out_text)?;
        let xml = str_arg(xml, "xml")?;
        let params: ExtractionParams = if params_json.is_null() {
            ExtractionParams::default()
        } else {
            json_arg(params_json, "params_json")?
        };
        let text = citefn::jats::extract_text(xml, &params).map_err(invalid)?;
        put_string(out_text, text.text)
    })
}

/// The shipped template registry. Never NULL.
#[no_mangle]
pub extern "C" fn citefn_registry_builtin() -> *mut CitefnRegistry {
    Box::into_raw(Box::new(CitefnRegistry(TemplateRegistry::builtin())))
}

/// # Safety
/// `json` must be a valid string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn citefn_registry_from_json(
    json: *const c_char,
    out: *mut *mut CitefnRegistry,
) -> CitefnStatus {
    guard(|| {
        check_out(out)?;
        let reg = TemplateRegistry::from_json(str_arg(json, "json")?).map_err(invalid)?;
        *out = Box::into_raw(Box::new(CitefnRegistry(reg)));
        Ok(())
    })
}

/// # Safety
/// `reg` must be NULL or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn citefn_registry_free(reg: *mut CitefnRegistry) {
    if !reg.is_null() {
        drop(Box::from_raw(reg));
    }
}

/// Renders the context statement for an identifier given as JSON
/// (`accession`, `identifier_class`, `source_db`, `metadata`).
///
/// # Safety
/// `reg` must be a live handle; strings valid; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn citefn_build_statement(
    reg: *const CitefnRegistry,
    identifier_json: *const c_char,
    out: *mut *mut c_char,
) -> CitefnStatus {
    guard(|| {
        check_out(out)?;
        let reg = reg
            .as_ref()
            .ok_or_else(|| Failure(CitefnStatus::NullPointer, "`reg` is NULL".into()))?;
        let id: Identifier = json_arg(identifier_json, "identifier_json")?;
        put_string(out, citefn::build_statement(&id, &reg.0).map_err(invalid)?)
    })
}

/// Auto-matches a consensus record against a machine record.
///
/// # Safety
/// Strings valid; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn citefn_evaluation_new(
    gold_json: *const c_char,
    machine_json: *const c_char,
    out: *mut *mut CitefnEvaluation,
) -> CitefnStatus {
    guard(|| {
        check_out(out)?;
        let gold: AnnotationRecord = json_arg(gold_json, "gold_json")?;
        let machine: AnnotationRecord = json_arg(machine_json, "machine_json")?;
        let m = sargo::auto_match(&gold, &machine, &sargo::normalize_for_match)?;
        *out = Box::into_raw(Box::new(CitefnEvaluation(m)));
        Ok(())
    })
}

/// # Safety
/// `ev` must be NULL or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn citefn_evaluation_free(ev: *mut CitefnEvaluation) {
    if !ev.is_null() {
        drop(Box::from_raw(ev));
    }
}

unsafe fn eval_ref<'a>(ev: *const CitefnEvaluation) -> Result<&'a CitefnEvaluation, Failure> {
    ev.as_ref()
        .ok_or_else(|| Failure(CitefnStatus::NullPointer, "`ev` is NULL".into()))
}

/// Unresolved values as a JSON array.
///
/// # Safety
/// `ev` live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn citefn_evaluation_unresolved_json(
    ev: *const CitefnEvaluation,
    out: *mut *mut c_char,
) -> CitefnStatus {
    guard(|| {
        check_out(out)?;
        let ev = eval_ref(ev)?;
        put_string(out, serde_json::to_string(&ev.0.unresolved).map_err(invalid)?)
    })
}

/// The whole matrix as JSON.
///
/// # Safety
/// `ev` live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn citefn_evaluation_matrix_json(
    ev: *const CitefnEvaluation,
    out: *mut *mut c_char,
) -> CitefnStatus {
    guard(|| {
        check_out(out)?;
        let ev = eval_ref(ev)?;
        put_string(out, serde_json::to_string(&ev.0).map_err(invalid)?)
    })
}

/// Applies one reviewer submission (`pair_id`, `verdicts`, `aggregations`).
/// On any error the evaluation is left unchanged.
///
/// # Safety
/// `ev` live; `adjudication_json` valid.
#[no_mangle]
pub unsafe extern "C" fn citefn_evaluation_apply(
    ev: *mut CitefnEvaluation,
    adjudication_json: *const c_char,
) -> CitefnStatus {
    guard(|| {
        let ev = ev
            .as_mut()
            .ok_or_else(|| Failure(CitefnStatus::NullPointer, "`ev` is NULL".into()))?;
        let adj: PairAdjudication = json_arg(adjudication_json, "adjudication_json")?;
        ev.0 = sargo::apply_partial(&ev.0, &adj)?;
        Ok(())
    })
}

/// Number of values still waiting for a reviewer.
///
/// # Safety
/// `ev` must be NULL or live; NULL gives 0.
#[no_mangle]
pub unsafe extern "C" fn citefn_evaluation_unresolved_count(ev: *const CitefnEvaluation) -> usize {
    ev.as_ref().map_or(0, |e| e.0.unresolved.len())
}

/// Confusion counts per category, written to `out[0]` (data accessed),
/// `out[1]` (use cases) and `out[2]` (tools). Fails with
/// `CITEFN_STATUS_INCOMPLETE` while values are unresolved.
///
/// # Safety
/// `ev` live; `out` points to three writable `CitefnCounts`.
#[no_mangle]
pub unsafe extern "C" fn citefn_evaluation_score(
    ev: *const CitefnEvaluation,
    out: *mut CitefnCounts,
) -> CitefnStatus {
    guard(|| {
        check_out(out)?;
        let score = sargo::score_pair(&eval_ref(ev)?.0)?;
        for (i, c) in [score.data_accessed, score.use_cases, score.tools].into_iter().enumerate() {
            *out.add(i) = CitefnCounts {
                tp: c.tp,
                fp: c.fp,
                tn: c.tn,
                fn_: c.fn_,
            };
        }
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn citefn_compute_metrics(counts: CitefnCounts) -> CitefnMetrics {
    let m = citefn::compute_metrics(&sargo::ConfusionCounts::new(counts.tp, counts.fp, counts.tn, counts.fn_));
    CitefnMetrics {
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
        hallucination_rate: m.hallucination_rate,
    }
}

/// Prices are per 1,000 tokens and must be non-negative.
///
/// # Safety
/// `out_total` writable.
#[no_mangle]
pub unsafe extern "C" fn citefn_estimate_cost(
    pair_count: u64,
    median_input_tokens: u64,
    median_output_tokens: u64,
    input_price: f64,
    output_price: f64,
    out_total: *mut f64,
) -> CitefnStatus {
    guard(|| {
        check_out(out_total)?;
        let est = citefn::estimate_cost(&CostInputs {
            pair_count,
            median_input_tokens,
            median_output_tokens,
            input_price,
            output_price,
        })
        .map_err(invalid)?;
        *out_total = est.total;
        Ok(())
    })
}

/// Parses a model reply; the answer is written as JSON (`true`, a string, or
/// an array of strings).
///
/// # Safety
/// `raw` valid; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn citefn_parse_answer(
    raw: *const c_char,
    kind: CitefnAnswerKind,
    out_json: *mut *mut c_char,
) -> CitefnStatus {
    guard(|| {
        check_out(out_json)?;
        let kind = match kind {
            CitefnAnswerKind::Boolean => AnswerKind::Boolean,
            CitefnAnswerKind::Text => AnswerKind::Text,
            CitefnAnswerKind::StringArray => AnswerKind::StringArray,
        };
        let answer = citefn::parse_answer(str_arg(raw, "raw")?, kind).map_err(invalid)?;
        put_string(out_json, serde_json::to_string(&answer).map_err(invalid)?)
    })
}
