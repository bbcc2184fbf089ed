//! C ABI for the solver library: opaque handles, integer status codes, and
//! JSON strings as the bulk data format.
//!
//! Ownership rules: every `*_new`/`*_from_*`/`vopt_solve` output parameter
//! hands the caller an owned handle that must be released with the matching
//! `*_free`; strings returned through `char **` must be released with
//! [`vopt_string_free`]. Handles are immutable after creation and may be
//! shared across threads for reads.
//!
//! Every function returns a [`VoptStatus`]; on any status other than
//! `VOPT_STATUS_OK` the output parameters are untouched and a description
//! of the failure is available from [`vopt_last_error_message`] on the same
//! thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};

use vopt_risk::benson::{solve_vector_problem, Algorithm, SolveOptions, VectorSolveResult};
use vopt_risk::cli::result_file;
use vopt_risk::model::{from_json, TwoStageProblem};
use vopt_risk::polyhedra::Cone;
use vopt_risk::risk::{RiskKind, RiskMeasure};
use vopt_risk::scalarization::Backend;

/// Status code of every FFI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoptStatus {
    /// Success.
    VoptStatusOk = 0,
    /// A required pointer argument was null.
    VoptStatusNullArgument = 1,
    /// A string argument was not valid UTF-8.
    VoptStatusInvalidUtf8 = 2,
    /// A JSON document failed to parse or validate.
    VoptStatusParse = 3,
    /// Invalid numeric configuration (dimensions, tolerance, enum tag).
    VoptStatusInvalidArgument = 4,
    /// The solve itself failed.
    VoptStatusSolve = 5,
}

/// Approximation loop selector for [`vopt_solve`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoptAlgorithm {
    VoptAlgorithmPrimal = 0,
    VoptAlgorithmDual = 1,
}

/// Scalarization backend selector for [`vopt_solve`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoptBackend {
    VoptBackendDirect = 0,
    VoptBackendBundle = 1,
    VoptBackendAuto = 2,
}

/// Opaque two-stage problem handle.
pub struct VoptProblem(TwoStageProblem);

/// Opaque risk-measure handle.
pub struct VoptRiskMeasure(RiskMeasure);

/// Opaque solve-result handle.
pub struct VoptResult {
    problem: TwoStageProblem,
    result: VectorSolveResult,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: VoptStatus, msg: impl Into<String>) -> VoptStatus {
    set_error(msg.into());
    status
}

/// Description of the most recent failure on this thread. The pointer stays
/// valid until the next failing FFI call on the same thread.
///
/// # Safety
/// The returned pointer must not be freed or written through.
#[no_mangle]
pub unsafe extern "C" fn vopt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

unsafe fn str_arg<'a>(ptr: *const c_char) -> Result<&'a str, VoptStatus> {
    if ptr.is_null() {
        return Err(fail(VoptStatus::VoptStatusNullArgument, "null string"));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|e| fail(VoptStatus::VoptStatusInvalidUtf8, e.to_string()))
}

/// Parse a problem from an instance-file JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vopt_problem_from_json(
    json: *const c_char,
    out: *mut *mut VoptProblem,
) -> VoptStatus {
    if out.is_null() {
        return fail(VoptStatus::VoptStatusNullArgument, "null output pointer");
    }
    let text = match str_arg(json) {
        Ok(t) => t,
        Err(s) => return s,
    };
    match from_json(text) {
        Ok(p) => {
            *out = Box::into_raw(Box::new(VoptProblem(p)));
            VoptStatus::VoptStatusOk
        }
        Err(e) => fail(VoptStatus::VoptStatusParse, e.to_string()),
    }
}

/// Release a problem handle. A null pointer is a no-op.
///
/// # Safety
/// `p` must be a pointer previously returned by this library and not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn vopt_problem_free(p: *mut VoptProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

unsafe fn build_risk(
    levels: *const f64,
    num_objectives: usize,
    cone_generators: *const f64,
    num_generators: usize,
    out: *mut *mut VoptRiskMeasure,
    make: impl FnOnce(Vec<f64>) -> RiskKind,
) -> VoptStatus {
    if out.is_null() || levels.is_null() {
        return fail(VoptStatus::VoptStatusNullArgument, "null pointer argument");
    }
    if num_objectives == 0 {
        return fail(VoptStatus::VoptStatusInvalidArgument, "need >= 1 objective");
    }
    let lv = std::slice::from_raw_parts(levels, num_objectives).to_vec();
    let cone = if cone_generators.is_null() || num_generators == 0 {
        Cone::orthant(num_objectives)
    } else {
        let flat = std::slice::from_raw_parts(cone_generators, num_generators * num_objectives);
        let gens: Vec<Vec<f64>> = flat.chunks(num_objectives).map(|c| c.to_vec()).collect();
        match Cone::new(gens) {
            Ok(c) => c,
            Err(e) => return fail(VoptStatus::VoptStatusInvalidArgument, e.to_string()),
        }
    };
    match RiskMeasure::new(make(lv), cone) {
        Ok(r) => {
            *out = Box::into_raw(Box::new(VoptRiskMeasure(r)));
            VoptStatus::VoptStatusOk
        }
        Err(e) => fail(VoptStatus::VoptStatusInvalidArgument, e.to_string()),
    }
}

/// Componentwise CVaR risk measure at levels `nu` (length `num_objectives`)
/// with ordering cone spanned by `cone_generators` (row-major
/// `num_generators x num_objectives`; pass NULL/0 for the standard orthant).
///
/// # Safety
/// Array arguments must point to buffers of the stated lengths; `out` must
/// be valid.
#[no_mangle]
pub unsafe extern "C" fn vopt_risk_cvar(
    nu: *const f64,
    num_objectives: usize,
    cone_generators: *const f64,
    num_generators: usize,
    out: *mut *mut VoptRiskMeasure,
) -> VoptStatus {
    build_risk(nu, num_objectives, cone_generators, num_generators, out, |v| {
        RiskKind::CVaR { nu: v }
    })
}

/// Componentwise entropic risk measure with risk-aversion vector `delta`.
/// Same conventions as [`vopt_risk_cvar`].
///
/// # Safety
/// Array arguments must point to buffers of the stated lengths; `out` must
/// be valid.
#[no_mangle]
pub unsafe extern "C" fn vopt_risk_entropic(
    delta: *const f64,
    num_objectives: usize,
    cone_generators: *const f64,
    num_generators: usize,
    out: *mut *mut VoptRiskMeasure,
) -> VoptStatus {
    build_risk(
        delta,
        num_objectives,
        cone_generators,
        num_generators,
        out,
        |v| RiskKind::Entropic { delta: v },
    )
}

/// Release a risk-measure handle. A null pointer is a no-op.
///
/// # Safety
/// `r` must be a pointer previously returned by this library and not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn vopt_risk_free(r: *mut VoptRiskMeasure) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Compute the ε-sandwich of the upper image.
///
/// # Safety
/// `problem`, `risk`, and `out` must be valid pointers from this library.
#[no_mangle]
pub unsafe extern "C" fn vopt_solve(
    problem: *const VoptProblem,
    risk: *const VoptRiskMeasure,
    epsilon: f64,
    algorithm: VoptAlgorithm,
    backend: VoptBackend,
    out: *mut *mut VoptResult,
) -> VoptStatus {
    if problem.is_null() || risk.is_null() || out.is_null() {
        return fail(VoptStatus::VoptStatusNullArgument, "null pointer argument");
    }
    if !(epsilon > 0.0) {
        return fail(VoptStatus::VoptStatusInvalidArgument, "epsilon must be > 0");
    }
    let opts = SolveOptions {
        epsilon,
        algorithm: match algorithm {
            VoptAlgorithm::VoptAlgorithmPrimal => Algorithm::Primal,
            VoptAlgorithm::VoptAlgorithmDual => Algorithm::Dual,
        },
        backend: match backend {
            VoptBackend::VoptBackendDirect => Backend::Direct,
            VoptBackend::VoptBackendBundle => Backend::Bundle,
            VoptBackend::VoptBackendAuto => Backend::Auto,
        },
        ..SolveOptions::default()
    };
    let p = &(*problem).0;
    match solve_vector_problem(p, &(*risk).0, &opts) {
        Ok(result) => {
            *out = Box::into_raw(Box::new(VoptResult {
                problem: p.clone(),
                result,
            }));
            VoptStatus::VoptStatusOk
        }
        Err(e) => fail(VoptStatus::VoptStatusSolve, e.to_string()),
    }
}

/// 1 when all four sandwich containment checks passed at the solve's ε,
/// else 0.
///
/// # Safety
/// `result` must be a valid result handle.
#[no_mangle]
pub unsafe extern "C" fn vopt_result_sandwich_passed(result: *const VoptResult) -> i32 {
    if result.is_null() {
        return 0;
    }
    let r = &(*result).result;
    i32::from(vopt_risk::benson::verify_sandwich(&r.approx, r.epsilon).passed())
}

/// Number of collected weak solution points.
///
/// # Safety
/// `result` must be a valid result handle.
#[no_mangle]
pub unsafe extern "C" fn vopt_result_num_solution_points(result: *const VoptResult) -> usize {
    if result.is_null() {
        return 0;
    }
    (*result).result.solution_points.len()
}

/// Serialize the full result (solution sets, four approximations, stats,
/// sandwich report) as a JSON document; the caller owns the returned string.
///
/// # Safety
/// `result` must be a valid result handle and `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vopt_result_to_json(
    result: *const VoptResult,
    out_json: *mut *mut c_char,
) -> VoptStatus {
    if result.is_null() || out_json.is_null() {
        return fail(VoptStatus::VoptStatusNullArgument, "null pointer argument");
    }
    let r = &*result;
    let file = match result_file(&r.problem, &r.result) {
        Ok(f) => f,
        Err(e) => return fail(VoptStatus::VoptStatusSolve, e.to_string()),
    };
    let text = match serde_json::to_string_pretty(&file) {
        Ok(t) => t,
        Err(e) => return fail(VoptStatus::VoptStatusSolve, e.to_string()),
    };
    match CString::new(text) {
        Ok(c) => {
            *out_json = c.into_raw();
            VoptStatus::VoptStatusOk
        }
        Err(e) => fail(VoptStatus::VoptStatusSolve, e.to_string()),
    }
}

/// Release a result handle. A null pointer is a no-op.
///
/// # Safety
/// `r` must be a pointer previously returned by this library and not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn vopt_result_free(r: *mut VoptResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Release a string returned by [`vopt_result_to_json`]. A null pointer is
/// a no-op.
///
/// # Safety
/// `s` must be a string previously returned by this library and not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn vopt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
