//! Exercises the C ABI through the extern functions, including error paths.

use std::ffi::{CStr, CString};
use std::ptr;

use vopt_risk_ffi::*;

fn toy_json() -> CString {
    let p = vopt_risk::model::TwoStageProblem::toy_two_scenario();
    CString::new(vopt_risk::model::to_json(&p).unwrap()).unwrap()
}

#[test]
fn solve_toy_instance_end_to_end() {
    unsafe {
        let json = toy_json();
        let mut problem: *mut VoptProblem = ptr::null_mut();
        assert_eq!(
            vopt_problem_from_json(json.as_ptr(), &mut problem),
            VoptStatus::VoptStatusOk
        );

        let nu = [0.5_f64, 0.5];
        let mut risk: *mut VoptRiskMeasure = ptr::null_mut();
        assert_eq!(
            vopt_risk_cvar(nu.as_ptr(), 2, ptr::null(), 0, &mut risk),
            VoptStatus::VoptStatusOk
        );

        let mut result: *mut VoptResult = ptr::null_mut();
        assert_eq!(
            vopt_solve(
                problem,
                risk,
                1e-4,
                VoptAlgorithm::VoptAlgorithmPrimal,
                VoptBackend::VoptBackendDirect,
                &mut result,
            ),
            VoptStatus::VoptStatusOk
        );
        assert_eq!(vopt_result_sandwich_passed(result), 1);
        assert!(vopt_result_num_solution_points(result) >= 1);

        let mut out: *mut std::ffi::c_char = ptr::null_mut();
        assert_eq!(vopt_result_to_json(result, &mut out), VoptStatus::VoptStatusOk);
        let text = CStr::from_ptr(out).to_str().unwrap().to_owned();
        vopt_string_free(out);
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed["flagged"], false);
        // Uniform CVaR at level 1/2 of the toy costs has the single vertex (3, 3).
        let z: Vec<f64> = parsed["Z"][0]["z"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect();
        assert!((z[0] - 3.0).abs() < 1e-6 && (z[1] - 3.0).abs() < 1e-6, "{z:?}");

        vopt_result_free(result);
        vopt_risk_free(risk);
        vopt_problem_free(problem);
    }
}

#[test]
fn entropic_with_custom_cone() {
    unsafe {
        let json = toy_json();
        let mut problem: *mut VoptProblem = ptr::null_mut();
        assert_eq!(
            vopt_problem_from_json(json.as_ptr(), &mut problem),
            VoptStatus::VoptStatusOk
        );

        let delta = [1.0_f64, 1.0];
        // Row-major generators of a cone containing the orthant.
        let gens = [-1.0_f64, 2.0, 2.0, -1.0];
        let mut risk: *mut VoptRiskMeasure = ptr::null_mut();
        assert_eq!(
            vopt_risk_entropic(delta.as_ptr(), 2, gens.as_ptr(), 2, &mut risk),
            VoptStatus::VoptStatusOk
        );

        let mut result: *mut VoptResult = ptr::null_mut();
        assert_eq!(
            vopt_solve(
                problem,
                risk,
                0.05,
                VoptAlgorithm::VoptAlgorithmDual,
                VoptBackend::VoptBackendDirect,
                &mut result,
            ),
            VoptStatus::VoptStatusOk
        );
        assert_eq!(vopt_result_sandwich_passed(result), 1);

        vopt_result_free(result);
        vopt_risk_free(risk);
        vopt_problem_free(problem);
    }
}

#[test]
fn error_paths_report_status_and_message() {
    unsafe {
        // Null output pointer.
        assert_eq!(
            vopt_problem_from_json(toy_json().as_ptr(), ptr::null_mut()),
            VoptStatus::VoptStatusNullArgument
        );

        // Malformed JSON.
        let bad = CString::new("{ not json").unwrap();
        let mut problem: *mut VoptProblem = ptr::null_mut();
        assert_eq!(
            vopt_problem_from_json(bad.as_ptr(), &mut problem),
            VoptStatus::VoptStatusParse
        );
        assert!(problem.is_null());
        let msg = CStr::from_ptr(vopt_last_error_message()).to_str().unwrap();
        assert!(!msg.is_empty());

        // Invalid risk level.
        let nu = [1.5_f64, 0.5];
        let mut risk: *mut VoptRiskMeasure = ptr::null_mut();
        assert_eq!(
            vopt_risk_cvar(nu.as_ptr(), 2, ptr::null(), 0, &mut risk),
            VoptStatus::VoptStatusInvalidArgument
        );
        assert!(risk.is_null());

        // Nonpositive epsilon.
        let json = toy_json();
        assert_eq!(
            vopt_problem_from_json(json.as_ptr(), &mut problem),
            VoptStatus::VoptStatusOk
        );
        let nu = [0.5_f64, 0.5];
        assert_eq!(
            vopt_risk_cvar(nu.as_ptr(), 2, ptr::null(), 0, &mut risk),
            VoptStatus::VoptStatusOk
        );
        let mut result: *mut VoptResult = ptr::null_mut();
        assert_eq!(
            vopt_solve(
                problem,
                risk,
                0.0,
                VoptAlgorithm::VoptAlgorithmPrimal,
                VoptBackend::VoptBackendAuto,
                &mut result,
            ),
            VoptStatus::VoptStatusInvalidArgument
        );
        assert!(result.is_null());

        // Frees accept null.
        vopt_problem_free(ptr::null_mut());
        vopt_risk_free(ptr::null_mut());
        vopt_result_free(ptr::null_mut());
        vopt_string_free(ptr::null_mut());

        vopt_risk_free(risk);
        vopt_problem_free(problem);
    }
}

#[test]
fn generated_header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/include/vopt_risk.h"
    ))
    .expect("header should be generated at build time");
    for symbol in [
        "vopt_problem_from_json",
        "vopt_problem_free",
        "vopt_risk_cvar",
        "vopt_risk_entropic",
        "vopt_risk_free",
        "vopt_solve",
        "vopt_result_sandwich_passed",
        "vopt_result_num_solution_points",
        "vopt_result_to_json",
        "vopt_result_free",
        "vopt_string_free",
        "vopt_last_error_message",
    ] {
        assert!(header.contains(symbol), "missing {symbol}");
    }
    assert!(header.contains("VOPT_STATUS_OK"), "status enum missing");
}
