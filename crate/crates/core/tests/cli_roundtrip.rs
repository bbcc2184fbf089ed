//! End-to-end run of the command-line binary:
//! generate → solve → verify → export, plus failure-path exit codes.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vopt-risk"))
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

#[test]
fn generate_solve_verify_export_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let instance = dir.path().join("instance.json");
    let result = dir.path().join("result.json");
    let config = dir.path().join("config.json");
    write(
        &config,
        &format!(
            r#"{{
  "instance": {:?},
  "output": {:?},
  "risk": {{ "kind": "cvar", "nu": [0.3, 0.3] }},
  "epsilon": 0.01,
  "algorithm": "dual",
  "backend": "direct",
  "portfolio": {{
    "assets": 2,
    "scenarios": 12,
    "capital": 1.0,
    "theta": [[1.0, 1.0815], [1.0815, 1.0]],
    "return_ranges": [[-0.1, 0.2], [-0.05, 0.1]],
    "cost_ranges": [[[1.0, 1.0], [1.0, 1.1]], [[0.9, 1.0], [1.0, 1.0]]],
    "rng_seed": 42
  }}
}}"#,
            instance, result
        ),
    );

    let out = bin().args(["generate", "--config"]).arg(&config).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(instance.exists());

    let out = bin().args(["solve", "--config"]).arg(&config).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("inner within outer: ok"), "{stdout}");
    let parsed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&result).unwrap()).unwrap();
    assert_eq!(parsed["algorithm"], "dual");
    assert_eq!(parsed["flagged"], false);
    assert!(parsed["Z"].as_array().unwrap().len() >= 2);
    assert!(parsed["P_in"]["H"].as_array().is_some());
    assert!(parsed["instance_hash"].as_str().unwrap().len() == 64);

    let out = bin().args(["verify", "--config"]).arg(&config).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));

    let out = bin().args(["export", "--config"]).arg(&config).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let svg = std::fs::read_to_string(dir.path().join("result_primal.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    // Two nested polylines: the outer and the inner polygon paths.
    assert_eq!(svg.matches("<path").count(), 2);
    assert!(dir.path().join("result_dual.svg").exists());
}

#[test]
fn tampered_result_fails_verify() {
    let dir = tempfile::tempdir().unwrap();
    let instance = dir.path().join("instance.json");
    let result = dir.path().join("result.json");
    let config = dir.path().join("config.json");
    write(
        &config,
        &format!(
            r#"{{
  "instance": {:?},
  "output": {:?},
  "risk": {{ "kind": "cvar", "nu": [0.5, 0.5] }},
  "epsilon": 0.0001,
  "algorithm": "primal",
  "backend": "direct",
  "portfolio": {{
    "assets": 2,
    "scenarios": 6,
    "capital": 1.0,
    "theta": [[1.0, 1.0815], [1.0815, 1.0]],
    "return_ranges": [[-0.1, 0.2], [-0.05, 0.1]],
    "cost_ranges": [[[1.0, 1.0], [1.0, 1.1]], [[0.9, 1.0], [1.0, 1.0]]],
    "rng_seed": 7
  }}
}}"#,
            instance, result
        ),
    );
    assert!(bin().args(["generate", "--config"]).arg(&config).status().unwrap().success());
    assert!(bin().args(["solve", "--config"]).arg(&config).status().unwrap().success());

    // Shift one stored risk vector: verify must fail and name the check.
    let mut parsed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&result).unwrap()).unwrap();
    let z0 = parsed["Z"][0]["z"][0].as_f64().unwrap();
    parsed["Z"][0]["z"][0] = serde_json::json!(z0 - 0.4);
    std::fs::write(&result, serde_json::to_string(&parsed).unwrap()).unwrap();

    let out = bin().args(["verify", "--config"]).arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("FAILED"), "{stdout}");
}

#[test]
fn bad_config_exits_with_error_record() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    write(&config, r#"{ "unknown_key": true }"#);
    let out = bin().args(["solve", "--config"]).arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
    assert!(err["error"].as_str().unwrap().contains("unknown_key"));
}

#[test]
fn solve_flag_overrides_config_epsilon() {
    let dir = tempfile::tempdir().unwrap();
    let instance = dir.path().join("instance.json");
    let result = dir.path().join("result.json");
    let config = dir.path().join("config.json");
    write(
        &config,
        &format!(
            r#"{{
  "instance": {:?},
  "output": {:?},
  "risk": {{ "kind": "cvar", "nu": [0.5, 0.5] }},
  "epsilon": 0.5,
  "portfolio": {{
    "assets": 2,
    "scenarios": 5,
    "capital": 1.0,
    "theta": [[1.0, 1.0815], [1.0815, 1.0]],
    "return_ranges": [[-0.1, 0.2], [-0.05, 0.1]],
    "cost_ranges": [[[1.0, 1.0], [1.0, 1.1]], [[0.9, 1.0], [1.0, 1.0]]],
    "rng_seed": 3
  }}
}}"#,
            instance, result
        ),
    );
    assert!(bin().args(["generate", "--config"]).arg(&config).status().unwrap().success());
    let out = bin()
        .args(["solve", "--epsilon", "0.05", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let parsed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&result).unwrap()).unwrap();
    assert_eq!(parsed["epsilon"].as_f64().unwrap(), 0.05);
}
