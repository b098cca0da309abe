use std::process::{Command, Output};

use serde_json::Value;

fn poisson(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_poisson")).args(args).output().unwrap()
}

fn report(args: &[&str]) -> Value {
    let out = poisson(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn validate_passes_registry_structure() {
    let v = report(&["validate", "builtin:su2_scaled?a=1"]);
    assert_eq!(v["pass"], true);
    assert!(v["max_residual"].as_f64().unwrap() <= 1e-9);
    assert_eq!(v["gate"]["points"], 100);
}

#[test]
fn validate_rejects_a_non_poisson_bivector() {
    let out = poisson(&["validate", r#"{"dim": 3, "pi": {"1,2": "x3", "2,3": "x1*x2", "1,3": "x2"}}"#]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn area_on_the_round_coadjoint_orbit() {
    let v = report(&["area", "builtin:su2_scaled?a=1", "--tau", "2"]);
    let area = v["areas"][0].as_f64().unwrap();
    assert!((area - 25.1327).abs() <= 1e-3, "{area}");
    assert_eq!(v["grid"]["n_theta"], 100);
}

#[test]
fn scan_flags_the_collapse_near_the_unit_sphere() {
    let out = poisson(&["scan", "builtin:su2_scaled?a=1+R^2", "--tau-range", "0.2:3", "--samples", "60"]);
    assert!(out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    let tau: f64 = stderr
        .trim()
        .strip_prefix("verdict: NON_INTEGRABLE(")
        .and_then(|s| s.strip_suffix(')'))
        .unwrap_or_else(|| panic!("unexpected verdict line {stderr}"))
        .parse()
        .unwrap();
    assert!(tau > 0.9 && tau < 1.1, "{tau}");
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.starts_with("tau,area,dA_dtau,generators,r_N,flag\n"));
    assert_eq!(csv.lines().count(), 61);
}

#[test]
fn scan_refuses_a_range_where_the_scaling_vanishes() {
    let out = poisson(&["scan", "builtin:su2_scaled?a=R-1", "--tau-range", "0.5:2", "--samples", "20"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let args = ["scan", "builtin:foliated_spheres?f=1/x1", "--tau-range", "0.2:2", "--samples", "25", "--format", "json", "--seed", "7"];
    let a = poisson(&args);
    let b = poisson(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["report"]["verdict"]["verdict"], "INTEGRABLE_EVIDENCE");
    assert!(v["report"]["options"]["discreteness"]["q_bound"].is_number());
}

#[test]
fn output_flag_writes_the_report_to_a_file() {
    let dir = std::env::temp_dir().join(format!("poisson-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let file = dir.join("iso.json");
    let out = poisson(&["isotropy", "builtin:linear?preset=su2", "--at", "0,0,0", "--output", file.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&file).unwrap()).unwrap();
    assert_eq!(v["algebra"]["kernel_dim"], 3);
    assert_eq!(v["algebra"]["flags"]["semisimple"], true);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn saved_path_feeds_integration_and_transport() {
    let dir = std::env::temp_dir().join(format!("poisson-path-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let file = dir.join("path.json");
    let src = "builtin:su2_scaled?a=1+R^2";
    let p = report(&["path", src, "--generator", "x2, 0.5, 1 - t", "--x0", "0.6,0.2,0.3", "--save", file.to_str().unwrap()]);
    assert!(p["defect"].as_f64().unwrap() <= 1e-6);
    let path = file.to_str().unwrap();
    // X_h for h = x1 + x3 integrates to -(h(end) - h(start)).
    let ham = report(&["hamiltonian", src, "--h", "x1 + x3"]);
    let field = ham["field"].as_array().unwrap().iter().map(|c| c.as_str().unwrap()).collect::<Vec<_>>().join(", ");
    let v = report(&["integrate-field", src, "--path", path, "--field", &field]);
    let h = |x: &Value| x[0].as_f64().unwrap() + x[2].as_f64().unwrap();
    let want = -(h(&p["end"]) - h(&p["start"]));
    assert!((v["integral"].as_f64().unwrap() - want).abs() <= 1e-7);
    let t = report(&["transport", src, "--path", path, "--s0", "1,0,0"]);
    assert_eq!(t["s1"].as_array().unwrap().len(), 3);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn variation_of_a_constant_family_is_a_homotopy() {
    let family = r#"{"generator": ["x2", "0.3", "1"], "x0": [0.5, 0.1, 0.2], "eps_grid": 11, "t_grid": 200}"#;
    let v = report(&["variation", "builtin:linear?preset=su2", "--family", family, "--field", "x2, x3, x1"]);
    assert_eq!(v["verdict"]["verdict"], "HOMOTOPY");
    assert!(v["identity"]["residual"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn monodromy_with_registry_splitting_reports_both_methods() {
    let v = report(&["monodromy", "builtin:su2_scaled?a=1+R^2", "--tau", "2", "--splitting", "--grid", "40x80"]);
    assert_eq!(v["report"]["methods"].as_array().unwrap().len(), 2);
    assert!(v["report"]["method_agreement"].as_f64().unwrap() <= 1e-3);
}

#[test]
fn exit_codes_distinguish_usage_and_numerical_failures() {
    assert_eq!(poisson(&[]).status.code(), Some(1));
    assert_eq!(poisson(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(poisson(&["isotropy", "builtin:linear?preset=su2", "--at", "0,0"]).status.code(), Some(1));
    let numerical = poisson(&[
        "path", "builtin:linear?preset=su2", "--generator", "0, 0, 1", "--x0", "1,0,0", "--method", "rk4", "--steps", "8",
        "--defect-tol", "1e-14",
    ]);
    assert_eq!(numerical.status.code(), Some(3), "{}", String::from_utf8_lossy(&numerical.stderr));
}

#[test]
fn show_config_lists_defaults() {
    let v = report(&["--show-config"]);
    assert_eq!(v["ode"]["atol"], 1e-10);
    assert_eq!(v["area_grid"]["n_phi"], 200);
    assert_eq!(v["scan_grid"]["n_theta"], 40);
}
