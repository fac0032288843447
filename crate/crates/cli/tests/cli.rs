use std::path::Path;
use std::process::{Command, Output};

fn epsharm(cwd: &Path, cmd: &str, config: &str) -> Output {
    std::fs::write(cwd.join(format!("{cmd}.toml")), config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_epsharm"))
        .current_dir(cwd)
        .args([cmd, "-c", &format!("{cmd}.toml")])
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const WINDOW: &str = r#"
[grid]
n_r = 64
n_theta = 16
r_min = 2.5e-3
r_max = 0.25

[solve]
epsilon = 0.0
initial = { kind = "bubble" }
"#;

#[test]
fn harmonic_solve_reports_a_small_residual() {
    let dir = tempfile::tempdir().unwrap();
    let o = epsharm(dir.path(), "solve", &format!("[output]\ndir = \"out\"\n{WINDOW}"));
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert!(report["residual"].as_f64().unwrap() < 1e-7);
    assert_eq!(report["converged"], true);
    let first = std::fs::read(dir.path().join("out/report.json")).unwrap();
    assert!(epsharm(dir.path(), "solve", &format!("[output]\ndir = \"out\"\n{WINDOW}")).status.success());
    assert_eq!(first, std::fs::read(dir.path().join("out/report.json")).unwrap());
}

#[test]
fn config_errors_exit_with_one_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let o = epsharm(dir.path(), "solve", &format!("[output]\ndir = \"out\"\n{}", WINDOW.replace("n_theta = 16", "n_theta = 15")));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("grid.n_theta"), "{}", stderr(&o));

    let o = epsharm(dir.path(), "solve", &format!("[output]\ndir = \"out\"\n{WINDOW}\ntolerance = 3\n"));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("tolerance"), "{}", stderr(&o));
    // rejected before anything is computed or written
    assert!(!dir.path().join("out").exists());

    let o = epsharm(dir.path(), "synth", &format!("[output]\ndir = \"out\"\n{WINDOW}"));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("glue"), "{}", stderr(&o));
}

#[test]
fn analyzing_a_constant_field_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let constant = WINDOW.replace(r#"{ kind = "bubble" }"#, "{ kind = \"constant\", value = [0.0, 0.0, 1.0] }");
    assert!(epsharm(dir.path(), "solve", &format!("[output]\ndir = \"flat\"\n{constant}")).status.success());
    let analyze = format!("[output]\ndir = \"a\"\n{constant}\n[analyze]\ninput = \"flat\"\nbubble_cut = 4.0\nneck_outer = 0.2\n");
    let o = epsharm(dir.path(), "analyze", &analyze);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("constant"), "{}", stderr(&o));

    let o = epsharm(dir.path(), "analyze", &analyze.replace("input = \"flat\"", "input = \"missing\""));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn synth_analyze_verify_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"
[grid]
n_r = 256
n_theta = 8
r_min = 1e-4
r_max = 4.0

[schedule]
kind = "analytic"
radius = { kind = "geometric", r0 = 0.125, q = 0.5 }
epsilon = { a = 2.0, b = -1 }
k_first = 1
k_last = 4

[glue]
neck = { kind = "nu_schedule" }
cuts = { bubble_base = 4.0, neck_outer = 1.0 }

[analyze]
input = "synth"

[verify]
input = "analyze"
identity = "epsilon"
"#;
    for cmd in ["synth", "analyze", "verify"] {
        let o = epsharm(dir.path(), cmd, &format!("[output]\ndir = \"{cmd}\"\n{body}"));
        assert!(o.status.success(), "{cmd}: {}", stderr(&o));
    }
    let csv = std::fs::read_to_string(dir.path().join("analyze/analysis.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "k,eps,r_k,mu_k,nu_k,E_body,E_bubble,E_neck,predicted_neck,osc,neck_length,predicted_length"
    );
    assert_eq!(lines.count(), 4);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("verify/verify.json")).unwrap()).unwrap();
    assert!(v["verdict"].as_str().unwrap().starts_with("defect ≈ 2e^{−2ρ(0)}μ∫|Δω|²"));
    assert_eq!(v["identity"], "generalized_energy_identity");
    assert!(v["report"]["rows"][3]["gap"].is_number());
}
