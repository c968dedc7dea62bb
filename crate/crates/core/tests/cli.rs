use std::path::PathBuf;
use std::process::Command;

use qbae::cli::{self, SystemDescription};

fn data(name: &str) -> String {
    let mut p = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    p.push("data");
    p.push(name);
    p.display().to_string()
}

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("qbae").chain(args.iter().copied());
    let code = cli::run(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn structured(args: &[&str]) -> (i32, String) {
    let mut full = vec!["--format", "structured"];
    full.extend_from_slice(args);
    let (code, out, err) = run(&full);
    assert!(code != 2, "usage or parse failure: {err}");
    (code, out)
}

fn value<'a>(doc: &'a str, key: &str) -> &'a str {
    doc.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(" = ")))
        .unwrap_or_else(|| panic!("missing key {key} in\n{doc}"))
}

fn float(doc: &str, key: &str) -> f64 {
    value(doc, key).parse().unwrap()
}

#[test]
fn validate_exit_codes() {
    let (code, out, _) = run(&["validate", &data("michelson.json")]);
    assert_eq!(code, 0, "{out}");

    let (code, out, _) = run(&["validate", &data("nonsymmetric_omega_plus.json")]);
    assert_eq!(code, 1);
    assert!(out.contains("violation.0: Omega_plus"), "{out}");

    let (code, out, err) = run(&["validate", &data("malformed_entry.json")]);
    assert_eq!(code, 2);
    assert!(out.is_empty());
    assert!(err.contains("line 6, column 30"), "{err}");
}

#[test]
fn usage_and_io_errors() {
    assert_eq!(run(&["frobnicate"]).0, 2);
    assert_eq!(run(&["validate", "/nonexistent/system.json"]).0, 2);
    assert_eq!(
        run(&["certify", &data("michelson.json"), "--block", "x:q"]).0,
        2
    );
    let (code, out, _) = run(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("simulate"));
}

#[test]
fn binary_reports_exit_code() {
    let status = Command::new(env!("CARGO_BIN_EXE_qbae"))
        .args(["validate", &data("malformed_entry.json")])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));
    let status = Command::new(env!("CARGO_BIN_EXE_qbae"))
        .args(["validate", &data("cavity.json")])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0));
}

#[test]
fn michelson_bae_prediction_and_certificate() {
    let (code, doc) = structured(&["analyze", "--bae", &data("michelson.json")]);
    assert_eq!(code, 0);
    assert_eq!(value(&doc, "bae.prediction.0.block"), "\"(q_out, p_in)\"");
    assert_eq!(value(&doc, "bae.certificate.q_out.p_in.verdict"), "true");
    assert_eq!(value(&doc, "bae.confirmed"), "true");
    assert!(!doc.contains("qnd."));
}

#[test]
fn certify_requested_blocks_set_exit_code() {
    let m = data("michelson.json");
    assert_eq!(run(&["certify", &m, "--block", "q:p"]).0, 0);
    assert_eq!(run(&["certify", &m, "--block", "p:q"]).0, 1);
    assert_eq!(run(&["certify", &m]).0, 0);
}

#[test]
fn optomech_combination_reported() {
    let (code, doc) = structured(&["analyze", "--qnd", &data("optomech.json")]);
    assert_eq!(code, 0);
    assert_eq!(value(&doc, "optomech.combination.is_qnd"), "true");
    assert!(float(&doc, "optomech.controllability_residual") <= 1e-10);

    let (_, doc) = structured(&["optomech", "--params", "1,1,1,1,1,1"]);
    assert_eq!(value(&doc, "optomech.combination.is_qnd"), "false");
}

#[test]
fn decoupled_system_has_trivial_certificates() {
    let (code, doc) = structured(&["analyze", &data("decoupled.json")]);
    assert_eq!(code, 0);
    // G is the identity feedthrough: both cross blocks vanish and every
    // predicted block is certified.
    for block in ["q_out.p_in", "p_out.q_in"] {
        assert_eq!(
            value(&doc, &format!("bae.certificate.{block}.verdict")),
            "true"
        );
    }
    assert_ne!(value(&doc, "bae.predictions"), "0");
    assert_eq!(value(&doc, "bae.confirmed"), "true");
    assert_eq!(value(&doc, "qnd.variables"), "0");
}

#[test]
fn cavity_kalman_criteria() {
    let (code, doc) = structured(&["kalman", &data("cavity.json")]);
    assert_eq!(code, 0);
    assert_eq!(value(&doc, "kalman.form.verdict"), "true");
    assert_eq!(value(&doc, "kalman.criteria.q_wrt_p"), "true");
    assert_eq!(value(&doc, "kalman.criteria.p_wrt_q"), "true");
}

#[test]
fn transfer_at_requested_point() {
    let (code, doc) = structured(&["transfer", &data("cavity.json"), "--s", "3,0"]);
    assert_eq!(code, 0);
    // (s - 1)/(s + 1) for a cavity with kappa = 2.
    assert!((float(&doc, "transfer.point.0.g.0.0.re") - 0.5).abs() < 1e-12);
    assert!((float(&doc, "transfer.point.0.g.1.1.re") - 0.5).abs() < 1e-12);
}

#[test]
fn compose_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("reduced.json");
    let out_s = out.display().to_string();
    let (code, doc) = structured(&[
        "compose",
        &data("feedback_plant.json"),
        &data("beamsplitter.json"),
        &out_s,
    ]);
    assert_eq!(code, 0, "{doc}");
    assert_eq!(value(&doc, "feedback.omega_imaginary"), "true");
    assert_eq!(value(&doc, "feedback.bae_verdict"), "true");
    assert_eq!(value(&doc, "feedback.qnd_variables"), "0");

    let (code, doc) = structured(&["validate", &out_s]);
    assert_eq!(code, 0, "{doc}");
    let (_, doc) = structured(&["analyze", "--bae", &out_s]);
    assert_eq!(value(&doc, "bae.certificate.q_out.q_in.verdict"), "true");
    assert_eq!(value(&doc, "bae.certificate.p_out.p_in.verdict"), "true");
}

#[test]
fn compose_rejects_singular_loop() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(data("feedback_plant.json")).unwrap();
    let mut desc = SystemDescription::parse(&text).unwrap();
    let plant = desc.plant.as_mut().unwrap();
    let one = SystemDescription::parse(r#"{"name": "x", "S": [[[1.0, 0.0]]]}"#)
        .unwrap()
        .s
        .unwrap();
    let zero = SystemDescription::parse(r#"{"name": "x", "S": [[[0.0, 0.0]]]}"#)
        .unwrap()
        .s
        .unwrap();
    plant.s11 = one.clone();
    plant.s22 = one.clone();
    plant.s12 = zero.clone();
    plant.s21 = zero;
    let plant_path = dir.path().join("plant.json");
    std::fs::write(&plant_path, desc.to_json()).unwrap();
    let bs_path = dir.path().join("bs.json");
    std::fs::write(
        &bs_path,
        r#"{"name": "identity", "beamsplitter": {"S_b": [[[1.0, 0.0]]]}}"#,
    )
    .unwrap();
    let (code, _, err) = run(&[
        "compose",
        &plant_path.display().to_string(),
        &bs_path.display().to_string(),
        &dir.path().join("out.json").display().to_string(),
    ]);
    assert_eq!(code, 1);
    assert!(err.contains("ill-posed"), "{err}");
}

#[test]
fn description_round_trip() {
    for f in [
        "michelson.json",
        "cavity.json",
        "qnd_position.json",
        "feedback_plant.json",
        "beamsplitter.json",
        "optomech.json",
        "decoupled.json",
    ] {
        let text = std::fs::read_to_string(data(f)).unwrap();
        let a = SystemDescription::parse(&text).unwrap();
        let b = SystemDescription::parse(&a.to_json()).unwrap();
        assert_eq!(a, b, "{f}");
    }
    let text = std::fs::read_to_string(data("michelson.json")).unwrap();
    let p = SystemDescription::parse(&text).unwrap().system().unwrap();
    let back = SystemDescription::from_system("m", &p).system().unwrap();
    assert_eq!(p, back);
}

#[test]
fn simulate_is_deterministic_and_injection_is_evaded() {
    let m = data("michelson.json");
    let a = structured(&["--seed", "7", "simulate", &m, "--inject", "p:q"]);
    let b = structured(&["--seed", "7", "simulate", &m, "--inject", "p:q"]);
    assert_eq!(a, b);
    assert_eq!(value(&a.1, "sim.seed"), "7");
    assert!(float(&a.1, "inject.deviation") < 1e-8);
    assert_eq!(value(&a.1, "filter.uncertainty_compatible"), "true");

    let (_, swapped) = structured(&["--seed", "7", "simulate", &m, "--inject", "q:p"]);
    assert!(float(&swapped, "inject.deviation") > 1e-2);
}

#[test]
fn simulate_writes_trajectory_table() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traj.txt");
    let (code, _) = structured(&[
        "simulate",
        &data("cavity.json"),
        "--trajectories",
        &path.display().to_string(),
    ]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t q_out_1 p_out_1"));
    let rows: Vec<&str> = lines.collect();
    assert!(rows.len() > 2);
    assert!(rows.iter().all(|r| r.split_whitespace().count() == 3));
}

#[test]
fn martingale_on_qnd_file() {
    let (code, doc) = structured(&["simulate", &data("qnd_position.json"), "--martingale"]);
    assert_eq!(code, 0, "{doc}");
    assert_eq!(value(&doc, "martingale.pass"), "true");

    // The precondition fails for a system whose coupling does not commute
    // with its Hamiltonian.
    let (code, _, err) = run(&["simulate", &data("cavity.json"), "--martingale"]);
    assert_eq!(code, 1);
    assert!(err.contains("hypothesis"), "{err}");
}
