use std::path::Path;
use std::process::{Command, Output};

fn opinf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_opinf"))
        .args(args)
        .env("OPINF_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = opinf(args);
    assert!(
        out.status.success(),
        "opinf {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn end_to_end_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    let snaps = dir.path().join("snaps.json");
    ok(&["generate", "--seed", "0", "--nv", "4", "--np", "1", "--m", "1", "--out", p(&model)]);
    assert!(model.exists());

    let msg = ok(&[
        "simulate",
        "--model",
        p(&model),
        "--tend",
        "4",
        "--steps",
        "400",
        "--out",
        p(&snaps),
    ]);
    assert!(msg.contains("401 snapshots"), "{msg}");

    let report: serde_json::Value = serde_json::from_str(&ok(&["ingest", "--snapshots", p(&snaps), "--model", p(&model)])).unwrap();
    assert_eq!(report["columns"], 401);
    assert!(report["constraint_residual"].as_f64().unwrap() < 1e-10);

    let rom = dir.path().join("rom.json");
    let info: serde_json::Value = serde_json::from_str(&ok(&[
        "infer",
        "--snapshots",
        p(&snaps),
        "--order",
        "3",
        "--tol",
        "1e-4",
        "--out",
        p(&rom),
    ]))
    .unwrap();
    assert!(info["rank"].as_u64().unwrap() >= 1);
    let rom = opinf_core::io::load_rom(&rom).unwrap();
    assert_eq!(rom.order(), 3);

    let pod_dir = dir.path().join("pod");
    let rows: serde_json::Value = serde_json::from_str(&ok(&[
        "pod",
        "--snapshots",
        p(&snaps),
        "--order",
        "2",
        "--order",
        "3",
        "--model",
        p(&model),
        "--out",
        p(&pod_dir),
    ]))
    .unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 2);
    assert!(rows[1]["corrected_constraint_residual"].as_f64().unwrap() < 1e-10);
    assert!(pod_dir.join("basis_r3.oifs").exists());

    let dmd_dir = dir.path().join("dmd");
    ok(&[
        "dmd",
        "--snapshots",
        p(&snaps),
        "--order",
        "3",
        "--method",
        "dmdquad",
        "--out",
        p(&dmd_dir),
    ]);
    let h = opinf_core::io::read_matrix(&dmd_dir.join("h.oifs")).unwrap();
    assert_eq!(h.shape(), (3, 9));

    let lc = ok(&["lcurve", "--snapshots", p(&snaps), "--order", "3", "--lcurve-points", "5"]);
    assert!(lc.starts_with("tol,residual_norm"));
    assert!(lc.contains("knee tol ="));

    let cmp_dir = dir.path().join("cmp");
    let table = ok(&[
        "compare",
        "--model",
        p(&model),
        "--tend",
        "4",
        "--steps",
        "400",
        "--tol",
        "1e-4",
        "--out",
        p(&cmp_dir),
    ]);
    for m in ["opinf", "dmd", "dmdc", "dmdquad"] {
        assert!(table.lines().any(|l| l.starts_with(m)), "{table}");
    }
    assert!(cmp_dir.join("summary.json").exists());
}

#[test]
fn compare_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"model": {"generate": {"seed": 1, "nv": 5, "np": 1, "m": 1}},
            "grid": {"t0": 0.0, "t_end": 2.0, "steps": 200},
            "orders": [2], "methods": ["opinf", "pod"]}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let table = ok(&["compare", "--config", p(&cfg), "--out", p(&out)]);
    assert!(table.contains("pod"), "{table}");
    assert!(out.join("lcurve.csv").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // Missing input file.
    let out = opinf(&["ingest", "--snapshots", p(&dir.path().join("nope.json"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    // Unknown config key.
    let cfg = dir.path().join("bad.json");
    std::fs::write(
        &cfg,
        r#"{"model": {"generate": {"seed": 1, "nv": 5, "np": 1, "m": 1}}, "colour": 3}"#,
    )
    .unwrap();
    assert_eq!(opinf(&["compare", "--config", p(&cfg)]).status.code(), Some(2));

    // Unknown flag.
    assert_eq!(opinf(&["generate", "--out", "x", "--bogus"]).status.code(), Some(2));

    // Numerical failure: every singular value is below the threshold.
    let model = dir.path().join("m.json");
    let snaps = dir.path().join("s.json");
    ok(&["generate", "--out", p(&model)]);
    ok(&[
        "simulate",
        "--model",
        p(&model),
        "--tend",
        "1",
        "--steps",
        "100",
        "--out",
        p(&snaps),
    ]);
    let out = opinf(&["infer", "--snapshots", p(&snaps), "--order", "2", "--tol", "1e30"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let out = opinf(&["infer", "--snapshots", p(&snaps), "--order", "2", "--method", "nope"]);
    assert_eq!(out.status.code(), Some(2));
}
