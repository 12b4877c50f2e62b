use std::path::Path;
use std::process::{Command, Output};

use implicitpoly::integrator::GaussBisection;
use implicitpoly::{approximate, ApproxSettings, Expression, ImplicitProblem, Interval};
use implicitpoly_cli::artifacts::CoeffsArtifact;
use serde_json::Value;

const SPHERE: [&str; 12] = [
    "--f",
    "x1^2 + x2^2 + y^2 - 1",
    "--box",
    "x1=[-0.5,0.5);x2=[-0.5,0.5)",
    "--range",
    "[0,1.5)",
    "--a",
    "0,0",
    "--b",
    "1",
    "--n",
    "3",
];

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_implicitpoly"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// The sphere run; a flag in `extra` replaces the sphere's value for it.
fn approx(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["approx"];
    args.extend(SPHERE);
    let mut rest = extra.iter();
    while let Some(&flag) = rest.next() {
        match args.iter().position(|a| *a == flag) {
            Some(i) if flag.starts_with("--") && flag != "--quiet" => {
                args[i + 1] = rest.next().unwrap()
            }
            _ => args.push(flag),
        }
    }
    run(dir, &args)
}

#[test]
fn sphere_coefficients_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = approx(dir.path(), &["--out", "c.json", "--quiet"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());

    let json = read_json(&dir.path().join("c.json"));
    assert_eq!(json["level"], 3);
    assert_eq!(json["rho"], 1);
    assert_eq!(json["shape"], serde_json::json!([8, 8]));
    assert!((json["coeffs"][0][0].as_f64().unwrap() - 0.9999).abs() < 5e-3);
    assert!((json["coeffs"][6][6].as_f64().unwrap() + 1.3519).abs() < 5e-3);
    assert_eq!(json["quadrature"]["gauss_order"], 32);

    let stored = CoeffsArtifact::read(&dir.path().join("c.json")).unwrap();
    let problem = ImplicitProblem::new(
        &Expression::parse(SPHERE[1]).unwrap(),
        "y",
        SPHERE[3].parse().unwrap(),
        Interval::new(0.0, 1.5).unwrap(),
        vec![0.0, 0.0],
        1.0,
        3,
    )
    .unwrap();
    let fresh = approximate(
        &problem,
        &GaussBisection::default(),
        &ApproxSettings::default(),
    )
    .unwrap();
    for x in [[0.0, 0.0], [0.31, -0.44], [-0.5, 0.49]] {
        assert_eq!(
            stored.poly.eval(&x).unwrap().to_bits(),
            fresh.poly.eval(&x).unwrap().to_bits()
        );
    }
}

#[test]
fn grid_csv_format() {
    let dir = tempfile::tempdir().unwrap();
    let out = approx(
        dir.path(),
        &[
            "--out",
            "c.json",
            "--grid",
            "g.csv",
            "--grid-points",
            "3",
            "--ref",
            "sqrt(1 - x1^2 - x2^2)",
        ],
    );
    assert_eq!(code(&out), 0);
    assert_eq!(
        String::from_utf8_lossy(&out.stdout),
        "wrote c.json\nwrote g.csv\n"
    );
    let text = std::fs::read_to_string(dir.path().join("g.csv")).unwrap();
    assert!(!text.contains('\r'));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "x1,x2,g_n,cesaro,ref,abs_err");
    assert_eq!(lines.len(), 1 + 9);
    let cells: Vec<&str> = lines[5].split(',').collect();
    assert_eq!(cells[0], "0.0000000000000000e0");
    for cell in &cells {
        let mantissa = cell.split('e').next().unwrap().trim_start_matches('-');
        assert_eq!(mantissa.replace('.', "").len(), 17, "{cell}");
    }
    let err: f64 = cells[5].parse().unwrap();
    assert!(err < 1e-3);

    let out = approx(
        dir.path(),
        &["--out", "c.json", "--grid", "h.csv", "--grid-points", "2"],
    );
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(dir.path().join("h.csv")).unwrap();
    assert!(text.starts_with("x1,x2,g_n,cesaro\n"));
}

#[test]
fn constant_solution() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &[
            "approx", "--f", "y - 0.25", "--x", "x", "--box", "[0,1)", "--range", "[0,1)", "--a",
            "0.5", "--b", "0.25", "--n", "2", "--out", "c.json",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let json = read_json(&dir.path().join("c.json"));
    let coeffs: Vec<f64> = json["coeffs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert!((coeffs[0] - 0.25).abs() < 1e-12);
    assert!(coeffs[1..].iter().all(|c| c.abs() < 1e-10));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // parse error
    let out = run(
        d,
        &[
            "approx", "--f", "x1 +", "--box", "x1=[0,1)", "--range", "[0,1)", "--a", "0.5", "--b",
            "0", "--n", "1",
        ],
    );
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    // bad interval
    assert_eq!(code(&approx(d, &["--range", "[1,0)"])), 2);
    // no bracket
    assert_eq!(code(&approx(d, &["--range", "[2,3)", "--b", "2.5"])), 3);
    // level above the cap, then a condition limit nothing meets
    assert_eq!(code(&approx(d, &["--n", "6"])), 4);
    assert_eq!(code(&approx(d, &["--condition-limit", "10"])), 4);
    // unknown integrator
    assert_eq!(code(&approx(d, &["--integrator", "simpson"])), 2);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"f": "x1^2 + x2^2 + y^2 - 1", "box": "x1=[-0.5,0.5);x2=[-0.5,0.5)", "range": "[0,1.5)",
            "a": [0, 0], "b": 1, "n": 3, "out": "from_file.json", "gauss": 16}"#,
    )
    .unwrap();
    let out = run(
        dir.path(),
        &["approx", "--config", "run.json", "--n", "2", "--quiet"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let json = read_json(&dir.path().join("from_file.json"));
    assert_eq!(json["level"], 2);
    assert_eq!(json["quadrature"]["gauss_order"], 16);

    std::fs::write(&cfg, r#"{"f": "y", "frobnicate": true}"#).unwrap();
    assert_eq!(
        code(&run(dir.path(), &["approx", "--config", "run.json"])),
        2
    );
    std::fs::write(&cfg, "{not json").unwrap();
    assert_eq!(
        code(&run(dir.path(), &["approx", "--config", "run.json"])),
        2
    );
}

const EXAMPLE_TWO: [&str; 22] = [
    "system",
    "--f1",
    "x + y1^2 + y2^3 - 6",
    "--f2",
    "x^3*y1 - y2 - 1",
    "--box",
    "x=[0.5,1.5)",
    "--range1",
    "[1.5,2.5)",
    "--range2",
    "[-2,8)",
    "--a",
    "1",
    "--b",
    "2,1",
    "--n",
    "2",
    "--m",
    "4",
    "--pivot",
    "2,2",
    "--quiet",
];

#[test]
fn system_example_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = EXAMPLE_TWO.to_vec();
    args.extend([
        "--range-stage2",
        "[0.5,2.5)",
        "--out",
        "s.json",
        "--grid",
        "r.csv",
    ]);
    let out = run(dir.path(), &args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let json = read_json(&dir.path().join("s.json"));
    assert_eq!(json["pivot"], serde_json::json!([2, 2]));
    assert!((json["jacobian_det"].as_f64().unwrap() + 7.0).abs() < 1e-4);
    assert_eq!(json["stage1"]["y"], "y2");
    assert_eq!(json["stage1"]["rho"], -1);
    assert_eq!(json["stage2"]["rho"], 1);
    let want = [
        [1.0, 1.0, 0.0, 0.0],
        [6.0, 3.0, 0.0, 0.0],
        [6.0, 3.0, 0.0, 0.0],
        [2.0, 1.0, 0.0, 0.0],
    ];
    for (i, row) in want.iter().enumerate() {
        for (j, w) in row.iter().enumerate() {
            assert!((json["stage1"]["coeffs"][i][j].as_f64().unwrap() - w).abs() < 1e-6);
        }
    }
    let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert!(csv.starts_with("x,y1,y2,r1,r2\n"));
}

#[test]
fn system_decoupled_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &[
            "system",
            "--f1",
            "y1 - 0.5*x",
            "--f2",
            "y2 + 0.25*x",
            "--box",
            "x=[0,1)",
            "--range1",
            "[-1,1)",
            "--range2",
            "[-1,1)",
            "--a",
            "0.5",
            "--b",
            "0.25,-0.125",
            "--n",
            "1",
            "--m",
            "1",
            "--out",
            "s.json",
            "--grid",
            "r.csv",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let cells: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert!(cells[3].abs() <= 1e-6 && cells[4].abs() <= 1e-6, "{line}");
    }
}

#[test]
fn system_failures() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = EXAMPLE_TWO.to_vec();
    args[2] = "y1 + y2 - 3";
    args[4] = "y1 + y2 - 3";
    assert_eq!(code(&run(dir.path(), &args)), 5);
    let mut args = EXAMPLE_TWO.to_vec();
    args[20] = "3,1";
    assert_eq!(code(&run(dir.path(), &args)), 2);
}

fn write_verify_config(dir: &Path, extra: &str) {
    std::fs::write(
        dir.join("v.json"),
        format!(
            r#"{{"f": "x1^2 + x2^2 + y^2 - 1", "box": "x1=[-0.5,0.5);x2=[-0.5,0.5)", "range": "[0,1.5)",
                "a": [0, 0], "b": 1, "n": 3{extra}}}"#
        ),
    )
    .unwrap();
}

#[test]
fn verify_sphere() {
    let dir = tempfile::tempdir().unwrap();
    write_verify_config(dir.path(), "");
    let out = run(
        dir.path(),
        &["--quiet", "verify", "--config", "v.json", "--out", "r.json"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("r.json"));
    assert_eq!(report["pass"], true);
    assert_eq!(report["rng"], "chacha8");
    let checks = report["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 13);
    for c in checks {
        assert!(c["name"].is_string() && c["value"].is_number() && c["bound"].is_number());
        assert_eq!(c["pass"], true);
    }
}

#[test]
fn verify_with_few_samples_and_stored_coeffs() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&approx(dir.path(), &["--out", "c.json", "--quiet"])),
        0
    );
    write_verify_config(dir.path(), r#", "coeffs": "c.json", "mc_blocks": 4"#);
    let out = run(
        dir.path(),
        &[
            "--quiet",
            "verify",
            "--config",
            "v.json",
            "--mc-samples",
            "10000",
            "--seed",
            "9",
            "--out",
            "r.json",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("r.json"));
    assert_eq!(report["mc_samples"], 10000);
    assert_eq!(report["seed"], 9);
    let wide = report["checks"][1]["bound"].as_f64().unwrap();
    assert!(wide > 1e-4, "10^4 samples give a wide interval, got {wide}");
}

#[test]
fn verify_rejects_corrupt_or_wrong_coeffs() {
    let dir = tempfile::tempdir().unwrap();
    write_verify_config(dir.path(), r#", "coeffs": "c.json""#);
    std::fs::write(
        dir.path().join("c.json"),
        r#"{"level": 3, "coeffs": [[1, 2"#,
    )
    .unwrap();
    assert_eq!(code(&run(dir.path(), &["verify", "--config", "v.json"])), 2);

    // well-formed but wrong coefficients: the block-mean checks fail
    assert_eq!(
        code(&approx(dir.path(), &["--out", "c.json", "--quiet"])),
        0
    );
    let mut json = read_json(&dir.path().join("c.json"));
    json["coeffs"][0][0] = serde_json::json!(1.5);
    std::fs::write(dir.path().join("c.json"), json.to_string()).unwrap();
    let out = run(
        dir.path(),
        &["verify", "--config", "v.json", "--out", "r.json"],
    );
    assert_eq!(code(&out), 1);
    assert_eq!(read_json(&dir.path().join("r.json"))["pass"], false);
}
