//! End-to-end tests of the binary: exit codes, document round-trips, and
//! the printed artifacts on the bundled example data.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_quantpath"))
}

fn data(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(file)
}

fn temp(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("quantpath_cli_{}_{name}", std::process::id()))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn assert_code(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn fit_demo(out_doc: &Path, extra: &[&str]) -> Output {
    let csv = data("demo.csv");
    let spec = data("demo_spec.json");
    let mut args = vec![
        "fit",
        "--data",
        csv.to_str().unwrap(),
        "--spec",
        spec.to_str().unwrap(),
        "--tau",
        "0.5",
        "--intercept",
        "off",
        "--out",
        out_doc.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn fit_demo_reproduces_known_path_and_is_deterministic() {
    let doc_a = temp("demo_a.json");
    let doc_b = temp("demo_b.json");
    let out = fit_demo(&doc_a, &[]);
    assert_code(&out, 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("7 nodes"), "{stdout}");

    let parsed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&doc_a).unwrap()).unwrap();
    let nodes = parsed["nodes"].as_array().unwrap();
    assert_eq!(nodes.len(), 7);
    let radii: Vec<f64> = nodes.iter().map(|n| n["radius"].as_f64().unwrap()).collect();
    let expected = [0.0, 1.0, 27.0 / 22.0, 1.5, 2.0, 25.0 / 12.0, 229.0 / 40.0];
    for (got, want) in radii.iter().zip(&expected) {
        assert!((got - want).abs() < 1e-9);
    }
    // The first node's unbounded lambda endpoint is encoded as null.
    assert!(nodes[0]["lambda_hi"].is_null());
    assert_eq!(nodes[0]["event"].as_str(), Some("init"));

    assert_code(&fit_demo(&doc_b, &[]), 0);
    assert_eq!(
        std::fs::read(&doc_a).unwrap(),
        std::fs::read(&doc_b).unwrap(),
        "repeated fits must be byte-identical"
    );
    std::fs::remove_file(doc_a).ok();
    std::fs::remove_file(doc_b).ok();
}

#[test]
fn document_survives_a_read_write_cycle_bit_for_bit() {
    let doc = temp("roundtrip.json");
    assert_code(&fit_demo(&doc, &[]), 0);
    // Parse, re-print, re-parse: every numeric field must come back as the
    // identical f64 (shortest-round-trip decimals, exact float parsing).
    let original = std::fs::read_to_string(&doc).unwrap();
    let first: serde_json::Value = serde_json::from_str(&original).unwrap();
    let reprinted = serde_json::to_string_pretty(&first).unwrap();
    let second: serde_json::Value = serde_json::from_str(&reprinted).unwrap();
    assert_eq!(first, second);
    std::fs::remove_file(doc).ok();
}

#[test]
fn select_reports_both_conventions() {
    let doc = temp("select.json");
    assert_code(&fit_demo(&doc, &[]), 0);

    let out = run(&["select", "--path", doc.to_str().unwrap(), "--bic-sign", "conventional"]);
    assert_code(&out, 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("selected R ="), "{stdout}");
    assert!(stdout.contains("active groups"), "{stdout}");

    // Under the printed sign the exact-fit node is guarded as infinite.
    let out = run(&["select", "--path", doc.to_str().unwrap(), "--bic-sign", "printed"]);
    assert_code(&out, 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("inf"), "{stdout}");
    std::fs::remove_file(doc).ok();
}

#[test]
fn plot_exports_exact_tradeoff_vertices() {
    let doc = temp("plot.json");
    assert_code(&fit_demo(&doc, &[]), 0);
    let prefix = temp("plot_tradeoff");
    let out = run(&[
        "plot",
        "--path",
        doc.to_str().unwrap(),
        "--kind",
        "tradeoff",
        "--out",
        prefix.to_str().unwrap(),
        "--r-bic",
        "2.0",
    ]);
    assert_code(&out, 0);

    let csv = std::fs::read_to_string(prefix.with_extension("csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("R,loss"));
    let vertices: Vec<(f64, f64)> = lines
        .map(|l| {
            let (r, loss) = l.split_once(',').unwrap();
            (r.parse().unwrap(), loss.parse().unwrap())
        })
        .collect();
    let expected = [
        (0.0, 26.0),
        (1.0, 9.0),
        (27.0 / 22.0, 161.0 / 22.0),
        (1.5, 5.5),
        (2.0, 4.0),
        (25.0 / 12.0, 23.0 / 6.0),
        (229.0 / 40.0, 0.0),
    ];
    assert_eq!(vertices.len(), expected.len());
    for ((r, l), (er, el)) in vertices.iter().zip(&expected) {
        assert!((r - er).abs() < 1e-9 && (l - el).abs() < 1e-9);
    }

    let svg = std::fs::read_to_string(prefix.with_extension("svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains("stroke-dasharray"), "missing the selection marker");

    let out = run(&[
        "plot",
        "--path",
        doc.to_str().unwrap(),
        "--kind",
        "coefficients",
        "--out",
        temp("plot_coef").to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let coef_csv = std::fs::read_to_string(temp("plot_coef").with_extension("csv")).unwrap();
    assert_eq!(coef_csv.lines().next(), Some("R,x1,x2,x3"));
    assert_eq!(coef_csv.lines().count(), 8);

    for p in [
        prefix.with_extension("csv"),
        prefix.with_extension("svg"),
        temp("plot_coef").with_extension("csv"),
        temp("plot_coef").with_extension("svg"),
        doc,
    ] {
        std::fs::remove_file(p).ok();
    }
}

#[test]
fn certify_passes_then_fails_on_tampering_and_tiny_tolerance() {
    let doc = temp("certify.json");
    assert_code(&fit_demo(&doc, &[]), 0);

    let out = run(&["certify", "--path", doc.to_str().unwrap()]);
    assert_code(&out, 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("all checks within tolerance"));

    // A float-computed path cannot meet an unreasonably small tolerance.
    let out = run(&["certify", "--path", doc.to_str().unwrap(), "--tol", "1e-15"]);
    assert_code(&out, 5);

    // Perturb one coefficient: certification must name a failing node.
    let mut value: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&doc).unwrap()).unwrap();
    let b = value["nodes"][3]["beta"][0].as_f64().unwrap();
    value["nodes"][3]["beta"][0] = serde_json::json!(b + 1e-3);
    std::fs::write(&doc, serde_json::to_string_pretty(&value).unwrap()).unwrap();
    let out = run(&["certify", "--path", doc.to_str().unwrap()]);
    assert_code(&out, 5);
    assert!(String::from_utf8_lossy(&out.stderr).contains("node 3"));
    std::fs::remove_file(doc).ok();
}

#[test]
fn tied_rows_exit_with_tie_code_and_jitter_rescues() {
    let doc = temp("tied.json");
    let out = run(&[
        "fit",
        "--data",
        data("tied.csv").to_str().unwrap(),
        "--spec",
        data("tied_spec.json").to_str().unwrap(),
        "--intercept",
        "off",
        "--out",
        doc.to_str().unwrap(),
    ]);
    assert_code(&out, 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--jitter"));

    let out = run(&[
        "fit",
        "--data",
        data("tied.csv").to_str().unwrap(),
        "--spec",
        data("tied_spec.json").to_str().unwrap(),
        "--intercept",
        "off",
        "--jitter",
        "1e-6",
        "--seed",
        "7",
        "--out",
        doc.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let out = run(&["certify", "--path", doc.to_str().unwrap()]);
    assert_code(&out, 0);
    std::fs::remove_file(doc).ok();
}

#[test]
fn max_groups_truncates_the_path() {
    let doc = temp("truncated.json");
    assert_code(&fit_demo(&doc, &["--max-groups", "1"]), 0);
    let parsed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&doc).unwrap()).unwrap();
    assert_eq!(parsed["termination"].as_str(), Some("max_active_groups"));
    assert_eq!(parsed["nodes"].as_array().unwrap().len(), 3);
    std::fs::remove_file(doc).ok();
}

#[test]
fn stack_with_one_response_matches_fit_on_singleton_groups() {
    // Spec without group labels: fit then uses singleton groups, which is
    // exactly what stacking a single response produces.
    let spec = temp("singleton_spec.json");
    std::fs::write(
        &spec,
        r#"{"columns": [
            {"name": "x1", "kind": "quantitative"},
            {"name": "x2", "kind": "quantitative"},
            {"name": "x3", "kind": "quantitative"},
            {"name": "y", "kind": "response"}
        ]}"#,
    )
    .unwrap();
    // Singleton groups on small-integer data tie without jitter; both runs
    // use the same seed, so they solve the identical jittered problem.
    let fit_doc = temp("p1_fit.json");
    let stack_doc = temp("p1_stack.json");
    let out = run(&[
        "fit",
        "--data",
        data("demo.csv").to_str().unwrap(),
        "--spec",
        spec.to_str().unwrap(),
        "--intercept",
        "off",
        "--jitter",
        "1e-6",
        "--seed",
        "11",
        "--out",
        fit_doc.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let out = run(&[
        "stack",
        "--data",
        data("demo.csv").to_str().unwrap(),
        "--spec",
        spec.to_str().unwrap(),
        "--responses",
        "y",
        "--intercept",
        "off",
        "--jitter",
        "1e-6",
        "--seed",
        "11",
        "--out",
        stack_doc.to_str().unwrap(),
    ]);
    assert_code(&out, 0);

    let a: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&fit_doc).unwrap()).unwrap();
    let b: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&stack_doc).unwrap()).unwrap();
    assert_eq!(a["nodes"].as_array().unwrap().len(), b["nodes"].as_array().unwrap().len());
    for (na, nb) in a["nodes"]
        .as_array()
        .unwrap()
        .iter()
        .zip(b["nodes"].as_array().unwrap())
    {
        assert_eq!(na["radius"], nb["radius"]);
        assert_eq!(na["beta"], nb["beta"]);
    }
    for p in [spec, fit_doc, stack_doc] {
        std::fs::remove_file(p).ok();
    }
}

#[test]
fn input_errors_exit_with_code_two() {
    // Missing file.
    let out = run(&[
        "fit",
        "--data",
        "/nonexistent.csv",
        "--spec",
        data("demo_spec.json").to_str().unwrap(),
        "--out",
        temp("never.json").to_str().unwrap(),
    ]);
    assert_code(&out, 2);

    // A zero response violates the starting precondition.
    let bad = temp("zero_y.csv");
    std::fs::write(&bad, "x1,x2,x3,y\n-4,3,5,8\n-4,5,1,0\n4,-3,0,-11\n").unwrap();
    let out = run(&[
        "fit",
        "--data",
        bad.to_str().unwrap(),
        "--spec",
        data("demo_spec.json").to_str().unwrap(),
        "--intercept",
        "off",
        "--out",
        temp("never.json").to_str().unwrap(),
    ]);
    assert_code(&out, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("jitter"));
    std::fs::remove_file(bad).ok();
}
