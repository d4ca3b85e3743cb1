mod common;

use std::path::Path;
use std::process::{Command, Output};

use formopt::form_tensors::{build_reference_tensor, Form, FormSpec, Mode};
use formopt::progir::{interpret, parse_text, ProgramJson, StraightLineProgram};
use serde_json::Value;

fn formopt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_formopt"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const QUADRATIC_LAPLACIAN: [&str; 8] = ["tensor", "--form", "laplacian", "--mode", "matrix", "--dim", "2", "--degree"];

#[test]
fn tensor_text_and_json() {
    let mut args = QUADRATIC_LAPLACIAN.to_vec();
    args.push("2");
    let o = formopt(&args);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 36);
    assert_eq!(text.lines().next(), Some("(0, 0) | 0.5 0.5 0.5 0.5"));

    args.extend(["--format", "json"]);
    let o = formopt(&args);
    let json: Value = serde_json::from_slice(&o.stdout).unwrap();
    common::assert_valid("tensor.schema.json", &json);
    // row (1, 3) = [0, 2/3, 0, 0]
    assert_eq!(json["entries"][9][1], "2/3");
    assert_eq!(json["entries"][9][0], "0");
}

#[test]
fn usage_errors_exit_2() {
    let mut args = QUADRATIC_LAPLACIAN.to_vec();
    args.push("9");
    let o = formopt(&args);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unsupported"));
    assert_eq!(formopt(&["tensor", "--form", "laplacian"]).status.code(), Some(2));
    assert_eq!(formopt(&["tensor", "--form", "stokes"]).status.code(), Some(2));
    assert_eq!(formopt(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(formopt(&["verify", "--dim", "4"]).status.code(), Some(2));
    assert_eq!(formopt(&["verify", "--dim", "3", "--degree", "5"]).status.code(), Some(2));
    assert_eq!(formopt(&["--help"]).status.code(), Some(0));
}

fn check_dot(dot: &str, nrows: usize) {
    let lines: Vec<&str> = dot.lines().collect();
    assert!(lines[0].starts_with("digraph ") && lines[0].ends_with('{'));
    assert_eq!(*lines.last().unwrap(), "}");
    let mut nodes = 0;
    for l in &lines[1..lines.len() - 1] {
        let l = l.trim();
        assert!(l.ends_with(';'), "{l}");
        if let Some((from, rest)) = l.split_once(" -> ") {
            assert!(from.starts_with('n') && from[1..].parse::<usize>().is_ok());
            let to = rest.split(' ').next().unwrap().trim_end_matches(';');
            assert!(to.starts_with('n') && to[1..].parse::<usize>().unwrap() < nrows);
        } else if l.starts_with('n') && l.contains("[label=") {
            nodes += 1;
        }
    }
    assert_eq!(nodes, nrows);
}

#[test]
fn optimize_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let mut args = QUADRATIC_LAPLACIAN.to_vec();
    args[0] = "optimize";
    args.extend(["2", "-O", "--out", out]);
    let o = formopt(&args);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("base 144"), "{text}");
    assert!(text.contains("ffc 64"), "{text}");

    let kernel = std::fs::read_to_string(dir.path().join("kernel.txt")).unwrap();
    let program_json: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("program.json")).unwrap()).unwrap();
    common::assert_valid("program.schema.json", &program_json);
    check_dot(&std::fs::read_to_string(dir.path().join("forest.dot")).unwrap(), 36);

    // the text kernel and the JSON program describe the same computation
    let parsed: ProgramJson = serde_json::from_value(program_json).unwrap();
    let spec = FormSpec::new(Form::Laplacian, Mode::Matrix, 2, 2).unwrap();
    let from_text = StraightLineProgram::from_instructions(spec, 36, 4, parse_text(&kernel).unwrap()).unwrap();
    let from_json = StraightLineProgram::from_instructions(spec, 36, 4, parsed.instructions).unwrap();
    let g = [0.3, -1.2, 0.7, 2.0];
    assert_eq!(interpret(&from_text, &g).unwrap(), interpret(&from_json, &g).unwrap());
    assert_eq!(from_json.op_counts.maps, parsed.op_counts.maps);
    let tensor = build_reference_tensor(spec).unwrap();
    let y = interpret(&from_text, &g).unwrap();
    for r in 0..36 {
        let exact: f64 = (0..4).map(|c| tensor.value(r, c) * g[c]).sum();
        assert!((y[r] - exact).abs() < 1e-14);
    }
}

#[test]
fn optimize_without_flag_emits_direct_kernel() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = formopt(&[
        "optimize", "--form", "advection", "--mode", "action", "--dim", "3", "--degree", "2", "--out", out, "--format", "json",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let summary: Value = serde_json::from_slice(&o.stdout).unwrap();
    common::assert_valid("optimize.schema.json", &summary);
    assert_eq!(summary["optimized"], false);
    let c = &summary["op_counts"];
    let (base, ffc, fe) = (c["base"].as_u64().unwrap(), c["ffc"].as_u64().unwrap(), c["ferari"].as_u64().unwrap());
    assert!(fe <= ffc && ffc <= base);
    assert_eq!(summary["kernel_op_counts"]["maps"].as_u64(), Some(ffc));
    let kernel = std::fs::read_to_string(Path::new(out).join("kernel.txt")).unwrap();
    assert!(!kernel.contains("*y["));
}

#[test]
fn optimize_over_budget_is_reported() {
    let o = formopt(&[
        "optimize", "--form", "laplacian", "--mode", "matrix", "--dim", "2", "--degree", "3", "--time-budget", "0",
        "--format", "json",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let summary: Value = serde_json::from_slice(&o.stdout).unwrap();
    common::assert_valid("optimize.schema.json", &summary);
    assert!(summary["op_counts"].is_null());
    assert!(summary["status"].as_str().unwrap().contains("budget"));
}

#[test]
fn verify_is_deterministic_and_catches_faults() {
    let args = ["verify", "--dim", "2", "--degree", "2", "--seed", "7", "--mesh-n", "3"];
    let a = formopt(&args);
    let b = formopt(&args);
    assert_eq!(a.status.code(), Some(0), "{}", stdout(&a));
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 8);
    assert!(text.contains("seed 7"));

    let mut json_args = args.to_vec();
    json_args.extend(["--format", "json"]);
    let j: Value = serde_json::from_slice(&formopt(&json_args).stdout).unwrap();
    common::assert_valid("verify.schema.json", &j);
    assert_eq!(j["seed"], 7);

    let bad = formopt(&["verify", "--form", "laplacian", "--mode", "matrix", "--dim", "2", "--degree", "1", "--inject-fault"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stdout(&bad).starts_with("FAIL"));
}

#[test]
fn bench_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = formopt(&[
        "bench", "--form", "weighted_laplacian", "--mode", "matrix", "--dim", "2", "--degree", "1", "--mesh-n", "4", "--out", out,
        "--seed", "3",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    common::assert_valid("report.schema.json", &report);
    assert_eq!(report["seed"], 3);
    let case = &report["cases"][0];
    for key in ["local_time_naive", "local_time_opt", "global_time_naive", "global_time_opt"] {
        assert!(case[key]["reps"].as_u64().unwrap() >= 10);
        assert!(case[key]["cpu_secs"].as_f64().unwrap() >= 1.0);
    }
    assert_eq!(report["speedup_by_columns"][0]["ncols"], 12);
    let text = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(text.contains("weighted_laplacian"));
    assert_eq!(stdout(&o), text);
}
