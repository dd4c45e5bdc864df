use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn nullit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nullit"))
        .args(args)
        .env_remove("NULLIT_BUDGET")
        .output()
        .unwrap()
}

fn corpus(name: &str) -> String {
    let p: PathBuf = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../corpus")
        .join(name);
    p.to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn infer_json_for_escaping_constructor() {
    let o = nullit(&["infer", "--format", "json", &corpus("ctor_escape.nir")]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let ann = &v["programs"][0]["annotations"];
    assert_eq!(ann["fields"]["C.f"], "@NonNull");
    assert_eq!(ann["methods"]["C.m/1"]["return"], "@Nullable");
}

#[test]
fn json_is_deterministic() {
    let args = ["infer", "--format", "json", "--stats", "--state"];
    let a = nullit(&[&args[..], &[&corpus("linked_list.nir")]].concat());
    let b = nullit(&[&args[..], &[&corpus("linked_list.nir")]].concat());
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert!(v["programs"][0]["stats"].get("wall_ms").is_none());
    assert!(v["programs"][0]["state"].is_object());
}

#[test]
fn basic_flag_loses_guard_precision() {
    let file = corpus("guard_ifnull_param.nir");
    let opt = stdout(&nullit(&["infer", &file]));
    let basic = stdout(&nullit(&["infer", "--basic", &file]));
    assert!(opt.contains("5 of 5 safe"), "{opt}");
    assert!(basic.contains("4 of 5 safe"), "{basic}");
    assert!(basic.contains("unsafe"));
}

#[test]
fn stats_totals_over_several_files() {
    let o = nullit(&[
        "infer",
        "--stats",
        &corpus("swap.nir"),
        &corpus("visitor.nir"),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("total over 2 programs"));
    assert!(out.contains("visitor"));
}

#[test]
fn syntax_error_is_located() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.nir");
    fs::write(&path, "class A extends Object {\n  field f maybe\n}\n").unwrap();
    let o = nullit(&["infer", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(
        err.starts_with(&format!("error: {}:2:", path.display())),
        "{err}"
    );
}

#[test]
fn stack_error_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pop.nir");
    fs::write(
        &path,
        "class Main extends Object { static main (0, 0) { pop return } }",
    )
    .unwrap();
    let o = nullit(&["infer", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("invalid bytecode"));
}

#[test]
fn missing_file_is_an_input_error() {
    let o = nullit(&["infer", "/nonexistent/x.nir"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn fuzz_reports_clean_and_injected_runs() {
    let o = nullit(&[
        "fuzz", "--seeds", "0..15", "--inputs", "3", "--size", "tiny",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("15 programs"), "{out}");
    assert!(out.contains("0 violations"), "{out}");

    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("failures");
    let o = nullit(&[
        "fuzz",
        "--seeds",
        "0..15",
        "--inputs",
        "3",
        "--size",
        "tiny",
        "--inject-fault",
        "mark-safe",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let written: Vec<_> = fs::read_dir(&out_dir).unwrap().collect();
    assert!(!written.is_empty());
}

#[test]
fn check_and_run() {
    let o = nullit(&["check", &corpus("observer.nir"), "--inputs", "4"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("opt: 4 inputs, 0 violations"));

    let o = nullit(&["run", &corpus("ctor_escape.nir"), "--trace"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("Main.main/0:0 new C"));
}

#[test]
fn budget_from_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_nullit"))
        .args(["run", &corpus("linked_list.nir")])
        .env("NULLIT_BUDGET", "3")
        .output()
        .unwrap();
    assert!(stdout(&o).contains("budget"), "{}", stdout(&o));
}

#[test]
fn generated_program_parses_back() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.nir");
    let o = nullit(&["gen", "--seed", "4", "--size", "tiny"]);
    fs::write(&path, &o.stdout).unwrap();
    assert_eq!(
        nullit(&["infer", path.to_str().unwrap()]).status.code(),
        Some(0)
    );

    let o = nullit(&["gen", "--instructions", "3000", "--classes", "20"]);
    fs::write(&path, &o.stdout).unwrap();
    let v: serde_json::Value = serde_json::from_slice(
        &nullit(&[
            "infer",
            "--stats",
            "--format",
            "json",
            path.to_str().unwrap(),
        ])
        .stdout,
    )
    .unwrap();
    let n = v["programs"][0]["stats"]["instructions"].as_u64().unwrap();
    assert!(n.abs_diff(3000) < 300, "{n}");
}

#[test]
fn bad_seed_range_is_rejected() {
    let o = nullit(&["fuzz", "--seeds", "9..2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("backwards"));
}

#[test]
fn alias_dump_and_empty_fuzz() {
    let o = nullit(&["infer", "--dump-alias", &corpus("ctor_complete.nir")]);
    assert!(
        stdout(&o).contains("Main.main/0@1 [{} new@0]"),
        "{}",
        stdout(&o)
    );
    let o = nullit(&["fuzz", "--seeds", "0..0"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("0 programs"));
}
