//! Browser bindings. Every entry point takes program text and returns a JSON
//! string; failures come back as `{"error": ...}` rather than exceptions.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use nullit::infer::{analyze as solve, classify_dereferences, derive_annotations, AnalysisConfig};
use nullit::ir::{load_program, Program};
use nullit::oracle::{check_correctness, check_dereference_safety, describe_status, run};
use nullit::stats::RunStats;

const BUDGET: u64 = 20_000;
const MAX_TRACE_LINES: usize = 400;

fn config_named(name: &str) -> AnalysisConfig {
    if name == "basic" {
        AnalysisConfig::BASIC
    } else {
        AnalysisConfig::OPT
    }
}

fn with_program(source: &str, f: impl FnOnce(&Program) -> Value) -> String {
    let out = match load_program(source) {
        Ok(p) => f(&p),
        Err(e) => json!({ "error": e.to_string() }),
    };
    out.to_string()
}

/// Annotations, dereference report and counts under `"basic"` or `"opt"`.
#[wasm_bindgen]
pub fn analyze(source: &str, config: &str) -> String {
    with_program(source, |p| {
        let s = solve(p, config_named(config));
        let a = derive_annotations(p, &s);
        let r = classify_dereferences(p, &s);
        let stats = RunStats::collect(p, &s, &a, &r, Default::default());
        json!({
            "annotations": a.to_json(p),
            "dereferences": r.to_json(p),
            "stats": stats.to_json(true),
            "stats_text": stats.tables(),
        })
    })
}

/// One concrete run with the given input seed; the trace is truncated.
#[wasm_bindgen]
pub fn run_program(source: &str, seed: u32) -> String {
    with_program(source, |p| {
        let t = run(p, BUDGET, u64::from(seed));
        let dump = t.dump(p);
        let lines: Vec<&str> = dump.lines().collect();
        let shown = lines.len().min(MAX_TRACE_LINES);
        json!({
            "inputs": t.inputs.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
            "steps": t.steps.len(),
            "status": describe_status(p, &t.status),
            "trace": lines[..shown].join("\n"),
            "truncated": shown < lines.len(),
        })
    })
}

/// Both configurations checked against `inputs` concrete runs.
#[wasm_bindgen]
pub fn check(source: &str, inputs: u32) -> String {
    with_program(source, |p| {
        let traces: Vec<_> = (0..u64::from(inputs))
            .map(|seed| run(p, BUDGET, seed))
            .collect();
        let mut out = serde_json::Map::new();
        for config in [AnalysisConfig::BASIC, AnalysisConfig::OPT] {
            let s = solve(p, config);
            let r = classify_dereferences(p, &s);
            let mut found = Vec::new();
            for t in &traces {
                let mut v = check_correctness(p, t, &s);
                v.extend(check_dereference_safety(p, t, &r));
                found.extend(v.iter().map(|v| format!("input {}: {v}", t.seed)));
            }
            out.insert(config.name().into(), json!(found));
        }
        Value::Object(out)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SRC: &str = include_str!("../../../corpus/ctor_escape.nir");

    fn parse(s: String) -> Value {
        serde_json::from_str(&s).unwrap()
    }

    #[test]
    fn analyze_reports_annotations() {
        let v = parse(analyze(SRC, "opt"));
        assert_eq!(v["annotations"]["fields"]["C.f"], "@NonNull");
        assert!(v["stats_text"].as_str().unwrap().contains("TOTAL"));
    }

    #[test]
    fn errors_are_values() {
        let v = parse(analyze("class {", "opt"));
        assert!(v["error"].as_str().unwrap().starts_with("1:"));
    }

    #[test]
    fn run_and_check() {
        let v = parse(run_program(SRC, 0));
        assert_eq!(v["status"], "returned");
        let v = parse(check(SRC, 3));
        assert_eq!(v["opt"], json!([]));
        assert_eq!(v["basic"], json!([]));
    }
}
