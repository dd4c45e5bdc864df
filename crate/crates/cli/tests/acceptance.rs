//! One test per acceptance criterion. Each prints a single `PASS`/`FAIL`
//! line; run with `--nocapture` to see them.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nullit::domain::AVal;
use nullit::infer::{
    analyze, check_solution, classify_dereferences, derive_annotations, AnalysisConfig, Solution,
};
use nullit::ir::{load_program, parse_program, print_program, Program, ProgramPoint};
use nullit::oracle::{fuzz_program, gen_program, gen_program_sized, Fault, FuzzOutcome, GenParams};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Runs `body`, prints the verdict line, and fails the test on `Err` or panic.
fn criterion(n: u32, title: &str, body: impl FnOnce() -> Result<String, String>) {
    let start = Instant::now();
    let verdict = match catch_unwind(AssertUnwindSafe(body)) {
        Ok(v) => v,
        Err(e) => Err(e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    };
    let secs = start.elapsed().as_secs_f64();
    match &verdict {
        Ok(note) => println!("PASS criterion {n} ({title}): {note} [{secs:.1} s]"),
        Err(why) => println!("FAIL criterion {n} ({title}): {why} [{secs:.1} s]"),
    }
    if let Err(why) = verdict {
        panic!("criterion {n} failed: {why}");
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn corpus() -> Vec<(String, Program)> {
    let mut out: Vec<(String, Program)> = fs::read_dir(corpus_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "nir"))
        .map(|p| {
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            let program = load_program(&fs::read_to_string(&p).unwrap())
                .unwrap_or_else(|e| panic!("{name}: {e}"));
            (name, program)
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

fn corpus_program(name: &str) -> Program {
    load_program(&fs::read_to_string(corpus_dir().join(format!("{name}.nir"))).unwrap()).unwrap()
}

fn annotation(program: &Program, config: AnalysisConfig) -> serde_json::Value {
    let s = analyze(program, config);
    derive_annotations(program, &s).to_json(program)
}

#[test]
fn criterion_1_motivating_examples() {
    criterion(1, "motivating-example fidelity", || {
        for config in [AnalysisConfig::BASIC, AnalysisConfig::OPT] {
            let p = corpus_program("ctor_complete");
            let a = annotation(&p, config);
            ensure(a["fields"]["C.f"] == "@NonNull", || {
                format!("ctor_complete f is {}", a["fields"]["C.f"])
            })?;
            let ret = &a["methods"]["C.m/1"]["return"];
            ensure(ret == "@NonNull", || {
                format!("ctor_complete m returns {ret}")
            })?;

            let p = corpus_program("ctor_escape");
            let a = annotation(&p, config);
            ensure(a["fields"]["C.f"] == "@NonNull", || {
                format!("ctor_escape f is {}", a["fields"]["C.f"])
            })?;
            let m = &a["methods"]["C.m/1"];
            let param = m["params"]["0"].as_str().unwrap_or("");
            ensure(param.starts_with("@Raw"), || {
                format!("ctor_escape m parameter is {param}")
            })?;
            ensure(m["return"] == "@Nullable", || {
                format!("ctor_escape m returns {}", m["return"])
            })?;
        }
        Ok("complete constructor: f and m's result non-null; escaping constructor: m's parameter raw, result nullable, f non-null".into())
    });
}

#[test]
fn criterion_2_null_test_recovery() {
    criterion(2, "test-recovery fidelity", || {
        let p = parse_program(
            "class Main extends Object {
               static main (1, 3) { aconst_null store 1 load 0 ifnull L1 load 1 ifnull L1 nop L1: return }
             }",
        )
        .unwrap();
        let main = p.entry;
        let at = |s: &Solution, pc: usize, r: u16| {
            s.state.frame(ProgramPoint::new(main, pc)).unwrap().local(r)
        };
        let on = AnalysisConfig {
            nullable_init: true,
            test_recovery: true,
            ..AnalysisConfig::BASIC
        };
        let off = AnalysisConfig {
            nullable_init: true,
            ..AnalysisConfig::BASIC
        };
        let s = analyze(&p, on);
        ensure(at(&s, 3, 0) == AVal::Nullable, || {
            "parameter not nullable before the test".into()
        })?;
        ensure(at(&s, 4, 0) == AVal::RawMinus, || {
            format!("nullable fallthrough is {}", at(&s, 4, 0))
        })?;
        ensure(at(&s, 5, 1) == AVal::NullableInit, || {
            format!("local before test is {}", at(&s, 5, 1))
        })?;
        ensure(at(&s, 6, 1) == AVal::NonNull, || {
            format!("nullable-init fallthrough is {}", at(&s, 6, 1))
        })?;
        let s = analyze(&p, off);
        ensure(at(&s, 4, 0) == AVal::Nullable, || {
            format!("refined with recovery off: {}", at(&s, 4, 0))
        })?;
        ensure(at(&s, 6, 1) == AVal::NullableInit, || {
            format!("refined with recovery off: {}", at(&s, 6, 1))
        })?;
        Ok(
            "Nullable -> Raw-, NullableInit -> NonNull on the fallthrough; unchanged when off"
                .into(),
        )
    });
}

fn ancestors(p: &Program, mut c: nullit::ir::ClassId) -> Vec<nullit::ir::ClassId> {
    let mut out = vec![c];
    while let Some(s) = p.class(c).super_class {
        out.push(s);
        c = s;
    }
    out
}

/// The order spelled out from the class table.
fn leq_by_cases(p: &Program, a: AVal, b: AVal) -> bool {
    use AVal::*;
    match (a, b) {
        _ if a == b => true,
        (NonNull, _) | (_, Nullable) | (Raw(_), RawMinus) => true,
        (Raw(x), Raw(y)) => ancestors(p, x).contains(&y),
        _ => false,
    }
}

fn lattice_laws(p: &Program) -> Result<usize, String> {
    let h = p.hierarchy();
    let all = AVal::enumerate(h);
    let mut checks = 0;
    for &a in &all {
        let r = a.nonnull_refine();
        ensure(
            r.leq(a, h) && r.excludes_null() && r.nonnull_refine() == r,
            || format!("refine on {a}"),
        )?;
        for &b in &all {
            ensure(a.leq(b, h) == leq_by_cases(p, a, b), || {
                format!("{a} <= {b}")
            })?;
            ensure(!(a.leq(b, h) && b.leq(a, h)) || a == b, || {
                format!("antisymmetry {a} {b}")
            })?;
            let ubs: Vec<AVal> = all
                .iter()
                .copied()
                .filter(|&u| leq_by_cases(p, a, u) && leq_by_cases(p, b, u))
                .collect();
            let least: Vec<AVal> = ubs
                .iter()
                .copied()
                .filter(|&u| ubs.iter().all(|&v| leq_by_cases(p, u, v)))
                .collect();
            let j = a.join(b, h);
            ensure(least == [j], || {
                format!("{a} join {b} = {j}, least upper bounds {least:?}")
            })?;
            ensure(j == b.join(a, h), || {
                format!("join of {a} {b} not commutative")
            })?;
            ensure(!a.leq(b, h) || r.leq(b.nonnull_refine(), h), || {
                format!("refine not monotone {a} {b}")
            })?;
            for &c in &all {
                ensure(!(a.leq(b, h) && b.leq(c, h)) || a.leq(c, h), || {
                    format!("transitivity {a} {b} {c}")
                })?;
                ensure(j.join(c, h) == a.join(b.join(c, h), h), || {
                    format!("associativity {a} {b} {c}")
                })?;
                checks += 1;
            }
        }
    }
    Ok(checks)
}

#[test]
fn criterion_3_lattice_laws() {
    criterion(3, "lattice law suite", || {
        // Chains of depth 1 through 4, plus a branching hierarchy of depth 4.
        let mut sources = Vec::new();
        for depth in 1..=4 {
            let mut s = String::new();
            for i in 0..depth {
                let parent = if i == 0 {
                    "Object".to_string()
                } else {
                    format!("K{}", i - 1)
                };
                s.push_str(&format!("class K{i} extends {parent} {{ }}\n"));
            }
            sources.push(s);
        }
        sources.push(
            "class A extends Object { } class B extends A { } class C extends A { }
             class D extends B { } class E extends B { } class F extends C { } class G extends D { }
             class H extends G { } class I extends E { } class J extends C { }"
                .into(),
        );
        let start = Instant::now();
        let mut checks = 0;
        let mut points = 0;
        for src in &sources {
            let src =
                format!("{src}\nclass Main extends Object {{ static main (0, 0) {{ return }} }}");
            let p = parse_program(&src).unwrap();
            points = points.max(AVal::enumerate(p.hierarchy()).len());
            checks += lattice_laws(&p)?;
        }
        let took = start.elapsed();
        ensure(took < Duration::from_secs(1), || format!("took {took:?}"))?;
        Ok(format!(
            "{checks} triples over {} hierarchies, up to {points} lattice points, {:.0} ms",
            sources.len(),
            took.as_secs_f64() * 1e3
        ))
    });
}

fn fuzz_range(
    seeds: std::ops::Range<u64>,
    params: &GenParams,
    fault: Option<Fault>,
) -> FuzzOutcome {
    let configs = [AnalysisConfig::BASIC, AnalysisConfig::OPT];
    seeds
        .into_par_iter()
        .map(|seed| fuzz_program(&gen_program(seed, params), &configs, 10, 100_000, fault))
        .reduce(FuzzOutcome::default, |mut a, b| {
            a.merge(b);
            a
        })
}

#[test]
fn criterion_4_soundness_fuzzing() {
    criterion(4, "soundness fuzzing", || {
        let start = Instant::now();
        let params = GenParams::small();
        let clean = fuzz_range(0..1000, &params, None);
        if let Some(f) = clean.failures.first() {
            return Err(format!(
                "{} violations; first under {} input {}: {}",
                clean.violations,
                f.config.name(),
                f.trace.seed,
                f.violation
            ));
        }
        ensure(clean.stuck == 0, || {
            format!("{} runs got stuck", clean.stuck)
        })?;
        let mut injected = Vec::new();
        for fault in [Fault::LowerHeap, Fault::MarkSafe] {
            let o = fuzz_range(0..100, &params, Some(fault));
            ensure(o.violations >= 1, || {
                format!("fault {fault} went unnoticed")
            })?;
            injected.push(format!("{fault}: {}", o.violations));
        }
        let took = start.elapsed();
        ensure(took < Duration::from_secs(600), || format!("took {took:?}"))?;
        Ok(format!(
            "1000 programs, {} checked runs (returned {}, null dereference {}, budget {}), 0 violations; injected faults caught ({})",
            clean.runs,
            clean.returned,
            clean.omega,
            clean.exhausted,
            injected.join(", ")
        ))
    });
}

/// Plain round-robin iteration from the initial state.
fn kleene(program: &Program, solution: &Solution) -> String {
    let system = solution.system(program);
    let mut state = system.initial_state();
    loop {
        let old = state.clone();
        for id in 0..system.len() {
            for u in system.eval(id, &old) {
                system.apply(&mut state, u);
            }
        }
        if state == old {
            return serde_json::to_string(&state.to_json(program)).unwrap();
        }
    }
}

#[test]
fn criterion_5_fixpoint_equivalence() {
    criterion(5, "fixpoint oracle equivalence", || {
        let mut programs: Vec<(String, Program)> = corpus();
        for seed in 0..1000 {
            programs.push((
                format!("seed {seed}"),
                gen_program(seed, &GenParams::micro()),
            ));
        }
        programs.retain(|(_, p)| p.instruction_count() <= 50);
        let mut cases = 0;
        for (name, p) in &programs {
            for config in [AnalysisConfig::BASIC, AnalysisConfig::OPT] {
                let s = analyze(p, config);
                let worklist = serde_json::to_string(&s.state.to_json(p)).unwrap();
                ensure(worklist == kleene(p, &s), || {
                    format!("{name} under {}", config.name())
                })?;
                cases += 1;
            }
        }
        ensure(programs.len() >= 500, || {
            format!(
                "only {} programs of at most 50 instructions",
                programs.len()
            )
        })?;
        Ok(format!(
            "{cases} cases over {} programs, all byte-identical",
            programs.len()
        ))
    });
}

struct Counts {
    annotations: usize,
    non_null: usize,
    derefs: usize,
    safe: usize,
}

fn counts(p: &Program, config: AnalysisConfig) -> Counts {
    let s = analyze(p, config);
    assert!(check_solution(p, &s).is_empty());
    let a = derive_annotations(p, &s).counts().total();
    let d = classify_dereferences(p, &s).total();
    Counts {
        annotations: a.total,
        non_null: a.good,
        derefs: d.total,
        safe: d.good,
    }
}

type SetFlag = fn(&mut AnalysisConfig, bool);

const FLAGS: [(&str, SetFlag); 4] = [
    ("nullable_init", |c, v| c.nullable_init = v),
    ("test_recovery", |c, v| c.test_recovery = v),
    ("instanceof_recovery", |c, v| c.instanceof_recovery = v),
    ("deref_edge_refinement", |c, v| c.deref_edge_refinement = v),
];

#[test]
fn criterion_6_precision_direction() {
    criterion(6, "precision direction", || {
        let programs = corpus();
        ensure(programs.len() == 30, || {
            format!("corpus has {} programs", programs.len())
        })?;
        let (mut tb, mut to, mut total) = (0, 0, 0);
        let mut better = Vec::new();
        for (name, p) in &programs {
            let b = counts(p, AnalysisConfig::BASIC);
            let o = counts(p, AnalysisConfig::OPT);
            ensure(o.non_null >= b.non_null, || {
                format!("{name}: opt {} < basic {}", o.non_null, b.non_null)
            })?;
            if o.non_null > b.non_null {
                better.push(name.as_str());
            }
            tb += b.non_null;
            to += o.non_null;
            total += b.annotations;
            for (flag, set) in FLAGS {
                let mut without = AnalysisConfig::OPT;
                set(&mut without, false);
                let mut with = AnalysisConfig::BASIC;
                set(&mut with, true);
                let w = counts(p, without).non_null;
                let x = counts(p, with).non_null;
                ensure(w <= o.non_null, || {
                    format!("{name}: dropping {flag} gains precision")
                })?;
                ensure(x >= b.non_null, || {
                    format!("{name}: adding {flag} loses precision")
                })?;
            }
        }
        let pct = |x: usize| 100.0 * x as f64 / total as f64;
        ensure(to >= tb, || "total regressed".into())?;
        ensure(better.len() >= 10, || {
            format!("only {} programs strictly better", better.len())
        })?;
        Ok(format!(
            "non-null annotations basic {:.1}% opt {:.1}% of {total}; strictly better on {} programs; ablation monotone",
            pct(tb),
            pct(to),
            better.len()
        ))
    });
}

#[test]
fn criterion_7_safe_dereference_direction() {
    criterion(7, "safe-dereference direction", || {
        let text = fs::read_to_string(corpus_dir().join("expected.txt")).unwrap();
        let expected: BTreeMap<String, Vec<usize>> = text
            .lines()
            .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
            .map(|l| {
                let mut it = l.split_whitespace();
                let name = it.next().unwrap().to_string();
                (name, it.map(|n| n.parse().unwrap()).collect())
            })
            .collect();
        let programs = corpus();
        ensure(expected.len() == programs.len(), || {
            "expected.txt does not cover the corpus".into()
        })?;
        let (mut sb, mut so, mut total, mut guards) = (0, 0, 0, 0);
        for (name, p) in &programs {
            let b = counts(p, AnalysisConfig::BASIC);
            let o = counts(p, AnalysisConfig::OPT);
            let got = vec![
                b.annotations,
                b.non_null,
                o.non_null,
                b.derefs,
                b.safe,
                o.safe,
            ];
            ensure(expected.get(name) == Some(&got), || {
                format!("{name}: counts {got:?}, expected {:?}", expected.get(name))
            })?;
            ensure(o.safe >= b.safe, || {
                format!("{name}: opt {} < basic {}", o.safe, b.safe)
            })?;
            if name.starts_with("guard_") {
                guards += 1;
                ensure(o.safe > b.safe, || {
                    format!("{name}: no additional safe dereference")
                })?;
            }
            sb += b.safe;
            so += o.safe;
            total += b.derefs;
        }
        let pct = |x: usize| 100.0 * x as f64 / total as f64;
        Ok(format!(
            "safe dereferences basic {:.1}% opt {:.1}% of {total}; {guards} guard programs each gain; regression counts match",
            pct(sb),
            pct(so)
        ))
    });
}

#[test]
fn criterion_8_scaled_performance() {
    criterion(8, "scaled performance", || {
        const TIME_BOUND: f64 = 60.0;
        const MEMORY_BOUND: u64 = 1 << 30;
        const RATIO_BOUND: f64 = 3.0;
        // Each size is analyzed by a fresh CLI process, so the peak resident
        // size it reports belongs to that analysis alone. Best of three runs.
        let dir = tempfile::tempdir().unwrap();
        let mut rows = Vec::new();
        let mut memory = 0;
        for target in [10_000, 50_000, 100_000] {
            let path = dir.path().join(format!("scaled-{target}.nir"));
            fs::write(&path, print_program(&gen_program_sized(1, target, 200).1)).unwrap();
            let mut best = f64::INFINITY;
            let mut n = 0;
            for _ in 0..3 {
                let out = Command::new(env!("CARGO_BIN_EXE_nullit"))
                    .args(["infer", "--stats", "--timing", "--format", "json"])
                    .arg(&path)
                    .output()
                    .unwrap();
                ensure(out.status.success(), || {
                    format!("{target}: {}", String::from_utf8_lossy(&out.stderr))
                })?;
                let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
                let stats = &v["programs"][0]["stats"];
                n = stats["instructions"].as_u64().unwrap() as usize;
                best = best.min(stats["wall_ms"].as_f64().unwrap() / 1e3);
                memory = memory.max(stats["peak_memory_bytes"].as_u64().unwrap_or(0));
            }
            rows.push((n, best));
        }
        let (n_big, t_big) = rows[2];
        // Growth of time per instruction between consecutive sizes, scaled
        // to a fivefold size step.
        let ratios: Vec<f64> = rows
            .windows(2)
            .map(|w| {
                let size = w[1].0 as f64 / w[0].0 as f64;
                let per_instruction = (w[1].1 / w[0].1) / size;
                per_instruction.powf(5f64.ln() / size.ln())
            })
            .collect();
        let worst = ratios.iter().copied().fold(0.0, f64::max);
        let report = format!(
            "{} ; peak {:.0} MiB; per-instruction slowdown per 5x size {}",
            rows.iter()
                .map(|(n, t)| format!("{n} instructions {:.2} s", t))
                .collect::<Vec<_>>()
                .join(", "),
            memory as f64 / 1048576.0,
            ratios
                .iter()
                .map(|r| format!("{r:.2}"))
                .collect::<Vec<_>>()
                .join(", ")
        );
        // Soft tolerance: above the bound is reported, twice the bound fails.
        ensure(t_big < 2.0 * TIME_BOUND, || {
            format!("{n_big} instructions took {t_big:.1} s; {report}")
        })?;
        ensure(memory < 2 * MEMORY_BOUND, || {
            format!("peak memory over bound; {report}")
        })?;
        ensure(worst < 2.0 * RATIO_BOUND, || {
            format!("superlinear; {report}")
        })?;
        let soft = t_big >= TIME_BOUND || memory >= MEMORY_BOUND || worst >= RATIO_BOUND;
        Ok(if soft {
            format!("within soft tolerance only: {report}")
        } else {
            report
        })
    });
}

fn mutate(text: &str, rng: &mut ChaCha8Rng) -> String {
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let rounds = rng.gen_range(1..=3);
    for _ in 0..rounds {
        let i = rng.gen_range(0..lines.len().max(1));
        match rng.gen_range(0..8) {
            0 if !lines.is_empty() => {
                lines.remove(i);
            }
            1 if !lines.is_empty() => {
                let l = lines[i].clone();
                lines.insert(i, l);
            }
            2 if lines.len() > 1 => {
                let j = rng.gen_range(0..lines.len());
                lines.swap(i, j);
            }
            3 if !lines.is_empty() => {
                let mut words: Vec<&str> = lines[i].split_whitespace().collect();
                words.shuffle(rng);
                lines[i] = words.join(" ");
            }
            4 if !lines.is_empty() => {
                let junk = [
                    "{",
                    "}",
                    "L99:",
                    "ifnull",
                    "getfield X.y",
                    "load 70000",
                    "-1",
                    "(0,",
                    "\u{7f}",
                ];
                lines[i].push(' ');
                lines[i].push_str(junk.choose(rng).unwrap());
            }
            5 => {
                let cut = rng.gen_range(0..=lines.len());
                lines.truncate(cut);
            }
            6 if !lines.is_empty() => {
                lines[i] = lines[i]
                    .split_whitespace()
                    .map(|w| if w.parse::<i64>().is_ok() { "9" } else { w })
                    .collect::<Vec<_>>()
                    .join(" ");
            }
            _ if !lines.is_empty() => {
                let l = &mut lines[i];
                if !l.is_empty() {
                    let k = rng.gen_range(0..l.len());
                    if l.is_char_boundary(k) {
                        l.insert(k, ['x', ' ', '{', '0'][rng.gen_range(0..4)]);
                    }
                }
            }
            _ => {}
        }
    }
    lines.join("\n")
}

#[test]
fn criterion_9_robustness() {
    criterion(9, "robustness", || {
        let dir = tempfile::tempdir().unwrap();
        let sources: Vec<String> = fs::read_dir(corpus_dir())
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|x| x == "nir"))
            .map(|p| fs::read_to_string(p).unwrap())
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (mut rejected, mut accepted) = (0, 0);
        for i in 0..100 {
            let text = mutate(sources.choose(&mut rng).unwrap(), &mut rng);
            let path = dir.path().join(format!("mutant-{i}.nir"));
            fs::write(&path, &text).unwrap();
            let out = Command::new(env!("CARGO_BIN_EXE_nullit"))
                .args(["infer", "--format", "json"])
                .arg(&path)
                .output()
                .unwrap();
            let stderr = String::from_utf8_lossy(&out.stderr);
            match out.status.code() {
                Some(0) => {
                    serde_json::from_slice::<serde_json::Value>(&out.stdout)
                        .map_err(|e| format!("mutant {i}: unparseable output: {e}"))?;
                    accepted += 1;
                }
                Some(1) => {
                    let line = stderr.lines().next().unwrap_or("");
                    let prefix = format!("error: {}", path.display());
                    ensure(line.starts_with(&prefix), || {
                        format!("mutant {i}: unstructured diagnostic `{line}`")
                    })?;
                    rejected += 1;
                }
                code => {
                    return Err(format!(
                        "mutant {i}: exit {code:?}, stderr {stderr}\n{text}"
                    ))
                }
            }
            ensure(!stderr.contains("panicked"), || {
                format!("mutant {i} panicked:\n{text}")
            })?;
        }
        Ok(format!(
            "100 mutants: {rejected} rejected with a located diagnostic, {accepted} still valid"
        ))
    });
}
