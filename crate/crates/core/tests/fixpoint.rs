//! The worklist solver against plain round-robin (Kleene) iteration.

use std::path::Path;

use nullit::infer::{analyze, check_solution, AnalysisConfig, Solution};
use nullit::ir::{parse_program, Program};
use nullit::oracle::{gen_program, GenParams};

/// Every round evaluates every constraint on the previous round's state.
fn kleene(program: &Program, solution: &Solution) -> serde_json::Value {
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
            return state.to_json(program);
        }
    }
}

fn agree(program: &Program) {
    for config in [AnalysisConfig::BASIC, AnalysisConfig::OPT] {
        let s = analyze(program, config);
        assert!(check_solution(program, &s).is_empty());
        let worklist = serde_json::to_string(&s.state.to_json(program)).unwrap();
        let naive = serde_json::to_string(&kleene(program, &s)).unwrap();
        assert_eq!(worklist, naive, "{}", config.name());
    }
}

#[test]
fn small_generated_programs() {
    let mut n = 0;
    for seed in 0..400 {
        let p = gen_program(seed, &GenParams::micro());
        if p.instruction_count() <= 50 {
            agree(&p);
            n += 1;
        }
    }
    assert!(n >= 200, "only {n} programs under 50 instructions");
}

#[test]
fn larger_generated_programs() {
    for seed in 0..10 {
        agree(&gen_program(seed, &GenParams::tiny()));
    }
}

#[test]
fn corpus_programs() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "nir") {
            let p = parse_program(&std::fs::read_to_string(&path).unwrap()).unwrap();
            agree(&p);
            n += 1;
        }
    }
    assert!(n >= 30);
}
