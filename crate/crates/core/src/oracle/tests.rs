use super::*;
use crate::domain::AVal;
use crate::infer::{analyze, classify_dereferences, AnalysisConfig};
use crate::ir::{parse_program, ClassId, Instruction, ProgramPoint};

const BUILT: &str = "
class C extends Object {
  field f ref
  ctor (0, 1) {
    load 0 new Object dup invokespecial Object.<init> 0 putfield C.f
    return
  }
  method m (1, 2) { load 1 getfield C.f areturn }
}
class Main extends Object {
  static main (0, 1) {
    new C dup invokespecial C.<init> 0 store 0
    load 0 load 0 invokevirtual C.m 1 pop
    return
  }
}";

const ESCAPING: &str = "
class C extends Object {
  field f ref
  ctor (0, 1) {
    load 0 load 0 invokevirtual C.m 1 pop
    load 0 new Object dup invokespecial Object.<init> 0 putfield C.f
    return
  }
  method m (1, 2) { load 1 getfield C.f areturn }
}
class Main extends Object {
  static main (0, 1) {
    new C dup invokespecial C.<init> 0 store 0
    load 0 load 0 invokevirtual C.m 1 pop
    return
  }
}";

const PARAM_DEREF: &str = "
class C extends Object {
  field f ref
  ctor (0, 1) { return }
}
class Main extends Object {
  static main (1, 1) { load 0 getfield C.f pop return }
}";

fn seed_with_null_input(p: &crate::ir::Program) -> u64 {
    (0..64)
        .find(|&s| run(p, DEFAULT_BUDGET, s).inputs[0] == ConcValue::Null)
        .expect("half the seeds give null")
}

#[test]
fn constructed_object_has_defined_non_null_field() {
    let p = parse_program(BUILT).unwrap();
    let t = run(&p, DEFAULT_BUDGET, 0);
    assert_eq!(t.status, Status::Returned);
    let mut heap = ConcHeap::default();
    for d in t.setup.iter().chain(t.steps.iter().flat_map(|s| &s.deltas)) {
        heap.apply(&p, d);
    }
    let c = p.class_by_name("C").unwrap();
    let f = p.field_by_name("C", "f").unwrap();
    let obj = (0..heap.len() as u32)
        .filter_map(|l| heap.object(l))
        .find(|o| o.class == c)
        .unwrap();
    assert_eq!(
        obj.constructed.iter().copied().collect::<Vec<_>>(),
        vec![ClassId::OBJECT, c]
    );
    let cell = obj.fields[&f];
    assert!(cell.def);
    assert!(matches!(cell.value, ConcValue::Loc(_)));
}

#[test]
fn null_dereference_is_omega() {
    let p = parse_program("class M extends Object { field f ref static main (0, 1) { aconst_null getfield M.f pop return } }")
        .unwrap();
    let t = run(&p, DEFAULT_BUDGET, 0);
    assert_eq!(t.status, Status::Omega(ProgramPoint::new(p.entry, 1)));
}

#[test]
fn escaping_read_sees_undefined_null() {
    let p = parse_program(ESCAPING).unwrap();
    let t = run(&p, DEFAULT_BUDGET, 0);
    assert_eq!(t.status, Status::Returned);
    let m = p.method_by_name("C", "m", 1).unwrap();
    // the first areturn of m happens during construction
    let ret = t
        .steps
        .iter()
        .find(|s| {
            s.point.method == m && matches!(p.method(m).code[s.point.pc], Instruction::AReturn)
        })
        .unwrap();
    assert_eq!(ret.stack, vec![ConcValue::Null]);
    for config in [AnalysisConfig::BASIC, AnalysisConfig::OPT] {
        let s = analyze(&p, config);
        assert!(check_correctness(&p, &t, &s).is_empty());
    }
}

#[test]
fn lowered_local_is_caught() {
    let p = parse_program(PARAM_DEREF).unwrap();
    let seed = seed_with_null_input(&p);
    let t = run(&p, DEFAULT_BUDGET, seed);
    assert_eq!(t.status, Status::Omega(ProgramPoint::new(p.entry, 1)));
    let mut s = analyze(&p, AnalysisConfig::OPT);
    assert!(check_correctness(&p, &t, &s).is_empty());
    s.state
        .frame_mut(ProgramPoint::new(p.entry, 0))
        .unwrap()
        .set_local(0, AVal::NonNull);
    let v = check_correctness(&p, &t, &s);
    assert_eq!(v.len(), 1, "{v:?}");
    assert_eq!(v[0].rule, "non-null-requires-non-null");
    assert_eq!(v[0].step, Some(0));
}

#[test]
fn lowered_field_is_caught() {
    let p = parse_program(
        "class C extends Object { field f ref ctor (0, 1) { return } }
         class Main extends Object { static main (0, 1) { new C dup invokespecial C.<init> 0 pop return } }",
    )
    .unwrap();
    let t = run(&p, DEFAULT_BUDGET, 0);
    let mut s = analyze(&p, AnalysisConfig::OPT);
    let f = p.field_by_name("C", "f").unwrap();
    s.state.heap.set(f, AVal::NonNull);
    let v = check_correctness(&p, &t, &s);
    assert_eq!(v.len(), 1, "{v:?}");
    assert_eq!(v[0].rule, "non-null-requires-non-null");
}

#[test]
fn marking_an_unsafe_site_safe_is_caught() {
    let p = parse_program(PARAM_DEREF).unwrap();
    let t = run(&p, DEFAULT_BUDGET, seed_with_null_input(&p));
    let s = analyze(&p, AnalysisConfig::OPT);
    let mut r = classify_dereferences(&p, &s);
    assert!(check_dereference_safety(&p, &t, &r).is_empty());
    for site in &mut r.sites {
        site.safe = true;
    }
    let v = check_dereference_safety(&p, &t, &r);
    assert_eq!(v.len(), 1);
    assert_eq!(v[0].rule, "safe-dereference-faulted");
}

#[test]
fn trace_dump_lists_every_step() {
    let p = parse_program(BUILT).unwrap();
    let t = run(&p, DEFAULT_BUDGET, 0);
    let dump = t.dump(&p);
    assert!(dump.starts_with("Main.main/0:0 new C |  | "));
    assert!(dump.contains("constructed C"));
    assert!(dump.trim_end().ends_with("status: returned"));
}

#[test]
fn budget_stops_loops() {
    let p = parse_program("class M extends Object { static main (0, 1) { L: goto L } }").unwrap();
    let t = run(&p, 50, 0);
    assert_eq!(t.status, Status::BudgetExhausted);
    assert_eq!(t.steps.len(), 50);
}

#[test]
fn generated_programs_run_and_are_described() {
    let mut outcomes = [0usize; 4];
    for seed in 0..120 {
        let p = gen_program(seed, &GenParams::small());
        let t = run(&p, 20_000, seed);
        outcomes[match t.status {
            Status::Returned => 0,
            Status::Omega(_) => 1,
            Status::BudgetExhausted => 2,
            Status::Stuck(..) => 3,
        }] += 1;
        for config in [AnalysisConfig::BASIC, AnalysisConfig::OPT] {
            let s = analyze(&p, config);
            let v = check_correctness(&p, &t, &s);
            assert!(
                v.is_empty(),
                "seed {seed} {}: {}\n{}",
                config.name(),
                v[0],
                gen_program_text(seed, &GenParams::small())
            );
            let r = classify_dereferences(&p, &s);
            assert!(
                check_dereference_safety(&p, &t, &r).is_empty(),
                "seed {seed}"
            );
        }
    }
    assert!(outcomes[0] > 0 && outcomes[1] > 0, "{outcomes:?}");
    assert_eq!(outcomes[3], 0, "{outcomes:?}");
}

#[test]
fn generator_emits_constructor_escapes() {
    let found = (0..100).any(|seed| {
        let p = gen_program(seed, &GenParams::small());
        let found = p.method_ids().any(|m| {
            let d = p.method(m);
            d.is_ctor()
                && d.code.windows(3).any(|w| {
                    matches!(
                        w,
                        [
                            Instruction::Load(0),
                            Instruction::Load(0),
                            Instruction::InvokeVirtual(_)
                        ]
                    )
                })
        });
        found
    });
    assert!(found);
}

#[test]
fn fault_injection_is_detected() {
    let configs = [AnalysisConfig::BASIC, AnalysisConfig::OPT];
    let p = gen_program(0, &GenParams::small());
    let clean = fuzz_program(&p, &configs, 10, DEFAULT_BUDGET, None);
    assert_eq!(clean.violations, 0);
    assert_eq!(clean.runs, 20);
    let lowered = fuzz_program(&p, &configs, 10, DEFAULT_BUDGET, Some(Fault::LowerHeap));
    assert!(lowered.violations > 0);
    assert!(lowered.failures[0].violation.rule.starts_with("non-null"));
    let p = parse_program(PARAM_DEREF).unwrap();
    let marked = fuzz_program(&p, &configs, 10, DEFAULT_BUDGET, Some(Fault::MarkSafe));
    assert!(marked
        .failures
        .iter()
        .any(|f| f.violation.rule == "safe-dereference-faulted"));
}
