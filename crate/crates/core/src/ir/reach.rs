use std::collections::BTreeSet;

use super::{Hierarchy, Instruction, MethodId, Program};

/// Methods reachable from the entry under class-hierarchy-analysis dispatch.
/// `new C` pulls in C's constructor chain; `invokevirtual C.m` pulls in the
/// implementation seen by every subclass of C.
pub fn reachable_methods(program: &Program, hierarchy: &Hierarchy) -> BTreeSet<MethodId> {
    let mut seen = BTreeSet::new();
    let mut work = vec![program.entry];
    while let Some(m) = work.pop() {
        if !seen.insert(m) {
            continue;
        }
        let decl = program.method(m);
        if decl.is_ctor() {
            if let Some(sup) = hierarchy.parent(decl.class) {
                work.extend(hierarchy.ctor(sup));
            }
        }
        for instr in &decl.code {
            match *instr {
                Instruction::New(c) => work.extend(hierarchy.ctor_chain(c)),
                Instruction::InvokeSpecial(r) | Instruction::InvokeStatic(r) => work.push(r.target),
                Instruction::InvokeVirtual(r) => {
                    for &sub in hierarchy.subclasses(r.class) {
                        work.extend(program.dispatch(sub, r.target));
                    }
                }
                _ => {}
            }
        }
    }
    seen
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_program;

    const SRC: &str = "
        class A extends Object { ctor (0, 1) { return } method m (0, 1) { return } method u (0, 1) { return } }
        class B extends A { ctor (0, 1) { load 0 invokespecial A.<init> 0 return } method m (0, 1) { return } }
        class Main extends Object {
          static main (0, 2) {
            new B dup invokespecial B.<init> 0 store 0
            load 0 invokevirtual A.m 0
            return
          }
          static dead (0, 1) { return }
        }";

    #[test]
    fn cha_dispatch_and_dead_methods() {
        let p = parse_program(SRC).unwrap();
        let r = reachable_methods(&p, p.hierarchy());
        let names: BTreeSet<String> = r.iter().map(|&m| p.method_name(m)).collect();
        let expected: BTreeSet<String> = [
            "Main.main/0",
            "A.m/0",
            "B.m/0",
            "A.<init>/0",
            "B.<init>/0",
            "Object.<init>/0",
        ]
        .into_iter()
        .map(String::from)
        .collect();
        assert_eq!(names, expected);
    }

    #[test]
    fn entry_only() {
        let p = parse_program(
            "class A extends Object { static main (0, 1) { return } static u (0, 1) { return } }",
        )
        .unwrap();
        let r = reachable_methods(&p, p.hierarchy());
        assert_eq!(r.into_iter().collect::<Vec<_>>(), vec![p.entry]);
    }
}
