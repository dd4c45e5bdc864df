//! The `instanceof` analysis: for each integer stack slot, an
//! under-approximation of the locals that are non-null whenever the slot
//! holds 1. Only the facts on the tested slot at `ifeq`/`ifne` points are kept.

use std::collections::{BTreeMap, BTreeSet};

use crate::alias::{stack_effect, AliasState};
use crate::ir::{build_cfg, forward_dataflow, Instruction, MethodId, Program, ProgramPoint};

type FactStack = Vec<BTreeSet<u16>>;

/// Which edge out of an integer test is being followed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TestEdge {
    /// The branch target.
    Taken,
    /// pc + 1.
    Fallthrough,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0:?} is not an ifeq/ifne point")]
pub struct NotAnIntTest(pub ProgramPoint);

/// Facts for the integer consumed at each reachable `ifeq`/`ifne`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CondFacts {
    at_tests: BTreeMap<ProgramPoint, BTreeSet<u16>>,
}

impl CondFacts {
    pub fn analyze(
        program: &Program,
        aliases: &AliasState,
        methods: impl IntoIterator<Item = MethodId>,
    ) -> CondFacts {
        let mut at_tests = BTreeMap::new();
        for m in methods {
            analyze_conditions(program, m, aliases, &mut at_tests);
        }
        CondFacts { at_tests }
    }

    /// Facts on the tested slot at an `ifeq`/`ifne` point, if reachable.
    pub fn at(&self, point: ProgramPoint) -> Option<&BTreeSet<u16>> {
        self.at_tests.get(&point)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ProgramPoint, &BTreeSet<u16>)> {
        self.at_tests.iter()
    }

    /// Locals that may be refined to non-null along `edge` out of the test at
    /// `point`: the slot's facts on the edge where it is known to be 1.
    pub fn branch_refinement(
        &self,
        program: &Program,
        point: ProgramPoint,
        edge: TestEdge,
    ) -> Result<BTreeSet<u16>, NotAnIntTest> {
        let instr = program
            .method(point.method)
            .code
            .get(point.pc)
            .ok_or(NotAnIntTest(point))?;
        let one_edge = match instr {
            Instruction::IfNe(_) => TestEdge::Taken,
            Instruction::IfEq(_) => TestEdge::Fallthrough,
            _ => return Err(NotAnIntTest(point)),
        };
        if edge != one_edge {
            return Ok(BTreeSet::new());
        }
        Ok(self.at(point).cloned().unwrap_or_default())
    }
}

fn analyze_conditions(
    program: &Program,
    m: MethodId,
    aliases: &AliasState,
    out: &mut BTreeMap<ProgramPoint, BTreeSet<u16>>,
) {
    let decl = program.method(m);
    let cfg = build_cfg(decl);
    let method_aliases = aliases.method(m);
    let transfer = |pc: usize, state: &FactStack| {
        let mut s = state.clone();
        match decl.code[pc] {
            Instruction::InstanceOf(_) => {
                s.pop();
                let tested = method_aliases
                    .and_then(|a| a.at(pc))
                    .and_then(|stack| stack.last())
                    .map(|slot| slot.locals.clone())
                    .unwrap_or_default();
                s.push(tested);
            }
            Instruction::Store(r) => {
                s.pop();
                for facts in s.iter_mut() {
                    facts.remove(&r);
                }
            }
            Instruction::Dup => {
                let top = s.last().cloned().unwrap_or_default();
                s.push(top);
            }
            ref instr => {
                let (pops, pushes) = stack_effect(program, instr);
                s.truncate(s.len().saturating_sub(pops));
                s.extend(std::iter::repeat_with(BTreeSet::new).take(pushes));
            }
        }
        cfg.successors(pc)
            .iter()
            .map(|e| (e.target, s.clone()))
            .collect()
    };
    let merge = |a: &FactStack, b: &FactStack| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.intersection(y).copied().collect())
            .collect()
    };
    let states = forward_dataflow(&cfg, Vec::new(), transfer, merge);
    for (pc, state) in states.into_iter().enumerate() {
        let Some(state) = state else { continue };
        if matches!(decl.code[pc], Instruction::IfEq(_) | Instruction::IfNe(_)) {
            out.insert(
                ProgramPoint::new(m, pc),
                state.last().cloned().unwrap_or_default(),
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_program;

    fn facts(body: &str) -> (Program, CondFacts, MethodId) {
        let src = format!(
            "class C extends Object {{ field f ref
               static t (1, 3) {{ {body} }}
               static main (0, 1) {{ return }} }}"
        );
        let p = parse_program(&src).unwrap();
        let m = p.method_by_name("C", "t", 1).unwrap();
        let aliases = AliasState::analyze(&p, [m]);
        let facts = CondFacts::analyze(&p, &aliases, [m]);
        (p, facts, m)
    }

    #[test]
    fn instanceof_records_tested_local() {
        let (p, f, m) = facts("load 0 instanceof C ifne L1 return L1: return");
        let pt = ProgramPoint::new(m, 2);
        assert_eq!(f.at(pt), Some(&BTreeSet::from([0])));
        assert_eq!(
            f.branch_refinement(&p, pt, TestEdge::Taken).unwrap(),
            BTreeSet::from([0])
        );
        assert!(f
            .branch_refinement(&p, pt, TestEdge::Fallthrough)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn ifeq_refines_on_fallthrough() {
        let (p, f, m) = facts("load 0 instanceof C ifeq L1 return L1: return");
        let pt = ProgramPoint::new(m, 2);
        assert_eq!(
            f.branch_refinement(&p, pt, TestEdge::Fallthrough).unwrap(),
            BTreeSet::from([0])
        );
        assert!(f
            .branch_refinement(&p, pt, TestEdge::Taken)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn constant_carries_nothing() {
        let (p, f, m) = facts("iconst 1 ifne L1 return L1: return");
        let pt = ProgramPoint::new(m, 1);
        assert!(f.at(pt).unwrap().is_empty());
        assert!(f
            .branch_refinement(&p, pt, TestEdge::Taken)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn separated_test_survives_unrelated_instructions() {
        let (_, f, m) =
            facts("load 0 instanceof C aconst_null store 1 nop ifne L1 return L1: return");
        assert_eq!(f.at(ProgramPoint::new(m, 5)), Some(&BTreeSet::from([0])));
    }

    #[test]
    fn reassignment_kills_fact() {
        // load 0; instanceof C; aconst_null; store 0; ifne L -- local 0 is
        // null on the taken edge even though the slot is 1 when it started
        // non-null, so the fact must be gone.
        let (_, f, m) = facts("load 0 instanceof C aconst_null store 0 ifne L1 return L1: return");
        assert!(f.at(ProgramPoint::new(m, 4)).unwrap().is_empty());
    }

    #[test]
    fn wrong_instruction_kind() {
        let (p, f, m) = facts("load 0 instanceof C ifne L1 return L1: return");
        assert!(f
            .branch_refinement(&p, ProgramPoint::new(m, 0), TestEdge::Taken)
            .is_err());
    }
}
