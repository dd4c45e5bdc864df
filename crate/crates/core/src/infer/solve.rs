use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};
use std::fmt;

use serde_json::{json, Value};

use crate::alias::AliasState;
use crate::condition::CondFacts;
use crate::ir::{MethodId, Program};

use super::state::AbstractState;
use super::system::{ConstraintSystem, Update};
use super::AnalysisConfig;

/// A fixpoint together with the auxiliary facts it was computed from.
#[derive(Clone, Debug)]
pub struct Solution {
    pub state: AbstractState,
    pub config: AnalysisConfig,
    pub reachable: BTreeSet<MethodId>,
    /// Constraint evaluations performed by the solver.
    pub iterations: u64,
    pub aliases: AliasState,
    pub conds: CondFacts,
}

/// A constraint whose required lower bound is not met.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub constraint: String,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.constraint, self.detail)
    }
}

impl Solution {
    pub fn system<'a>(&'a self, program: &'a Program) -> ConstraintSystem<'a> {
        ConstraintSystem::new(
            program,
            self.config,
            &self.reachable,
            &self.aliases,
            &self.conds,
        )
    }

    /// Evaluates every constraint against `state` (this solution's own state
    /// or a modified copy) and lists the unmet ones.
    pub fn check_state(&self, program: &Program, state: &AbstractState) -> Vec<Violation> {
        let system = self.system(program);
        let mut out = Vec::new();
        for id in 0..system.len() {
            for u in system.eval(id, state) {
                if !system.holds(state, &u) {
                    out.push(Violation {
                        constraint: system.describe(id),
                        detail: describe_update(program, &u, state),
                    });
                }
            }
        }
        out
    }

    /// Deterministic JSON. `iterations` is reported separately so that two
    /// solvers reaching the same fixpoint serialize identically.
    pub fn to_json(&self, program: &Program) -> Value {
        json!({
            "config": self.config,
            "reachable": self.reachable.iter().map(|&m| program.method_name(m)).collect::<Vec<_>>(),
            "state": self.state.to_json(program),
        })
    }
}

/// Re-checks a solution against all its constraints.
pub fn check_solution(program: &Program, solution: &Solution) -> Vec<Violation> {
    solution.check_state(program, &solution.state)
}

/// Least fixpoint by a worklist that always takes the lowest pending
/// constraint id, so a method body is swept in code order; each constraint
/// is re-queued when a component it reads grows.
pub fn solve(
    program: &Program,
    config: AnalysisConfig,
    reachable: BTreeSet<MethodId>,
    aliases: AliasState,
    conds: CondFacts,
) -> Solution {
    let (state, iterations) = {
        let system = ConstraintSystem::new(program, config, &reachable, &aliases, &conds);
        let mut state = system.initial_state();
        let mut queue: BinaryHeap<Reverse<usize>> = (0..system.len()).map(Reverse).collect();
        let mut queued = vec![true; system.len()];
        let mut iterations = 0u64;
        while let Some(Reverse(id)) = queue.pop() {
            queued[id] = false;
            iterations += 1;
            for u in system.eval(id, &state) {
                if let Some(key) = system.apply(&mut state, u) {
                    for &d in system.dependents(key) {
                        if !queued[d] {
                            queued[d] = true;
                            queue.push(Reverse(d));
                        }
                    }
                }
            }
        }
        (state, iterations)
    };
    Solution {
        state,
        config,
        reachable,
        iterations,
        aliases,
        conds,
    }
}

fn describe_update(program: &Program, u: &Update, state: &AbstractState) -> String {
    let a = |v: crate::domain::AVal| v.annotation(program);
    let m = |id: MethodId| program.method_name(id);
    match u {
        Update::Frame(p, _) => match state.frame(*p) {
            None => format!("{} must be reachable", program.point_name(*p)),
            Some(_) => format!(
                "frame at {} below the transferred frame",
                program.point_name(*p)
            ),
        },
        Update::Heap(f, v) => format!(
            "field {} needs {} but is {}",
            program.field_name(*f),
            a(*v),
            a(state.heap.get(*f))
        ),
        Update::Receiver(id, v) => format!(
            "receiver of {} needs {} but is {}",
            m(*id),
            a(*v),
            a(state.sig(*id).receiver)
        ),
        Update::Arg(id, i, v) => format!(
            "argument {i} of {} needs {} but is {}",
            m(*id),
            a(*v),
            a(state.sig(*id).args[*i])
        ),
        Update::Ret(id, v) => format!(
            "result of {} needs {} but is {}",
            m(*id),
            a(*v),
            a(state.sig(*id).ret)
        ),
        Update::ThisPre(id, _) => format!("entry field state of {} too small", m(*id)),
        Update::Post(id, _) => format!("exit field state of {} too small", m(*id)),
    }
}
