use std::collections::VecDeque;

use super::{Instruction, MethodDecl};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EdgeKind {
    Normal,
    /// Fallthrough out of a dereferencing instruction: taking it implies the
    /// dereferenced value was non-null.
    DerefGuarded,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Edge {
    pub target: usize,
    pub kind: EdgeKind,
}

/// Successor edges per pc of one method.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cfg {
    succs: Vec<Vec<Edge>>,
    preds: Vec<Vec<usize>>,
}

impl Cfg {
    pub fn successors(&self, pc: usize) -> &[Edge] {
        &self.succs[pc]
    }

    pub fn predecessors(&self, pc: usize) -> &[usize] {
        &self.preds[pc]
    }

    pub fn len(&self) -> usize {
        self.succs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.succs.is_empty()
    }

    /// pcs reachable from pc 0.
    pub fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut stack = vec![0usize];
        while let Some(pc) = stack.pop() {
            if pc >= seen.len() || seen[pc] {
                continue;
            }
            seen[pc] = true;
            stack.extend(self.succs[pc].iter().map(|e| e.target));
        }
        seen
    }
}

fn is_deref(instr: &Instruction) -> bool {
    use Instruction::*;
    matches!(
        instr,
        GetField(_)
            | PutField(_)
            | InvokeVirtual(_)
            | InvokeSpecial(_)
            | AaLoad
            | AaStore
            | ArrayLength
    )
}

pub fn build_cfg(method: &MethodDecl) -> Cfg {
    let n = method.code.len();
    let mut succs = Vec::with_capacity(n);
    for (pc, instr) in method.code.iter().enumerate() {
        let next = pc + 1;
        let mut edges = Vec::with_capacity(2);
        match *instr {
            Instruction::Goto(t) => edges.push(Edge {
                target: t,
                kind: EdgeKind::Normal,
            }),
            Instruction::IfNull(t)
            | Instruction::IfNonNull(t)
            | Instruction::IfEq(t)
            | Instruction::IfNe(t) => {
                edges.push(Edge {
                    target: t,
                    kind: EdgeKind::Normal,
                });
                if next < n && next != t {
                    edges.push(Edge {
                        target: next,
                        kind: EdgeKind::Normal,
                    });
                }
            }
            Instruction::Return | Instruction::AReturn => {}
            ref i => {
                if next < n {
                    let kind = if is_deref(i) {
                        EdgeKind::DerefGuarded
                    } else {
                        EdgeKind::Normal
                    };
                    edges.push(Edge { target: next, kind });
                }
            }
        }
        succs.push(edges);
    }
    let mut preds = vec![Vec::new(); n];
    for (pc, edges) in succs.iter().enumerate() {
        for e in edges {
            preds[e.target].push(pc);
        }
    }
    Cfg { succs, preds }
}

/// Generic forward dataflow to a fixpoint over one method.
///
/// `transfer(pc, state)` yields the state flowing to each successor pc; the
/// result holds `None` for pcs never reached. `merge` must be monotone and the
/// lattice of finite height.
pub fn forward_dataflow<S, T, M>(
    cfg: &Cfg,
    entry: S,
    mut transfer: T,
    mut merge: M,
) -> Vec<Option<S>>
where
    S: Clone + PartialEq,
    T: FnMut(usize, &S) -> Vec<(usize, S)>,
    M: FnMut(&S, &S) -> S,
{
    let n = cfg.len();
    let mut states: Vec<Option<S>> = vec![None; n];
    if n == 0 {
        return states;
    }
    states[0] = Some(entry);
    let mut queue = VecDeque::from([0usize]);
    let mut queued = vec![false; n];
    queued[0] = true;
    while let Some(pc) = queue.pop_front() {
        queued[pc] = false;
        let Some(state) = states[pc].clone() else {
            continue;
        };
        for (succ, out) in transfer(pc, &state) {
            let new = match &states[succ] {
                None => out,
                Some(old) => merge(old, &out),
            };
            if states[succ].as_ref() != Some(&new) {
                states[succ] = Some(new);
                if !queued[succ] {
                    queued[succ] = true;
                    queue.push_back(succ);
                }
            }
        }
    }
    states
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_program;

    fn main_cfg(body: &str) -> Cfg {
        let src = format!(
            "class C extends Object {{ field f ref ctor (0, 1) {{ return }} static main (1, 2) {{ {body} }} }}"
        );
        let p = parse_program(&src).unwrap();
        build_cfg(p.method(p.entry))
    }

    #[test]
    fn goto_has_single_normal_successor() {
        let cfg = main_cfg("goto L1 nop L1: return");
        assert_eq!(
            cfg.successors(0),
            &[Edge {
                target: 2,
                kind: EdgeKind::Normal
            }]
        );
    }

    #[test]
    fn getfield_fallthrough_is_deref_guarded() {
        let cfg = main_cfg("load 0 getfield C.f pop return");
        assert_eq!(
            cfg.successors(1),
            &[Edge {
                target: 2,
                kind: EdgeKind::DerefGuarded
            }]
        );
    }

    #[test]
    fn ifnull_has_both_normal_successors() {
        let cfg = main_cfg("load 0 ifnull L1 nop L1: return");
        let targets: Vec<_> = cfg
            .successors(1)
            .iter()
            .map(|e| (e.target, e.kind))
            .collect();
        assert_eq!(targets, vec![(3, EdgeKind::Normal), (2, EdgeKind::Normal)]);
        assert!(cfg.successors(3).is_empty());
    }
}
