//! Must-alias analysis between operand-stack slots and local variables.
//!
//! Each slot carries the set of locals it provably equals and, for the
//! result of a `new` not yet passed to its constructor, the pc of that `new`.

use std::collections::BTreeSet;

use crate::ir::{
    build_cfg, forward_dataflow, Cfg, Instruction, MethodDecl, MethodId, Program, ProgramPoint,
};

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct SlotAlias {
    pub locals: BTreeSet<u16>,
    /// pc of the `new` that produced this still-unconstructed object.
    pub fresh: Option<usize>,
}

impl SlotAlias {
    fn unknown() -> Self {
        SlotAlias::default()
    }

    fn merge(&self, other: &SlotAlias) -> SlotAlias {
        SlotAlias {
            locals: self.locals.intersection(&other.locals).copied().collect(),
            fresh: if self.fresh == other.fresh {
                self.fresh
            } else {
                None
            },
        }
    }

    /// True when both slots provably hold the same value.
    pub fn must_equal(&self, other: &SlotAlias) -> bool {
        (self.fresh.is_some() && self.fresh == other.fresh)
            || !self.locals.is_disjoint(&other.locals)
    }
}

/// Stack of slot aliases at one point, bottom first.
pub type AliasStack = Vec<SlotAlias>;

/// Aliases for every point of one method; `None` marks unreachable points.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MethodAliases {
    points: Vec<Option<AliasStack>>,
}

impl MethodAliases {
    pub fn at(&self, pc: usize) -> Option<&AliasStack> {
        self.points.get(pc)?.as_ref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SlotQuery<'a> {
    Unreachable,
    Known(&'a BTreeSet<u16>),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("slot depth {depth} out of range at {point:?} (stack height {height})")]
pub struct AliasQueryError {
    pub point: ProgramPoint,
    pub depth: usize,
    pub height: usize,
}

/// Alias results for the analyzed methods of a program.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AliasState {
    methods: Vec<Option<MethodAliases>>,
}

impl AliasState {
    pub fn analyze(program: &Program, methods: impl IntoIterator<Item = MethodId>) -> AliasState {
        let mut out = vec![None; program.methods.len()];
        for m in methods {
            let decl = program.method(m);
            out[m.index()] = Some(analyze_aliases(program, decl, &build_cfg(decl)));
        }
        AliasState { methods: out }
    }

    pub fn method(&self, m: MethodId) -> Option<&MethodAliases> {
        self.methods.get(m.index())?.as_ref()
    }

    pub fn at(&self, point: ProgramPoint) -> Option<&AliasStack> {
        self.method(point.method)?.at(point.pc)
    }

    /// Locals the slot at `depth` (0 = top) must equal. An empty set means
    /// nothing is known.
    pub fn slot_aliases(
        &self,
        point: ProgramPoint,
        depth: usize,
    ) -> Result<SlotQuery<'_>, AliasQueryError> {
        let Some(stack) = self.at(point) else {
            return Ok(SlotQuery::Unreachable);
        };
        if depth >= stack.len() {
            return Err(AliasQueryError {
                point,
                depth,
                height: stack.len(),
            });
        }
        Ok(SlotQuery::Known(&stack[stack.len() - 1 - depth].locals))
    }

    /// One line per reachable point with a non-empty stack, slots bottom
    /// first, e.g. `C.m/1@4 [{1} | new@0]`.
    pub fn dump(&self, program: &Program) -> Vec<String> {
        let mut out = Vec::new();
        for m in program.method_ids() {
            let Some(ma) = self.method(m) else { continue };
            for pc in 0..ma.len() {
                let Some(stack) = ma.at(pc).filter(|s| !s.is_empty()) else {
                    continue;
                };
                let slots: Vec<String> = stack
                    .iter()
                    .map(|a| {
                        let locals: Vec<String> = a.locals.iter().map(u16::to_string).collect();
                        match a.fresh {
                            Some(n) => format!("{{{}}} new@{n}", locals.join(",")),
                            None => format!("{{{}}}", locals.join(",")),
                        }
                    })
                    .collect();
                out.push(format!(
                    "{} [{}]",
                    program.point_name(ProgramPoint::new(m, pc)),
                    slots.join(" | ")
                ));
            }
        }
        out
    }
}

fn pop_n(stack: &mut AliasStack, n: usize) -> Vec<SlotAlias> {
    let at = stack.len().saturating_sub(n);
    stack.split_off(at)
}

/// Forward must-alias dataflow over one method. Merge is pointwise
/// intersection, so sets only shrink.
pub fn analyze_aliases(program: &Program, method: &MethodDecl, cfg: &Cfg) -> MethodAliases {
    let transfer = |pc: usize, state: &AliasStack| {
        let mut s = state.clone();
        transfer_alias(program, &method.code[pc], pc, &mut s);
        cfg.successors(pc)
            .iter()
            .map(|e| (e.target, s.clone()))
            .collect()
    };
    let merge = |a: &AliasStack, b: &AliasStack| a.iter().zip(b).map(|(x, y)| x.merge(y)).collect();
    MethodAliases {
        points: forward_dataflow(cfg, Vec::new(), transfer, merge),
    }
}

fn transfer_alias(program: &Program, instr: &Instruction, pc: usize, s: &mut AliasStack) {
    use Instruction::*;
    match *instr {
        Load(r) => s.push(SlotAlias {
            locals: BTreeSet::from([r]),
            fresh: None,
        }),
        Store(r) => {
            s.pop();
            for slot in s.iter_mut() {
                slot.locals.remove(&r);
            }
        }
        Dup => {
            let top = s.last().cloned().unwrap_or_default();
            s.push(top);
        }
        New(_) => {
            for slot in s.iter_mut() {
                if slot.fresh == Some(pc) {
                    slot.fresh = None;
                }
            }
            s.push(SlotAlias {
                locals: BTreeSet::new(),
                fresh: Some(pc),
            });
        }
        InvokeSpecial(r) => {
            let target = program.method(r.target);
            let popped = pop_n(s, target.params.len() + 1);
            if let Some(marker) = popped.first().and_then(|recv| recv.fresh) {
                for slot in s.iter_mut() {
                    if slot.fresh == Some(marker) {
                        slot.fresh = None;
                    }
                }
            }
        }
        _ => {
            let (pops, pushes) = stack_effect(program, instr);
            pop_n(s, pops);
            s.extend(std::iter::repeat_with(SlotAlias::unknown).take(pushes));
        }
    }
}

/// (popped, pushed) slot counts.
pub(crate) fn stack_effect(program: &Program, instr: &Instruction) -> (usize, usize) {
    use Instruction::*;
    match *instr {
        Nop | Goto(_) | Return => (0, 0),
        AconstNull | Iconst(_) | Load(_) | New(_) => (0, 1),
        Store(_) | Pop | IfNull(_) | IfNonNull(_) | IfEq(_) | IfNe(_) | AReturn => (1, 0),
        Dup => (1, 2),
        InvokeSpecial(r) | InvokeVirtual(r) | InvokeStatic(r) => {
            let t = program.method(r.target);
            let recv = usize::from(!t.is_static());
            (t.params.len() + recv, usize::from(t.returns.is_some()))
        }
        GetField(_) | InstanceOf(_) | NewArray | ArrayLength => (1, 1),
        PutField(_) => (2, 0),
        AaLoad => (2, 1),
        AaStore => (3, 0),
    }
}
