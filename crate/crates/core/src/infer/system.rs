//! Constraints over the abstract state. Each constraint reads a few state
//! components and produces lower bounds (`Update`s) that the solver joins in.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use crate::alias::{AliasState, SlotAlias};
use crate::condition::{CondFacts, TestEdge};
use crate::domain::{AVal, TVal};
use crate::ir::{
    ClassId, FieldId, Instruction, MethodDecl, MethodId, MethodKind, Program, ProgramPoint,
    ValueKind,
};

use super::state::{AbstractState, Frame, Heap, MethodSig};
use super::AnalysisConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Constraint {
    /// Fixed lower bounds: constructor and override-related `this`/`post`
    /// tops, entry parameters.
    Seeds(MethodId),
    /// Signature to the frame at pc 0.
    Entry(MethodId),
    /// `over` overrides `base`: inputs flow down, the result flows up.
    Override {
        base: MethodId,
        over: MethodId,
    },
    Instr(ProgramPoint),
}

/// State components a constraint may read.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Key {
    Frame(ProgramPoint),
    Heap(FieldId),
    /// this_pre, receiver, args.
    SigIn(MethodId),
    /// post, ret.
    SigOut(MethodId),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Update {
    Frame(ProgramPoint, Frame),
    Heap(FieldId, AVal),
    Receiver(MethodId, AVal),
    Arg(MethodId, usize, AVal),
    ThisPre(MethodId, TVal),
    Post(MethodId, TVal),
    Ret(MethodId, AVal),
}

impl Update {
    pub fn key(&self) -> Key {
        match self {
            Update::Frame(p, _) => Key::Frame(*p),
            Update::Heap(f, _) => Key::Heap(*f),
            Update::Receiver(m, _) | Update::Arg(m, _, _) | Update::ThisPre(m, _) => Key::SigIn(*m),
            Update::Post(m, _) | Update::Ret(m, _) => Key::SigOut(*m),
        }
    }
}

/// Everything the transfer functions consult besides the state itself.
pub struct ConstraintSystem<'a> {
    pub program: &'a Program,
    pub config: AnalysisConfig,
    pub reachable: &'a BTreeSet<MethodId>,
    aliases: &'a AliasState,
    conds: &'a CondFacts,
    constraints: Vec<Constraint>,
    reads: Vec<Vec<Key>>,
    deps: HashMap<Key, Vec<usize>>,
}

impl<'a> ConstraintSystem<'a> {
    pub fn new(
        program: &'a Program,
        config: AnalysisConfig,
        reachable: &'a BTreeSet<MethodId>,
        aliases: &'a AliasState,
        conds: &'a CondFacts,
    ) -> Self {
        let h = program.hierarchy();
        let mut constraints: Vec<Constraint> =
            reachable.iter().map(|&m| Constraint::Seeds(m)).collect();
        for &base in reachable {
            for &over in h.overriders(base) {
                if reachable.contains(&over) {
                    constraints.push(Constraint::Override { base, over });
                }
            }
        }
        constraints.extend(reachable.iter().map(|&m| Constraint::Entry(m)));
        for &m in reachable {
            let len = program.method(m).code.len();
            constraints.extend((0..len).map(|pc| Constraint::Instr(ProgramPoint::new(m, pc))));
        }
        let reads: Vec<Vec<Key>> = constraints.iter().map(|c| reads_of(program, c)).collect();
        let mut deps: HashMap<Key, Vec<usize>> = HashMap::new();
        for (id, keys) in reads.iter().enumerate() {
            for k in keys {
                deps.entry(*k).or_default().push(id);
            }
        }
        ConstraintSystem {
            program,
            config,
            reachable,
            aliases,
            conds,
            constraints,
            reads,
            deps,
        }
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn constraint(&self, id: usize) -> Constraint {
        self.constraints[id]
    }

    pub fn reads(&self, id: usize) -> &[Key] {
        &self.reads[id]
    }

    /// Constraints that read `key`.
    pub fn dependents(&self, key: Key) -> &[usize] {
        self.deps.get(&key).map_or(&[], Vec::as_slice)
    }

    /// Bottom signatures for reachable methods, no field facts, no frames.
    pub fn initial_state(&self) -> AbstractState {
        let sigs = self
            .reachable
            .iter()
            .map(|&m| (m, MethodSig::bottom(self.program.method(m).params.len())))
            .collect();
        let frames = self
            .program
            .method_ids()
            .map(|m| {
                if self.reachable.contains(&m) {
                    vec![None; self.program.method(m).code.len()]
                } else {
                    Vec::new()
                }
            })
            .collect();
        AbstractState {
            sigs,
            heap: Heap::default(),
            frames,
        }
    }

    /// Joins `u` into the state. Returns the key that changed, if any.
    pub fn apply(&self, state: &mut AbstractState, u: Update) -> Option<Key> {
        let h = self.program.hierarchy();
        let key = u.key();
        let changed = match u {
            Update::Frame(p, f) => match &mut state.frames[p.method.index()][p.pc] {
                slot @ None => {
                    *slot = Some(f);
                    true
                }
                Some(old) if f.leq(old, h) => false,
                Some(old) => {
                    let joined = old.join(&f, h);
                    let changed = joined != *old;
                    *old = joined;
                    changed
                }
            },
            Update::Heap(f, v) => state.heap.raise(f, v, h),
            Update::Receiver(m, v) => raise(&mut sig_mut(state, m).receiver, v, self.program),
            Update::Arg(m, i, v) => raise(&mut sig_mut(state, m).args[i], v, self.program),
            Update::Ret(m, v) => raise(&mut sig_mut(state, m).ret, v, self.program),
            Update::ThisPre(m, t) => raise_t(&mut sig_mut(state, m).this_pre, &t),
            Update::Post(m, t) => raise_t(&mut sig_mut(state, m).post, &t),
        };
        changed.then_some(key)
    }

    /// True when `state` already satisfies the lower bound `u`.
    pub fn holds(&self, state: &AbstractState, u: &Update) -> bool {
        let h = self.program.hierarchy();
        match u {
            Update::Frame(p, f) => state.frame(*p).is_some_and(|cur| f.leq(cur, h)),
            Update::Heap(fid, v) => v.leq(state.heap.get(*fid), h),
            Update::Receiver(m, v) => v.leq(state.sig(*m).receiver, h),
            Update::Arg(m, i, v) => v.leq(state.sig(*m).args[*i], h),
            Update::Ret(m, v) => v.leq(state.sig(*m).ret, h),
            Update::ThisPre(m, t) => t.leq(&state.sig(*m).this_pre),
            Update::Post(m, t) => t.leq(&state.sig(*m).post),
        }
    }

    /// Lower bounds required by constraint `id` under `state`.
    pub fn eval(&self, id: usize, state: &AbstractState) -> Vec<Update> {
        let mut out = Vec::new();
        match self.constraints[id] {
            Constraint::Seeds(m) => self.seeds(m, &mut out),
            Constraint::Entry(m) => out.push(Update::Frame(
                ProgramPoint::new(m, 0),
                self.entry_frame(m, state.sig(m)),
            )),
            Constraint::Override { base, over } => {
                let b = state.sig(base);
                out.push(Update::Receiver(over, b.receiver));
                out.extend(
                    b.args
                        .iter()
                        .enumerate()
                        .map(|(i, v)| Update::Arg(over, i, *v)),
                );
                out.push(Update::Ret(base, state.sig(over).ret));
            }
            Constraint::Instr(p) => {
                if let Some(frame) = state.frame(p) {
                    self.transfer(p, frame, state, &mut out);
                }
            }
        }
        out
    }

    pub fn describe(&self, id: usize) -> String {
        let p = self.program;
        match self.constraints[id] {
            Constraint::Seeds(m) => format!("seeds of {}", p.method_name(m)),
            Constraint::Entry(m) => format!("entry of {}", p.method_name(m)),
            Constraint::Override { base, over } => {
                format!("{} overrides {}", p.method_name(over), p.method_name(base))
            }
            Constraint::Instr(pt) => {
                let instr = &p.method(pt.method).code[pt.pc];
                format!("{} ({})", p.point_name(pt), p.format_instruction(instr))
            }
        }
    }

    fn seeds(&self, m: MethodId, out: &mut Vec<Update>) {
        let p = self.program;
        let h = p.hierarchy();
        let decl = p.method(m);
        let top = || TVal::top(p, decl.class);
        if decl.is_ctor() || !h.overridden_by(m).is_empty() {
            out.push(Update::ThisPre(m, top()));
        }
        if !decl.is_ctor() && !h.overriders(m).is_empty() {
            out.push(Update::Post(m, top()));
        }
        if m == p.entry {
            for (i, k) in decl.params.iter().enumerate() {
                if *k == ValueKind::Ref {
                    out.push(Update::Arg(m, i, AVal::Nullable));
                }
            }
        }
    }

    fn entry_frame(&self, m: MethodId, sig: &MethodSig) -> Frame {
        let decl = self.program.method(m);
        let mut f = Frame::default();
        match decl.kind {
            MethodKind::Static => {}
            MethodKind::Virtual => {
                f.set_local(0, sig.receiver);
                f.tval = sig.this_pre.clone();
            }
            MethodKind::Constructor => {
                let parent = self.program.hierarchy().parent(decl.class);
                let this = if parent == Some(ClassId::OBJECT) {
                    AVal::Raw(ClassId::OBJECT)
                } else {
                    AVal::RawMinus
                };
                f.set_local(0, this);
                f.tval = sig.this_pre.clone();
            }
        }
        for (i, v) in sig.args.iter().enumerate() {
            f.set_local(decl.param_local(i), *v);
        }
        f
    }

    fn transfer(
        &self,
        point: ProgramPoint,
        pre: &Frame,
        state: &AbstractState,
        out: &mut Vec<Update>,
    ) {
        use Instruction::*;
        let p = self.program;
        let h = p.hierarchy();
        let decl = p.method(point.method);
        let ctx = Ctx {
            decl,
            aliases: self.aliases.at(point).map_or(&[][..], Vec::as_slice),
        };
        let next = ProgramPoint::new(point.method, point.pc + 1);
        let at = |pc: usize| ProgramPoint::new(point.method, pc);
        let cfg = self.config;
        let mut post = pre.clone();
        match decl.code[point.pc] {
            Nop => {}
            AconstNull => post.push(if cfg.nullable_init {
                AVal::NullableInit
            } else {
                AVal::Nullable
            }),
            Iconst(_) => post.push(AVal::BOTTOM),
            InstanceOf(_) | NewArray => {
                post.pop(1);
                post.push(AVal::BOTTOM);
            }
            ArrayLength => {
                post.pop(1);
                if cfg.deref_edge_refinement {
                    ctx.refine(&mut post, 0, 1);
                }
                post.push(AVal::BOTTOM);
            }
            Load(r) => post.push(pre.local(r)),
            Store(r) => {
                post.pop(1);
                post.set_local(r, pre.slot(0));
            }
            Dup => post.push(pre.slot(0)),
            Pop => post.pop(1),
            New(_) => post.push(AVal::RawMinus),
            InvokeSpecial(r) => {
                let n = p.method(r.target).params.len();
                self.args_to(r.target, n, pre, out);
                let recv = ctx.alias(n);
                post.pop(n + 1);
                let parent = h.parent(decl.class);
                if decl.is_ctor() && recv.locals.contains(&0) && parent == Some(r.class) {
                    // super-constructor call on `this`
                    let raw = AVal::Raw(r.class);
                    post.set_local(0, raw);
                    post.map_stack(|d, v| {
                        if ctx.alias(d + n + 1).locals.contains(&0) {
                            raw
                        } else {
                            v
                        }
                    });
                } else {
                    for &l in &recv.locals {
                        post.set_local(l, AVal::NonNull);
                    }
                    post.map_stack(|d, v| {
                        let s = ctx.alias(d + n + 1);
                        let same_fresh = recv.fresh.is_some() && s.fresh == recv.fresh;
                        if same_fresh || !s.locals.is_disjoint(&recv.locals) {
                            AVal::NonNull
                        } else {
                            v
                        }
                    });
                }
            }
            InvokeVirtual(r) => {
                let target = p.method(r.target);
                let n = target.params.len();
                self.args_to(r.target, n, pre, out);
                let recv = pre.slot(n).nonnull_refine();
                out.push(Update::Receiver(r.target, recv));
                let this_call = ctx.is_this(n) && target.class == decl.class;
                let this_pre = match recv {
                    AVal::NonNull => TVal::bottom(),
                    AVal::Raw(a) if h.is_subclass(a, target.class) => TVal::bottom(),
                    _ if this_call => pre.tval.clone(),
                    _ => TVal::top(p, target.class),
                };
                out.push(Update::ThisPre(r.target, this_pre));
                post.pop(n + 1);
                let sig = state.sig(r.target);
                if this_call {
                    post.tval = pre.tval.meet(&sig.post);
                }
                if cfg.deref_edge_refinement {
                    ctx.refine(&mut post, n, n + 1);
                }
                if let Some(k) = target.returns {
                    post.push(if k == ValueKind::Ref {
                        sig.ret
                    } else {
                        AVal::BOTTOM
                    });
                }
            }
            InvokeStatic(r) => {
                let target = p.method(r.target);
                let n = target.params.len();
                self.args_to(r.target, n, pre, out);
                post.pop(n);
                if let Some(k) = target.returns {
                    let ret = state.sig(r.target).ret;
                    post.push(if k == ValueKind::Ref {
                        ret
                    } else {
                        AVal::BOTTOM
                    });
                }
            }
            GetField(fr) => {
                let f = p.field(fr.field);
                let v = if f.kind == ValueKind::Int {
                    AVal::BOTTOM
                } else {
                    let this_ctx = (ctx.is_this(0) && f.class == decl.class).then_some(&pre.tval);
                    field_read_abstraction(p, pre.slot(0), fr.field, &state.heap, this_ctx)
                };
                post.pop(1);
                if cfg.deref_edge_refinement {
                    ctx.refine(&mut post, 0, 1);
                }
                post.push(v);
            }
            PutField(fr) => {
                let f = p.field(fr.field);
                post.pop(2);
                if f.kind == ValueKind::Ref {
                    out.push(Update::Heap(fr.field, pre.slot(0)));
                    if ctx.is_this(1) && f.class == decl.class {
                        post.tval = post.tval.set_def(fr.field);
                    }
                }
                if cfg.deref_edge_refinement {
                    ctx.refine(&mut post, 1, 2);
                }
            }
            IfNull(t) | IfNonNull(t) => {
                post.pop(1);
                let mut nonnull = post.clone();
                if cfg.test_recovery {
                    ctx.refine(&mut nonnull, 0, 1);
                }
                let (null_pc, nonnull_pc) = match decl.code[point.pc] {
                    IfNull(_) => (t, point.pc + 1),
                    _ => (point.pc + 1, t),
                };
                out.push(Update::Frame(at(null_pc), post));
                out.push(Update::Frame(at(nonnull_pc), nonnull));
                return;
            }
            IfEq(t) | IfNe(t) => {
                post.pop(1);
                for (edge, pc) in [(TestEdge::Taken, t), (TestEdge::Fallthrough, point.pc + 1)] {
                    let mut f = post.clone();
                    if cfg.instanceof_recovery {
                        let locals = self
                            .conds
                            .branch_refinement(p, point, edge)
                            .expect("integer test point");
                        ctx.refine_locals(&mut f, &locals, 1);
                    }
                    out.push(Update::Frame(at(pc), f));
                }
                return;
            }
            Goto(t) => {
                out.push(Update::Frame(at(t), post));
                return;
            }
            AReturn => {
                out.push(Update::Ret(point.method, pre.slot(0)));
                if !decl.is_static() {
                    out.push(Update::Post(point.method, pre.tval.clone()));
                }
                return;
            }
            Return => {
                if !decl.is_static() {
                    out.push(Update::Post(point.method, pre.tval.clone()));
                }
                if decl.is_ctor() {
                    let injected = if cfg.nullable_init {
                        AVal::NullableInit
                    } else {
                        AVal::Nullable
                    };
                    out.extend(pre.tval.undef_fields().map(|f| Update::Heap(f, injected)));
                }
                return;
            }
            AaLoad => {
                post.pop(2);
                if cfg.deref_edge_refinement {
                    ctx.refine(&mut post, 1, 2);
                }
                post.push(AVal::Nullable);
            }
            AaStore => {
                post.pop(3);
                if cfg.deref_edge_refinement {
                    ctx.refine(&mut post, 2, 3);
                }
            }
        }
        out.push(Update::Frame(next, post));
    }

    fn args_to(&self, target: MethodId, n: usize, pre: &Frame, out: &mut Vec<Update>) {
        for i in 0..n {
            out.push(Update::Arg(target, i, pre.slot(n - 1 - i)));
        }
    }
}

/// Abstract value of reading `field` through a receiver valued `receiver`.
/// `this_ctx` is the current `TVal` when the receiver must be `this` and the
/// field belongs to the current class.
pub fn field_read_abstraction(
    program: &Program,
    receiver: AVal,
    field: FieldId,
    heap: &Heap,
    this_ctx: Option<&TVal>,
) -> AVal {
    let declaring = program.field(field).class;
    let trusted = match receiver {
        AVal::NonNull | AVal::NullableInit => true,
        AVal::Raw(a) => program.hierarchy().is_subclass(a, declaring),
        AVal::RawMinus | AVal::Nullable => false,
    };
    if trusted || this_ctx.is_some_and(|t| t.is_def(field)) {
        heap.get(field)
    } else {
        AVal::Nullable
    }
}

struct Ctx<'a> {
    decl: &'a MethodDecl,
    /// Pre-state alias stack, bottom first.
    aliases: &'a [SlotAlias],
}

impl Ctx<'_> {
    fn alias(&self, depth: usize) -> &SlotAlias {
        static EMPTY: SlotAlias = SlotAlias {
            locals: BTreeSet::new(),
            fresh: None,
        };
        self.aliases
            .len()
            .checked_sub(depth + 1)
            .map_or(&EMPTY, |i| &self.aliases[i])
    }

    /// Slot at `depth` must hold `this`.
    fn is_this(&self, depth: usize) -> bool {
        !self.decl.is_static() && self.alias(depth).locals.contains(&0)
    }

    /// Strips null from the locals aliased by the pre-state slot at `depth`
    /// and from remaining slots sharing one of them. `popped` is how many
    /// pre-state slots are gone from `frame`.
    fn refine(&self, frame: &mut Frame, depth: usize, popped: usize) {
        let locals = self.alias(depth).locals.clone();
        self.refine_locals(frame, &locals, popped);
    }

    fn refine_locals(&self, frame: &mut Frame, locals: &BTreeSet<u16>, popped: usize) {
        if locals.is_empty() {
            return;
        }
        for &l in locals {
            frame.set_local(l, frame.local(l).nonnull_refine());
        }
        frame.map_stack(|d, v| {
            if self.alias(d + popped).locals.is_disjoint(locals) {
                v
            } else {
                v.nonnull_refine()
            }
        });
    }
}

fn sig_mut(state: &mut AbstractState, m: MethodId) -> &mut MethodSig {
    state
        .sigs
        .get_mut(&m)
        .expect("signature for reachable method")
}

fn raise(slot: &mut AVal, v: AVal, program: &Program) -> bool {
    let joined = slot.join(v, program.hierarchy());
    let changed = joined != *slot;
    *slot = joined;
    changed
}

fn raise_t(slot: &mut TVal, t: &TVal) -> bool {
    if t.leq(slot) {
        return false;
    }
    *slot = slot.join(t);
    true
}

fn reads_of(program: &Program, c: &Constraint) -> Vec<Key> {
    match *c {
        Constraint::Seeds(_) => Vec::new(),
        Constraint::Entry(m) => vec![Key::SigIn(m)],
        Constraint::Override { base, over } => vec![Key::SigIn(base), Key::SigOut(over)],
        Constraint::Instr(p) => {
            let mut keys = vec![Key::Frame(p)];
            match program.method(p.method).code[p.pc] {
                Instruction::GetField(f) => keys.push(Key::Heap(f.field)),
                Instruction::InvokeVirtual(r) | Instruction::InvokeStatic(r) => {
                    keys.push(Key::SigOut(r.target))
                }
                _ => {}
            }
            keys
        }
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Key::Frame(p) => write!(f, "frame {}@{}", p.method.0, p.pc),
            Key::Heap(x) => write!(f, "field #{}", x.0),
            Key::SigIn(m) => write!(f, "inputs of method #{}", m.0),
            Key::SigOut(m) => write!(f, "outputs of method #{}", m.0),
        }
    }
}
