//! Concrete interpreter instrumented with per-field definedness flags and the
//! set of classes whose constructor has started or completed on each object.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ir::{
    ClassId, FieldId, Instruction, MethodId, MethodKind, Program, ProgramPoint, ValueKind,
};

pub const DEFAULT_BUDGET: u64 = 100_000;

/// Arrays longer than this are treated as a stuck allocation.
const MAX_ARRAY: i64 = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConcValue {
    Null,
    Loc(u32),
    Int(i64),
}

impl fmt::Display for ConcValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConcValue::Null => f.write_str("null"),
            ConcValue::Loc(l) => write!(f, "#{l}"),
            ConcValue::Int(i) => write!(f, "{i}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FieldCell {
    pub value: ConcValue,
    pub def: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObjectCell {
    pub class: ClassId,
    pub fields: BTreeMap<FieldId, FieldCell>,
    /// Classes whose constructor has been entered, in entry order.
    pub started: Vec<ClassId>,
    pub constructed: BTreeSet<ClassId>,
}

impl ObjectCell {
    pub fn all_def(&self) -> bool {
        self.fields.values().all(|c| c.def)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Cell {
    Object(ObjectCell),
    Array(Vec<ConcValue>),
}

/// One heap mutation. Replaying the deltas of a trace in order rebuilds the
/// heap at every step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum HeapDelta {
    Alloc {
        loc: u32,
        class: ClassId,
    },
    AllocArray {
        loc: u32,
        len: usize,
    },
    SetField {
        loc: u32,
        field: FieldId,
        value: ConcValue,
    },
    SetCell {
        loc: u32,
        index: usize,
        value: ConcValue,
    },
    /// A constructor of `class` was entered on `loc`.
    Start {
        loc: u32,
        class: ClassId,
    },
    /// The constructor of `class` completed on `loc`; its fields become defined.
    Construct {
        loc: u32,
        class: ClassId,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConcHeap {
    cells: Vec<Cell>,
}

impl ConcHeap {
    pub fn get(&self, loc: u32) -> &Cell {
        &self.cells[loc as usize]
    }

    pub fn object(&self, loc: u32) -> Option<&ObjectCell> {
        match self.cells.get(loc as usize)? {
            Cell::Object(o) => Some(o),
            Cell::Array(_) => None,
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn apply(&mut self, program: &Program, delta: &HeapDelta) {
        match *delta {
            HeapDelta::Alloc { loc, class } => {
                debug_assert_eq!(loc as usize, self.cells.len());
                let mut fields = BTreeMap::new();
                for &c in program.hierarchy().ancestors(class) {
                    for &f in &program.class(c).fields {
                        let value = match program.field(f).kind {
                            ValueKind::Ref => ConcValue::Null,
                            ValueKind::Int => ConcValue::Int(0),
                        };
                        fields.insert(f, FieldCell { value, def: false });
                    }
                }
                self.cells.push(Cell::Object(ObjectCell {
                    class,
                    fields,
                    started: Vec::new(),
                    constructed: BTreeSet::new(),
                }));
            }
            HeapDelta::AllocArray { loc, len } => {
                debug_assert_eq!(loc as usize, self.cells.len());
                self.cells.push(Cell::Array(vec![ConcValue::Null; len]));
            }
            HeapDelta::SetField { loc, field, value } => {
                if let Cell::Object(o) = &mut self.cells[loc as usize] {
                    o.fields.insert(field, FieldCell { value, def: true });
                }
            }
            HeapDelta::SetCell { loc, index, value } => {
                if let Cell::Array(a) = &mut self.cells[loc as usize] {
                    a[index] = value;
                }
            }
            HeapDelta::Start { loc, class } => {
                if let Cell::Object(o) = &mut self.cells[loc as usize] {
                    o.started.push(class);
                }
            }
            HeapDelta::Construct { loc, class } => {
                if let Cell::Object(o) = &mut self.cells[loc as usize] {
                    for f in &program.class(class).fields {
                        if let Some(c) = o.fields.get_mut(f) {
                            c.def = true;
                        }
                    }
                    o.constructed.insert(class);
                }
            }
        }
    }
}

/// One executed instruction: the frame before it and the heap changes it made.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Step {
    pub point: ProgramPoint,
    /// `None` for never-assigned locals.
    pub locals: Vec<Option<ConcValue>>,
    /// Bottom first.
    pub stack: Vec<ConcValue>,
    pub deltas: Vec<HeapDelta>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Status {
    Returned,
    /// Null dereference at the given point.
    Omega(ProgramPoint),
    BudgetExhausted,
    /// An operation outside the typed fragment (wrong class, bad index,
    /// repeated constructor). Neutral, like budget exhaustion.
    Stuck(ProgramPoint, String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub seed: u64,
    pub inputs: Vec<ConcValue>,
    /// Heap changes made while preparing inputs, before the first step.
    pub setup: Vec<HeapDelta>,
    pub steps: Vec<Step>,
    pub status: Status,
}

impl Trace {
    /// One line per step, `method:pc opcode | stack | locals`, followed by
    /// indented heap changes.
    pub fn dump(&self, program: &Program) -> String {
        let mut out = String::new();
        let vals = |vs: &mut dyn Iterator<Item = String>| vs.collect::<Vec<_>>().join(" ");
        for d in &self.setup {
            let _ = writeln!(out, "  {}", describe_delta(program, d));
        }
        for s in &self.steps {
            let instr = &program.method(s.point.method).code[s.point.pc];
            let stack = vals(&mut s.stack.iter().map(|v| v.to_string()));
            let locals = vals(
                &mut s
                    .locals
                    .iter()
                    .enumerate()
                    .filter_map(|(i, v)| v.map(|v| format!("{i}={v}"))),
            );
            let _ = writeln!(
                out,
                "{}:{} {} | {} | {}",
                program.method_name(s.point.method),
                s.point.pc,
                program.format_instruction(instr),
                stack,
                locals
            );
            for d in &s.deltas {
                let _ = writeln!(out, "  {}", describe_delta(program, d));
            }
        }
        let _ = writeln!(out, "status: {}", describe_status(program, &self.status));
        out
    }
}

pub fn describe_status(program: &Program, status: &Status) -> String {
    match status {
        Status::Returned => "returned".into(),
        Status::Omega(p) => format!("null dereference at {}", program.point_name(*p)),
        Status::BudgetExhausted => "budget exhausted".into(),
        Status::Stuck(p, why) => format!("stuck at {}: {why}", program.point_name(*p)),
    }
}

pub fn describe_delta(program: &Program, d: &HeapDelta) -> String {
    match *d {
        HeapDelta::Alloc { loc, class } => format!("+ #{loc} = new {}", program.class(class).name),
        HeapDelta::AllocArray { loc, len } => format!("+ #{loc} = array[{len}]"),
        HeapDelta::SetField { loc, field, value } => {
            format!("#{loc}.{} := {value}", program.field(field).name)
        }
        HeapDelta::SetCell { loc, index, value } => format!("#{loc}[{index}] := {value}"),
        HeapDelta::Start { loc, class } => format!("#{loc} starts {}", program.class(class).name),
        HeapDelta::Construct { loc, class } => {
            format!("#{loc} constructed {}", program.class(class).name)
        }
    }
}

struct Call {
    method: MethodId,
    pc: usize,
    locals: Vec<Option<ConcValue>>,
    stack: Vec<ConcValue>,
}

enum Flow {
    Next,
    Jump(usize),
    Enter(Call),
    Return(Option<ConcValue>),
    Omega,
    Stuck(String),
}

struct Machine<'a> {
    program: &'a Program,
    heap: ConcHeap,
    deltas: Vec<HeapDelta>,
}

impl Machine<'_> {
    fn emit(&mut self, d: HeapDelta) {
        self.heap.apply(self.program, &d);
        self.deltas.push(d);
    }

    fn alloc(&mut self, class: ClassId) -> u32 {
        let loc = self.heap.len() as u32;
        self.emit(HeapDelta::Alloc { loc, class });
        loc
    }
}

/// Executes the entry method with inputs drawn from `seed`: each reference
/// parameter is `null` or a fresh constructed `Object`, each integer 0 or 1.
pub fn run(program: &Program, budget: u64, seed: u64) -> Trace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entry = program.method(program.entry);
    let mut m = Machine {
        program,
        heap: ConcHeap::default(),
        deltas: Vec::new(),
    };
    let mut inputs = Vec::new();
    for k in &entry.params {
        let v = match k {
            ValueKind::Int => ConcValue::Int(rng.gen_range(0..=1)),
            ValueKind::Ref if rng.gen_bool(0.5) => ConcValue::Null,
            ValueKind::Ref => {
                let loc = m.alloc(ClassId::OBJECT);
                m.emit(HeapDelta::Start {
                    loc,
                    class: ClassId::OBJECT,
                });
                m.emit(HeapDelta::Construct {
                    loc,
                    class: ClassId::OBJECT,
                });
                ConcValue::Loc(loc)
            }
        };
        inputs.push(v);
    }
    let setup = std::mem::take(&mut m.deltas);
    let mut locals = vec![None; entry.locals as usize];
    for (i, v) in inputs.iter().enumerate() {
        locals[entry.param_local(i) as usize] = Some(*v);
    }
    let mut calls = vec![Call {
        method: program.entry,
        pc: 0,
        locals,
        stack: Vec::new(),
    }];
    let mut steps = Vec::new();
    let status = loop {
        if steps.len() as u64 >= budget {
            break Status::BudgetExhausted;
        }
        let call = calls.last_mut().expect("non-empty call stack");
        let point = ProgramPoint::new(call.method, call.pc);
        steps.push(Step {
            point,
            locals: call.locals.clone(),
            stack: call.stack.clone(),
            deltas: Vec::new(),
        });
        let flow = m.exec(call);
        steps.last_mut().expect("just pushed").deltas = std::mem::take(&mut m.deltas);
        match flow {
            Flow::Next => call.pc += 1,
            Flow::Jump(t) => call.pc = t,
            Flow::Enter(callee) => calls.push(callee),
            Flow::Return(v) => {
                let done = calls.pop().expect("non-empty call stack");
                if program.method(done.method).is_ctor() {
                    if let Some(ConcValue::Loc(loc)) = done.locals[0] {
                        let class = program.method(done.method).class;
                        m.emit(HeapDelta::Construct { loc, class });
                        steps
                            .last_mut()
                            .expect("just pushed")
                            .deltas
                            .append(&mut m.deltas);
                    }
                }
                match calls.last_mut() {
                    None => break Status::Returned,
                    Some(caller) => {
                        if let Some(v) = v {
                            caller.stack.push(v);
                        }
                        caller.pc += 1;
                    }
                }
            }
            Flow::Omega => break Status::Omega(point),
            Flow::Stuck(why) => break Status::Stuck(point, why),
        }
    };
    Trace {
        seed,
        inputs,
        setup,
        steps,
        status,
    }
}

impl Machine<'_> {
    fn exec(&mut self, call: &mut Call) -> Flow {
        use Instruction::*;
        let program = self.program;
        let h = program.hierarchy();
        let decl = program.method(call.method);
        let st = &mut call.stack;
        macro_rules! pop {
            () => {
                st.pop().expect("stack shape validated")
            };
        }
        match decl.code[call.pc] {
            Nop => {}
            AconstNull => st.push(ConcValue::Null),
            Iconst(k) => st.push(ConcValue::Int(i64::from(k))),
            Load(r) => st.push(call.locals[r as usize].expect("definite assignment validated")),
            Store(r) => call.locals[r as usize] = Some(pop!()),
            Dup => {
                let v = *st.last().expect("stack shape validated");
                st.push(v);
            }
            Pop => {
                pop!();
            }
            New(c) => {
                let loc = self.alloc(c);
                st.push(ConcValue::Loc(loc));
            }
            InvokeSpecial(r) | InvokeVirtual(r) | InvokeStatic(r) => {
                let mut target = r.target;
                let t = program.method(target);
                let n = t.params.len();
                let args = st.split_off(st.len() - n);
                let recv = match t.kind {
                    MethodKind::Static => None,
                    _ => Some(pop!()),
                };
                if let Some(recv) = recv {
                    let loc = match recv {
                        ConcValue::Null => return Flow::Omega,
                        ConcValue::Loc(l) => l,
                        ConcValue::Int(_) => return Flow::Stuck("integer receiver".into()),
                    };
                    let Some(obj) = self.heap.object(loc) else {
                        return Flow::Stuck("method call on an array".into());
                    };
                    if !h.is_subclass(obj.class, r.class) {
                        return Flow::Stuck(format!(
                            "receiver is a {}",
                            program.class(obj.class).name
                        ));
                    }
                    if t.kind == MethodKind::Constructor {
                        let k = r.class;
                        let ok = !obj.started.contains(&k)
                            && match obj.started.last() {
                                None => obj.class == k,
                                Some(&last) => h.parent(last) == Some(k),
                            };
                        if !ok {
                            return Flow::Stuck(format!(
                                "illegal constructor call {}.<init>",
                                program.class(k).name
                            ));
                        }
                        self.emit(HeapDelta::Start { loc, class: k });
                        if k != ClassId::OBJECT && h.parent(k) == Some(ClassId::OBJECT) {
                            self.emit(HeapDelta::Start {
                                loc,
                                class: ClassId::OBJECT,
                            });
                            self.emit(HeapDelta::Construct {
                                loc,
                                class: ClassId::OBJECT,
                            });
                        }
                    } else if t.kind == MethodKind::Virtual {
                        match program.dispatch(obj.class, target) {
                            Some(m) => target = m,
                            None => return Flow::Stuck("no method to dispatch to".into()),
                        }
                    }
                }
                let callee = program.method(target);
                let mut locals = vec![None; callee.locals as usize];
                if let Some(recv) = recv {
                    locals[0] = Some(recv);
                }
                for (i, v) in args.into_iter().enumerate() {
                    locals[callee.param_local(i) as usize] = Some(v);
                }
                return Flow::Enter(Call {
                    method: target,
                    pc: 0,
                    locals,
                    stack: Vec::new(),
                });
            }
            GetField(fr) => {
                let loc = match pop!() {
                    ConcValue::Null => return Flow::Omega,
                    ConcValue::Loc(l) => l,
                    ConcValue::Int(_) => return Flow::Stuck("integer receiver".into()),
                };
                match self.heap.object(loc).and_then(|o| o.fields.get(&fr.field)) {
                    Some(c) => st.push(c.value),
                    None => return Flow::Stuck("field not present on receiver".into()),
                }
            }
            PutField(fr) => {
                let value = pop!();
                let loc = match pop!() {
                    ConcValue::Null => return Flow::Omega,
                    ConcValue::Loc(l) => l,
                    ConcValue::Int(_) => return Flow::Stuck("integer receiver".into()),
                };
                if !self
                    .heap
                    .object(loc)
                    .is_some_and(|o| o.fields.contains_key(&fr.field))
                {
                    return Flow::Stuck("field not present on receiver".into());
                }
                self.emit(HeapDelta::SetField {
                    loc,
                    field: fr.field,
                    value,
                });
            }
            InstanceOf(c) => {
                let yes = match pop!() {
                    ConcValue::Loc(l) => match self.heap.get(l) {
                        Cell::Object(o) => h.is_subclass(o.class, c),
                        Cell::Array(_) => c == ClassId::OBJECT,
                    },
                    _ => false,
                };
                st.push(ConcValue::Int(i64::from(yes)));
            }
            IfNull(t) | IfNonNull(t) => {
                let is_null = pop!() == ConcValue::Null;
                if is_null == matches!(decl.code[call.pc], IfNull(_)) {
                    return Flow::Jump(t);
                }
            }
            IfEq(t) | IfNe(t) => {
                let zero = pop!() == ConcValue::Int(0);
                if zero == matches!(decl.code[call.pc], IfEq(_)) {
                    return Flow::Jump(t);
                }
            }
            Goto(t) => return Flow::Jump(t),
            AReturn => return Flow::Return(Some(pop!())),
            Return => return Flow::Return(None),
            NewArray => {
                let len = match pop!() {
                    ConcValue::Int(n) if (0..=MAX_ARRAY).contains(&n) => n as usize,
                    _ => return Flow::Stuck("bad array length".into()),
                };
                let loc = self.heap.len() as u32;
                self.emit(HeapDelta::AllocArray { loc, len });
                st.push(ConcValue::Loc(loc));
            }
            AaLoad | AaStore | ArrayLength => {
                let instr = decl.code[call.pc];
                let value = matches!(instr, AaStore).then(|| pop!());
                let index = if matches!(instr, ArrayLength) {
                    None
                } else {
                    Some(pop!())
                };
                let loc = match pop!() {
                    ConcValue::Null => return Flow::Omega,
                    ConcValue::Loc(l) => l,
                    ConcValue::Int(_) => return Flow::Stuck("integer array reference".into()),
                };
                let Cell::Array(cells) = self.heap.get(loc) else {
                    return Flow::Stuck("array operation on an object".into());
                };
                let len = cells.len();
                let index = match index {
                    None => {
                        st.push(ConcValue::Int(len as i64));
                        return Flow::Next;
                    }
                    Some(ConcValue::Int(i)) if i >= 0 && (i as usize) < len => i as usize,
                    Some(_) => return Flow::Stuck("array index out of range".into()),
                };
                match value {
                    None => {
                        let v = cells[index];
                        st.push(v);
                    }
                    Some(value) => self.emit(HeapDelta::SetCell { loc, index, value }),
                }
            }
        }
        Flow::Next
    }
}
