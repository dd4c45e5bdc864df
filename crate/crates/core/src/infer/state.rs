use std::collections::BTreeMap;

use rpds::{ListSync, RedBlackTreeMapSync};
use serde_json::{json, Map, Value};

use crate::domain::{AVal, TVal};
use crate::ir::{FieldId, Hierarchy, MethodId, Program, ProgramPoint};

/// Context-insensitive summary of one method.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MethodSig {
    /// Initialization of the current class's fields on `this` at entry.
    pub this_pre: TVal,
    /// Receiver value at entry of a virtual method; unused otherwise.
    pub receiver: AVal,
    /// One entry per declared parameter; integer parameters stay `NonNull`.
    pub args: Vec<AVal>,
    pub post: TVal,
    pub ret: AVal,
}

impl MethodSig {
    pub fn bottom(arity: usize) -> MethodSig {
        MethodSig {
            this_pre: TVal::bottom(),
            receiver: AVal::BOTTOM,
            args: vec![AVal::BOTTOM; arity],
            post: TVal::bottom(),
            ret: AVal::BOTTOM,
        }
    }
}

/// Field annotations. Absent fields are `NonNull`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Heap {
    fields: BTreeMap<FieldId, AVal>,
}

impl Heap {
    pub fn get(&self, f: FieldId) -> AVal {
        self.fields.get(&f).copied().unwrap_or(AVal::BOTTOM)
    }

    /// Joins `v` into `f`; true if the entry grew.
    pub fn raise(&mut self, f: FieldId, v: AVal, h: &Hierarchy) -> bool {
        let cur = self.get(f);
        let joined = cur.join(v, h);
        if joined == cur {
            return false;
        }
        self.fields.insert(f, joined);
        true
    }

    /// Overwrites an entry, for fault injection and hand-built states.
    pub fn set(&mut self, f: FieldId, v: AVal) {
        if v == AVal::BOTTOM {
            self.fields.remove(&f);
        } else {
            self.fields.insert(f, v);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (FieldId, AVal)> + '_ {
        self.fields.iter().map(|(f, v)| (*f, *v))
    }
}

/// Abstract frame before one instruction. Absent locals are `NonNull`;
/// integer values are represented as `NonNull` too.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub locals: RedBlackTreeMapSync<u16, AVal>,
    /// Top first.
    pub stack: ListSync<AVal>,
    pub tval: TVal,
}

impl Default for Frame {
    fn default() -> Self {
        Frame {
            locals: RedBlackTreeMapSync::new_sync(),
            stack: ListSync::new_sync(),
            tval: TVal::bottom(),
        }
    }
}

impl Frame {
    pub fn local(&self, r: u16) -> AVal {
        self.locals.get(&r).copied().unwrap_or(AVal::BOTTOM)
    }

    pub fn set_local(&mut self, r: u16, v: AVal) {
        if v == AVal::BOTTOM {
            self.locals.remove_mut(&r);
        } else {
            self.locals.insert_mut(r, v);
        }
    }

    /// Value at `depth` below the top. Panics past the bottom, which stack
    /// validation rules out.
    pub fn slot(&self, depth: usize) -> AVal {
        *self
            .stack
            .iter()
            .nth(depth)
            .expect("stack depth checked by validation")
    }

    pub fn height(&self) -> usize {
        self.stack.len()
    }

    pub fn push(&mut self, v: AVal) {
        self.stack.push_front_mut(v);
    }

    pub fn pop(&mut self, n: usize) {
        for _ in 0..n {
            self.stack.drop_first_mut();
        }
    }

    /// Rewrites every stack slot with `f(depth, value)`.
    pub fn map_stack(&mut self, mut f: impl FnMut(usize, AVal) -> AVal) {
        let vals: Vec<AVal> = self
            .stack
            .iter()
            .enumerate()
            .map(|(d, v)| f(d, *v))
            .collect();
        let mut out = ListSync::new_sync();
        for v in vals.into_iter().rev() {
            out.push_front_mut(v);
        }
        self.stack = out;
    }

    pub fn join(&self, other: &Frame, h: &Hierarchy) -> Frame {
        let mut locals = self.locals.clone();
        for (r, v) in other.locals.iter() {
            let cur = self.local(*r);
            let j = cur.join(*v, h);
            if j != cur {
                locals.insert_mut(*r, j);
            }
        }
        let mut out = Frame {
            locals,
            stack: self.stack.clone(),
            tval: self.tval.join(&other.tval),
        };
        if self.stack != other.stack {
            let theirs: Vec<AVal> = other.stack.iter().copied().collect();
            out.map_stack(|d, v| v.join(theirs[d], h));
        }
        out
    }

    pub fn leq(&self, other: &Frame, h: &Hierarchy) -> bool {
        self.locals.iter().all(|(r, v)| v.leq(other.local(*r), h))
            && self.stack.len() == other.stack.len()
            && self
                .stack
                .iter()
                .zip(other.stack.iter())
                .all(|(a, b)| a.leq(*b, h))
            && self.tval.leq(&other.tval)
    }
}

/// Signatures, field annotations, and a frame per reachable point.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AbstractState {
    pub sigs: BTreeMap<MethodId, MethodSig>,
    pub heap: Heap,
    /// Indexed by method then pc; unanalyzed methods have an empty vector and
    /// unreached points are `None`.
    pub frames: Vec<Vec<Option<Frame>>>,
}

impl AbstractState {
    pub fn sig(&self, m: MethodId) -> &MethodSig {
        &self.sigs[&m]
    }

    pub fn frame(&self, point: ProgramPoint) -> Option<&Frame> {
        self.frames
            .get(point.method.index())?
            .get(point.pc)?
            .as_ref()
    }

    pub fn frame_mut(&mut self, point: ProgramPoint) -> Option<&mut Frame> {
        self.frames
            .get_mut(point.method.index())?
            .get_mut(point.pc)?
            .as_mut()
    }

    /// Stable JSON rendering keyed by printed names.
    pub fn to_json(&self, program: &Program) -> Value {
        let name = |v: AVal| Value::String(v.annotation(program));
        let tval = |t: &TVal| {
            Value::Array(
                t.undef_fields()
                    .map(|f| Value::String(program.field_name(f)))
                    .collect(),
            )
        };
        let mut sigs = Map::new();
        for (m, s) in &self.sigs {
            sigs.insert(
                program.method_name(*m),
                json!({
                    "this_pre_undef": tval(&s.this_pre),
                    "receiver": name(s.receiver),
                    "args": s.args.iter().map(|v| name(*v)).collect::<Vec<_>>(),
                    "post_undef": tval(&s.post),
                    "ret": name(s.ret),
                }),
            );
        }
        let heap: Map<String, Value> = self
            .heap
            .iter()
            .map(|(f, v)| (program.field_name(f), name(v)))
            .collect();
        let mut frames = Map::new();
        for (mi, points) in self.frames.iter().enumerate() {
            for (pc, frame) in points.iter().enumerate() {
                let Some(frame) = frame else { continue };
                let locals: Map<String, Value> = frame
                    .locals
                    .iter()
                    .map(|(r, v)| (r.to_string(), name(*v)))
                    .collect();
                let point = ProgramPoint::new(MethodId(mi as u32), pc);
                frames.insert(
                    program.point_name(point),
                    json!({
                        "locals": locals,
                        "stack": frame.stack.iter().map(|v| name(*v)).collect::<Vec<_>>(),
                        "undef": tval(&frame.tval),
                    }),
                );
            }
        }
        json!({ "signatures": sigs, "heap": heap, "frames": frames })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{parse_program, ClassId};

    #[test]
    fn frame_join_pointwise() {
        let p = parse_program("class C extends Object { static main (0, 1) { return } }").unwrap();
        let h = p.hierarchy();
        let mut a = Frame::default();
        a.set_local(1, AVal::Nullable);
        a.push(AVal::BOTTOM);
        let mut b = Frame::default();
        b.set_local(2, AVal::Raw(ClassId::OBJECT));
        b.push(AVal::RawMinus);
        let j = a.join(&b, h);
        assert_eq!(j.local(1), AVal::Nullable);
        assert_eq!(j.local(2), AVal::Raw(ClassId::OBJECT));
        assert_eq!(j.slot(0), AVal::RawMinus);
        assert!(a.leq(&j, h) && b.leq(&j, h));
        assert!(!j.leq(&a, h));
    }

    #[test]
    fn bottom_locals_not_stored() {
        let mut f = Frame::default();
        f.set_local(3, AVal::Nullable);
        f.set_local(3, AVal::NonNull);
        assert_eq!(f, Frame::default());
    }
}
