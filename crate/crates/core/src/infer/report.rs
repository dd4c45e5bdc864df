use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::domain::AVal;
use crate::ir::{
    ClassId, DerefCategory, FieldId, Instruction, MethodId, Program, ProgramPoint, ValueKind,
};

use super::solve::Solution;

/// A count of annotation slots or dereferences and how many are non-null/safe.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Tally {
    pub total: usize,
    pub good: usize,
}

impl Tally {
    pub fn add(&mut self, good: bool) {
        self.total += 1;
        self.good += usize::from(good);
    }

    pub fn merge(&mut self, other: Tally) {
        self.total += other.total;
        self.good += other.good;
    }

    /// Percentage in [0, 100]; 0 for an empty tally.
    pub fn percent(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * self.good as f64 / self.total as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MethodAnnotations {
    /// (parameter index, value) for reference parameters.
    pub params: Vec<(usize, AVal)>,
    pub ret: Option<AVal>,
    /// Receiver of a virtual method, or `this` when a constructor returns.
    pub this: Option<AVal>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Annotations {
    pub fields: BTreeMap<FieldId, AVal>,
    pub methods: BTreeMap<MethodId, MethodAnnotations>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct AnnotationCounts {
    pub fields: Tally,
    pub params: Tally,
    pub returns: Tally,
}

impl AnnotationCounts {
    pub fn total(&self) -> Tally {
        let mut t = self.fields;
        t.merge(self.params);
        t.merge(self.returns);
        t
    }
}

impl Annotations {
    pub fn counts(&self) -> AnnotationCounts {
        let mut c = AnnotationCounts::default();
        for v in self.fields.values() {
            c.fields.add(v.excludes_null());
        }
        for m in self.methods.values() {
            for (_, v) in &m.params {
                c.params.add(v.excludes_null());
            }
            if let Some(r) = m.ret {
                c.returns.add(r.excludes_null());
            }
        }
        c
    }

    /// The same counts split by declaring class.
    pub fn counts_by_class(&self, program: &Program) -> BTreeMap<ClassId, AnnotationCounts> {
        let mut out: BTreeMap<ClassId, AnnotationCounts> = BTreeMap::new();
        for (f, v) in &self.fields {
            out.entry(program.field(*f).class)
                .or_default()
                .fields
                .add(v.excludes_null());
        }
        for (m, ann) in &self.methods {
            let c = out.entry(program.method(*m).class).or_default();
            for (_, v) in &ann.params {
                c.params.add(v.excludes_null());
            }
            if let Some(r) = ann.ret {
                c.returns.add(r.excludes_null());
            }
        }
        out
    }

    pub fn to_json(&self, program: &Program) -> Value {
        let a = |v: AVal| Value::String(v.annotation(program));
        let fields: Map<String, Value> = self
            .fields
            .iter()
            .map(|(f, v)| (program.field_name(*f), a(*v)))
            .collect();
        let methods: Map<String, Value> = self
            .methods
            .iter()
            .map(|(m, ann)| {
                let params: Map<String, Value> = ann
                    .params
                    .iter()
                    .map(|(i, v)| (i.to_string(), a(*v)))
                    .collect();
                let mut o = Map::new();
                o.insert("params".into(), Value::Object(params));
                if let Some(r) = ann.ret {
                    o.insert("return".into(), a(r));
                }
                if let Some(t) = ann.this {
                    o.insert("this".into(), a(t));
                }
                (program.method_name(*m), Value::Object(o))
            })
            .collect();
        json!({ "fields": fields, "methods": methods })
    }
}

/// Field, parameter and result annotations of the reachable program. Fields
/// count only when their class is ever instantiated.
pub fn derive_annotations(program: &Program, solution: &Solution) -> Annotations {
    let h = program.hierarchy();
    let state = &solution.state;
    let mut out = Annotations::default();
    for c in program.class_ids() {
        let instantiated = h.ctor(c).is_some_and(|k| solution.reachable.contains(&k));
        if instantiated {
            for f in program.ref_fields_of(c) {
                out.fields.insert(f, state.heap.get(f));
            }
        }
    }
    for &m in &solution.reachable {
        let decl = program.method(m);
        let sig = state.sig(m);
        let params = decl
            .params
            .iter()
            .enumerate()
            .filter(|(_, k)| **k == ValueKind::Ref)
            .map(|(i, _)| (i, sig.args[i]))
            .collect();
        let ret = (decl.returns == Some(ValueKind::Ref)).then_some(sig.ret);
        let this = if decl.is_ctor() {
            decl.code
                .iter()
                .enumerate()
                .filter(|(_, i)| matches!(i, Instruction::Return))
                .filter_map(|(pc, _)| state.frame(ProgramPoint::new(m, pc)))
                .map(|f| f.local(0))
                .reduce(|a, b| a.join(b, h))
        } else if decl.is_static() {
            None
        } else {
            Some(sig.receiver)
        };
        out.methods
            .insert(m, MethodAnnotations { params, ret, this });
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DerefSite {
    pub point: ProgramPoint,
    pub category: DerefCategory,
    /// Abstract value of the dereferenced reference.
    pub receiver: AVal,
    pub safe: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DerefReport {
    pub sites: Vec<DerefSite>,
}

impl DerefReport {
    pub fn tally(&self, category: DerefCategory) -> Tally {
        let mut t = Tally::default();
        for s in self.sites.iter().filter(|s| s.category == category) {
            t.add(s.safe);
        }
        t
    }

    pub fn total(&self) -> Tally {
        let mut t = Tally::default();
        for s in &self.sites {
            t.add(s.safe);
        }
        t
    }

    pub fn site(&self, point: ProgramPoint) -> Option<&DerefSite> {
        self.sites
            .binary_search_by(|s| s.point.cmp(&point))
            .ok()
            .map(|i| &self.sites[i])
    }

    pub fn to_json(&self, program: &Program) -> Value {
        let sites: Map<String, Value> = self
            .sites
            .iter()
            .map(|s| {
                (
                    program.point_name(s.point),
                    json!({
                        "category": s.category,
                        "receiver": s.receiver.annotation(program),
                        "safe": s.safe,
                    }),
                )
            })
            .collect();
        json!({ "sites": sites })
    }
}

/// Stack depth of the dereferenced reference, when `instr` dereferences.
pub fn deref_operand(program: &Program, instr: &Instruction) -> Option<(DerefCategory, usize)> {
    use Instruction::*;
    match *instr {
        GetField(_) => Some((DerefCategory::FieldRead, 0)),
        PutField(_) => Some((DerefCategory::FieldWrite, 1)),
        InvokeVirtual(r) | InvokeSpecial(r) => Some((
            DerefCategory::MethodCall,
            program.method(r.target).params.len(),
        )),
        AaLoad => Some((DerefCategory::ArrayOperation, 1)),
        AaStore => Some((DerefCategory::ArrayOperation, 2)),
        ArrayLength => Some((DerefCategory::ArrayOperation, 0)),
        _ => None,
    }
}

/// Classifies every reached dereference; constructor calls on a fresh `new`
/// are not dereferences of a possibly-null value and are skipped.
pub fn classify_dereferences(program: &Program, solution: &Solution) -> DerefReport {
    let mut sites = Vec::new();
    for &m in &solution.reachable {
        for (pc, instr) in program.method(m).code.iter().enumerate() {
            let Some((category, depth)) = deref_operand(program, instr) else {
                continue;
            };
            let point = ProgramPoint::new(m, pc);
            let Some(frame) = solution.state.frame(point) else {
                continue;
            };
            if matches!(instr, Instruction::InvokeSpecial(_)) {
                let fresh = solution
                    .aliases
                    .at(point)
                    .and_then(|s| s.len().checked_sub(depth + 1).map(|i| s[i].fresh))
                    .flatten();
                if fresh.is_some() {
                    continue;
                }
            }
            let receiver = frame.slot(depth);
            sites.push(DerefSite {
                point,
                category,
                receiver,
                safe: receiver.excludes_null(),
            });
        }
    }
    sites.sort_by_key(|s| s.point);
    DerefReport { sites }
}
