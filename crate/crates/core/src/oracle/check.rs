//! Checks a concrete trace against an abstract solution: every reached value
//! must be described by its abstraction.

use std::fmt;

use crate::domain::AVal;
use crate::infer::{DerefReport, Solution};
use crate::ir::{FieldId, Program, ProgramPoint};

use super::interp::{Cell, ConcHeap, ConcValue, HeapDelta, Status, Trace};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleViolation {
    /// Index into `Trace::steps`; `None` for input setup.
    pub step: Option<usize>,
    pub point: Option<ProgramPoint>,
    pub rule: &'static str,
    pub detail: String,
}

impl fmt::Display for OracleViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.step {
            Some(s) => write!(f, "step {s}: [{}] {}", self.rule, self.detail),
            None => write!(f, "setup: [{}] {}", self.rule, self.detail),
        }
    }
}

/// Does `abs` describe `v` in `heap`? On failure, the name of the broken rule.
pub fn describes(
    program: &Program,
    abs: AVal,
    v: ConcValue,
    heap: &ConcHeap,
) -> Result<(), &'static str> {
    let obj = |loc: u32| match heap.get(loc) {
        Cell::Object(o) => Some(o),
        Cell::Array(_) => None,
    };
    match (abs, v) {
        (_, ConcValue::Int(_)) | (AVal::Nullable, _) => Ok(()),
        (AVal::NullableInit, ConcValue::Null) => Ok(()),
        (AVal::NullableInit, ConcValue::Loc(l)) => match obj(l) {
            Some(o) if !o.all_def() => Err("nullable-init-requires-null-or-all-fields-def"),
            _ => Ok(()),
        },
        (AVal::RawMinus, ConcValue::Null) => Err("raw-minus-requires-non-null"),
        (AVal::RawMinus, _) => Ok(()),
        (AVal::Raw(_), ConcValue::Null) => Err("raw-requires-non-null"),
        (AVal::Raw(a), ConcValue::Loc(l)) => {
            let Some(o) = obj(l) else { return Ok(()) };
            let chain = program.hierarchy().ancestors(a);
            let undef = chain
                .iter()
                .flat_map(|c| &program.class(*c).fields)
                .any(|f| o.fields.get(f).is_some_and(|c| !c.def));
            if undef {
                Err("raw-requires-chain-fields-def")
            } else {
                Ok(())
            }
        }
        (AVal::NonNull, ConcValue::Null) => Err("non-null-requires-non-null"),
        (AVal::NonNull, ConcValue::Loc(l)) => match obj(l) {
            Some(o) if !o.all_def() => Err("non-null-requires-all-fields-def"),
            _ => Ok(()),
        },
    }
}

/// Replays the trace and checks every local, stack slot, `TVal` flag and
/// field annotation against `solution`. Empty means the solution describes
/// this execution.
pub fn check_correctness(
    program: &Program,
    trace: &Trace,
    solution: &Solution,
) -> Vec<OracleViolation> {
    let mut out = Vec::new();
    let mut heap = ConcHeap::default();
    let state = &solution.state;
    for d in &trace.setup {
        replay(program, solution, &mut heap, d, None, None, &mut out);
    }
    for (i, step) in trace.steps.iter().enumerate() {
        let p = step.point;
        let at = || program.point_name(p);
        let mut push = |rule: &'static str, detail: String| {
            out.push(OracleViolation {
                step: Some(i),
                point: Some(p),
                rule,
                detail,
            })
        };
        if !solution.reachable.contains(&p.method) {
            push(
                "method-not-reachable",
                format!("{} executed", program.method_name(p.method)),
            );
        } else if let Some(frame) = state.frame(p) {
            for (r, v) in step.locals.iter().enumerate() {
                let Some(v) = *v else { continue };
                let abs = frame.local(r as u16);
                if let Err(rule) = describes(program, abs, v, &heap) {
                    push(
                        rule,
                        format!(
                            "{}: local {r} holds {v}, abstracted {}",
                            at(),
                            abs.annotation(program)
                        ),
                    );
                }
            }
            if frame.height() != step.stack.len() {
                push("stack-height", format!("{}: stack heights differ", at()));
            } else {
                for (d, v) in step.stack.iter().rev().enumerate() {
                    let abs = frame.slot(d);
                    if let Err(rule) = describes(program, abs, *v, &heap) {
                        push(
                            rule,
                            format!(
                                "{}: stack slot {d} holds {v}, abstracted {}",
                                at(),
                                abs.annotation(program)
                            ),
                        );
                    }
                }
            }
            let decl = program.method(p.method);
            if let (false, Some(Some(ConcValue::Loc(this)))) =
                (decl.is_static(), step.locals.first())
            {
                if let Some(o) = heap.object(*this) {
                    for f in program.ref_fields_of(decl.class) {
                        if frame.tval.is_def(f) && o.fields.get(&f).is_some_and(|c| !c.def) {
                            push(
                                "tval-def-requires-concrete-def",
                                format!("{}: {} claimed set on this", at(), program.field_name(f)),
                            );
                        }
                    }
                }
            }
        } else {
            push(
                "unreachable-point-reached",
                format!("{} has no abstract frame", at()),
            );
        }
        for d in &step.deltas {
            replay(program, solution, &mut heap, d, Some(i), Some(p), &mut out);
        }
    }
    out
}

/// Applies one heap change, then checks the field annotations it affects:
/// a write to a field whose class is constructed, or every field of a class
/// whose constructor just completed.
fn replay(
    program: &Program,
    solution: &Solution,
    heap: &mut ConcHeap,
    d: &HeapDelta,
    step: Option<usize>,
    point: Option<ProgramPoint>,
    out: &mut Vec<OracleViolation>,
) {
    heap.apply(program, d);
    let fields: Vec<(u32, FieldId)> = match *d {
        HeapDelta::SetField { loc, field, .. } => {
            let declaring = program.field(field).class;
            if heap
                .object(loc)
                .is_some_and(|o| o.constructed.contains(&declaring))
            {
                vec![(loc, field)]
            } else {
                Vec::new()
            }
        }
        HeapDelta::Construct { loc, class } => {
            program.ref_fields_of(class).map(|f| (loc, f)).collect()
        }
        _ => Vec::new(),
    };
    for (loc, f) in fields {
        let Some(cell) = heap.object(loc).and_then(|o| o.fields.get(&f)) else {
            continue;
        };
        let annotated = solution.state.heap.get(f);
        if let Err(rule) = describes(program, annotated, cell.value, heap) {
            out.push(OracleViolation {
                step,
                point,
                rule,
                detail: format!(
                    "field {} of #{loc} holds {} but is annotated {}",
                    program.field_name(f),
                    cell.value,
                    annotated.annotation(program)
                ),
            });
        }
    }
}

/// A null dereference at a point the report calls safe.
pub fn check_dereference_safety(
    program: &Program,
    trace: &Trace,
    report: &DerefReport,
) -> Vec<OracleViolation> {
    let Status::Omega(p) = trace.status else {
        return Vec::new();
    };
    match report.site(p) {
        Some(site) if site.safe => vec![OracleViolation {
            step: Some(trace.steps.len() - 1),
            point: Some(p),
            rule: "safe-dereference-faulted",
            detail: format!("{} dereferenced null", program.point_name(p)),
        }],
        _ => Vec::new(),
    }
}
