//! Stack-shape verification: every reachable point gets a unique operand
//! stack height with a kind per slot, and a kind per local.

use super::{build_cfg, Instruction, MethodDecl, MethodId, MethodKind, Program, ValueKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LocalKind {
    Unset,
    Ref,
    Int,
    /// Merge of differing kinds; unreadable.
    Conflict,
}

impl LocalKind {
    fn merge(self, other: LocalKind) -> LocalKind {
        if self == other {
            self
        } else {
            LocalKind::Conflict
        }
    }
}

impl From<ValueKind> for LocalKind {
    fn from(k: ValueKind) -> Self {
        match k {
            ValueKind::Ref => LocalKind::Ref,
            ValueKind::Int => LocalKind::Int,
        }
    }
}

/// Shape of the frame before the instruction at a point executes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Shape {
    /// Bottom to top.
    pub stack: Vec<ValueKind>,
    pub locals: Vec<LocalKind>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{method} at pc {pc}: {msg}")]
pub struct VerifyError {
    pub method: String,
    pub pc: usize,
    pub msg: String,
}

/// Per-method, per-pc shapes. `None` marks instructions unreachable within
/// their method.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StackShapes {
    methods: Vec<Vec<Option<Shape>>>,
}

impl StackShapes {
    pub fn at(&self, method: MethodId, pc: usize) -> Option<&Shape> {
        self.methods.get(method.index())?.get(pc)?.as_ref()
    }

    pub fn method(&self, method: MethodId) -> &[Option<Shape>] {
        &self.methods[method.index()]
    }

    pub fn height(&self, method: MethodId, pc: usize) -> Option<usize> {
        self.at(method, pc).map(|s| s.stack.len())
    }
}

pub fn validate_stack_shapes(program: &Program) -> Result<StackShapes, VerifyError> {
    let methods = program
        .method_ids()
        .map(|m| verify_method(program, m))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(StackShapes { methods })
}

fn entry_shape(m: &MethodDecl) -> Shape {
    let mut locals = vec![LocalKind::Unset; m.locals as usize];
    if !m.is_static() {
        locals[0] = LocalKind::Ref;
    }
    for (i, k) in m.params.iter().enumerate() {
        locals[m.param_local(i) as usize] = (*k).into();
    }
    Shape {
        stack: Vec::new(),
        locals,
    }
}

fn verify_method(program: &Program, mid: MethodId) -> Result<Vec<Option<Shape>>, VerifyError> {
    let m = program.method(mid);
    let cfg = build_cfg(m);
    let n = m.code.len();
    let err = |pc: usize, msg: String| VerifyError {
        method: program.method_name(mid),
        pc,
        msg,
    };
    let mut shapes: Vec<Option<Shape>> = vec![None; n];
    shapes[0] = Some(entry_shape(m));
    let mut work = vec![0usize];
    while let Some(pc) = work.pop() {
        let shape = shapes[pc].clone().expect("queued points have shapes");
        let out = step(program, m, pc, shape).map_err(|msg| err(pc, msg))?;
        let instr = &m.code[pc];
        if !instr.is_return() && !matches!(instr, Instruction::Goto(_)) && pc + 1 >= n {
            return Err(err(pc, "control falls off the end of the method".into()));
        }
        for e in cfg.successors(pc) {
            match &mut shapes[e.target] {
                slot @ None => {
                    *slot = Some(out.clone());
                    work.push(e.target);
                }
                Some(existing) => {
                    if existing.stack != out.stack {
                        return Err(err(
                            e.target,
                            format!(
                                "inconsistent stack at merge: {} vs {}",
                                fmt_stack(&existing.stack),
                                fmt_stack(&out.stack)
                            ),
                        ));
                    }
                    let merged: Vec<LocalKind> = existing
                        .locals
                        .iter()
                        .zip(&out.locals)
                        .map(|(a, b)| a.merge(*b))
                        .collect();
                    if merged != existing.locals {
                        existing.locals = merged;
                        work.push(e.target);
                    }
                }
            }
        }
    }
    Ok(shapes)
}

fn fmt_stack(s: &[ValueKind]) -> String {
    let parts: Vec<_> = s.iter().map(|k| k.keyword()).collect();
    format!("[{}] (height {})", parts.join(" "), s.len())
}

fn pop(
    stack: &mut Vec<ValueKind>,
    want: Option<ValueKind>,
    what: &str,
) -> Result<ValueKind, String> {
    let got = stack
        .pop()
        .ok_or_else(|| format!("stack underflow popping {what}"))?;
    match want {
        Some(w) if w != got => Err(format!(
            "kind mismatch: {what} must be {}, found {}",
            w.keyword(),
            got.keyword()
        )),
        _ => Ok(got),
    }
}

/// Shape after executing `code[pc]` (the same for every successor).
fn step(program: &Program, m: &MethodDecl, pc: usize, mut shape: Shape) -> Result<Shape, String> {
    use Instruction::*;
    use ValueKind::{Int, Ref};
    let st = &mut shape.stack;
    match m.code[pc] {
        Nop | Goto(_) => {}
        AconstNull | New(_) => st.push(Ref),
        Iconst(_) => st.push(Int),
        Load(r) => match shape.locals[r as usize] {
            LocalKind::Ref => st.push(Ref),
            LocalKind::Int => st.push(Int),
            LocalKind::Unset => return Err(format!("local {r} read before assignment")),
            LocalKind::Conflict => return Err(format!("local {r} has conflicting kinds")),
        },
        Store(r) => {
            let k = pop(st, None, "stored value")?;
            shape.locals[r as usize] = k.into();
        }
        Dup => {
            let k = *st.last().ok_or("stack underflow on dup")?;
            st.push(k);
        }
        Pop => {
            pop(st, None, "popped value")?;
        }
        InvokeSpecial(r) | InvokeVirtual(r) | InvokeStatic(r) => {
            let target = program.method(r.target);
            for k in target.params.iter().rev() {
                pop(st, Some(*k), "argument")?;
            }
            if target.kind != MethodKind::Static {
                pop(st, Some(Ref), "receiver")?;
            }
            if let Some(k) = target.returns {
                st.push(k);
            }
        }
        GetField(f) => {
            pop(st, Some(Ref), "field receiver")?;
            st.push(program.field(f.field).kind);
        }
        PutField(f) => {
            pop(st, Some(program.field(f.field).kind), "stored field value")?;
            pop(st, Some(Ref), "field receiver")?;
        }
        InstanceOf(_) => {
            pop(st, Some(Ref), "instanceof operand")?;
            st.push(Int);
        }
        IfNull(_) | IfNonNull(_) => {
            pop(st, Some(Ref), "null-test operand")?;
        }
        IfEq(_) | IfNe(_) => {
            pop(st, Some(Int), "integer test operand")?;
        }
        AReturn => {
            if m.returns != Some(Ref) {
                return Err("areturn in a method without a reference result".into());
            }
            pop(st, Some(Ref), "returned value")?;
        }
        Return => {}
        NewArray => {
            pop(st, Some(Int), "array length")?;
            st.push(Ref);
        }
        AaLoad => {
            pop(st, Some(Int), "array index")?;
            pop(st, Some(Ref), "array")?;
            st.push(Ref);
        }
        AaStore => {
            pop(st, Some(Ref), "stored element")?;
            pop(st, Some(Int), "array index")?;
            pop(st, Some(Ref), "array")?;
        }
        ArrayLength => {
            pop(st, Some(Ref), "array")?;
            st.push(Int);
        }
    }
    Ok(shape)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_program;

    fn shapes_of(body: &str) -> Result<(Program, StackShapes), VerifyError> {
        let src = format!("class C extends Object {{ static f (0, 3) {{ {body} }} static main (0, 1) {{ return }} }}");
        let p = parse_program(&src).unwrap();
        validate_stack_shapes(&p).map(|s| (p, s))
    }

    fn body_of(body: &str) -> String {
        format!("class C extends Object {{ static f (0, 3) {{ {body} }} static main (0, 1) {{ return }} }}")
    }

    #[test]
    fn aconst_null_areturn_heights() {
        let (p, s) = shapes_of("aconst_null areturn").unwrap();
        let f = p.method_by_name("C", "f", 0).unwrap();
        assert_eq!(s.height(f, 0), Some(0));
        assert_eq!(s.at(f, 1).unwrap().stack, vec![ValueKind::Ref]);
    }

    #[test]
    fn int_where_reference_required() {
        // `iconst 1; areturn` makes the method ref-returning, then fails on the kind
        let err = shapes_of("iconst 1 areturn").unwrap_err();
        assert!(err.msg.contains("kind mismatch"), "{err}");
    }

    #[test]
    fn merge_height_mismatch() {
        let err = shapes_of(
            "iconst 0 ifeq L1 aconst_null aconst_null goto L2 L1: aconst_null L2: pop return",
        )
        .unwrap_err();
        assert!(err.msg.contains("inconsistent stack"), "{err}");
    }

    #[test]
    fn read_before_assignment() {
        let err = shapes_of("load 1 pop return").unwrap_err();
        assert!(err.msg.contains("before assignment"), "{err}");
    }

    #[test]
    fn falls_off_end() {
        let p = parse_program(&body_of("nop")).unwrap();
        assert!(validate_stack_shapes(&p)
            .unwrap_err()
            .msg
            .contains("falls off"));
    }

    #[test]
    fn locals_merge_to_conflict() {
        let err = shapes_of("iconst 0 ifeq L1 aconst_null store 1 goto L2 L1: iconst 1 store 1 L2: load 1 pop return")
            .unwrap_err();
        assert!(err.msg.contains("conflicting"), "{err}");
    }

    #[test]
    fn underflow() {
        let err = shapes_of("pop return").unwrap_err();
        assert!(err.msg.contains("underflow"), "{err}");
    }
}
