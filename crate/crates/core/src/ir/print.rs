use std::collections::BTreeSet;
use std::fmt::Write;

use super::{Instruction, MethodKind, Program, ValueKind};

/// Prints the canonical textual form. `parse_program(print_program(p)) == p`.
pub fn print_program(program: &Program) -> String {
    let mut out = String::new();
    for (ci, class) in program.classes.iter().enumerate().skip(1) {
        if ci > 1 {
            out.push('\n');
        }
        let sup = class
            .super_class
            .map(|s| program.class(s).name.as_str())
            .unwrap_or("Object");
        let _ = writeln!(out, "class {} extends {} {{", class.name, sup);
        for &f in &class.fields {
            let f = program.field(f);
            let _ = writeln!(out, "  field {} {}", f.name, f.kind.keyword());
        }
        for &m in &class.methods {
            let m = program.method(m);
            let head = match m.kind {
                MethodKind::Constructor => "ctor".to_string(),
                MethodKind::Virtual => format!("method {}", m.name),
                MethodKind::Static => format!("static {}", m.name),
            };
            let _ = write!(out, "  {} ({}, {})", head, m.params.len(), m.locals);
            if m.params.iter().any(|&k| k != ValueKind::Ref) {
                out.push_str(" :");
                for k in &m.params {
                    let _ = write!(out, " {}", k.keyword());
                }
            }
            out.push_str(" {\n");
            let targets: BTreeSet<usize> =
                m.code.iter().filter_map(|i| i.branch_target()).collect();
            for (pc, instr) in m.code.iter().enumerate() {
                if targets.contains(&pc) {
                    let _ = writeln!(out, "  L{pc}:");
                }
                let _ = writeln!(out, "    {}", format_instruction(program, instr));
            }
            out.push_str("  }\n");
        }
        out.push_str("}\n");
    }
    out
}

/// One instruction in source syntax; branch targets print as `L<pc>`.
pub(crate) fn format_instruction(program: &Program, instr: &Instruction) -> String {
    use Instruction::*;
    let op = instr.mnemonic();
    match *instr {
        Iconst(k) => format!("{op} {k}"),
        Load(r) | Store(r) => format!("{op} {r}"),
        New(c) | InstanceOf(c) => format!("{op} {}", program.class(c).name),
        InvokeSpecial(r) | InvokeVirtual(r) | InvokeStatic(r) => {
            let t = program.method(r.target);
            format!(
                "{op} {}.{} {}",
                program.class(r.class).name,
                t.name,
                t.params.len()
            )
        }
        GetField(r) | PutField(r) => {
            format!(
                "{op} {}.{}",
                program.class(r.class).name,
                program.field(r.field).name
            )
        }
        IfNull(t) | IfNonNull(t) | IfEq(t) | IfNe(t) | Goto(t) => format!("{op} L{t}"),
        _ => op.to_string(),
    }
}

impl Program {
    pub fn format_instruction(&self, instr: &Instruction) -> String {
        format_instruction(self, instr)
    }
}
