//! The stack bytecode IR: program representation, textual format, stack-shape
//! verification, class hierarchy queries, control flow, and reachability.

mod cfg;
mod hierarchy;
mod parse;
mod print;
mod reach;
mod verify;

use std::fmt;

use serde::Serialize;

pub use cfg::{build_cfg, forward_dataflow, Cfg, Edge, EdgeKind};
pub use hierarchy::Hierarchy;
pub use parse::parse_program;
pub use print::print_program;
pub use reach::reachable_methods;
pub use verify::{validate_stack_shapes, LocalKind, Shape, StackShapes, VerifyError};

/// Index of a class in [`Program::classes`]. `ClassId(0)` is always `Object`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ClassId(pub u32);

/// Index of a field in [`Program::fields`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct FieldId(pub u32);

/// Index of a method in [`Program::methods`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct MethodId(pub u32);

impl ClassId {
    pub const OBJECT: ClassId = ClassId(0);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl FieldId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl MethodId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A program point: instruction `pc` of `method`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ProgramPoint {
    pub method: MethodId,
    pub pc: usize,
}

impl ProgramPoint {
    pub fn new(method: MethodId, pc: usize) -> Self {
        ProgramPoint { method, pc }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ValueKind {
    Ref,
    Int,
}

impl ValueKind {
    pub fn keyword(self) -> &'static str {
        match self {
            ValueKind::Ref => "ref",
            ValueKind::Int => "int",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum MethodKind {
    Constructor,
    Static,
    Virtual,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassDecl {
    pub name: String,
    /// `None` only for `Object`.
    pub super_class: Option<ClassId>,
    pub fields: Vec<FieldId>,
    pub methods: Vec<MethodId>,
    pub ctor: Option<MethodId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldDecl {
    pub name: String,
    pub kind: ValueKind,
    pub class: ClassId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MethodDecl {
    pub class: ClassId,
    pub name: String,
    pub kind: MethodKind,
    /// Declared parameter kinds, excluding the receiver.
    pub params: Vec<ValueKind>,
    pub locals: u16,
    /// `Some(Ref)` if the method returns with `areturn`, `None` for `return`.
    pub returns: Option<ValueKind>,
    pub code: Vec<Instruction>,
}

impl MethodDecl {
    pub fn is_static(&self) -> bool {
        self.kind == MethodKind::Static
    }

    pub fn is_ctor(&self) -> bool {
        self.kind == MethodKind::Constructor
    }

    /// Local slot holding the first declared parameter.
    pub fn first_param_local(&self) -> u16 {
        if self.is_static() {
            0
        } else {
            1
        }
    }

    pub fn param_local(&self, index: usize) -> u16 {
        self.first_param_local() + index as u16
    }
}

/// A call operand: the class named in the instruction plus its statically
/// resolved target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MethodRef {
    pub class: ClassId,
    pub target: MethodId,
}

/// A field operand: the class named in the instruction plus the resolved field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FieldRef {
    pub class: ClassId,
    pub field: FieldId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Instruction {
    Nop,
    AconstNull,
    Iconst(u8),
    Load(u16),
    Store(u16),
    Dup,
    Pop,
    New(ClassId),
    InvokeSpecial(MethodRef),
    InvokeVirtual(MethodRef),
    InvokeStatic(MethodRef),
    GetField(FieldRef),
    PutField(FieldRef),
    InstanceOf(ClassId),
    IfNull(usize),
    IfNonNull(usize),
    IfEq(usize),
    IfNe(usize),
    Goto(usize),
    AReturn,
    Return,
    NewArray,
    AaLoad,
    AaStore,
    ArrayLength,
}

impl Instruction {
    pub fn mnemonic(&self) -> &'static str {
        use Instruction::*;
        match self {
            Nop => "nop",
            AconstNull => "aconst_null",
            Iconst(_) => "iconst",
            Load(_) => "load",
            Store(_) => "store",
            Dup => "dup",
            Pop => "pop",
            New(_) => "new",
            InvokeSpecial(_) => "invokespecial",
            InvokeVirtual(_) => "invokevirtual",
            InvokeStatic(_) => "invokestatic",
            GetField(_) => "getfield",
            PutField(_) => "putfield",
            InstanceOf(_) => "instanceof",
            IfNull(_) => "ifnull",
            IfNonNull(_) => "ifnonnull",
            IfEq(_) => "ifeq",
            IfNe(_) => "ifne",
            Goto(_) => "goto",
            AReturn => "areturn",
            Return => "return",
            NewArray => "newarray",
            AaLoad => "aaload",
            AaStore => "aastore",
            ArrayLength => "arraylength",
        }
    }

    pub fn branch_target(&self) -> Option<usize> {
        match *self {
            Instruction::IfNull(t)
            | Instruction::IfNonNull(t)
            | Instruction::IfEq(t)
            | Instruction::IfNe(t)
            | Instruction::Goto(t) => Some(t),
            _ => None,
        }
    }

    pub fn is_return(&self) -> bool {
        matches!(self, Instruction::Return | Instruction::AReturn)
    }
}

/// Dereference categories reported by the analysis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DerefCategory {
    FieldRead,
    FieldWrite,
    MethodCall,
    ArrayOperation,
}

impl DerefCategory {
    pub const ALL: [DerefCategory; 4] = [
        DerefCategory::FieldRead,
        DerefCategory::FieldWrite,
        DerefCategory::MethodCall,
        DerefCategory::ArrayOperation,
    ];

    pub fn label(self) -> &'static str {
        match self {
            DerefCategory::FieldRead => "field read",
            DerefCategory::FieldWrite => "field write",
            DerefCategory::MethodCall => "method call",
            DerefCategory::ArrayOperation => "array operation",
        }
    }
}

/// A whole program: `Object` plus the declared classes, with flat field and
/// method tables. Construct with [`parse_program`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    pub classes: Vec<ClassDecl>,
    pub fields: Vec<FieldDecl>,
    pub methods: Vec<MethodDecl>,
    pub entry: MethodId,
    hierarchy: Hierarchy,
}

impl Program {
    pub fn class(&self, id: ClassId) -> &ClassDecl {
        &self.classes[id.index()]
    }

    pub fn field(&self, id: FieldId) -> &FieldDecl {
        &self.fields[id.index()]
    }

    pub fn method(&self, id: MethodId) -> &MethodDecl {
        &self.methods[id.index()]
    }

    pub fn hierarchy(&self) -> &Hierarchy {
        &self.hierarchy
    }

    pub fn class_by_name(&self, name: &str) -> Option<ClassId> {
        self.classes
            .iter()
            .position(|c| c.name == name)
            .map(|i| ClassId(i as u32))
    }

    /// Looks up a method declared exactly in `class` by name and arity.
    pub fn method_by_name(&self, class: &str, name: &str, arity: usize) -> Option<MethodId> {
        let cid = self.class_by_name(class)?;
        self.class(cid).methods.iter().copied().find(|&m| {
            let decl = self.method(m);
            decl.name == name && decl.params.len() == arity
        })
    }

    pub fn field_by_name(&self, class: &str, name: &str) -> Option<FieldId> {
        let cid = self.class_by_name(class)?;
        self.class(cid)
            .fields
            .iter()
            .copied()
            .find(|&f| self.field(f).name == name)
    }

    pub fn method_name(&self, id: MethodId) -> String {
        let m = self.method(id);
        format!("{}.{}/{}", self.class(m.class).name, m.name, m.params.len())
    }

    pub fn field_name(&self, id: FieldId) -> String {
        let f = self.field(id);
        format!("{}.{}", self.class(f.class).name, f.name)
    }

    pub fn point_name(&self, point: ProgramPoint) -> String {
        format!("{}@{}", self.method_name(point.method), point.pc)
    }

    pub fn method_ids(&self) -> impl Iterator<Item = MethodId> + '_ {
        (0..self.methods.len()).map(|i| MethodId(i as u32))
    }

    pub fn class_ids(&self) -> impl Iterator<Item = ClassId> + '_ {
        (0..self.classes.len()).map(|i| ClassId(i as u32))
    }

    /// Reference-kinded fields declared exactly in `class`.
    pub fn ref_fields_of(&self, class: ClassId) -> impl Iterator<Item = FieldId> + '_ {
        self.class(class)
            .fields
            .iter()
            .copied()
            .filter(move |&f| self.field(f).kind == ValueKind::Ref)
    }

    /// Total instruction count over all methods (including `Object`'s constructor).
    pub fn instruction_count(&self) -> usize {
        self.methods.iter().map(|m| m.code.len()).sum()
    }

    /// Runtime dispatch: the implementation of `sig`'s name/arity seen by an
    /// object of class `receiver`, searching upward from `receiver`.
    pub fn dispatch(&self, receiver: ClassId, sig: MethodId) -> Option<MethodId> {
        let wanted = self.method(sig);
        let mut cur = Some(receiver);
        while let Some(c) = cur {
            let found = self.class(c).methods.iter().copied().find(|&m| {
                let d = self.method(m);
                d.kind == MethodKind::Virtual
                    && d.name == wanted.name
                    && d.params.len() == wanted.params.len()
            });
            if found.is_some() {
                return found;
            }
            cur = self.class(c).super_class;
        }
        None
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_program(self))
    }
}

/// Errors from [`parse_program`]. Positions are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IrError {
    #[error("{line}:{col}: syntax error: {msg}")]
    Syntax {
        line: usize,
        col: usize,
        msg: String,
    },
    #[error("{line}:{col}: unresolved {what} `{name}`")]
    Unresolved {
        line: usize,
        col: usize,
        what: &'static str,
        name: String,
    },
    #[error("{line}:{col}: duplicate {what} `{name}`")]
    Duplicate {
        line: usize,
        col: usize,
        what: &'static str,
        name: String,
    },
    #[error("class hierarchy cycle through `{0}`")]
    Cycle(String),
    #[error("{line}:{col}: {msg}")]
    Invalid {
        line: usize,
        col: usize,
        msg: String,
    },
}

impl IrError {
    /// Line of the diagnostic, when it has one.
    pub fn line(&self) -> Option<usize> {
        match self {
            IrError::Syntax { line, .. }
            | IrError::Unresolved { line, .. }
            | IrError::Duplicate { line, .. }
            | IrError::Invalid { line, .. } => Some(*line),
            IrError::Cycle(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LoadError {
    #[error(transparent)]
    Parse(#[from] IrError),
    #[error("invalid bytecode: {0}")]
    Verify(#[from] VerifyError),
}

/// Parses and verifies; the analyses and the interpreter assume both passed.
pub fn load_program(text: &str) -> Result<Program, LoadError> {
    let program = parse_program(text)?;
    validate_stack_shapes(&program)?;
    Ok(program)
}
