//! Text → [`Program`]. Tokenizing is whitespace-insensitive, so a whole class
//! may sit on one line; the printer emits one instruction per line.

use std::collections::HashMap;

use super::{
    ClassDecl, ClassId, FieldDecl, FieldId, FieldRef, Hierarchy, Instruction, IrError, MethodDecl,
    MethodId, MethodKind, MethodRef, Program, ValueKind,
};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Word(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Comma,
    Colon,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Pos {
    line: usize,
    col: usize,
}

fn tokenize(text: &str) -> Vec<(Tok, Pos)> {
    let mut out = Vec::new();
    for (li, line) in text.lines().enumerate() {
        let line = match line.find("//") {
            Some(i) => &line[..i],
            None => line,
        };
        let mut chars = line.char_indices().peekable();
        while let Some(&(ci, ch)) = chars.peek() {
            let pos = Pos {
                line: li + 1,
                col: line[..ci].chars().count() + 1,
            };
            let punct = match ch {
                '{' => Some(Tok::LBrace),
                '}' => Some(Tok::RBrace),
                '(' => Some(Tok::LParen),
                ')' => Some(Tok::RParen),
                ',' => Some(Tok::Comma),
                ':' => Some(Tok::Colon),
                _ => None,
            };
            if let Some(t) = punct {
                out.push((t, pos));
                chars.next();
            } else if ch.is_whitespace() {
                chars.next();
            } else {
                let mut word = String::new();
                while let Some(&(_, c)) = chars.peek() {
                    if c.is_whitespace() || "{}(),:".contains(c) {
                        break;
                    }
                    word.push(c);
                    chars.next();
                }
                out.push((Tok::Word(word), pos));
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// syntax tree

struct ClassAst {
    name: String,
    super_name: String,
    pos: Pos,
    super_pos: Pos,
    fields: Vec<(String, ValueKind, Pos)>,
    methods: Vec<MethodAst>,
}

struct MethodAst {
    kind: MethodKind,
    name: String,
    pos: Pos,
    nparams: usize,
    nlocals: usize,
    param_kinds: Option<Vec<ValueKind>>,
    body: Vec<Item>,
}

enum Item {
    Label(String, Pos),
    Instr(InstrAst, Pos),
}

enum InstrAst {
    Plain(Instruction),
    Iconst(i64),
    Load(i64),
    Store(i64),
    New(String),
    InstanceOf(String),
    Invoke(MethodKind, String, String, i64),
    GetField(String, String),
    PutField(String, String),
    Branch(&'static str, String),
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    i: usize,
    end: Pos,
}

type PResult<T> = Result<T, IrError>;

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.i).map(|(t, _)| t)
    }

    fn pos(&self) -> Pos {
        self.toks.get(self.i).map(|(_, p)| *p).unwrap_or(self.end)
    }

    fn err<T>(&self, msg: impl Into<String>) -> PResult<T> {
        let p = self.pos();
        Err(IrError::Syntax {
            line: p.line,
            col: p.col,
            msg: msg.into(),
        })
    }

    fn describe(&self) -> String {
        match self.peek() {
            None => "end of input".to_string(),
            Some(Tok::Word(w)) => format!("`{w}`"),
            Some(t) => format!("`{}`", tok_text(t)),
        }
    }

    fn expect(&mut self, want: Tok) -> PResult<Pos> {
        if self.peek() == Some(&want) {
            let p = self.pos();
            self.i += 1;
            Ok(p)
        } else {
            self.err(format!(
                "expected `{}`, found {}",
                tok_text(&want),
                self.describe()
            ))
        }
    }

    fn word(&mut self, what: &str) -> PResult<(String, Pos)> {
        match self.peek() {
            Some(Tok::Word(w)) => {
                let w = w.clone();
                let p = self.pos();
                self.i += 1;
                Ok((w, p))
            }
            _ => self.err(format!("expected {what}, found {}", self.describe())),
        }
    }

    fn keyword(&mut self, kw: &str) -> PResult<()> {
        match self.peek() {
            Some(Tok::Word(w)) if w == kw => {
                self.i += 1;
                Ok(())
            }
            _ => self.err(format!("expected `{kw}`, found {}", self.describe())),
        }
    }

    fn number(&mut self, what: &str) -> PResult<i64> {
        let p = self.pos();
        let (w, _) = self.word(what)?;
        w.parse::<i64>().map_err(|_| IrError::Syntax {
            line: p.line,
            col: p.col,
            msg: format!("expected {what}, found `{w}`"),
        })
    }

    fn program(&mut self) -> PResult<Vec<ClassAst>> {
        let mut classes = Vec::new();
        while self.peek().is_some() {
            classes.push(self.class()?);
        }
        Ok(classes)
    }

    fn class(&mut self) -> PResult<ClassAst> {
        self.keyword("class")?;
        let (name, pos) = self.word("class name")?;
        self.keyword("extends")?;
        let (super_name, super_pos) = self.word("superclass name")?;
        self.expect(Tok::LBrace)?;
        let mut class = ClassAst {
            name,
            super_name,
            pos,
            super_pos,
            fields: Vec::new(),
            methods: Vec::new(),
        };
        loop {
            match self.peek() {
                Some(Tok::RBrace) => {
                    self.i += 1;
                    return Ok(class);
                }
                Some(Tok::Word(w)) => match w.as_str() {
                    "field" => {
                        self.i += 1;
                        let (fname, fpos) = self.word("field name")?;
                        let kind = self.kind()?;
                        class.fields.push((fname, kind, fpos));
                    }
                    "ctor" => {
                        let pos = self.pos();
                        self.i += 1;
                        let m = self.method_rest(MethodKind::Constructor, "<init>".into(), pos)?;
                        class.methods.push(m);
                    }
                    "method" | "static" => {
                        let kind = if w == "method" {
                            MethodKind::Virtual
                        } else {
                            MethodKind::Static
                        };
                        self.i += 1;
                        let (mname, pos) = self.word("method name")?;
                        let m = self.method_rest(kind, mname, pos)?;
                        class.methods.push(m);
                    }
                    _ => {
                        return self
                            .err(format!("expected class member, found {}", self.describe()))
                    }
                },
                _ => {
                    return self.err(format!(
                        "expected class member or `}}`, found {}",
                        self.describe()
                    ))
                }
            }
        }
    }

    fn kind(&mut self) -> PResult<ValueKind> {
        let p = self.pos();
        let (w, _) = self.word("`ref` or `int`")?;
        match w.as_str() {
            "ref" => Ok(ValueKind::Ref),
            "int" => Ok(ValueKind::Int),
            _ => Err(IrError::Syntax {
                line: p.line,
                col: p.col,
                msg: format!("expected `ref` or `int`, found `{w}`"),
            }),
        }
    }

    fn method_rest(&mut self, kind: MethodKind, name: String, pos: Pos) -> PResult<MethodAst> {
        self.expect(Tok::LParen)?;
        let nparams = self.number("parameter count")?;
        self.expect(Tok::Comma)?;
        let nlocals = self.number("local count")?;
        self.expect(Tok::RParen)?;
        if !(0..=u16::MAX as i64 / 2).contains(&nparams)
            || !(0..=u16::MAX as i64 / 2).contains(&nlocals)
        {
            return Err(IrError::Invalid {
                line: pos.line,
                col: pos.col,
                msg: "parameter/local count out of range".into(),
            });
        }
        let param_kinds = if self.peek() == Some(&Tok::Colon) {
            self.i += 1;
            let mut kinds = Vec::new();
            while matches!(self.peek(), Some(Tok::Word(_))) {
                kinds.push(self.kind()?);
            }
            Some(kinds)
        } else {
            None
        };
        self.expect(Tok::LBrace)?;
        let mut body = Vec::new();
        loop {
            match self.peek() {
                Some(Tok::RBrace) => {
                    self.i += 1;
                    break;
                }
                Some(Tok::Word(_)) => {
                    let (w, p) = self.word("instruction")?;
                    if self.peek() == Some(&Tok::Colon) {
                        self.i += 1;
                        body.push(Item::Label(w, p));
                    } else {
                        let instr = self.instr(&w, p)?;
                        body.push(Item::Instr(instr, p));
                    }
                }
                _ => {
                    return self.err(format!(
                        "expected instruction, label or `}}`, found {}",
                        self.describe()
                    ))
                }
            }
        }
        Ok(MethodAst {
            kind,
            name,
            pos,
            nparams: nparams as usize,
            nlocals: nlocals as usize,
            param_kinds,
            body,
        })
    }

    fn dotted(&mut self, what: &str) -> PResult<(String, String)> {
        let p = self.pos();
        let (w, _) = self.word(what)?;
        match w.split_once('.') {
            Some((c, m)) if !c.is_empty() && !m.is_empty() => Ok((c.to_string(), m.to_string())),
            _ => Err(IrError::Syntax {
                line: p.line,
                col: p.col,
                msg: format!("expected {what} of the form `Class.name`, found `{w}`"),
            }),
        }
    }

    fn instr(&mut self, op: &str, p: Pos) -> PResult<InstrAst> {
        use Instruction as I;
        let plain = |i| Ok(InstrAst::Plain(i));
        match op {
            "nop" => plain(I::Nop),
            "aconst_null" => plain(I::AconstNull),
            "dup" => plain(I::Dup),
            "pop" => plain(I::Pop),
            "areturn" => plain(I::AReturn),
            "return" => plain(I::Return),
            "newarray" => plain(I::NewArray),
            "aaload" => plain(I::AaLoad),
            "aastore" => plain(I::AaStore),
            "arraylength" => plain(I::ArrayLength),
            "iconst" => Ok(InstrAst::Iconst(self.number("integer constant")?)),
            "load" => Ok(InstrAst::Load(self.number("local index")?)),
            "store" => Ok(InstrAst::Store(self.number("local index")?)),
            "new" => Ok(InstrAst::New(self.word("class name")?.0)),
            "instanceof" => Ok(InstrAst::InstanceOf(self.word("class name")?.0)),
            "invokespecial" | "invokevirtual" | "invokestatic" => {
                let kind = match op {
                    "invokespecial" => MethodKind::Constructor,
                    "invokevirtual" => MethodKind::Virtual,
                    _ => MethodKind::Static,
                };
                let (c, m) = self.dotted("method reference")?;
                let n = self.number("argument count")?;
                Ok(InstrAst::Invoke(kind, c, m, n))
            }
            "getfield" => {
                let (c, f) = self.dotted("field reference")?;
                Ok(InstrAst::GetField(c, f))
            }
            "putfield" => {
                let (c, f) = self.dotted("field reference")?;
                Ok(InstrAst::PutField(c, f))
            }
            "ifnull" | "ifnonnull" | "ifeq" | "ifne" | "goto" => {
                let kw: &'static str = match op {
                    "ifnull" => "ifnull",
                    "ifnonnull" => "ifnonnull",
                    "ifeq" => "ifeq",
                    "ifne" => "ifne",
                    _ => "goto",
                };
                Ok(InstrAst::Branch(kw, self.word("label")?.0))
            }
            _ => Err(IrError::Syntax {
                line: p.line,
                col: p.col,
                msg: format!("unknown instruction `{op}`"),
            }),
        }
    }
}

fn tok_text(t: &Tok) -> &str {
    match t {
        Tok::Word(w) => w,
        Tok::LBrace => "{",
        Tok::RBrace => "}",
        Tok::LParen => "(",
        Tok::RParen => ")",
        Tok::Comma => ",",
        Tok::Colon => ":",
    }
}

// ---------------------------------------------------------------------------
// resolution

fn invalid(pos: Pos, msg: impl Into<String>) -> IrError {
    IrError::Invalid {
        line: pos.line,
        col: pos.col,
        msg: msg.into(),
    }
}

fn unresolved(pos: Pos, what: &'static str, name: impl Into<String>) -> IrError {
    IrError::Unresolved {
        line: pos.line,
        col: pos.col,
        what,
        name: name.into(),
    }
}

/// Parses and resolves a program in the textual IR format.
pub fn parse_program(text: &str) -> Result<Program, IrError> {
    let toks = tokenize(text);
    let end = Pos {
        line: text.lines().count().max(1),
        col: 1,
    };
    let mut parser = Parser { toks, i: 0, end };
    let asts = parser.program()?;
    resolve(asts)
}

fn resolve(asts: Vec<ClassAst>) -> Result<Program, IrError> {
    // classes
    let mut class_ids: HashMap<String, ClassId> = HashMap::new();
    class_ids.insert("Object".into(), ClassId::OBJECT);
    for (i, c) in asts.iter().enumerate() {
        if class_ids
            .insert(c.name.clone(), ClassId(i as u32 + 1))
            .is_some()
        {
            return Err(IrError::Duplicate {
                line: c.pos.line,
                col: c.pos.col,
                what: "class",
                name: c.name.clone(),
            });
        }
    }
    let mut classes = vec![ClassDecl {
        name: "Object".into(),
        super_class: None,
        fields: Vec::new(),
        methods: Vec::new(),
        ctor: None,
    }];
    for c in &asts {
        let sup = *class_ids
            .get(&c.super_name)
            .ok_or_else(|| unresolved(c.super_pos, "class", &c.super_name))?;
        classes.push(ClassDecl {
            name: c.name.clone(),
            super_class: Some(sup),
            fields: Vec::new(),
            methods: Vec::new(),
            ctor: None,
        });
    }
    for start in 1..classes.len() {
        let mut cur = classes[start].super_class;
        let mut steps = 0;
        while let Some(c) = cur {
            steps += 1;
            if c.index() == start || steps > classes.len() {
                return Err(IrError::Cycle(classes[start].name.clone()));
            }
            cur = classes[c.index()].super_class;
        }
    }

    // fields
    let mut fields = Vec::new();
    for (i, c) in asts.iter().enumerate() {
        let cid = ClassId(i as u32 + 1);
        for (name, kind, pos) in &c.fields {
            let dup = classes[cid.index()].fields.iter().any(|f: &FieldId| {
                fields.get(f.index()).map(|d: &FieldDecl| &d.name) == Some(name)
            });
            if dup {
                return Err(IrError::Duplicate {
                    line: pos.line,
                    col: pos.col,
                    what: "field",
                    name: name.clone(),
                });
            }
            let fid = FieldId(fields.len() as u32);
            fields.push(FieldDecl {
                name: name.clone(),
                kind: *kind,
                class: cid,
            });
            classes[cid.index()].fields.push(fid);
        }
    }

    // method headers
    let mut methods = vec![MethodDecl {
        class: ClassId::OBJECT,
        name: "<init>".into(),
        kind: MethodKind::Constructor,
        params: Vec::new(),
        locals: 1,
        returns: None,
        code: vec![Instruction::Return],
    }];
    classes[0].methods.push(MethodId(0));
    classes[0].ctor = Some(MethodId(0));
    let mut method_asts: Vec<Option<&MethodAst>> = vec![None];
    for (i, c) in asts.iter().enumerate() {
        let cid = ClassId(i as u32 + 1);
        for m in &c.methods {
            let params = match &m.param_kinds {
                Some(k) if k.len() != m.nparams => {
                    return Err(invalid(
                        m.pos,
                        format!(
                            "{} parameter kinds given for {} parameters",
                            k.len(),
                            m.nparams
                        ),
                    ))
                }
                Some(k) => k.clone(),
                None => vec![ValueKind::Ref; m.nparams],
            };
            let dup = classes[cid.index()].methods.iter().any(|&o| {
                let o = &methods[o.index()];
                o.name == m.name && o.params.len() == params.len()
            });
            if dup || (m.kind == MethodKind::Constructor && classes[cid.index()].ctor.is_some()) {
                return Err(IrError::Duplicate {
                    line: m.pos.line,
                    col: m.pos.col,
                    what: "method",
                    name: m.name.clone(),
                });
            }
            let receiver = usize::from(m.kind != MethodKind::Static);
            if m.nlocals < m.nparams + receiver {
                return Err(invalid(
                    m.pos,
                    format!(
                        "`{}` declares {} locals but needs {}",
                        m.name,
                        m.nlocals,
                        m.nparams + receiver
                    ),
                ));
            }
            if m.kind != MethodKind::Constructor && m.name == "<init>" {
                return Err(invalid(m.pos, "`<init>` is reserved for constructors"));
            }
            let mid = MethodId(methods.len() as u32);
            if m.kind == MethodKind::Constructor {
                classes[cid.index()].ctor = Some(mid);
            }
            classes[cid.index()].methods.push(mid);
            methods.push(MethodDecl {
                class: cid,
                name: m.name.clone(),
                kind: m.kind,
                params,
                locals: m.nlocals as u16,
                returns: None,
                code: Vec::new(),
            });
            method_asts.push(Some(m));
        }
    }

    // entry
    let mains: Vec<MethodId> = methods
        .iter()
        .enumerate()
        .filter(|(_, m)| m.kind == MethodKind::Static && m.name == "main")
        .map(|(i, _)| MethodId(i as u32))
        .collect();
    let entry = match mains.as_slice() {
        [one] => *one,
        [] => {
            return Err(IrError::Invalid {
                line: 1,
                col: 1,
                msg: "no `static main` entry method".into(),
            })
        }
        [_, second, ..] => {
            let pos = method_asts[second.index()]
                .map(|m| m.pos)
                .unwrap_or(Pos { line: 1, col: 1 });
            return Err(IrError::Duplicate {
                line: pos.line,
                col: pos.col,
                what: "entry method",
                name: "main".into(),
            });
        }
    };

    // bodies
    let resolver = Resolver {
        class_ids: &class_ids,
        classes: &classes,
        fields: &fields,
        methods: &methods,
    };
    let mut bodies = Vec::with_capacity(methods.len());
    for (mi, ast) in method_asts.iter().enumerate() {
        match ast {
            None => bodies.push(None),
            Some(ast) => bodies.push(Some(resolver.body(MethodId(mi as u32), ast)?)),
        }
    }
    for (mi, body) in bodies.into_iter().enumerate() {
        if let Some((code, returns)) = body {
            methods[mi].code = code;
            methods[mi].returns = returns;
        }
    }

    // constructor preludes
    for (mi, m) in methods.iter().enumerate().skip(1) {
        if m.kind != MethodKind::Constructor {
            continue;
        }
        let pos = method_asts[mi]
            .map(|a| a.pos)
            .unwrap_or(Pos { line: 1, col: 1 });
        if m.returns.is_some() {
            return Err(invalid(pos, "constructors must return with `return`"));
        }
        let sup = classes[m.class.index()]
            .super_class
            .expect("declared classes have a superclass");
        if sup == ClassId::OBJECT {
            continue;
        }
        let sup_ctor = classes[sup.index()].ctor.ok_or_else(|| {
            invalid(
                pos,
                format!(
                    "superclass `{}` has no constructor to call",
                    classes[sup.index()].name
                ),
            )
        })?;
        let ok = matches!(
            m.code.as_slice(),
            [Instruction::Load(0), Instruction::InvokeSpecial(r), ..] if r.target == sup_ctor
        ) && methods[sup_ctor.index()].params.is_empty();
        if !ok {
            return Err(invalid(
                pos,
                format!(
                    "constructor of `{}` must begin with `load 0; invokespecial {}.<init> 0`",
                    classes[m.class.index()].name,
                    classes[sup.index()].name
                ),
            ));
        }
    }

    let hierarchy = Hierarchy::build(&classes, &methods);
    Ok(Program {
        classes,
        fields,
        methods,
        entry,
        hierarchy,
    })
}

struct Resolver<'a> {
    class_ids: &'a HashMap<String, ClassId>,
    classes: &'a [ClassDecl],
    fields: &'a [FieldDecl],
    methods: &'a [MethodDecl],
}

impl Resolver<'_> {
    fn class(&self, name: &str, pos: Pos) -> Result<ClassId, IrError> {
        self.class_ids
            .get(name)
            .copied()
            .ok_or_else(|| unresolved(pos, "class", name))
    }

    fn chain(&self, start: ClassId) -> impl Iterator<Item = ClassId> + '_ {
        std::iter::successors(Some(start), move |c| self.classes[c.index()].super_class)
    }

    fn field(&self, class: &str, name: &str, pos: Pos) -> Result<FieldRef, IrError> {
        let cid = self.class(class, pos)?;
        for c in self.chain(cid) {
            for &f in &self.classes[c.index()].fields {
                if self.fields[f.index()].name == name {
                    return Ok(FieldRef {
                        class: cid,
                        field: f,
                    });
                }
            }
        }
        Err(unresolved(pos, "field", format!("{class}.{name}")))
    }

    fn method(
        &self,
        kind: MethodKind,
        class: &str,
        name: &str,
        nargs: i64,
        pos: Pos,
    ) -> Result<MethodRef, IrError> {
        let cid = self.class(class, pos)?;
        let missing = || unresolved(pos, "method", format!("{class}.{name}/{nargs}"));
        if kind == MethodKind::Constructor {
            if name != "<init>" {
                return Err(invalid(pos, "invokespecial may only call `<init>`"));
            }
            let ctor = self.classes[cid.index()].ctor.ok_or_else(missing)?;
            if self.methods[ctor.index()].params.len() as i64 != nargs {
                return Err(missing());
            }
            return Ok(MethodRef {
                class: cid,
                target: ctor,
            });
        }
        for c in self.chain(cid) {
            for &m in &self.classes[c.index()].methods {
                let d = &self.methods[m.index()];
                if d.kind == kind && d.name == name && d.params.len() as i64 == nargs {
                    return Ok(MethodRef {
                        class: cid,
                        target: m,
                    });
                }
            }
        }
        Err(missing())
    }

    fn body(
        &self,
        mid: MethodId,
        ast: &MethodAst,
    ) -> Result<(Vec<Instruction>, Option<ValueKind>), IrError> {
        let decl = &self.methods[mid.index()];
        let mut labels: HashMap<&str, usize> = HashMap::new();
        let mut pc = 0usize;
        for item in &ast.body {
            match item {
                Item::Label(name, pos) => {
                    if labels.insert(name, pc).is_some() {
                        return Err(IrError::Duplicate {
                            line: pos.line,
                            col: pos.col,
                            what: "label",
                            name: name.clone(),
                        });
                    }
                }
                Item::Instr(..) => pc += 1,
            }
        }
        let len = pc;
        if len == 0 {
            return Err(invalid(
                ast.pos,
                format!("method `{}` has an empty body", ast.name),
            ));
        }
        let local = |v: i64, pos: Pos| -> Result<u16, IrError> {
            if v < 0 || v >= ast.nlocals as i64 {
                Err(invalid(
                    pos,
                    format!("local {v} out of range (method has {} locals)", ast.nlocals),
                ))
            } else {
                Ok(v as u16)
            }
        };
        let mut code = Vec::with_capacity(len);
        let (mut has_areturn, mut has_return) = (false, false);
        for item in &ast.body {
            let Item::Instr(instr, pos) = item else {
                continue;
            };
            let pos = *pos;
            let resolved = match instr {
                InstrAst::Plain(i) => *i,
                InstrAst::Iconst(k) => match k {
                    0 | 1 => Instruction::Iconst(*k as u8),
                    _ => return Err(invalid(pos, format!("integer constant {k} is not 0 or 1"))),
                },
                InstrAst::Load(r) => Instruction::Load(local(*r, pos)?),
                InstrAst::Store(r) => {
                    let r = local(*r, pos)?;
                    if r == 0 && decl.kind != MethodKind::Static {
                        return Err(invalid(
                            pos,
                            "local 0 holds `this` and cannot be overwritten",
                        ));
                    }
                    Instruction::Store(r)
                }
                InstrAst::New(c) => Instruction::New(self.class(c, pos)?),
                InstrAst::InstanceOf(c) => Instruction::InstanceOf(self.class(c, pos)?),
                InstrAst::Invoke(kind, c, m, n) => {
                    let r = self.method(*kind, c, m, *n, pos)?;
                    match kind {
                        MethodKind::Constructor => Instruction::InvokeSpecial(r),
                        MethodKind::Virtual => Instruction::InvokeVirtual(r),
                        MethodKind::Static => Instruction::InvokeStatic(r),
                    }
                }
                InstrAst::GetField(c, f) => Instruction::GetField(self.field(c, f, pos)?),
                InstrAst::PutField(c, f) => Instruction::PutField(self.field(c, f, pos)?),
                InstrAst::Branch(kw, label) => {
                    let target = *labels
                        .get(label.as_str())
                        .ok_or_else(|| unresolved(pos, "label", label))?;
                    if target >= len {
                        return Err(invalid(
                            pos,
                            format!("label `{label}` points past the end of the method"),
                        ));
                    }
                    match *kw {
                        "ifnull" => Instruction::IfNull(target),
                        "ifnonnull" => Instruction::IfNonNull(target),
                        "ifeq" => Instruction::IfEq(target),
                        "ifne" => Instruction::IfNe(target),
                        _ => Instruction::Goto(target),
                    }
                }
            };
            has_areturn |= resolved == Instruction::AReturn;
            has_return |= resolved == Instruction::Return;
            code.push(resolved);
        }
        if has_areturn && has_return {
            return Err(invalid(
                ast.pos,
                format!("method `{}` mixes `return` and `areturn`", ast.name),
            ));
        }
        let returns = has_areturn.then_some(ValueKind::Ref);
        Ok((code, returns))
    }
}
