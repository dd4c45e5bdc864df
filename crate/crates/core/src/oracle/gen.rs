//! Random well-typed programs for soundness fuzzing and scaling runs.
//!
//! Programs are built over a small typed model (class, array and integer
//! locals), printed as text and parsed back. Calls only go from a lower to
//! a strictly higher rank, so every execution terminates unless a field loop
//! runs around a cycle.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ir::{parse_program, Program};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GenParams {
    pub classes: usize,
    /// Reference fields per class, at most.
    pub max_fields: usize,
    pub methods_per_class: usize,
    pub statics: usize,
    /// Statements per method body.
    pub stmts: usize,
    pub main_stmts: usize,
    /// Extra reference temporaries per body, at most.
    pub temps: usize,
    /// Constructors may pass `this` to virtual methods.
    pub ctor_escape: bool,
}

impl GenParams {
    /// Mostly under 50 instructions, small enough for naive fixpoint iteration.
    pub fn micro() -> GenParams {
        GenParams {
            classes: 1,
            max_fields: 1,
            methods_per_class: 1,
            statics: 0,
            stmts: 1,
            main_stmts: 1,
            temps: 0,
            ctor_escape: true,
        }
    }

    pub fn tiny() -> GenParams {
        GenParams {
            classes: 2,
            max_fields: 2,
            methods_per_class: 1,
            statics: 1,
            stmts: 3,
            main_stmts: 4,
            temps: 4,
            ctor_escape: true,
        }
    }

    pub fn small() -> GenParams {
        GenParams {
            classes: 4,
            max_fields: 3,
            methods_per_class: 2,
            statics: 2,
            stmts: 5,
            main_stmts: 8,
            temps: 4,
            ctor_escape: true,
        }
    }

    /// Roughly `instructions` instructions over `classes` classes.
    /// Shape for roughly `instructions` over `classes` classes. Use
    /// [`gen_program_sized`] to land close to the target.
    pub fn scaled(instructions: usize, classes: usize) -> GenParams {
        let classes = classes.max(1);
        let per_class = instructions / classes;
        let methods_per_class = (per_class / 150).clamp(1, 3);
        let statics = (classes / 8).max(1);
        let temps = if per_class < 100 { 1 } else { 3 };
        let bodies = classes * (methods_per_class + 1) + statics;
        GenParams {
            classes,
            max_fields: 2,
            methods_per_class,
            statics,
            stmts: (instructions / (bodies * 7)).max(1),
            main_stmts: 20,
            temps,
            ctor_escape: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Ty {
    /// Plain `Object`; only main's reference parameter.
    Top,
    Obj(usize),
    Arr(usize),
    Int,
}

impl Ty {
    fn kind(self) -> &'static str {
        match self {
            Ty::Int => "int",
            _ => "ref",
        }
    }
}

struct GField {
    name: String,
    ty: Ty,
}

struct GClass {
    parent: Option<usize>,
    depth: usize,
    fields: Vec<GField>,
    int_field: bool,
    ctor_params: Vec<Ty>,
    ctor_rank: f64,
    /// Families this class implements (declared or overriding).
    implements: Vec<usize>,
}

/// A virtual method and all its overriders: one name, one signature, one rank.
struct Family {
    owner: usize,
    params: Vec<Ty>,
    ret: Option<Ty>,
    rank: f64,
}

struct Static {
    params: Vec<Ty>,
    ret: Option<Ty>,
    rank: f64,
}

struct Model {
    classes: Vec<GClass>,
    families: Vec<Family>,
    statics: Vec<Static>,
    /// Field of class 0 nobody writes.
    unwritten: Option<usize>,
}

fn cname(c: usize) -> String {
    format!("C{c}")
}

impl Model {
    fn is_sub(&self, mut a: usize, b: usize) -> bool {
        loop {
            if a == b {
                return true;
            }
            match self.classes[a].parent {
                Some(p) => a = p,
                None => return false,
            }
        }
    }

    fn assignable(&self, from: Ty, to: Ty) -> bool {
        match (from, to) {
            (Ty::Obj(a), Ty::Obj(b)) => self.is_sub(a, b),
            (a, b) => a == b,
        }
    }

    /// (declaring class, field index) for every field visible on `c`.
    fn visible_fields(&self, c: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut cur = Some(c);
        while let Some(k) = cur {
            out.extend((0..self.classes[k].fields.len()).map(|i| (k, i)));
            cur = self.classes[k].parent;
        }
        out
    }

    fn visible_families(&self, c: usize) -> Vec<usize> {
        (0..self.families.len())
            .filter(|&f| self.is_sub(c, self.families[f].owner))
            .collect()
    }

    fn has_subclass(&self, c: usize) -> bool {
        self.classes.iter().any(|k| k.parent == Some(c))
    }
}

fn build_model(rng: &mut ChaCha8Rng, params: &GenParams) -> Model {
    let n = params.classes.max(1);
    let mut classes: Vec<GClass> = Vec::with_capacity(n);
    for i in 0..n {
        let parent = if i > 0 && rng.gen_bool(0.5) {
            let candidates: Vec<usize> = (0..i).filter(|&k| classes[k].depth < 4).collect();
            candidates.choose(rng).copied()
        } else {
            None
        };
        let depth = parent.map_or(1, |p| classes[p].depth + 1);
        let ctor_rank = match parent {
            Some(p) => classes[p].ctor_rank * rng.gen_range(0.5..0.95),
            None => rng.gen_range(0.5..1.0),
        };
        classes.push(GClass {
            parent,
            depth,
            fields: Vec::new(),
            int_field: rng.gen_bool(0.2),
            ctor_params: Vec::new(),
            ctor_rank,
            implements: Vec::new(),
        });
    }
    let random_ref = |rng: &mut ChaCha8Rng| {
        let c = rng.gen_range(0..n);
        if rng.gen_bool(0.15) {
            Ty::Arr(c)
        } else {
            Ty::Obj(c)
        }
    };
    for (i, class) in classes.iter_mut().enumerate() {
        let count = rng.gen_range(usize::from(i == 0)..=params.max_fields.max(1));
        for j in 0..count {
            // a field typed by its own class makes linked structures
            let ty = if rng.gen_bool(0.3) {
                Ty::Obj(i)
            } else {
                random_ref(rng)
            };
            class.fields.push(GField {
                name: format!("f{j}"),
                ty,
            });
        }
    }
    let mut model = Model {
        classes,
        families: Vec::new(),
        statics: Vec::new(),
        unwritten: Some(0),
    };
    for i in 0..n {
        if !model.has_subclass(i) && rng.gen_bool(0.5) {
            let k = rng.gen_range(1..=2);
            model.classes[i].ctor_params = (0..k).map(|_| random_ref(rng)).collect();
        }
    }
    for i in 0..n {
        for _ in 0..params.methods_per_class {
            let mut ps: Vec<Ty> = (0..rng.gen_range(0..=2))
                .map(|_| {
                    if rng.gen_bool(0.2) {
                        Ty::Int
                    } else {
                        random_ref(rng)
                    }
                })
                .collect();
            let escape = params.ctor_escape && rng.gen_bool(0.4);
            let rank = if escape {
                ps.insert(0, Ty::Obj(i));
                let r = model.classes[i].ctor_rank;
                r + (1.0 - r) * rng.gen_range(0.05..1.0)
            } else {
                rng.gen_range(0.0..1.0)
            };
            let ret = rng.gen_bool(0.5).then(|| random_ref(rng));
            model.families.push(Family {
                owner: i,
                params: ps,
                ret,
                rank,
            });
            let id = model.families.len() - 1;
            model.classes[i].implements.push(id);
        }
    }
    for i in 0..n {
        let Some(p) = model.classes[i].parent else {
            continue;
        };
        for f in model.visible_families(p) {
            if rng.gen_bool(0.35) {
                model.classes[i].implements.push(f);
            }
        }
    }
    for _ in 0..params.statics {
        let ps = (0..rng.gen_range(0..=2))
            .map(|_| {
                if rng.gen_bool(0.2) {
                    Ty::Int
                } else {
                    random_ref(rng)
                }
            })
            .collect();
        let ret = rng.gen_bool(0.5).then(|| random_ref(rng));
        model.statics.push(Static {
            params: ps,
            ret,
            rank: rng.gen_range(0.0..1.0),
        });
    }
    model
}

struct Body<'a> {
    m: &'a Model,
    rng: &'a mut ChaCha8Rng,
    rank: f64,
    /// Set in constructor bodies.
    ctor_of: Option<usize>,
    vars: Vec<Ty>,
    /// Locals below this index are never stored to.
    first_store: usize,
    code: Vec<String>,
    labels: usize,
    /// Locals at or above this index are not yet assigned.
    ready: usize,
    /// Locals that certainly hold an object on every path to here.
    nonnull: Vec<bool>,
}

impl Body<'_> {
    fn emit(&mut self, s: impl Into<String>) {
        self.code.push(s.into());
    }

    fn mark(&mut self, x: usize, nonnull: bool) {
        if self.nonnull.len() <= x {
            self.nonnull.resize(x + 1, false);
        }
        self.nonnull[x] = nonnull;
    }

    fn is_nonnull(&self, x: usize) -> bool {
        self.nonnull.get(x).copied().unwrap_or(false)
    }

    fn store(&mut self, x: usize, nonnull: bool) {
        self.emit(format!("store {x}"));
        self.mark(x, nonnull);
    }

    /// Mostly a local known to be non-null, so runs get past the dereference.
    fn pick_deref(&mut self, pred: impl Fn(Ty) -> bool) -> Option<usize> {
        let all = self.vars_where(pred);
        let safe: Vec<usize> = all
            .iter()
            .copied()
            .filter(|&x| self.is_nonnull(x))
            .collect();
        if !safe.is_empty() && self.rng.gen_bool(0.95) {
            safe.choose(self.rng).copied()
        } else if self.rng.gen_bool(0.25) {
            all.choose(self.rng).copied()
        } else {
            None
        }
    }

    fn label(&mut self) -> String {
        self.labels += 1;
        format!("L{}", self.labels)
    }

    fn place(&mut self, l: &str) {
        self.code.push(format!("{l}:"));
    }

    fn vars_where(&self, pred: impl Fn(Ty) -> bool) -> Vec<usize> {
        (0..self.vars.len().min(self.ready))
            .filter(|&i| pred(self.vars[i]))
            .collect()
    }

    fn pick(&mut self, pred: impl Fn(Ty) -> bool) -> Option<usize> {
        let vs = self.vars_where(pred);
        vs.choose(self.rng).copied()
    }

    fn storable(&mut self, value: Ty) -> Option<usize> {
        let m = self.m;
        let first = self.first_store;
        let vs: Vec<usize> = (first..self.vars.len())
            .filter(|&i| m.assignable(value, self.vars[i]))
            .collect();
        vs.choose(self.rng).copied()
    }

    /// Pushes some value assignable to `ty`.
    fn push_value(&mut self, ty: Ty) {
        let m = self.m;
        if ty == Ty::Int {
            match self.pick(|t| t == Ty::Int) {
                Some(v) if self.rng.gen_bool(0.5) => self.emit(format!("load {v}")),
                _ => {
                    let k = self.rng.gen_range(0..=1);
                    self.emit(format!("iconst {k}"));
                }
            }
            return;
        }
        let choice = self.pick(|t| m.assignable(t, ty));
        match choice {
            Some(v) if self.rng.gen_bool(0.8) => self.emit(format!("load {v}")),
            _ => self.emit("aconst_null"),
        }
    }

    fn store_or_pop(&mut self, ty: Ty) {
        match self.storable(ty) {
            Some(x) => self.store(x, false),
            None => self.emit("pop"),
        }
    }

    fn can_new(&self, c: usize) -> bool {
        self.m.classes[c].ctor_rank > self.rank
    }

    fn new_object(&mut self, c: usize) {
        let ps = self.m.classes[c].ctor_params.clone();
        self.emit(format!("new {}", cname(c)));
        self.emit("dup");
        for t in &ps {
            self.push_value(*t);
        }
        self.emit(format!("invokespecial {}.<init> {}", cname(c), ps.len()));
    }

    fn call_family(&mut self, recv_load: String, recv_class: usize, f: usize) {
        let fam = &self.m.families[f];
        let (ps, ret) = (fam.params.clone(), fam.ret);
        self.emit(recv_load);
        for t in &ps {
            self.push_value(*t);
        }
        self.emit(format!(
            "invokevirtual {}.m{f} {}",
            cname(recv_class),
            ps.len()
        ));
        if let Some(r) = ret {
            self.store_or_pop(r);
        }
    }

    /// A statement dereferencing local `v` (of class type `c`).
    fn deref_stmt(&mut self, v: usize, c: usize) -> bool {
        let m = self.m;
        let fields = m.visible_fields(c);
        let fams: Vec<usize> = m
            .visible_families(c)
            .into_iter()
            .filter(|&f| m.families[f].rank > self.rank)
            .collect();
        let which = self.rng.gen_range(0..3);
        if which == 2 && !fams.is_empty() {
            let f = *fams.choose(self.rng).expect("non-empty");
            self.call_family(format!("load {v}"), c, f);
            return true;
        }
        let Some(&(k, i)) = fields.choose(self.rng) else {
            return false;
        };
        let field = &m.classes[k].fields[i];
        let name = format!("{}.{}", cname(k), field.name);
        let writable = !(k == 0 && Some(i) == m.unwritten);
        if which == 1 && writable {
            self.emit(format!("load {v}"));
            self.push_value(field.ty);
            self.emit(format!("putfield {name}"));
        } else {
            self.emit(format!("load {v}"));
            self.emit(format!("getfield {name}"));
            self.store_or_pop(field.ty);
        }
        true
    }

    fn stmt(&mut self, depth: usize) {
        let m = self.m;
        for _ in 0..8 {
            let kind = self.rng.gen_range(0..15);
            let before = self.nonnull.clone();
            let done = match kind {
                0 => {
                    let Some(x) = self.pick_store(|t| t != Ty::Int) else {
                        continue;
                    };
                    self.emit("aconst_null");
                    self.store(x, false);
                    true
                }
                1 => {
                    let Some(x) = self.pick_store(|t| matches!(t, Ty::Obj(_))) else {
                        continue;
                    };
                    let Ty::Obj(t) = self.vars[x] else {
                        unreachable!()
                    };
                    let options: Vec<usize> = (0..m.classes.len())
                        .filter(|&c| m.is_sub(c, t) && self.can_new(c))
                        .collect();
                    let Some(&c) = options.choose(self.rng) else {
                        continue;
                    };
                    self.new_object(c);
                    self.store(x, true);
                    true
                }
                2 => {
                    let Some(x) = self.pick_store(|t| t != Ty::Int) else {
                        continue;
                    };
                    let tx = self.vars[x];
                    let Some(y) = self.pick(|t| m.assignable(t, tx)) else {
                        continue;
                    };
                    self.emit(format!("load {y}"));
                    let nn = self.is_nonnull(y);
                    self.store(x, nn);
                    true
                }
                3..=5 => {
                    let Some(v) = self.pick_deref(|t| matches!(t, Ty::Obj(_))) else {
                        continue;
                    };
                    let Ty::Obj(c) = self.vars[v] else {
                        unreachable!()
                    };
                    if !self.deref_stmt(v, c) {
                        continue;
                    }
                    true
                }
                6 => {
                    let cands: Vec<usize> = (0..m.statics.len())
                        .filter(|&s| m.statics[s].rank > self.rank)
                        .collect();
                    let Some(&s) = cands.choose(self.rng) else {
                        continue;
                    };
                    let st = &m.statics[s];
                    let (ps, ret) = (st.params.clone(), st.ret);
                    for t in &ps {
                        self.push_value(*t);
                    }
                    self.emit(format!("invokestatic Main.s{s} {}", ps.len()));
                    if let Some(r) = ret {
                        self.store_or_pop(r);
                    }
                    true
                }
                7 | 8 if depth < 2 => {
                    // null test guarding a dereference
                    let Some(v) = self.pick(|t| matches!(t, Ty::Obj(_))) else {
                        continue;
                    };
                    let Ty::Obj(c) = self.vars[v] else {
                        unreachable!()
                    };
                    let end = self.label();
                    self.emit(format!("load {v}"));
                    if kind == 7 {
                        self.emit(format!("ifnull {end}"));
                    } else {
                        let body = self.label();
                        self.emit(format!("ifnonnull {body}"));
                        self.emit(format!("goto {end}"));
                        self.place(&body);
                    }
                    if !self.deref_stmt(v, c) {
                        self.emit("nop");
                    }
                    if self.rng.gen_bool(0.3) {
                        self.stmt(depth + 1);
                    }
                    self.place(&end);
                    self.emit("nop");
                    true
                }
                9 if depth < 2 => {
                    // instanceof test guarding a dereference
                    let Some(v) = self.pick(|t| matches!(t, Ty::Obj(_))) else {
                        continue;
                    };
                    let Ty::Obj(c) = self.vars[v] else {
                        unreachable!()
                    };
                    let sub: Vec<usize> =
                        (0..m.classes.len()).filter(|&k| m.is_sub(k, c)).collect();
                    let d = *sub.choose(self.rng).expect("c itself");
                    let end = self.label();
                    self.emit(format!("load {v}"));
                    self.emit(format!("instanceof {}", cname(d)));
                    match self.rng.gen_range(0..3) {
                        0 => {}
                        1 => self.emit("nop"),
                        _ => {
                            if let Some(z) = self.pick_store(|t| t != Ty::Int) {
                                self.emit("aconst_null");
                                self.store(z, false);
                            }
                        }
                    }
                    if self.rng.gen_bool(0.5) {
                        self.emit(format!("ifeq {end}"));
                    } else {
                        let body = self.label();
                        self.emit(format!("ifne {body}"));
                        self.emit(format!("goto {end}"));
                        self.place(&body);
                    }
                    if !self.deref_stmt(v, c) {
                        self.emit("nop");
                    }
                    self.place(&end);
                    self.emit("nop");
                    true
                }
                10 if depth < 2 => {
                    let Some(i) = self.pick(|t| t == Ty::Int) else {
                        continue;
                    };
                    let other = self.label();
                    let end = self.label();
                    self.emit(format!("load {i}"));
                    self.emit(format!("ifeq {other}"));
                    self.stmt(depth + 1);
                    self.emit(format!("goto {end}"));
                    self.place(&other);
                    self.stmt(depth + 1);
                    self.place(&end);
                    self.emit("nop");
                    true
                }
                11 => {
                    let Some(a) = self.pick_deref(|t| matches!(t, Ty::Arr(_))) else {
                        continue;
                    };
                    let Ty::Arr(c) = self.vars[a] else {
                        unreachable!()
                    };
                    match self.rng.gen_range(0..4) {
                        0 => {
                            self.emit(format!("load {a}"));
                            self.emit("iconst 0");
                            self.push_value(Ty::Obj(c));
                            self.emit("aastore");
                        }
                        1 => {
                            self.emit(format!("load {a}"));
                            self.emit("iconst 0");
                            self.emit("aaload");
                            self.store_or_pop(Ty::Obj(c));
                        }
                        2 => {
                            self.emit(format!("load {a}"));
                            self.emit("arraylength");
                            self.store_or_pop(Ty::Int);
                        }
                        _ => {
                            let Some(x) = self.pick_store(|t| t == Ty::Arr(c)) else {
                                continue;
                            };
                            self.emit("iconst 1");
                            self.emit("newarray");
                            self.store(x, true);
                        }
                    }
                    true
                }
                12 if depth < 2 => {
                    // walk a linked structure until null
                    let cands: Vec<(usize, usize, usize)> = (self.first_store..self.vars.len())
                        .filter_map(|x| match self.vars[x] {
                            Ty::Obj(c) => Some((x, c)),
                            _ => None,
                        })
                        .flat_map(|(x, c)| {
                            m.visible_fields(c)
                                .into_iter()
                                .filter(move |&(k, i)| {
                                    m.assignable(m.classes[k].fields[i].ty, Ty::Obj(c))
                                })
                                .map(move |(k, i)| (x, k, i))
                        })
                        .collect();
                    let Some(&(x, k, i)) = cands.choose(self.rng) else {
                        continue;
                    };
                    let head = self.label();
                    let end = self.label();
                    self.place(&head);
                    self.emit(format!("load {x}"));
                    self.emit(format!("ifnull {end}"));
                    self.emit(format!("load {x}"));
                    self.emit(format!(
                        "getfield {}.{}",
                        cname(k),
                        m.classes[k].fields[i].name
                    ));
                    self.store(x, false);
                    self.emit(format!("goto {head}"));
                    self.place(&end);
                    self.emit("nop");
                    true
                }
                13 => {
                    // `this` escapes from a constructor
                    let Some(c) = self.ctor_of else { continue };
                    let fams: Vec<usize> = m
                        .visible_families(c)
                        .into_iter()
                        .filter(|&f| m.families[f].rank > self.rank)
                        .filter(|&f| {
                            m.families[f]
                                .params
                                .first()
                                .is_some_and(|t| m.assignable(Ty::Obj(c), *t))
                        })
                        .collect();
                    let Some(&f) = fams.choose(self.rng) else {
                        continue;
                    };
                    let fam = &m.families[f];
                    let (ps, ret) = (fam.params.clone(), fam.ret);
                    self.emit("load 0");
                    self.emit("load 0");
                    for t in &ps[1..] {
                        self.push_value(*t);
                    }
                    self.emit(format!("invokevirtual {}.m{f} {}", cname(c), ps.len()));
                    if let Some(r) = ret {
                        self.store_or_pop(r);
                    }
                    true
                }
                _ => {
                    let Some(x) = self.pick_store(|t| t == Ty::Int) else {
                        continue;
                    };
                    let k = self.rng.gen_range(0..=1);
                    self.emit(format!("iconst {k}"));
                    self.store(x, false);
                    true
                }
            };
            if done {
                if matches!(kind, 7..=10) {
                    // only some paths ran the nested statements
                    for (x, b) in before.iter().enumerate() {
                        let nn = *b && self.is_nonnull(x);
                        self.mark(x, nn);
                    }
                    self.nonnull.truncate(before.len());
                }
                return;
            }
        }
        self.emit("nop");
    }

    fn pick_store(&mut self, pred: impl Fn(Ty) -> bool) -> Option<usize> {
        let first = self.first_store;
        let vs: Vec<usize> = (first..self.vars.len())
            .filter(|&i| pred(self.vars[i]))
            .collect();
        vs.choose(self.rng).copied()
    }

    /// Initializes the temporaries after the parameters.
    fn init_temps(&mut self, from: usize) {
        self.ready = from;
        for x in from..self.vars.len() {
            let nn = match self.vars[x] {
                Ty::Int => {
                    self.emit("iconst 0");
                    false
                }
                Ty::Arr(_) => {
                    self.emit("iconst 1");
                    self.emit("newarray");
                    true
                }
                Ty::Obj(c) if self.can_new(c) && self.rng.gen_bool(0.7) => {
                    self.new_object(c);
                    true
                }
                Ty::Obj(_) | Ty::Top => {
                    self.emit("aconst_null");
                    false
                }
            };
            self.store(x, nn);
            self.ready = x + 1;
        }
    }
}

fn temps(rng: &mut ChaCha8Rng, n: usize, extra: Ty, max: usize) -> Vec<Ty> {
    let mut out = vec![extra, Ty::Int];
    for _ in 0..rng.gen_range(max / 2..=max) {
        let c = rng.gen_range(0..n);
        out.push(if rng.gen_bool(0.15) {
            Ty::Arr(c)
        } else {
            Ty::Obj(c)
        });
    }
    out
}

fn header(kw: &str, name: &str, params: &[Ty], nlocals: usize) -> String {
    let mut h = format!("  {kw}{name} ({}, {nlocals})", params.len());
    if params.contains(&Ty::Int) {
        let kinds: Vec<&str> = params.iter().map(|t| t.kind()).collect();
        let _ = write!(h, " : {}", kinds.join(" "));
    }
    h
}

fn write_body(out: &mut String, b: &Body) {
    out.push_str(" {\n");
    for line in &b.code {
        if line.ends_with(':') {
            let _ = writeln!(out, "   {line}");
        } else {
            let _ = writeln!(out, "    {line}");
        }
    }
    out.push_str("  }\n");
}

/// Deterministic in `seed`. The result always parses and passes stack
/// validation.
pub fn gen_program(seed: u64, params: &GenParams) -> Program {
    let text = gen_program_text(seed, params);
    parse_program(&text)
        .unwrap_or_else(|e| panic!("generator produced an invalid program ({e}):\n{text}"))
}

/// A generated program whose instruction count is as close to `instructions`
/// as the statement count allows, found by bisection on `stmts`.
pub fn gen_program_sized(seed: u64, instructions: usize, classes: usize) -> (GenParams, Program) {
    let base = GenParams::scaled(instructions, classes);
    let make = |stmts: usize| {
        let params = GenParams { stmts, ..base };
        let p = gen_program(seed, &params);
        (params, p)
    };
    let (mut lo, mut hi) = (1, base.stmts.max(1) * 4);
    let mut best = make(base.stmts);
    let dist = |p: &Program| p.instruction_count().abs_diff(instructions);
    while lo <= hi {
        let mid = (lo + hi) / 2;
        let cand = make(mid);
        let n = cand.1.instruction_count();
        if dist(&cand.1) < dist(&best.1) {
            best = cand;
        }
        if n < instructions {
            lo = mid + 1;
        } else {
            hi = mid - 1;
        }
    }
    best
}

pub fn gen_program_text(seed: u64, params: &GenParams) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = build_model(&mut rng, params);
    let n = model.classes.len();
    let mut out = String::new();
    for c in 0..n {
        let class = &model.classes[c];
        let parent = class.parent.map_or("Object".to_string(), cname);
        let _ = writeln!(out, "class {} extends {parent} {{", cname(c));
        for f in &class.fields {
            let _ = writeln!(out, "  field {} ref", f.name);
        }
        if class.int_field {
            let _ = writeln!(out, "  field count int");
        }

        // constructor
        let mut vars = vec![Ty::Obj(c)];
        vars.extend(class.ctor_params.iter().copied());
        let nparams = vars.len();
        vars.extend(temps(&mut rng, n, Ty::Obj(c), params.temps));
        let mut b = Body {
            m: &model,
            rng: &mut rng,
            rank: class.ctor_rank,
            ctor_of: Some(c),
            vars,
            first_store: 1,
            code: Vec::new(),
            labels: 0,
            ready: usize::MAX,
            nonnull: Vec::new(),
        };
        b.mark(0, true);
        if let Some(p) = class.parent {
            b.emit("load 0");
            b.emit(format!("invokespecial {}.<init> 0", cname(p)));
        }
        b.init_temps(nparams);
        for (i, f) in class.fields.iter().enumerate() {
            if c == 0 && model.unwritten == Some(i) {
                continue;
            }
            if b.rng.gen_bool(0.6) {
                b.emit("load 0");
                if let Ty::Obj(k) = f.ty {
                    if b.can_new(k) && b.rng.gen_bool(0.5) {
                        b.new_object(k);
                    } else {
                        b.push_value(f.ty);
                    }
                } else {
                    b.push_value(f.ty);
                }
                b.emit(format!("putfield {}.{}", cname(c), f.name));
            }
            if b.rng.gen_bool(0.3) {
                b.stmt(0);
            }
        }
        if params.ctor_escape && b.rng.gen_bool(0.5) {
            for _ in 0..3 {
                let before = b.code.len();
                b.stmt(1);
                if b.code[before..]
                    .iter()
                    .any(|l| l.starts_with("invokevirtual"))
                {
                    break;
                }
            }
        }
        for _ in 0..params.stmts / 2 {
            b.stmt(0);
        }
        b.emit("return");
        let nlocals = b.vars.len();
        let ctor_param_tys = model.classes[c].ctor_params.clone();
        out.push_str(&header("ctor", "", &ctor_param_tys, nlocals));
        write_body(&mut out, &b);

        // virtual methods
        for &f in &model.classes[c].implements {
            let fam = &model.families[f];
            let mut vars = vec![Ty::Obj(c)];
            vars.extend(fam.params.iter().copied());
            let nparams = vars.len();
            let ret_ty = fam.ret.unwrap_or(Ty::Obj(c));
            vars.extend(temps(&mut rng, n, ret_ty, params.temps));
            let mut b = Body {
                m: &model,
                rng: &mut rng,
                rank: fam.rank,
                ctor_of: None,
                vars,
                first_store: 1,
                code: Vec::new(),
                labels: 0,
                ready: usize::MAX,
                nonnull: Vec::new(),
            };
            b.mark(0, true);
            b.init_temps(nparams);
            for _ in 0..params.stmts {
                b.stmt(0);
            }
            match fam.ret {
                Some(t) => {
                    b.push_value(t);
                    b.emit("areturn");
                }
                None => b.emit("return"),
            }
            let nlocals = b.vars.len();
            out.push_str(&header("method ", &format!("m{f}"), &fam.params, nlocals));
            write_body(&mut out, &b);
        }
        out.push_str("}\n");
    }

    out.push_str("class Main extends Object {\n");
    for (s, st) in model.statics.iter().enumerate() {
        let mut vars: Vec<Ty> = st.params.clone();
        let nparams = vars.len();
        let ret_ty = st.ret.unwrap_or(Ty::Obj(0));
        vars.extend(temps(&mut rng, n, ret_ty, params.temps));
        let mut b = Body {
            m: &model,
            rng: &mut rng,
            rank: st.rank,
            ctor_of: None,
            vars,
            first_store: 0,
            code: Vec::new(),
            labels: 0,
            ready: usize::MAX,
            nonnull: Vec::new(),
        };
        b.init_temps(nparams);
        for _ in 0..params.stmts {
            b.stmt(0);
        }
        match st.ret {
            Some(t) => {
                b.push_value(t);
                b.emit("areturn");
            }
            None => b.emit("return"),
        }
        let nlocals = b.vars.len().max(1);
        out.push_str(&header("static ", &format!("s{s}"), &st.params, nlocals));
        write_body(&mut out, &b);
    }

    // main's inputs are null or a bare Object, so nothing dereferences them
    let main_params = if rng.gen_bool(0.5) {
        vec![Ty::Top, Ty::Int]
    } else {
        vec![Ty::Top]
    };
    let mut vars = main_params.clone();
    vars.extend((0..n).map(Ty::Obj));
    vars.extend(temps(&mut rng, n, Ty::Arr(0), params.temps));
    let mut b = Body {
        m: &model,
        rng: &mut rng,
        rank: -1.0,
        ctor_of: None,
        vars,
        first_store: 0,
        code: Vec::new(),
        labels: 0,
        ready: usize::MAX,
        nonnull: Vec::new(),
    };
    let base = main_params.len();
    b.ready = base;
    for c in 0..n {
        b.new_object(c);
        b.store(base + c, true);
        b.ready += 1;
    }
    b.init_temps(base + n);
    for c in 0..n {
        let fams = model.classes[c].implements.clone();
        for f in fams {
            b.call_family(format!("load {}", base + c), c, f);
        }
    }
    for _ in 0..params.main_stmts {
        b.stmt(0);
    }
    b.emit("return");
    let nlocals = b.vars.len();
    out.push_str(&header("static ", "main", &main_params, nlocals));
    write_body(&mut out, &b);
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::validate_stack_shapes;

    #[test]
    fn tiny_parses_and_validates() {
        let p = gen_program(0, &GenParams::tiny());
        validate_stack_shapes(&p).unwrap();
    }

    #[test]
    fn deterministic_in_seed() {
        assert_eq!(
            gen_program_text(7, &GenParams::small()),
            gen_program_text(7, &GenParams::small())
        );
        assert_ne!(
            gen_program_text(7, &GenParams::small()),
            gen_program_text(8, &GenParams::small())
        );
    }

    #[test]
    fn many_seeds_validate() {
        for seed in 0..200 {
            let params = if seed % 2 == 0 {
                GenParams::tiny()
            } else {
                GenParams::small()
            };
            let p = gen_program(seed, &params);
            if let Err(e) = validate_stack_shapes(&p) {
                panic!("seed {seed}: {e}\n{}", gen_program_text(seed, &params));
            }
        }
    }

    #[test]
    fn sized_programs_land_near_target() {
        for target in [5_000, 20_000] {
            let (_, p) = gen_program_sized(3, target, 50);
            let n = p.instruction_count();
            assert!(n.abs_diff(target) * 10 < target, "{n} for {target}");
            assert_eq!(p.classes.len(), 52);
        }
    }
}
