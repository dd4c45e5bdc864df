use super::{ClassDecl, ClassId, MethodDecl, MethodId, MethodKind};

/// Precomputed class-hierarchy index: subclass tests, least common
/// superclasses, the override relation and constructor chains.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hierarchy {
    parent: Vec<Option<ClassId>>,
    depth: Vec<usize>,
    /// Ancestor chain of each class, the class itself first and `Object` last.
    ancestors: Vec<Vec<ClassId>>,
    /// Every class `X` with `X ⪯ C`, in id order.
    subclasses: Vec<Vec<ClassId>>,
    ctors: Vec<Option<MethodId>>,
    /// For each method, the methods it overrides (strict ancestors, same signature).
    overridden: Vec<Vec<MethodId>>,
    /// For each method, the methods overriding it.
    overriders: Vec<Vec<MethodId>>,
}

impl Hierarchy {
    /// Builds the index. The caller guarantees the `extends` relation is acyclic.
    pub(crate) fn build(classes: &[ClassDecl], methods: &[MethodDecl]) -> Hierarchy {
        let n = classes.len();
        let parent: Vec<Option<ClassId>> = classes.iter().map(|c| c.super_class).collect();
        let mut ancestors = Vec::with_capacity(n);
        for i in 0..n {
            let mut chain = vec![ClassId(i as u32)];
            let mut cur = parent[i];
            while let Some(p) = cur {
                chain.push(p);
                cur = parent[p.index()];
            }
            ancestors.push(chain);
        }
        let depth = ancestors.iter().map(|a| a.len() - 1).collect();
        let mut subclasses = vec![Vec::new(); n];
        for (i, chain) in ancestors.iter().enumerate() {
            for a in chain {
                subclasses[a.index()].push(ClassId(i as u32));
            }
        }
        let ctors = classes.iter().map(|c| c.ctor).collect();

        let mut overridden = vec![Vec::new(); methods.len()];
        let mut overriders = vec![Vec::new(); methods.len()];
        for (mi, m) in methods.iter().enumerate() {
            if m.kind != MethodKind::Virtual {
                continue;
            }
            for &anc in &ancestors[m.class.index()][1..] {
                for &other in &classes[anc.index()].methods {
                    let o = &methods[other.index()];
                    if o.kind == MethodKind::Virtual
                        && o.name == m.name
                        && o.params.len() == m.params.len()
                    {
                        overridden[mi].push(other);
                        overriders[other.index()].push(MethodId(mi as u32));
                    }
                }
            }
        }
        for list in overriders.iter_mut() {
            list.sort();
        }
        Hierarchy {
            parent,
            depth,
            ancestors,
            subclasses,
            ctors,
            overridden,
            overriders,
        }
    }

    pub fn class_count(&self) -> usize {
        self.parent.len()
    }

    pub fn parent(&self, class: ClassId) -> Option<ClassId> {
        self.parent[class.index()]
    }

    pub fn depth(&self, class: ClassId) -> usize {
        self.depth[class.index()]
    }

    /// `sub ⪯ sup`: reflexive-transitive closure of `extends`.
    pub fn is_subclass(&self, sub: ClassId, sup: ClassId) -> bool {
        let ds = self.depth[sub.index()];
        let dp = self.depth[sup.index()];
        ds >= dp && self.ancestors[sub.index()][ds - dp] == sup
    }

    /// The ancestor chain of `class`, starting with `class` itself.
    pub fn ancestors(&self, class: ClassId) -> &[ClassId] {
        &self.ancestors[class.index()]
    }

    /// Every class `X` with `X ⪯ class`.
    pub fn subclasses(&self, class: ClassId) -> &[ClassId] {
        &self.subclasses[class.index()]
    }

    /// Deepest common ancestor of `a` and `b`.
    pub fn least_common_superclass(&self, a: ClassId, b: ClassId) -> ClassId {
        let (mut a, mut b) = (a, b);
        while self.depth(a) > self.depth(b) {
            a = self.parent[a.index()].expect("depth > 0 has a parent");
        }
        while self.depth(b) > self.depth(a) {
            b = self.parent[b.index()].expect("depth > 0 has a parent");
        }
        while a != b {
            a = self.parent[a.index()].expect("distinct roots are impossible");
            b = self.parent[b.index()].expect("distinct roots are impossible");
        }
        a
    }

    /// `overrides(m', m)`: same signature and `class(m')` strictly below `class(m)`.
    pub fn overrides(&self, overriding: MethodId, overridden: MethodId) -> bool {
        self.overridden[overriding.index()].contains(&overridden)
    }

    /// Methods that override `method`.
    pub fn overriders(&self, method: MethodId) -> &[MethodId] {
        &self.overriders[method.index()]
    }

    /// Methods that `method` overrides.
    pub fn overridden_by(&self, method: MethodId) -> &[MethodId] {
        &self.overridden[method.index()]
    }

    pub fn ctor(&self, class: ClassId) -> Option<MethodId> {
        self.ctors[class.index()]
    }

    /// Constructors run when an instance of `class` is built, `class` first.
    pub fn ctor_chain(&self, class: ClassId) -> Vec<MethodId> {
        self.ancestors(class)
            .iter()
            .filter_map(|c| self.ctors[c.index()])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use crate::ir::parse_program;

    const TREE: &str = "
        class A extends Object { method m (1, 2) { return } }
        class B extends A { method m (1, 2) { return } }
        class C extends A { }
        class D extends B { method m (1, 2) { return } }
        class Main extends Object { static main (0, 1) { return } }
    ";

    #[test]
    fn lcs_of_siblings_is_parent() {
        let p = parse_program(TREE).unwrap();
        let h = p.hierarchy();
        let [a, b, c, d] = ["A", "B", "C", "D"].map(|n| p.class_by_name(n).unwrap());
        assert_eq!(h.least_common_superclass(a, a), a);
        assert_eq!(h.least_common_superclass(b, c), a);
        assert_eq!(h.least_common_superclass(d, c), a);
        assert_eq!(h.least_common_superclass(d, b), b);
        let main = p.class_by_name("Main").unwrap();
        assert_eq!(h.least_common_superclass(d, main).0, 0);
    }

    #[test]
    fn lcs_matches_ancestor_set_intersection() {
        let p = parse_program(TREE).unwrap();
        let h = p.hierarchy();
        for a in p.class_ids() {
            for b in p.class_ids() {
                // brute force: deepest class that is an ancestor of both
                let common: Vec<_> = p
                    .class_ids()
                    .filter(|&c| h.is_subclass(a, c) && h.is_subclass(b, c))
                    .collect();
                let deepest = common.iter().copied().max_by_key(|&c| h.depth(c)).unwrap();
                assert_eq!(h.least_common_superclass(a, b), deepest);
            }
        }
    }

    #[test]
    fn overrides_is_strict() {
        let p = parse_program(TREE).unwrap();
        let h = p.hierarchy();
        let am = p.method_by_name("A", "m", 1).unwrap();
        let bm = p.method_by_name("B", "m", 1).unwrap();
        let dm = p.method_by_name("D", "m", 1).unwrap();
        assert!(h.overrides(bm, am));
        assert!(!h.overrides(am, bm));
        assert!(h.overrides(dm, am));
        assert!(h.overrides(dm, bm));
        assert!(!h.overrides(am, am));
        assert_eq!(h.overriders(am), &[bm, dm]);
    }

    #[test]
    fn subclass_is_partial_order() {
        let p = parse_program(TREE).unwrap();
        let h = p.hierarchy();
        let ids: Vec<_> = p.class_ids().collect();
        for &a in &ids {
            assert!(h.is_subclass(a, a));
            for &b in &ids {
                if a != b && h.is_subclass(a, b) {
                    assert!(!h.is_subclass(b, a));
                }
                for &c in &ids {
                    if h.is_subclass(a, b) && h.is_subclass(b, c) {
                        assert!(h.is_subclass(a, c));
                    }
                }
            }
        }
    }
}
