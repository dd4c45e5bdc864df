//! Abstract values for nullness and rawness, and the per-class field
//! initialization map `TVal`.
//!
//! The order is concretization inclusion:
//!
//! ```text
//!            Nullable
//!           /        \
//!      RawMinus    NullableInit
//!         |             |
//!      Raw(Object)      |
//!         |             |
//!       Raw(A)          |
//!         |             |
//!       Raw(B)          |
//!           \          /
//!            NonNull
//! ```
//!
//! `Raw(B) ⊑ Raw(A)` iff `B ⪯ A`. The Raw family and `NullableInit` are
//! incomparable: null separates them one way, raw objects the other.

use std::fmt;

use rpds::RedBlackTreeSetSync;
use serde::Serialize;

use crate::ir::{ClassId, FieldId, Hierarchy, Program};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum AVal {
    /// Non-null, every field initialized. Bottom.
    NonNull,
    /// Non-null; fields declared in the class and its superclasses initialized.
    Raw(ClassId),
    /// Non-null, no initialization guarantee.
    RawMinus,
    /// Null or a fully initialized object.
    NullableInit,
    /// Anything. Top.
    Nullable,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DomainError {
    #[error("unknown class id {0}")]
    UnknownClass(u32),
    #[error("field `{field}` is not declared in `{class}`")]
    FieldNotDeclared { field: String, class: String },
}

impl AVal {
    pub const BOTTOM: AVal = AVal::NonNull;

    /// Rejects `Raw(C)` naming a class outside the hierarchy.
    pub fn check(self, h: &Hierarchy) -> Result<AVal, DomainError> {
        match self {
            AVal::Raw(c) if c.index() >= h.class_count() => Err(DomainError::UnknownClass(c.0)),
            v => Ok(v),
        }
    }

    pub fn leq(self, other: AVal, h: &Hierarchy) -> bool {
        use AVal::*;
        match (self, other) {
            (NonNull, _) | (_, Nullable) => true,
            (Raw(a), Raw(b)) => h.is_subclass(a, b),
            (Raw(_), RawMinus) | (RawMinus, RawMinus) | (NullableInit, NullableInit) => true,
            _ => false,
        }
    }

    pub fn join(self, other: AVal, h: &Hierarchy) -> AVal {
        use AVal::*;
        if self.leq(other, h) {
            return other;
        }
        if other.leq(self, h) {
            return self;
        }
        match (self, other) {
            (Raw(a), Raw(b)) => Raw(h.least_common_superclass(a, b)),
            // remaining raw-family pairs are ordered; anything mixing
            // NullableInit with the raw family only meets at the top
            _ => Nullable,
        }
    }

    /// Best abstraction of the concretization minus `null`.
    pub fn nonnull_refine(self) -> AVal {
        match self {
            AVal::Nullable => AVal::RawMinus,
            AVal::NullableInit => AVal::NonNull,
            v => v,
        }
    }

    /// True when the concretization excludes `null`.
    pub fn excludes_null(self) -> bool {
        !matches!(self, AVal::Nullable | AVal::NullableInit)
    }

    pub fn annotation(self, program: &Program) -> String {
        match self {
            AVal::NonNull => "@NonNull".into(),
            AVal::Raw(c) => format!("@Raw({})", program.class(c).name),
            AVal::RawMinus => "@Raw".into(),
            AVal::NullableInit => "@NullableInit".into(),
            AVal::Nullable => "@Nullable".into(),
        }
    }

    /// Every abstract value over a hierarchy: the finite lattice.
    pub fn enumerate(h: &Hierarchy) -> Vec<AVal> {
        let mut all = vec![
            AVal::NonNull,
            AVal::RawMinus,
            AVal::NullableInit,
            AVal::Nullable,
        ];
        all.extend((0..h.class_count()).map(|i| AVal::Raw(ClassId(i as u32))));
        all
    }
}

impl fmt::Display for AVal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AVal::NonNull => f.write_str("NonNull"),
            AVal::Raw(c) => write!(f, "Raw(#{})", c.0),
            AVal::RawMinus => f.write_str("RawMinus"),
            AVal::NullableInit => f.write_str("NullableInit"),
            AVal::Nullable => f.write_str("Nullable"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum TDef {
    Def,
    UnDef,
}

/// Initialization state of the current class's reference fields on `this`.
/// Only `UnDef` entries are stored; absence means `Def` (bottom).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TVal {
    undef: RedBlackTreeSetSync<FieldId>,
}

impl TVal {
    /// Every field `Def`.
    pub fn bottom() -> TVal {
        TVal::default()
    }

    /// Every reference field declared in `class` mapped to `UnDef`.
    pub fn top(program: &Program, class: ClassId) -> TVal {
        let mut undef = RedBlackTreeSetSync::new_sync();
        for f in program.ref_fields_of(class) {
            undef.insert_mut(f);
        }
        TVal { undef }
    }

    pub fn get(&self, field: FieldId) -> TDef {
        if self.undef.contains(&field) {
            TDef::UnDef
        } else {
            TDef::Def
        }
    }

    pub fn is_def(&self, field: FieldId) -> bool {
        !self.undef.contains(&field)
    }

    /// Strong update: `field ↦ Def`.
    pub fn set_def(&self, field: FieldId) -> TVal {
        if !self.undef.contains(&field) {
            return self.clone();
        }
        TVal {
            undef: self.undef.remove(&field),
        }
    }

    /// `set_def` restricted to fields declared in `class`.
    pub fn set_def_checked(
        &self,
        program: &Program,
        class: ClassId,
        field: FieldId,
    ) -> Result<TVal, DomainError> {
        if program.field(field).class != class {
            return Err(DomainError::FieldNotDeclared {
                field: program.field_name(field),
                class: program.class(class).name.clone(),
            });
        }
        Ok(self.set_def(field))
    }

    /// Pointwise join: `UnDef` wins.
    pub fn join(&self, other: &TVal) -> TVal {
        if self.undef.size() < other.undef.size() {
            return other.join(self);
        }
        let mut out = self.undef.clone();
        for f in other.undef.iter() {
            if !out.contains(f) {
                out.insert_mut(*f);
            }
        }
        TVal { undef: out }
    }

    /// Pointwise meet: `Def` wins.
    pub fn meet(&self, other: &TVal) -> TVal {
        let undef = self
            .undef
            .iter()
            .filter(|f| other.undef.contains(f))
            .copied()
            .collect();
        TVal { undef }
    }

    pub fn leq(&self, other: &TVal) -> bool {
        self.undef.iter().all(|f| other.undef.contains(f))
    }

    pub fn undef_fields(&self) -> impl Iterator<Item = FieldId> + '_ {
        self.undef.iter().copied()
    }
}
