//! Constraint-based nullness and rawness inference.

mod report;
mod solve;
mod state;
mod system;


use serde::Serialize;

use crate::alias::AliasState;
use crate::condition::CondFacts;
use crate::ir::{reachable_methods, Program};

pub use report::{
    classify_dereferences, deref_operand, derive_annotations, AnnotationCounts, Annotations,
    DerefReport, DerefSite, MethodAnnotations, Tally,
};
pub use solve::{check_solution, solve, Solution, Violation};
pub use state::{AbstractState, Frame, Heap, MethodSig};
pub use system::{field_read_abstraction, Constraint, ConstraintSystem, Key, Update};

/// Independent switches for the precision improvements.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct AnalysisConfig {
    /// `NullableInit` values: `null` constants and implicit field defaults
    /// are known not to be raw.
    pub nullable_init: bool,
    /// Strip null from a tested local on the non-null edge of `ifnull`/`ifnonnull`.
    pub test_recovery: bool,
    /// Same for the 1-edge of an `instanceof` result test.
    pub instanceof_recovery: bool,
    /// Strip null from a dereferenced local after the dereference succeeds.
    pub deref_edge_refinement: bool,
}

impl AnalysisConfig {
    pub const BASIC: AnalysisConfig = AnalysisConfig {
        nullable_init: false,
        test_recovery: false,
        instanceof_recovery: false,
        deref_edge_refinement: false,
    };

    pub const OPT: AnalysisConfig = AnalysisConfig {
        nullable_init: true,
        test_recovery: true,
        instanceof_recovery: true,
        deref_edge_refinement: true,
    };

    pub fn name(&self) -> &'static str {
        match *self {
            AnalysisConfig::BASIC => "basic",
            AnalysisConfig::OPT => "opt",
            _ => "custom",
        }
    }
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig::OPT
    }
}

/// Reachability, alias and `instanceof` analyses, then the fixpoint.
pub fn analyze(program: &Program, config: AnalysisConfig) -> Solution {
    let reachable = reachable_methods(program, program.hierarchy());
    let aliases = AliasState::analyze(program, reachable.iter().copied());
    let conds = CondFacts::analyze(program, &aliases, reachable.iter().copied());
    solve(program, config, reachable, aliases, conds)
}
