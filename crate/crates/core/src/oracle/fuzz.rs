//! One fuzzing round: analyze a program, run it on several inputs, check
//! every trace. Faults can be injected into the analysis result to confirm
//! the checks fire.

use std::fmt;
use std::str::FromStr;

use crate::domain::AVal;
use crate::infer::{analyze, classify_dereferences, AnalysisConfig};
use crate::ir::Program;

use super::check::{check_correctness, check_dereference_safety, OracleViolation};
use super::interp::{run, Status, Trace};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Claim every field is `NonNull`.
    LowerHeap,
    /// Claim every dereference is safe.
    MarkSafe,
}

impl FromStr for Fault {
    type Err = String;

    fn from_str(s: &str) -> Result<Fault, String> {
        match s {
            "lower-heap" => Ok(Fault::LowerHeap),
            "mark-safe" => Ok(Fault::MarkSafe),
            _ => Err(format!(
                "unknown fault `{s}` (expected lower-heap or mark-safe)"
            )),
        }
    }
}

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Fault::LowerHeap => "lower-heap",
            Fault::MarkSafe => "mark-safe",
        })
    }
}

#[derive(Clone, Debug)]
pub struct FuzzFailure {
    pub config: AnalysisConfig,
    pub trace: Trace,
    pub violation: OracleViolation,
}

#[derive(Clone, Debug, Default)]
pub struct FuzzOutcome {
    pub runs: usize,
    pub returned: usize,
    pub omega: usize,
    pub exhausted: usize,
    pub stuck: usize,
    pub violations: usize,
    /// The first violation of each configuration, kept for reproduction.
    pub failures: Vec<FuzzFailure>,
}

impl FuzzOutcome {
    pub fn merge(&mut self, other: FuzzOutcome) {
        self.runs += other.runs;
        self.returned += other.returned;
        self.omega += other.omega;
        self.exhausted += other.exhausted;
        self.stuck += other.stuck;
        self.violations += other.violations;
        self.failures.extend(other.failures);
    }
}

/// Input seeds `0..inputs` for every configuration. Traces do not depend on
/// the configuration, so each input is run once.
pub fn fuzz_program(
    program: &Program,
    configs: &[AnalysisConfig],
    inputs: u64,
    budget: u64,
    fault: Option<Fault>,
) -> FuzzOutcome {
    let mut out = FuzzOutcome::default();
    let traces: Vec<Trace> = (0..inputs).map(|seed| run(program, budget, seed)).collect();
    for t in &traces {
        match t.status {
            Status::Returned => out.returned += 1,
            Status::Omega(_) => out.omega += 1,
            Status::BudgetExhausted => out.exhausted += 1,
            Status::Stuck(..) => out.stuck += 1,
        }
    }
    for &config in configs {
        let mut solution = analyze(program, config);
        if fault == Some(Fault::LowerHeap) {
            for c in program.class_ids() {
                for f in program.ref_fields_of(c) {
                    solution.state.heap.set(f, AVal::NonNull);
                }
            }
        }
        let mut report = classify_dereferences(program, &solution);
        if fault == Some(Fault::MarkSafe) {
            for s in &mut report.sites {
                s.safe = true;
            }
        }
        let mut first = None;
        for t in &traces {
            out.runs += 1;
            let mut v = check_correctness(program, t, &solution);
            v.extend(check_dereference_safety(program, t, &report));
            out.violations += v.len();
            if first.is_none() {
                if let Some(v) = v.into_iter().next() {
                    first = Some(FuzzFailure {
                        config,
                        trace: t.clone(),
                        violation: v,
                    });
                }
            }
        }
        out.failures.extend(first);
    }
    out
}
