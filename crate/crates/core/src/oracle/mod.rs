//! Concrete execution, the soundness check against it, and random programs
//! to run it on.

mod check;
mod fuzz;
mod gen;
mod interp;

#[cfg(test)]
mod tests;

pub use check::{check_correctness, check_dereference_safety, describes, OracleViolation};
pub use fuzz::{fuzz_program, Fault, FuzzFailure, FuzzOutcome};
pub use gen::{gen_program, gen_program_sized, gen_program_text, GenParams};
pub use interp::{
    describe_delta, describe_status, run, Cell, ConcHeap, ConcValue, FieldCell, HeapDelta,
    ObjectCell, Status, Step, Trace, DEFAULT_BUDGET,
};
