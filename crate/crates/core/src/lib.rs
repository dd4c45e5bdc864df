//! Nullness and rawness inference for a small stack-based object-oriented
//! bytecode, with a concrete interpreter used to check it.

pub mod alias;
pub mod condition;
pub mod domain;
pub mod infer;
pub mod ir;
pub mod oracle;
pub mod stats;
