//! Independent oracles for testing the interpreter: a reference evaluator,
//! a terminating program generator, and brute-force filter and
//! subscription predicates.

pub mod checks;
pub mod eval;
pub mod filter;
pub mod gen;
pub mod harness;
pub mod rescan;
