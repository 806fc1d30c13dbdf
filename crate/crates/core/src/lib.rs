//! Record DOM mutations around e2e test commands, find the commands whose
//! effects outlive them, and rewrite tests with explicit waits.
//!
//! The pipeline runs in stages: [`transform`] instruments test sources,
//! a test run writes a mutation log ([`trace`]), [`analyzer`] prunes it and
//! classifies commands, [`fsm`] turns each flaky-prone command into a wait
//! oracle, [`render`] prints it and [`transform`] inserts it. [`sim`]
//! compares wait strategies on synthetic suites.

// `!(x >= 0.0)` style checks are meant to reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analyzer;
pub mod cli;
pub mod fsm;
pub mod render;
pub mod sim;
pub mod trace;
pub mod transform;
pub mod window;

pub use render::Dialect;
