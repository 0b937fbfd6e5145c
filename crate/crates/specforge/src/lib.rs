//! Traceable specification synthesis: decompose a natural-language problem
//! into atomic requirements, generate requirement-tagged tests, draft a
//! formal pre/postcondition pair, and repair it under prover feedback until
//! every test's check proposition is discharged.
//!
//! The crate is organized around that loop:
//!
//! - [`model`] — domain types: requirements, tests, traceability maps,
//!   specifications, evaluation reports, and the attribution operations that
//!   turn failing tests into implicated requirements.
//! - [`minispec`] — a closed, decidable expression language for writing
//!   executable pre/postconditions.
//! - [`prover`] — check-proposition construction and proving backends (the
//!   built-in evaluator and an external theorem-prover subprocess).
//! - [`gateway`] — prompt templates, reply parsers, and completion backends
//!   (scripted replay and remote HTTP).
//! - [`context`] — deterministic builders for every prompt-context value,
//!   shared by live synthesis and offline distillation.
//! - [`oracle`] — black-box output labeling (builtin functions or external
//!   commands).
//! - [`store`] — append-only JSON Lines persistence of trajectory steps and
//!   checkpoint extraction.

pub mod context;
pub mod distill;
pub mod engine;
pub mod gateway;
pub mod minispec;
pub mod model;
pub mod oracle;
pub mod prover;
pub mod store;
