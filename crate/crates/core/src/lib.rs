//! Core of a confidence-gated fast/slow visual program reasoning engine.
//!
//! Everything in this crate is `no_std` + `alloc`: the visual-program DSL and its
//! validator, token-confidence math, the deterministic synthetic video world, the
//! seventeen vision modules and their simulated backend, the single-program
//! interpreter, and the result aggregation rules used by parameter search.
//!
//! IO, threads, clocks, timeouts and transports live in the `fastslow` crate.

#![cfg_attr(not(test), no_std)]
#![deny(unsafe_code)]
// `!(x > lo)` is deliberate: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod aggregate;
pub mod confidence;
pub mod exec;
pub mod hash;
pub mod modules;
pub mod program;
pub mod simulated;
pub mod text;
pub mod world;

pub use aggregate::{aggregate, aggregate_confidence, aggregate_voting, Aggregation, Selection};
pub use confidence::{
    accuracy_above_threshold, compute_confidence, confidence_gap_report, label_difficulty, Confidence,
    ConfidenceSource, Difficulty, DomainError, GapReport, ScoredPrediction, ThresholdPoint,
};
pub use exec::{
    execute, execute_text, Clock, ExecContext, ExecutionResult, Failure, FailureKind, FailureStage, FrozenClock,
    RunStatus, TraceEvent, Value, ValueSummary,
};
pub use modules::{Backend, BackendError, ModuleError};
pub use program::{
    enumerate_bindings, parse, render, substitute, Arg, Literal, ModuleSignature, ParamBinding, ParamKind, Program,
    ProgramError, Registry, Statement,
};
pub use simulated::{SimulatedBackend, SimulationConfig};
pub use world::{generate_corpus, relevance, Corpus, CorpusSpec, QAItem, SyntheticVideo};
