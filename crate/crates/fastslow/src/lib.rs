//! Fast/slow visual program reasoning: the adaptive controller, parameter
//! search, dataset construction, run logs and reports, plus the operational
//! shell (config, CLI, HTTP service, remote adapters).
//!
//! The DSL, module semantics and the single-program interpreter live in
//! [`fastslow_core`], which is re-exported as [`core`].

pub use fastslow_core as core;

pub mod cli;
pub mod clock;
pub mod config;
pub mod controller;
pub mod corpus_io;
pub mod dataset;
pub mod guard;
pub mod parallel;
pub mod planner;
pub mod remote;
pub mod report;
pub mod runlog;
pub mod search;
pub mod service;

pub use controller::{
    answer_query, evaluate, ControllerConfig, ControllerError, Engine, QueryInput, RoutePath, RoutingDecision,
    RunRecord, Strategy,
};
pub use parallel::execute_many;
pub use planner::{Planner, PlannerError, PlannerRequest, PlannerTask, ScriptedPlanner, SyntheticPlanner};
pub use report::EvalReport;
pub use search::{search, SearchConfig, SearchError, SearchOutcome};
