//! One-parameter-at-a-time program variants and answer selection.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use fastslow_core::program::effective_literal;
use fastslow_core::{
    aggregate, enumerate_bindings, substitute, Aggregation, Backend, Clock, Confidence, ExecContext, ExecutionResult,
    ParamBinding, Program, Registry, RunStatus,
};

use crate::parallel::execute_many;

/// Parameter families with published search spaces.
pub const DEFAULT_PARAM_SETS: [&str; 4] = ["top_k", "intervals", "num_frames", "text_thr"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    /// Parameter names whose search spaces are explored; empty disables search.
    #[serde(default)]
    pub params: Vec<String>,
    #[serde(default)]
    pub aggregation: Aggregation,
    #[serde(default = "one")]
    pub parallelism: usize,
    #[serde(default = "yes")]
    pub memoize_base: bool,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { params: Vec::new(), aggregation: Aggregation::Confidence, parallelism: 1, memoize_base: true }
    }
}

impl SearchConfig {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn all() -> Self {
        Self::with_params(&DEFAULT_PARAM_SETS)
    }

    pub fn with_params(params: &[&str]) -> Self {
        SearchConfig { params: params.iter().map(|p| p.to_string()).collect(), ..Self::default() }
    }

    /// Parses `none`, `all`, or a `,`/`+` separated list such as `num_frames+top_k`.
    pub fn parse_params(spec: &str) -> Result<Vec<String>, String> {
        let spec = spec.trim();
        match spec.to_ascii_lowercase().as_str() {
            "" | "none" => return Ok(Vec::new()),
            "all" => return Ok(DEFAULT_PARAM_SETS.iter().map(|s| s.to_string()).collect()),
            _ => {}
        }
        let mut out: Vec<String> = Vec::new();
        for p in spec.split([',', '+']).map(str::trim).filter(|p| !p.is_empty()) {
            if !out.iter().any(|o| o == p) {
                out.push(p.to_string());
            }
        }
        Ok(out)
    }

    /// Every enabled name must be a searchable parameter of `registry`.
    pub fn validate(&self, registry: &Registry) -> Result<(), String> {
        if self.parallelism == 0 {
            return Err("search.parallelism must be >= 1".into());
        }
        let searchable: BTreeSet<String> = registry.searchable_params();
        for p in &self.params {
            if !searchable.contains(p) {
                return Err(format!("search parameter {p:?} has no search space in the registry"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub binding: ParamBinding,
    /// The binding equals the base configuration and the base result was reused.
    pub memoized: bool,
    pub result: ExecutionResult,
}

/// Where the selected answer came from: `None` is the base program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selected {
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<Confidence>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binding: Option<ParamBinding>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub base_result: ExecutionResult,
    pub variant_results: Vec<VariantResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected: Option<Selected>,
    pub run_count: usize,
}

impl SearchOutcome {
    /// Base first, then variants in enumeration order.
    pub fn pooled(&self) -> Vec<&ExecutionResult> {
        std::iter::once(&self.base_result).chain(self.variant_results.iter().map(|v| &v.result)).collect()
    }

    pub fn successes(&self) -> usize {
        self.pooled().iter().filter(|r| r.status == RunStatus::Success).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SearchError {
    /// No pooled result succeeded; the outcome is kept for the run record.
    AllFailed(Box<SearchOutcome>),
    Config(String),
}

impl fmt::Display for SearchError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SearchError::AllFailed(o) => write!(f, "all {} execution(s) failed", o.run_count + 1),
            SearchError::Config(m) => write!(f, "search config: {m}"),
        }
    }
}

impl std::error::Error for SearchError {}

/// Bindings the search would run for `program`, restricted to `params`.
pub fn planned_bindings(program: &Program, registry: &Registry, params: &[String]) -> Vec<ParamBinding> {
    enumerate_bindings(program, registry).into_iter().filter(|b| params.contains(&b.param_name)).collect()
}

/// The binding restates the value the program already uses.
pub fn equals_base(program: &Program, registry: &Registry, b: &ParamBinding) -> bool {
    let st = &program.statements[b.statement_index];
    registry
        .get(&st.module)
        .and_then(|sig| effective_literal(st, sig, &b.param_name))
        .is_some_and(|l| l.same_value(&b.value))
}

/// Executes the base program and every enabled one-parameter variant, pools
/// the results (base first) and selects an answer.
pub fn search(
    program: &Program,
    registry: &Registry,
    backend: &dyn Backend,
    ctx: &ExecContext,
    clock: &dyn Clock,
    config: &SearchConfig,
) -> Result<SearchOutcome, SearchError> {
    config.validate(registry).map_err(SearchError::Config)?;
    let bindings = planned_bindings(program, registry, &config.params);
    let base_result = fastslow_core::execute(program, registry, backend, ctx, clock);

    let mut to_run: Vec<Program> = Vec::new();
    let mut slots: Vec<(ParamBinding, Option<usize>)> = Vec::with_capacity(bindings.len());
    for b in bindings {
        if config.memoize_base && equals_base(program, registry, &b) {
            slots.push((b, None));
            continue;
        }
        match substitute(program, &b, registry) {
            Ok(p) => {
                slots.push((b, Some(to_run.len())));
                to_run.push(p);
            }
            Err(e) => return Err(SearchError::Config(e.to_string())),
        }
    }
    let mut ran = execute_many(&to_run, registry, backend, ctx, clock, config.parallelism)
        .into_iter()
        .map(Some)
        .collect::<Vec<_>>();
    let variant_results: Vec<VariantResult> = slots
        .into_iter()
        .map(|(binding, slot)| match slot {
            None => VariantResult { binding, memoized: true, result: base_result.clone() },
            Some(i) => {
                VariantResult { binding, memoized: false, result: ran[i].take().expect("each variant used once") }
            }
        })
        .collect();

    let mut outcome = SearchOutcome { base_result, run_count: variant_results.len(), variant_results, selected: None };
    let pool: Vec<ExecutionResult> = outcome.pooled().into_iter().cloned().collect();
    match aggregate(&pool, config.aggregation) {
        Some(sel) => {
            let binding = sel.index.checked_sub(1).map(|i| outcome.variant_results[i].binding.clone());
            outcome.selected = Some(Selected { answer: sel.answer, confidence: sel.confidence, binding });
            Ok(outcome)
        }
        None => Err(SearchError::AllFailed(Box::new(outcome))),
    }
}
