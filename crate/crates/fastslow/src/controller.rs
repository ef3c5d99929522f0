//! The adaptive fast/slow controller: plan with a stop sequence, gate the
//! fast answer on confidence, otherwise run the program with parameter
//! search, and fall back to the fast answer when the slow path fails.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use fastslow_core::modules::fast_think;
use fastslow_core::program::{FAST_MARKER, STOP_SEQUENCE};
use fastslow_core::text::answers_match;
use fastslow_core::world::DurationBucket;
use fastslow_core::{parse, Backend, Clock, Confidence, ExecContext, QAItem, Registry};

use crate::parallel::par_map;
use crate::planner::{apply_stop, Planner, PlannerError, PlannerRequest, PlannerTask, PromptTemplates};
use crate::report::EvalReport;
use crate::search::{search, SearchConfig, SearchError, SearchOutcome};

pub const DEFAULT_THETA: f64 = 0.75;

/// Everything a query needs besides its own inputs. Cheap to clone.
#[derive(Clone)]
pub struct Engine {
    pub registry: Arc<Registry>,
    pub backend: Arc<dyn Backend>,
    pub planner: Arc<dyn Planner>,
    pub clock: Arc<dyn Clock + Send + Sync>,
    pub prompts: PromptTemplates,
}

impl Engine {
    pub fn new(
        registry: Arc<Registry>,
        backend: Arc<dyn Backend>,
        planner: Arc<dyn Planner>,
        clock: Arc<dyn Clock + Send + Sync>,
    ) -> Self {
        Engine { registry, backend, planner, clock, prompts: PromptTemplates::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Confidence-gated routing with fallback.
    #[default]
    Adaptive,
    /// Always answer with `fast_think`.
    FastOnly,
    /// Always run the program; no fast call, no fallback.
    SlowOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub theta: f64,
    pub search: SearchConfig,
    pub strategy: Strategy,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig { theta: DEFAULT_THETA, search: SearchConfig::default(), strategy: Strategy::Adaptive }
    }
}

impl ControllerConfig {
    pub fn with_theta(theta: f64) -> Self {
        ControllerConfig { theta, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutePath {
    Fast,
    FastThenSlow,
    Slow,
    SlowFallbackFast,
}

impl RoutePath {
    pub const ALL: [RoutePath; 4] =
        [RoutePath::Fast, RoutePath::FastThenSlow, RoutePath::Slow, RoutePath::SlowFallbackFast];

    pub fn as_str(self) -> &'static str {
        match self {
            RoutePath::Fast => "fast",
            RoutePath::FastThenSlow => "fast_then_slow",
            RoutePath::Slow => "slow",
            RoutePath::SlowFallbackFast => "slow_fallback_fast",
        }
    }

    /// Whether the query was routed to slow reasoning (every path but `fast`).
    pub fn is_slow(self) -> bool {
        self != RoutePath::Fast
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub path: RoutePath,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fast_confidence: Option<f64>,
    /// Threshold in force; 0 for the fast-only baseline.
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FastAnswer {
    pub answer: String,
    pub confidence: Confidence,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timings {
    pub planner_us: u64,
    pub fast_us: u64,
    pub slow_us: u64,
    pub total_us: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryInput {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub video_ref: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<String>>,
    /// Evaluation only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_bucket: Option<DurationBucket>,
}

impl QueryInput {
    pub fn new(video_ref: impl Into<String>, question: impl Into<String>, choices: Option<Vec<String>>) -> Self {
        QueryInput { video_ref: video_ref.into(), question: question.into(), choices, ..Default::default() }
    }
}

impl From<&QAItem> for QueryInput {
    fn from(item: &QAItem) -> Self {
        QueryInput {
            id: Some(item.id.clone()),
            video_ref: item.video_id.clone(),
            question: item.question.clone(),
            choices: item.choices.clone(),
            gold_answer: Some(item.gold_answer.clone()),
            duration_bucket: Some(item.duration_bucket),
        }
    }
}

/// One answered query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_id: Option<String>,
    pub video_ref: String,
    pub question: String,
    pub strategy: Strategy,
    pub decision: RoutingDecision,
    pub planner_output: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continuation: Option<String>,
    /// Byte offset of the fast marker in `planner_output`, kept for audit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marker_position: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fast: Option<FastAnswer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fast_error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slow: Option<SearchOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slow_error: Option<String>,
    /// Empty only for a slow-only baseline run whose program failed.
    pub final_answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_confidence: Option<Confidence>,
    pub output_length: usize,
    pub timings: Timings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_bucket: Option<DurationBucket>,
}

impl RunRecord {
    pub fn correct(&self) -> Option<bool> {
        self.gold_answer.as_ref().map(|g| !self.final_answer.is_empty() && answers_match(&self.final_answer, g))
    }

    pub fn fast_correct(&self) -> Option<bool> {
        match (&self.fast, &self.gold_answer) {
            (Some(f), Some(g)) => Some(answers_match(&f.answer, g)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ControllerError {
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error("no answer obtainable: {0}")]
    Unanswerable(String),
    #[error("invalid controller config: {0}")]
    Config(String),
}

struct Run<'a> {
    engine: &'a Engine,
    input: &'a QueryInput,
    ctx: ExecContext,
    timings: Timings,
}

impl Run<'_> {
    fn now(&self) -> u64 {
        self.engine.clock.now_us()
    }

    fn plan(&mut self, task: PlannerTask, prompt: String) -> Result<String, PlannerError> {
        let t = self.now();
        let req = PlannerRequest {
            task,
            query_id: self.input.id.clone(),
            video_ref: self.input.video_ref.clone(),
            question: self.input.question.clone(),
            choices: self.input.choices.clone(),
            gold_answer: None,
            prompt,
            stop: Some(STOP_SEQUENCE.to_string()),
        };
        let out = self.engine.planner.complete(&req).map(|s| apply_stop(&s, Some(STOP_SEQUENCE)).to_string());
        self.timings.planner_us += self.now().saturating_sub(t);
        out
    }

    fn fast(&mut self) -> Result<FastAnswer, String> {
        let t = self.now();
        let r = fast_think(
            self.engine.backend.as_ref(),
            &self.input.video_ref,
            &self.input.question,
            self.input.choices.as_deref(),
        )
        .map(|(c, a)| FastAnswer { answer: a.text, confidence: c })
        .map_err(|e| e.to_string());
        self.timings.fast_us += self.now().saturating_sub(t);
        r
    }

    #[allow(clippy::result_large_err)]
    fn slow(&mut self, text: &str, config: &SearchConfig) -> Result<SearchOutcome, (Option<SearchOutcome>, String)> {
        let t = self.now();
        let e = self.engine;
        let r = match parse(text, &e.registry) {
            Err(err) => Err((None, format!("program rejected: {err}"))),
            Ok(program) => match search(&program, &e.registry, e.backend.as_ref(), &self.ctx, e.clock.as_ref(), config)
            {
                Ok(o) => Ok(o),
                Err(SearchError::AllFailed(o)) => Err((Some(*o), "every program execution failed".to_string())),
                Err(SearchError::Config(m)) => Err((None, m)),
            },
        };
        self.timings.slow_us += self.now().saturating_sub(t);
        r
    }
}

/// Answers one query under `config.strategy`.
///
/// Adaptive routing: the planner runs with the stop sequence; if its output
/// carries the fast marker, `fast_think` answers and is returned when its
/// confidence is `>= theta`. Otherwise the planner continues from its prior
/// output and the program runs under parameter search. A rejected program or
/// a search with no successful run falls back to the fast answer.
pub fn answer_query(
    engine: &Engine,
    input: &QueryInput,
    config: &ControllerConfig,
) -> Result<RunRecord, ControllerError> {
    if config.strategy != Strategy::FastOnly && !(config.theta > 0.0 && config.theta < 1.0) {
        return Err(ControllerError::Config(format!("theta {} outside (0, 1)", config.theta)));
    }
    let mut run = Run {
        engine,
        input,
        ctx: ExecContext::new(input.video_ref.clone(), input.question.clone(), input.choices.clone()),
        timings: Timings::default(),
    };
    let t0 = run.now();
    let choices = input.choices.as_deref();
    let prompt = engine.prompts.answer_prompt(&input.question, choices);
    let theta = if config.strategy == Strategy::FastOnly { 0.0 } else { config.theta };

    let mut rec = RunRecord {
        query_id: input.id.clone(),
        video_ref: input.video_ref.clone(),
        question: input.question.clone(),
        strategy: config.strategy,
        decision: RoutingDecision { path: RoutePath::Slow, fast_confidence: None, theta },
        planner_output: String::new(),
        continuation: None,
        marker_position: None,
        fast: None,
        fast_error: None,
        slow: None,
        slow_error: None,
        final_answer: String::new(),
        final_confidence: None,
        output_length: 0,
        timings: Timings::default(),
        gold_answer: input.gold_answer.clone(),
        duration_bucket: input.duration_bucket,
    };

    let finish = |mut rec: RunRecord, run: &Run<'_>| {
        rec.output_length =
            rec.planner_output.chars().count() + rec.continuation.as_ref().map_or(0, |c| c.chars().count());
        rec.timings = Timings { total_us: run.now().saturating_sub(t0), ..run.timings };
        rec
    };

    if config.strategy == Strategy::FastOnly {
        let f = run.fast().map_err(ControllerError::Unanswerable)?;
        rec.decision = RoutingDecision { path: RoutePath::Fast, fast_confidence: Some(f.confidence.value()), theta };
        rec.final_answer = f.answer.clone();
        rec.final_confidence = Some(f.confidence);
        rec.fast = Some(f);
        return Ok(finish(rec, &run));
    }

    let first = match run.plan(PlannerTask::Answer, prompt.clone()) {
        Ok(t) => t,
        Err(e) if config.strategy == Strategy::SlowOnly => return Err(e.into()),
        // planner down: the fast answer is the only one left
        Err(e) => {
            let f = run.fast().map_err(|_| ControllerError::Planner(e.clone()))?;
            rec.slow_error = Some(e.to_string());
            rec.decision = RoutingDecision {
                path: RoutePath::SlowFallbackFast,
                fast_confidence: Some(f.confidence.value()),
                theta,
            };
            rec.final_answer = f.answer.clone();
            rec.final_confidence = Some(f.confidence);
            rec.fast = Some(f);
            return Ok(finish(rec, &run));
        }
    };
    rec.marker_position = first.find(FAST_MARKER);
    rec.planner_output = first.clone();

    let mut path = RoutePath::Slow;
    let program_text = if rec.marker_position.is_some() {
        if config.strategy == Strategy::Adaptive {
            match run.fast() {
                Ok(f) if f.confidence.value() >= config.theta => {
                    rec.decision =
                        RoutingDecision { path: RoutePath::Fast, fast_confidence: Some(f.confidence.value()), theta };
                    rec.final_answer = f.answer.clone();
                    rec.final_confidence = Some(f.confidence);
                    rec.fast = Some(f);
                    return Ok(finish(rec, &run));
                }
                Ok(f) => {
                    rec.decision.fast_confidence = Some(f.confidence.value());
                    rec.fast = Some(f);
                    path = RoutePath::FastThenSlow;
                }
                // fast path unavailable: degrade straight to slow
                Err(e) => rec.fast_error = Some(e),
            }
        }
        let cont_prompt = engine.prompts.continuation_prompt(&input.question, choices, &first);
        match run.plan(PlannerTask::Continue, cont_prompt) {
            Ok(c) => {
                rec.continuation = Some(c.clone());
                Some(c)
            }
            Err(e) => {
                rec.slow_error = Some(e.to_string());
                None
            }
        }
    } else {
        Some(first)
    };
    rec.decision.path = path;

    let slow_result = match program_text {
        Some(text) => run.slow(&text, &config.search),
        None => Err((None, rec.slow_error.clone().unwrap_or_default())),
    };
    match slow_result {
        Ok(outcome) => {
            let sel = outcome.selected.clone().expect("search returns a selection on success");
            rec.final_answer = sel.answer;
            rec.final_confidence = sel.confidence;
            rec.slow = Some(outcome);
        }
        Err((outcome, message)) => {
            rec.slow = outcome;
            rec.slow_error = Some(message);
            if config.strategy == Strategy::Adaptive {
                let f = match rec.fast.take() {
                    Some(f) => f,
                    None => run.fast().map_err(|e| {
                        ControllerError::Unanswerable(format!("slow path failed and fast_think failed: {e}"))
                    })?,
                };
                rec.decision = RoutingDecision {
                    path: RoutePath::SlowFallbackFast,
                    fast_confidence: Some(f.confidence.value()),
                    theta,
                };
                rec.final_answer = f.answer.clone();
                rec.final_confidence = Some(f.confidence);
                rec.fast = Some(f);
            }
        }
    }
    Ok(finish(rec, &run))
}

/// Answers every item, `parallelism` queries at a time, and reports. Queries
/// that cannot be answered at all are recorded with an empty final answer.
pub fn evaluate(
    engine: &Engine,
    items: &[QAItem],
    config: &ControllerConfig,
    parallelism: usize,
) -> (Vec<RunRecord>, EvalReport) {
    let records = par_map(items, parallelism, |item| {
        let input = QueryInput::from(item);
        answer_query(engine, &input, config).unwrap_or_else(|e| unanswered(&input, config, e))
    });
    let report = EvalReport::from_records(&records);
    (records, report)
}

fn unanswered(input: &QueryInput, config: &ControllerConfig, err: ControllerError) -> RunRecord {
    RunRecord {
        query_id: input.id.clone(),
        video_ref: input.video_ref.clone(),
        question: input.question.clone(),
        strategy: config.strategy,
        decision: RoutingDecision { path: RoutePath::SlowFallbackFast, fast_confidence: None, theta: config.theta },
        planner_output: String::new(),
        continuation: None,
        marker_position: None,
        fast: None,
        fast_error: None,
        slow: None,
        slow_error: Some(err.to_string()),
        final_answer: String::new(),
        final_confidence: None,
        output_length: 0,
        timings: Timings::default(),
        gold_answer: input.gold_answer.clone(),
        duration_bucket: input.duration_bucket,
    }
}
