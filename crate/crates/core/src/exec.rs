//! Single-program interpreter.
//!
//! `execute` never panics on bad programs or failing backends: every failure
//! is encoded in the returned [`ExecutionResult`] so the caller can decide
//! whether to fall back.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::confidence::{Confidence, ConfidenceSource};
use crate::modules::{self, Answer, Backend, Clip, Detection, FrameRange, ModuleError, QaOrigin, SubtitleHit};
use crate::program::{
    input_var, parse, render, Arg, InputVar, Literal, Program, ProgramError, Registry, ValidationKind,
};
use crate::world::{BBox, Frame, TextSpan, TimeSpan};

/// Serialized values above this many bytes are elided from summaries.
pub const ELISION_BYTES: usize = 4096;

/// Microsecond clock. The core never reads wall time itself.
pub trait Clock: Sync {
    fn now_us(&self) -> u64;
}

/// A clock stuck at zero; makes results byte-identical across runs.
#[derive(Debug, Clone, Copy, Default)]
pub struct FrozenClock;

impl Clock for FrozenClock {
    fn now_us(&self) -> u64 {
        0
    }
}

/// Inputs bound to the program's free variables (`video`, `query`, `choices`, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecContext {
    pub video_ref: String,
    pub query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<String>>,
}

impl ExecContext {
    pub fn new(video_ref: impl Into<String>, query: impl Into<String>, choices: Option<Vec<String>>) -> Self {
        ExecContext { video_ref: video_ref.into(), query: query.into(), choices }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Value {
    Video(String),
    Text(String),
    Int(i64),
    Float(f64),
    Numbers(Vec<f64>),
    Choices(Vec<String>),
    List(Vec<Literal>),
    Clips(Vec<Clip>),
    SubtitleHits(Vec<SubtitleHit>),
    Range(FrameRange),
    Frames(Vec<Frame>),
    Answer(Answer),
    Confidence(Confidence),
    TextList(Vec<String>),
    Detections(Vec<Detection>),
    Records(Vec<TextSpan>),
    Intervals(Vec<TimeSpan>),
}

impl Value {
    pub fn kind(&self) -> &'static str {
        match self {
            Value::Video(_) => "video",
            Value::Text(_) => "text",
            Value::Int(_) => "int",
            Value::Float(_) => "float",
            Value::Numbers(_) => "numbers",
            Value::Choices(_) => "choices",
            Value::List(_) => "list",
            Value::Clips(_) => "clips",
            Value::SubtitleHits(_) => "subtitle_hits",
            Value::Range(_) => "range",
            Value::Frames(_) => "frames",
            Value::Answer(_) => "answer",
            Value::Confidence(_) => "confidence",
            Value::TextList(_) => "text_list",
            Value::Detections(_) => "detections",
            Value::Records(_) => "records",
            Value::Intervals(_) => "intervals",
        }
    }

    /// Element count for collections, character count for text, 1 otherwise.
    pub fn size(&self) -> usize {
        match self {
            Value::Video(s) | Value::Text(s) => s.chars().count(),
            Value::Numbers(v) => v.len(),
            Value::Choices(v) | Value::TextList(v) => v.len(),
            Value::List(v) => v.len(),
            Value::Clips(v) => v.len(),
            Value::SubtitleHits(v) => v.len(),
            Value::Frames(v) => v.len(),
            Value::Detections(v) => v.len(),
            Value::Records(v) => v.len(),
            Value::Intervals(v) => v.len(),
            Value::Int(_) | Value::Float(_) | Value::Range(_) | Value::Answer(_) | Value::Confidence(_) => 1,
        }
    }

    fn from_literal(lit: &Literal) -> Value {
        match lit {
            Literal::Str(s) => Value::Text(s.clone()),
            Literal::Int(i) => Value::Int(*i),
            Literal::Float(x) => Value::Float(*x),
            Literal::List(items) => {
                if let Some(strs) = items
                    .iter()
                    .map(|i| if let Literal::Str(s) = i { Some(s.clone()) } else { None })
                    .collect::<Option<Vec<_>>>()
                {
                    Value::Choices(strs)
                } else if let Some(nums) = items.iter().map(Literal::as_f64).collect::<Option<Vec<_>>>() {
                    Value::Numbers(nums)
                } else {
                    Value::List(items.clone())
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueSummary {
    pub kind: String,
    pub size: usize,
    /// The serialized value, absent when it exceeded [`ELISION_BYTES`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<serde_json::Value>,
    #[serde(default)]
    pub elided: bool,
}

impl ValueSummary {
    pub fn of(v: &Value) -> Self {
        let content = serde_json::to_value(v).ok().and_then(|j| j.get("value").cloned());
        let bytes = content.as_ref().and_then(|c| serde_json::to_string(c).ok()).map_or(0, |s| s.len());
        let elided = bytes > ELISION_BYTES;
        ValueSummary { kind: v.kind().into(), size: v.size(), value: if elided { None } else { content }, elided }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub step_index: usize,
    pub module: String,
    pub resolved_args: BTreeMap<String, ValueSummary>,
    /// Absent for the failing step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_summary: Option<ValueSummary>,
    pub duration_us: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Success,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureStage {
    Parse,
    Validation,
    Execution,
    Extraction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "PascalCase")]
pub enum FailureKind {
    ParseError,
    ValidationError,
    UnknownModule,
    UnresolvedVariable,
    BackendError,
    DomainError,
    TypeError,
    NoAnswer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub stage: FailureStage,
    pub kind: FailureKind,
    /// Statement index, for execution failures.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<Confidence>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence_source: Option<ConfidenceSource>,
    pub env_final: BTreeMap<String, ValueSummary>,
    pub trace: Vec<TraceEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<Failure>,
    pub wall_time_us: u64,
    pub output_length: usize,
}

impl ExecutionResult {
    pub fn is_success(&self) -> bool {
        self.status == RunStatus::Success
    }

    /// A failed result with nothing executed.
    pub fn failed(stage: FailureStage, kind: FailureKind, message: impl Into<String>, output_length: usize) -> Self {
        ExecutionResult {
            status: RunStatus::Failed,
            answer: None,
            confidence: None,
            confidence_source: None,
            env_final: BTreeMap::new(),
            trace: Vec::new(),
            failure: Some(Failure { stage, kind, step: None, message: message.into() }),
            wall_time_us: 0,
            output_length,
        }
    }

    pub fn confidence_value(&self) -> Option<f64> {
        self.confidence.map(Confidence::value)
    }
}

/// Maps a parse/validation error to the failure it produces when raw planner text is executed.
pub fn program_error_failure(e: &ProgramError) -> (FailureStage, FailureKind) {
    match e {
        ProgramError::Parse { .. } => (FailureStage::Parse, FailureKind::ParseError),
        ProgramError::Validation { kind: ValidationKind::UnknownModule, .. } => {
            (FailureStage::Validation, FailureKind::UnknownModule)
        }
        ProgramError::Validation { kind: ValidationKind::UseBeforeDefine, .. } => {
            (FailureStage::Validation, FailureKind::UnresolvedVariable)
        }
        ProgramError::Validation { .. } | ProgramError::Registry(_) => {
            (FailureStage::Validation, FailureKind::ValidationError)
        }
    }
}

/// Parses `text` and executes it; parse and validation errors become failed results.
pub fn execute_text(
    text: &str,
    registry: &Registry,
    backend: &dyn Backend,
    ctx: &ExecContext,
    clock: &dyn Clock,
) -> ExecutionResult {
    let len = text.chars().count();
    match parse(text, registry) {
        Ok(program) => ExecutionResult { output_length: len, ..execute(&program, registry, backend, ctx, clock) },
        Err(e) => {
            let (stage, kind) = program_error_failure(&e);
            ExecutionResult::failed(stage, kind, e.to_string(), len)
        }
    }
}

struct StepError {
    kind: FailureKind,
    message: String,
}

impl From<ModuleError> for StepError {
    fn from(e: ModuleError) -> Self {
        let kind = match e {
            ModuleError::Domain(_) => FailureKind::DomainError,
            ModuleError::Backend(_) => FailureKind::BackendError,
            ModuleError::Type(_) => FailureKind::TypeError,
        };
        StepError { kind, message: e.to_string() }
    }
}

fn type_err(msg: String) -> StepError {
    StepError { kind: FailureKind::TypeError, message: msg }
}

/// Runs `program` statement by statement.
pub fn execute(
    program: &Program,
    registry: &Registry,
    backend: &dyn Backend,
    ctx: &ExecContext,
    clock: &dyn Clock,
) -> ExecutionResult {
    let t0 = clock.now_us();
    let output_length = render(program, registry).chars().count();
    let mut env: BTreeMap<String, Value> = BTreeMap::new();
    let mut trace = Vec::with_capacity(program.statements.len());
    let mut last_answer: Option<Answer> = None;

    for (i, st) in program.statements.iter().enumerate() {
        let s0 = clock.now_us();
        let fail = |kind: FailureKind,
                    message: String,
                    resolved: BTreeMap<String, ValueSummary>,
                    trace: &mut Vec<TraceEvent>,
                    env: &BTreeMap<String, Value>| {
            trace.push(TraceEvent {
                step_index: i,
                module: st.module.clone(),
                resolved_args: resolved,
                output_summary: None,
                duration_us: clock.now_us().saturating_sub(s0),
            });
            ExecutionResult {
                status: RunStatus::Failed,
                answer: None,
                confidence: None,
                confidence_source: None,
                env_final: env.iter().map(|(k, v)| (k.clone(), ValueSummary::of(v))).collect(),
                trace: core::mem::take(trace),
                failure: Some(Failure { stage: FailureStage::Execution, kind, step: Some(i), message }),
                wall_time_us: clock.now_us().saturating_sub(t0),
                output_length,
            }
        };

        let Some(sig) = registry.get(&st.module) else {
            return fail(
                FailureKind::UnknownModule,
                format!("unknown module {:?}", st.module),
                BTreeMap::new(),
                &mut trace,
                &env,
            );
        };

        let mut args: BTreeMap<String, Value> = BTreeMap::new();
        for p in &sig.params {
            let v = match st.args.get(&p.name) {
                Some(Arg::Lit(l)) => Value::from_literal(l),
                Some(Arg::Var(name)) => match resolve_var(name, &env, ctx) {
                    Some(v) => v,
                    None => {
                        let resolved = args.iter().map(|(k, v)| (k.clone(), ValueSummary::of(v))).collect();
                        return fail(
                            FailureKind::UnresolvedVariable,
                            format!("variable {name:?} is not bound"),
                            resolved,
                            &mut trace,
                            &env,
                        );
                    }
                },
                None => match &p.default {
                    Some(d) => Value::from_literal(d),
                    None if p.required => {
                        let resolved = args.iter().map(|(k, v)| (k.clone(), ValueSummary::of(v))).collect();
                        return fail(
                            FailureKind::ValidationError,
                            format!("{} is missing required argument {:?}", sig.name, p.name),
                            resolved,
                            &mut trace,
                            &env,
                        );
                    }
                    None => continue,
                },
            };
            args.insert(p.name.clone(), v);
        }
        let resolved: BTreeMap<String, ValueSummary> =
            args.iter().map(|(k, v)| (k.clone(), ValueSummary::of(v))).collect();

        let outputs = match run_module(&sig.name, &Args { map: &args, backend, ctx }) {
            Ok(o) => o,
            Err(e) => return fail(e.kind, e.message, resolved, &mut trace, &env),
        };

        let bound: Vec<(String, Value)> = if st.targets.len() == outputs.len() {
            st.targets.iter().cloned().zip(outputs).collect()
        } else {
            // single target on a multi-value module keeps the answer
            let pick = outputs.iter().position(|v| matches!(v, Value::Answer(_))).unwrap_or(0);
            vec![(st.targets[0].clone(), outputs.into_iter().nth(pick).expect("module returned a value"))]
        };
        let output_summary = if bound.len() == 1 {
            ValueSummary::of(&bound[0].1)
        } else {
            let parts: Vec<String> = bound.iter().map(|(_, v)| v.kind().to_string()).collect();
            let content =
                serde_json::Value::Array(bound.iter().filter_map(|(_, v)| ValueSummary::of(v).value).collect());
            ValueSummary { kind: parts.join(","), size: bound.len(), value: Some(content), elided: false }
        };
        for (name, v) in bound {
            if let Value::Answer(a) = &v {
                last_answer = Some(a.clone());
            }
            env.insert(name, v);
        }
        trace.push(TraceEvent {
            step_index: i,
            module: sig.name.clone(),
            resolved_args: resolved,
            output_summary: Some(output_summary),
            duration_us: clock.now_us().saturating_sub(s0),
        });
    }

    let env_final: BTreeMap<String, ValueSummary> = env.iter().map(|(k, v)| (k.clone(), ValueSummary::of(v))).collect();
    let from_return = program.return_var.as_ref().and_then(|r| env.get(r)).and_then(|v| match v {
        Value::Answer(a) => Some((a.text.clone(), Some(a.confidence), Some(a.source))),
        Value::Text(t) => Some((t.clone(), None, None)),
        _ => None,
    });
    let extracted = from_return.or_else(|| last_answer.map(|a| (a.text, Some(a.confidence), Some(a.source))));
    let wall_time_us = clock.now_us().saturating_sub(t0);
    match extracted {
        Some((answer, confidence, source)) => ExecutionResult {
            status: RunStatus::Success,
            answer: Some(answer),
            confidence,
            confidence_source: source,
            env_final,
            trace,
            failure: None,
            wall_time_us,
            output_length,
        },
        None => ExecutionResult {
            status: RunStatus::Failed,
            answer: None,
            confidence: None,
            confidence_source: None,
            env_final,
            trace,
            failure: Some(Failure {
                stage: FailureStage::Extraction,
                kind: FailureKind::NoAnswer,
                step: None,
                message: "program produced no answer".into(),
            }),
            wall_time_us,
            output_length,
        },
    }
}

fn resolve_var(name: &str, env: &BTreeMap<String, Value>, ctx: &ExecContext) -> Option<Value> {
    if let Some(v) = env.get(name) {
        return Some(v.clone());
    }
    match input_var(name)? {
        InputVar::Video => Some(Value::Video(ctx.video_ref.clone())),
        InputVar::Query => Some(Value::Text(ctx.query.clone())),
        InputVar::Choices => ctx.choices.clone().map(Value::Choices),
    }
}

struct Args<'a> {
    map: &'a BTreeMap<String, Value>,
    backend: &'a dyn Backend,
    ctx: &'a ExecContext,
}

impl Args<'_> {
    fn get(&self, name: &str) -> Result<&Value, StepError> {
        self.map.get(name).ok_or_else(|| type_err(format!("argument {name:?} missing")))
    }

    fn bad(&self, name: &str, want: &str) -> StepError {
        let got = self.map.get(name).map_or("nothing", Value::kind);
        type_err(format!("argument {name:?} must be {want}, got {got}"))
    }

    /// Video id plus an optional time scope narrowing it.
    fn scope(&self, name: &str) -> Result<(String, Option<Vec<TimeSpan>>), StepError> {
        let ctx_video = || self.ctx.video_ref.clone();
        Ok(match self.get(name)? {
            Value::Video(v) | Value::Text(v) => (v.clone(), None),
            Value::Range(r) => (r.video_id.clone(), Some(vec![r.span()])),
            Value::Clips(c) => {
                (c.first().map_or_else(ctx_video, |c| c.video_id.clone()), Some(c.iter().map(Clip::span).collect()))
            }
            Value::SubtitleHits(h) => (ctx_video(), Some(h.iter().map(SubtitleHit::span).collect())),
            Value::Records(r) => (ctx_video(), Some(r.iter().map(TextSpan::span).collect())),
            Value::Intervals(iv) => (ctx_video(), Some(iv.clone())),
            _ => return Err(self.bad(name, "a video or a time scope")),
        })
    }

    fn video(&self, name: &str) -> Result<String, StepError> {
        Ok(self.scope(name)?.0)
    }

    fn text(&self, name: &str) -> Result<String, StepError> {
        Ok(match self.get(name)? {
            Value::Text(s) => s.clone(),
            Value::Answer(a) => a.text.clone(),
            Value::TextList(v) => v.join(" "),
            Value::Records(r) => r.iter().map(|x| x.text.as_str()).collect::<Vec<_>>().join(" "),
            Value::SubtitleHits(h) => h.iter().map(|x| x.text.as_str()).collect::<Vec<_>>().join(" "),
            _ => return Err(self.bad(name, "text")),
        })
    }

    fn int(&self, name: &str) -> Result<i64, StepError> {
        match self.get(name)? {
            Value::Int(i) => Ok(*i),
            Value::Float(x) if libm::trunc(*x) == *x => Ok(*x as i64),
            _ => Err(self.bad(name, "an integer")),
        }
    }

    fn float(&self, name: &str) -> Result<f64, StepError> {
        match self.get(name)? {
            Value::Int(i) => Ok(*i as f64),
            Value::Float(x) => Ok(*x),
            Value::Confidence(c) => Ok(c.value()),
            _ => Err(self.bad(name, "a number")),
        }
    }

    /// A number, or the start (`use_end`: end) of the first item of a timed value.
    fn timestamp(&self, name: &str, use_end: bool) -> Result<f64, StepError> {
        let pick = |s: TimeSpan| if use_end { s.end } else { s.start };
        let first = |s: Option<TimeSpan>| {
            s.map(pick).ok_or_else(|| StepError {
                kind: FailureKind::DomainError,
                message: format!("argument {name:?} is empty; no timestamp to take"),
            })
        };
        match self.get(name)? {
            Value::Int(i) => Ok(*i as f64),
            Value::Float(x) => Ok(*x),
            Value::Range(r) => Ok(pick(r.span())),
            Value::Clips(c) => first(c.first().map(Clip::span)),
            Value::SubtitleHits(h) => first(h.first().map(SubtitleHit::span)),
            Value::Records(r) => first(r.first().map(TextSpan::span)),
            Value::Intervals(iv) => first(iv.first().copied()),
            Value::Detections(d) => first(d.first().map(|d| TimeSpan::new(d.timestamp, d.timestamp))),
            Value::Frames(f) => first(f.first().map(|f| TimeSpan::new(f.timestamp, f.timestamp))),
            _ => Err(self.bad(name, "a timestamp")),
        }
    }

    /// Frames, or frames sampled from a time scope.
    fn frames(&self, name: &str) -> Result<Vec<Frame>, StepError> {
        if let Value::Frames(f) = self.get(name)? {
            return Ok(f.clone());
        }
        let (video, spans) = self.scope(name).map_err(|_| self.bad(name, "frames or a time scope"))?;
        let spans = match spans {
            Some(s) => s,
            None => vec![TimeSpan::new(0.0, self.backend.video_info(&video).map_err(ModuleError::from)?.duration)],
        };
        Ok(modules::scope_frames(self.backend, &video, &spans)?)
    }

    fn choices(&self, name: &str) -> Result<Vec<String>, StepError> {
        match self.get(name)? {
            Value::Choices(c) => Ok(c.clone()),
            Value::TextList(c) => Ok(c.clone()),
            _ => Err(self.bad(name, "a list of choices")),
        }
    }

    fn bbox(&self, name: &str) -> Result<BBox, StepError> {
        match self.get(name)? {
            Value::Numbers(n) if n.len() == 4 => Ok(BBox::new(n[0], n[1], n[2], n[3])),
            Value::Detections(d) => d.first().map(|d| d.bbox).ok_or_else(|| StepError {
                kind: FailureKind::DomainError,
                message: format!("argument {name:?} holds no detections to crop to"),
            }),
            _ => Err(self.bad(name, "a box [x0, y0, x1, y1]")),
        }
    }

    fn has(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }
}

fn run_module(name: &str, a: &Args<'_>) -> Result<Vec<Value>, StepError> {
    let b = a.backend;
    let out = match name {
        "get_clips" => {
            let (video, scope) = a.scope("video_path")?;
            Value::Clips(modules::get_clips(b, &video, scope.as_deref(), &a.text("query")?, a.int("top_k")?)?)
        }
        "get_subtitles" => {
            let (video, scope) = a.scope("video_path")?;
            Value::SubtitleHits(modules::get_subtitles(
                b,
                &video,
                scope.as_deref(),
                &a.text("query")?,
                a.int("top_k")?,
            )?)
        }
        "trim_before" => Value::Range(modules::trim_before(
            b,
            &a.video("video_path")?,
            a.timestamp("timestamp", false)?,
            a.int("intervals")?,
        )?),
        "trim_after" => Value::Range(modules::trim_after(
            b,
            &a.video("video_path")?,
            a.timestamp("timestamp", true)?,
            a.int("intervals")?,
        )?),
        "trim_range" => Value::Range(modules::trim_range(
            b,
            &a.video("video_path")?,
            a.timestamp("start", false)?,
            a.timestamp("end", true)?,
        )?),
        "query_mc" => Value::Answer(modules::query_mc(
            b,
            &a.frames("frames")?,
            &a.text("query")?,
            &a.choices("choices")?,
            QaOrigin::Program,
        )?),
        "query_yn" => {
            let ans = modules::query_yn(b, &a.frames("frames")?, &a.text("query")?, QaOrigin::Program)?;
            let c = ans.confidence;
            return Ok(vec![Value::Answer(ans), Value::Confidence(c)]);
        }
        "run_ocr" => Value::Text(modules::run_ocr(b, &a.frames("frame")?)?),
        "detect_object" => Value::Detections(modules::detect_object(
            b,
            &a.frames("frame")?,
            &a.text("text")?,
            a.float("text_thr")?,
            a.float("box_thr")?,
        )?),
        "get_subs_range" => Value::Records(modules::get_subs_range(
            b,
            &a.video("video_path")?,
            a.timestamp("start", false)?,
            a.timestamp("end", true)?,
        )?),
        "get_caps_range" => Value::Records(modules::get_caps_range(
            b,
            &a.video("video_path")?,
            a.timestamp("start", false)?,
            a.timestamp("end", true)?,
        )?),
        "get_subtitle_hint" => Value::Text(modules::get_subtitle_hint(b, &a.video("video_path")?, &a.text("query")?)?),
        "crop" => Value::Frames(modules::crop(&a.frames("frame")?, a.bbox("box")?)?),
        "extract_frames" => {
            let (video, scope) = a.scope("video_path")?;
            Value::Frames(modules::extract_frames(b, &video, scope.as_deref(), a.int("num_frames")?)?)
        }
        "split_video" => Value::Intervals(modules::split_video(b, &a.video("video_path")?)?),
        "split_event" => Value::TextList(modules::split_event(&a.text("text")?)),
        "fast_think" => {
            let choices = if a.has("choices") { Some(a.choices("choices")?) } else { a.ctx.choices.clone() };
            let (c, ans) = modules::fast_think(b, &a.video("video_path")?, &a.text("query")?, choices.as_deref())?;
            return Ok(vec![Value::Confidence(c), Value::Answer(ans)]);
        }
        other => {
            return Err(StepError {
                kind: FailureKind::UnknownModule,
                message: format!("no implementation for module {other:?}"),
            })
        }
    };
    Ok(vec![out])
}
