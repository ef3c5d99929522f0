//! Planner backends: the model that decides fast vs slow and writes programs
//! (inference), proposes programs for gold-labelled items and rewrites queries
//! (dataset construction).

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use fastslow_core::program::{FAST_MARKER, STOP_SEQUENCE};
use fastslow_core::world::ItemKind;
use fastslow_core::{Corpus, Registry};

pub const EASY_SENTENCE: &str = "This is an easy question.";
pub const DIFFICULT_SENTENCE: &str = "This is a difficult question.";

/// What the planner is asked to do.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum PlannerTask {
    /// First call for a query, sampled with the stop sequence.
    Answer,
    /// Continue after a fast attempt was not confident enough.
    Continue,
    /// Propose a program for a gold-labelled item.
    Propose { attempt: usize },
    /// Rewrite a question and its program so the program uses `module`.
    Rewrite { module: String, attempt: usize },
}

impl fmt::Display for PlannerTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlannerTask::Answer => write!(f, "answer"),
            PlannerTask::Continue => write!(f, "continue"),
            PlannerTask::Propose { attempt } => write!(f, "propose#{attempt}"),
            PlannerTask::Rewrite { module, attempt } => write!(f, "rewrite:{module}#{attempt}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerRequest {
    #[serde(flatten)]
    pub task: PlannerTask,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_id: Option<String>,
    pub video_ref: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<String>>,
    /// Known only during dataset construction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_answer: Option<String>,
    /// Fully rendered prompt; continuation prompts already include the prior output.
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlannerError {
    #[error("planner unreachable: {0}")]
    Unreachable(String),
    #[error("no scripted completion for query {query_id:?} ({task})")]
    NoScript { query_id: Option<String>, task: String },
    #[error("planner protocol error: {0}")]
    Protocol(String),
}

pub trait Planner: Send + Sync {
    fn complete(&self, request: &PlannerRequest) -> Result<String, PlannerError>;
}

impl<P: Planner + ?Sized> Planner for Arc<P> {
    fn complete(&self, request: &PlannerRequest) -> Result<String, PlannerError> {
        (**self).complete(request)
    }
}

/// Cuts `text` before the first occurrence of `stop`.
pub fn apply_stop<'a>(text: &'a str, stop: Option<&str>) -> &'a str {
    match stop.and_then(|s| text.find(s)) {
        Some(i) => &text[..i],
        None => text,
    }
}

/// Splits a rewrite completion into `(question, program text)`. The first
/// line must be `Question: ...`.
pub fn parse_rewrite(text: &str) -> Result<(String, String), PlannerError> {
    let text = text.trim_start();
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    let q = first
        .trim()
        .strip_prefix("Question:")
        .map(str::trim)
        .filter(|q| !q.is_empty())
        .ok_or_else(|| PlannerError::Protocol("rewrite output must start with \"Question: ...\"".into()))?;
    Ok((q.to_string(), rest.to_string()))
}

/// One curated `(question, answer, program)` exemplar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub question: String,
    pub answer: String,
    pub program: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportSet {
    pub exemplars: Vec<Exemplar>,
}

impl SupportSet {
    pub fn builtin() -> Self {
        let ex = |q: &str, a: &str, module: &str| Exemplar {
            question: q.into(),
            answer: a.into(),
            program: program_using(module).unwrap_or_else(base_program),
        };
        SupportSet {
            exemplars: vec![
                ex("Which object appears briefly near the red car?", "lantern", "get_clips"),
                ex("What is shown right after the chef says \"now we wait\"?", "oven", "trim_before"),
                ex("Which word is written on the sign near the gate?", "exit", "run_ocr"),
            ],
        }
    }

    /// Every exemplar program must parse against `registry`.
    pub fn validate(&self, registry: &Registry) -> Result<(), String> {
        for (i, e) in self.exemplars.iter().enumerate() {
            fastslow_core::parse(&e.program, registry).map_err(|err| format!("support exemplar {i}: {err}"))?;
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.exemplars {
            out.push_str(&format!(
                "Question: {}\nAnswer: {}\nProgram:\n{}\n",
                e.question,
                e.answer,
                e.program.trim_end()
            ));
        }
        out
    }
}

/// Prompt templates. `{question}`, `{choices}`, `{answer}`, `{support}`,
/// `{module}` and `{program}` are substituted; the wording is a config asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptTemplates {
    pub answer: String,
    pub propose: String,
    pub rewrite: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            answer: "Decide whether the question is easy or difficult. For an easy question write the line \
                     `# fast_reasoning`; otherwise write a visual program.\nQuestion: {question}\nChoices: {choices}\n"
                .into(),
            propose: "Write a visual program that answers the question using the available modules.\n\
                      {support}\nQuestion: {question}\nChoices: {choices}\nAnswer: {answer}\nProgram:\n"
                .into(),
            rewrite: "Rewrite the question and its program so that the program uses the module {module}. \
                      Start with `Question: ...`, then the program.\nQuestion: {question}\nProgram:\n{program}\n"
                .into(),
        }
    }
}

fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (k, v) in vars {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    out
}

fn choice_text(choices: Option<&[String]>) -> String {
    choices.map_or_else(|| "(yes/no)".to_string(), |c| c.join(" | "))
}

impl PromptTemplates {
    pub fn answer_prompt(&self, question: &str, choices: Option<&[String]>) -> String {
        fill(&self.answer, &[("question", question), ("choices", &choice_text(choices))])
    }

    /// Continuation prompt: the original prompt followed by the planner's prior output.
    pub fn continuation_prompt(&self, question: &str, choices: Option<&[String]>, prior: &str) -> String {
        let mut p = self.answer_prompt(question, choices);
        p.push_str(prior);
        if !prior.ends_with('\n') {
            p.push('\n');
        }
        p
    }

    pub fn propose_prompt(
        &self,
        support: &SupportSet,
        question: &str,
        choices: Option<&[String]>,
        answer: &str,
    ) -> String {
        fill(
            &self.propose,
            &[
                ("support", &support.render()),
                ("question", question),
                ("choices", &choice_text(choices)),
                ("answer", answer),
            ],
        )
    }

    pub fn rewrite_prompt(&self, module: &str, question: &str, program: &str) -> String {
        fill(&self.rewrite, &[("module", module), ("question", question), ("program", program)])
    }
}

/// Supervised target for an easy item.
pub fn easy_target() -> String {
    format!("# {EASY_SENTENCE}\n# {FAST_MARKER}\n")
}

const LOCATE_CLIP: &str = "clips = get_clips(video_path=video, query=query, top_k=1)\n";
const LOCATE_SUB: &str = "hits = get_subtitles(video_path=video, query=query, top_k=1)\n";
const FRAMES_FROM_CLIPS: &str = "frames = extract_frames(video_path=clips, num_frames=16)\n";
const ANSWER: &str = "answer = query_mc(frames=frames, query=query, choices=choices)\n";

/// The default slow program: find the best clip, sample it, ask.
pub fn base_program() -> String {
    format!(
        "# {DIFFICULT_SENTENCE}\n# Find the clip that matches the question, sample frames from it, then answer.\n\
         {LOCATE_CLIP}{FRAMES_FROM_CLIPS}{ANSWER}{STOP_SEQUENCE}\n"
    )
}

/// A program that answers the corpus' question forms and calls `module`.
pub fn program_using(module: &str) -> Option<String> {
    let (plan, body) = match module {
        "get_clips" | "extract_frames" | "query_mc" => return Some(base_program()),
        "get_subtitles" => (
            "Find the subtitle line that mentions the subject and look at it.",
            format!("{LOCATE_SUB}frames = extract_frames(video_path=hits, num_frames=8)\n{ANSWER}"),
        ),
        "trim_before" => (
            "Find the subtitle line, then look at the seconds that follow it.",
            format!(
                "{LOCATE_SUB}window = trim_before(video_path=video, timestamp=hits, intervals=10)\n\
                 frames = extract_frames(video_path=window, num_frames=16)\n{ANSWER}"
            ),
        ),
        "trim_after" => (
            "Find the subtitle line, then look at the seconds leading up to its end.",
            format!(
                "{LOCATE_SUB}window = trim_after(video_path=video, timestamp=hits, intervals=10)\n\
                 frames = extract_frames(video_path=window, num_frames=16)\n{ANSWER}"
            ),
        ),
        "trim_range" => (
            "Find the subtitle line and cut exactly its time range.",
            format!(
                "{LOCATE_SUB}window = trim_range(video_path=video, start=hits, end=hits)\n\
                 frames = extract_frames(video_path=window, num_frames=8)\n{ANSWER}"
            ),
        ),
        "query_yn" => (
            "Check the clip shows the subject before choosing.",
            format!("{LOCATE_CLIP}{FRAMES_FROM_CLIPS}seen = query_yn(frames=frames, query=query)\n{ANSWER}"),
        ),
        "run_ocr" => (
            "Read any text in the clip before choosing.",
            format!("{LOCATE_CLIP}{FRAMES_FROM_CLIPS}words = run_ocr(frame=frames)\n{ANSWER}"),
        ),
        "detect_object" => (
            "Detect objects mentioned by the question in the clip.",
            format!("{LOCATE_CLIP}{FRAMES_FROM_CLIPS}boxes = detect_object(frame=frames, text=query)\n{ANSWER}"),
        ),
        "crop" => (
            "Keep the full frame area and answer from the cropped frames.",
            format!(
                "{LOCATE_CLIP}{FRAMES_FROM_CLIPS}zoom = crop(frame=frames, box=[0.0, 0.0, 1.0, 1.0])\n\
                 answer = query_mc(frames=zoom, query=query, choices=choices)\n"
            ),
        ),
        "get_subs_range" => (
            "Find the subtitle line, collect the subtitles in its range and look there.",
            format!(
                "{LOCATE_SUB}subs = get_subs_range(video_path=video, start=hits, end=hits)\n\
                 frames = extract_frames(video_path=subs, num_frames=8)\n{ANSWER}"
            ),
        ),
        "get_caps_range" => (
            "Find the subtitle line and read the captions over the same range.",
            format!(
                "{LOCATE_SUB}caps = get_caps_range(video_path=video, start=hits, end=hits)\n\
                 frames = extract_frames(video_path=hits, num_frames=8)\n{ANSWER}"
            ),
        ),
        "get_subtitle_hint" => (
            "Skim the subtitles for hints, then look at the matching clip.",
            format!(
                "hint = get_subtitle_hint(video_path=video, query=query)\n{LOCATE_CLIP}{FRAMES_FROM_CLIPS}{ANSWER}"
            ),
        ),
        "split_video" => (
            "Split the video into scenes and search them for the subject.",
            format!(
                "parts = split_video(video_path=video)\nclips = get_clips(video_path=parts, query=query, top_k=1)\n\
                 {FRAMES_FROM_CLIPS}{ANSWER}"
            ),
        ),
        "split_event" => (
            "Break the question into events, then look at the matching clip.",
            format!("steps = split_event(text=query)\n{LOCATE_CLIP}{FRAMES_FROM_CLIPS}{ANSWER}"),
        ),
        "fast_think" => (
            "Take a quick look at the whole video, then verify on the matching clip.",
            format!(
                "conf, guess = fast_think(video_path=video, query=query)\n{LOCATE_CLIP}{FRAMES_FROM_CLIPS}{ANSWER}"
            ),
        ),
        _ => return None,
    };
    Some(format!("# {DIFFICULT_SENTENCE}\n# {plan}\n{body}{STOP_SEQUENCE}\n"))
}

/// Replays canned completions keyed by query id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Script {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continuation: Option<String>,
    /// Proposal `i` answers attempt `i`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub proposals: Vec<String>,
    /// Per target module, one completion per attempt.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub rewrites: BTreeMap<String, Vec<String>>,
}

#[derive(Clone, Default)]
pub struct ScriptedPlanner {
    pub scripts: BTreeMap<String, Script>,
    /// Consulted when a query has no script for the task.
    pub fallback: Option<Arc<dyn Planner>>,
}

impl ScriptedPlanner {
    pub fn new(scripts: BTreeMap<String, Script>) -> Self {
        ScriptedPlanner { scripts, fallback: None }
    }

    pub fn with_fallback(mut self, fallback: Arc<dyn Planner>) -> Self {
        self.fallback = Some(fallback);
        self
    }

    pub fn insert(&mut self, query_id: impl Into<String>, script: Script) {
        self.scripts.insert(query_id.into(), script);
    }
}

impl Planner for ScriptedPlanner {
    fn complete(&self, req: &PlannerRequest) -> Result<String, PlannerError> {
        let script = req.query_id.as_ref().and_then(|id| self.scripts.get(id));
        let canned = script.and_then(|s| match &req.task {
            PlannerTask::Answer => s.answer.clone(),
            PlannerTask::Continue => s.continuation.clone(),
            PlannerTask::Propose { attempt } => s.proposals.get(*attempt).cloned(),
            PlannerTask::Rewrite { module, attempt } => s.rewrites.get(module).and_then(|r| r.get(*attempt)).cloned(),
        });
        match (canned, &self.fallback) {
            (Some(text), _) => Ok(apply_stop(&text, req.stop.as_deref()).to_string()),
            (None, Some(f)) => f.complete(req),
            (None, None) => Err(PlannerError::NoScript { query_id: req.query_id.clone(), task: req.task.to_string() }),
        }
    }
}

/// When the synthetic planner emits the fast marker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkerPolicy {
    /// Always try fast first; the confidence gate does the routing.
    #[default]
    All,
    /// Mark exactly the items built as easy.
    Oracle,
    /// Never mark; every query goes slow.
    Never,
}

/// Deterministic stand-in for a trained planner over a synthetic corpus.
#[derive(Clone)]
pub struct SyntheticPlanner {
    corpus: Arc<Corpus>,
    policy: MarkerPolicy,
}

const REWRITE_FORMS: [&str; 3] = [
    "Near the {subject}, which object appears briefly?",
    "Which object is briefly visible near the {subject}?",
    "Next to the {subject}, which object briefly appears?",
];

/// The subject phrase of the corpus' question forms ("... near the red car?").
fn subject_of(question: &str) -> Option<&str> {
    let (_, tail) = question.rsplit_once(" the ")?;
    let s = tail.trim_end_matches(['?', ' ', '.']);
    let s = s.strip_suffix(" throughout").unwrap_or(s);
    (!s.is_empty()).then_some(s)
}

impl SyntheticPlanner {
    pub fn new(corpus: Arc<Corpus>, policy: MarkerPolicy) -> Self {
        SyntheticPlanner { corpus, policy }
    }

    fn marks_easy(&self, video: &str, question: &str) -> bool {
        match self.policy {
            MarkerPolicy::All => true,
            MarkerPolicy::Never => false,
            MarkerPolicy::Oracle => self.corpus.find_item(video, question).is_some_and(|i| i.kind == ItemKind::Easy),
        }
    }
}

impl Planner for SyntheticPlanner {
    fn complete(&self, req: &PlannerRequest) -> Result<String, PlannerError> {
        let text = match &req.task {
            PlannerTask::Answer => {
                if self.marks_easy(&req.video_ref, &req.question) {
                    easy_target()
                } else {
                    base_program()
                }
            }
            PlannerTask::Continue => {
                let body = base_program();
                let body = body.strip_prefix(&format!("# {DIFFICULT_SENTENCE}\n")).unwrap_or(&body).to_string();
                format!("# The quick answer is uncertain; reason with a visual program.\n{body}")
            }
            PlannerTask::Propose { attempt } => {
                let alt = ["get_clips", "get_subtitles", "trim_range"];
                program_using(alt[attempt % alt.len()]).unwrap_or_else(base_program)
            }
            PlannerTask::Rewrite { module, attempt } => {
                let program = program_using(module)
                    .ok_or_else(|| PlannerError::Protocol(format!("no program template uses module {module:?}")))?;
                let question = match subject_of(&req.question) {
                    Some(subject) => REWRITE_FORMS[attempt % REWRITE_FORMS.len()].replace("{subject}", subject),
                    None => req.question.clone(),
                };
                format!("Question: {question}\n{program}")
            }
        };
        Ok(apply_stop(&text, req.stop.as_deref()).to_string())
    }
}
