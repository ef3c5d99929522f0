//! The visual-program DSL: module registry, parser/validator, renderer, and
//! one-parameter-at-a-time substitution.
//!
//! Grammar (one statement per logical line; parentheses and brackets may span lines):
//!
//! ```text
//! program   := line*
//! line      := comment | statement [comment] | "return" [ident] | blank
//! comment   := "#" text
//! statement := ident ["," ident] "=" module "(" [arg ("," arg)* [","]] ")"
//! arg       := ident "=" (literal | ident)
//! literal   := string | number | "[" [literal ("," literal)*] "]"
//! ```
//!
//! Anything after the first `return` line is ignored with a warning.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

/// Substring whose presence in planner output requests fast reasoning.
pub const FAST_MARKER: &str = "fast_reasoning";
/// Stop sequence the planner is sampled with.
pub const STOP_SEQUENCE: &str = "return answer";

/// Kinds of module parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    String,
    Integer,
    Float,
    Timestamp,
    FrameSet,
    BoxRef,
    ChoiceList,
    Text,
}

impl ParamKind {
    /// Whether a literal may be written for a parameter of this kind.
    pub fn accepts(self, lit: &Literal) -> bool {
        match (self, lit) {
            (ParamKind::String | ParamKind::Text, Literal::Str(_)) => true,
            (ParamKind::Integer, Literal::Int(_)) => true,
            (ParamKind::Float | ParamKind::Timestamp, Literal::Int(_) | Literal::Float(_)) => true,
            (ParamKind::BoxRef, Literal::List(items)) => {
                items.len() == 4 && items.iter().all(|i| matches!(i, Literal::Int(_) | Literal::Float(_)))
            }
            (ParamKind::ChoiceList, Literal::List(items)) => {
                !items.is_empty() && items.iter().all(|i| matches!(i, Literal::Str(_)))
            }
            _ => false,
        }
    }
}

/// Kinds of values modules produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    Clips,
    SubtitleHits,
    FrameRange,
    Frames,
    Frame,
    Answer,
    Confidence,
    Text,
    TextList,
    Detections,
    Records,
    Intervals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Literal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_space: Option<Vec<Literal>>,
}

impl ParamSpec {
    fn required(name: &str, kind: ParamKind) -> Self {
        ParamSpec { name: name.into(), kind, required: true, default: None, search_space: None }
    }

    fn optional(name: &str, kind: ParamKind, default: Literal) -> Self {
        ParamSpec { name: name.into(), kind, required: false, default: Some(default), search_space: None }
    }

    fn searchable(mut self, space: Vec<Literal>) -> Self {
        self.search_space = Some(space);
        self
    }

    pub fn is_searchable(&self) -> bool {
        self.search_space.as_ref().is_some_and(|s| !s.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleSignature {
    /// Canonical snake_case identifier.
    pub name: String,
    /// Display name accepted as an alias (e.g. `GetClips`).
    pub alias: String,
    pub params: Vec<ParamSpec>,
    pub returns: Vec<OutputKind>,
}

impl ModuleSignature {
    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }
}

/// Canonical names of the seventeen modules, in registry order.
pub const MODULE_NAMES: [&str; 17] = [
    "get_clips",
    "get_subtitles",
    "trim_before",
    "trim_after",
    "trim_range",
    "query_mc",
    "query_yn",
    "run_ocr",
    "detect_object",
    "get_subs_range",
    "get_caps_range",
    "get_subtitle_hint",
    "crop",
    "extract_frames",
    "split_video",
    "split_event",
    "fast_think",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    pub modules: Vec<ModuleSignature>,
}

impl Registry {
    /// The built-in module library with its default search spaces.
    pub fn builtin() -> Self {
        use Literal::{Float as F, Int as I};
        use ParamKind::*;
        let video = || ParamSpec::required("video_path", String);
        let query = || ParamSpec::required("query", Text);
        let top_k = || ParamSpec::optional("top_k", Integer, I(3)).searchable(vec![I(1), I(3), I(5)]);
        let intervals =
            || ParamSpec::optional("intervals", Integer, I(30)).searchable(vec![I(10), I(20), I(30), I(60)]);
        let start_end =
            || vec![video(), ParamSpec::required("start", Timestamp), ParamSpec::required("end", Timestamp)];
        let sig = |name: &str, alias: &str, params: Vec<ParamSpec>, returns: Vec<OutputKind>| ModuleSignature {
            name: name.into(),
            alias: alias.into(),
            params,
            returns,
        };
        let modules = vec![
            sig("get_clips", "GetClips", vec![video(), query(), top_k()], vec![OutputKind::Clips]),
            sig("get_subtitles", "GetSubtitles", vec![video(), query(), top_k()], vec![OutputKind::SubtitleHits]),
            sig(
                "trim_before",
                "TrimBefore",
                vec![video(), ParamSpec::required("timestamp", Timestamp), intervals()],
                vec![OutputKind::FrameRange],
            ),
            sig(
                "trim_after",
                "TrimAfter",
                vec![video(), ParamSpec::required("timestamp", Timestamp), intervals()],
                vec![OutputKind::FrameRange],
            ),
            sig("trim_range", "TrimRange", start_end(), vec![OutputKind::FrameRange]),
            sig(
                "query_mc",
                "QueryMC",
                vec![ParamSpec::required("frames", FrameSet), query(), ParamSpec::required("choices", ChoiceList)],
                vec![OutputKind::Answer],
            ),
            sig(
                "query_yn",
                "QueryYN",
                vec![ParamSpec::required("frames", FrameSet), query()],
                vec![OutputKind::Answer, OutputKind::Confidence],
            ),
            sig("run_ocr", "RunOCR", vec![ParamSpec::required("frame", FrameSet)], vec![OutputKind::Text]),
            sig(
                "detect_object",
                "DetectObject",
                vec![
                    ParamSpec::required("frame", FrameSet),
                    ParamSpec::required("text", Text),
                    ParamSpec::optional("text_thr", Float, F(0.25)).searchable(vec![F(0.25), F(0.5), F(0.7)]),
                    ParamSpec::optional("box_thr", Float, F(0.25)),
                ],
                vec![OutputKind::Detections],
            ),
            sig("get_subs_range", "GetSubsRange", start_end(), vec![OutputKind::Records]),
            sig("get_caps_range", "GetCapsRange", start_end(), vec![OutputKind::Records]),
            sig("get_subtitle_hint", "GetSubtitleHint", vec![video(), query()], vec![OutputKind::Text]),
            sig(
                "crop",
                "Crop",
                vec![ParamSpec::required("frame", FrameSet), ParamSpec::required("box", BoxRef)],
                vec![OutputKind::Frames],
            ),
            sig(
                "extract_frames",
                "ExtractFrames",
                vec![
                    video(),
                    ParamSpec::optional("num_frames", Integer, I(16)).searchable(vec![I(8), I(16), I(32), I(64)]),
                ],
                vec![OutputKind::Frames],
            ),
            sig("split_video", "SplitVideo", vec![video()], vec![OutputKind::Intervals]),
            sig("split_event", "SplitEvent", vec![ParamSpec::required("text", Text)], vec![OutputKind::TextList]),
            sig(
                "fast_think",
                "FastThink",
                vec![
                    video(),
                    query(),
                    ParamSpec {
                        name: "choices".into(),
                        kind: ChoiceList,
                        required: false,
                        default: None,
                        search_space: None,
                    },
                ],
                vec![OutputKind::Confidence, OutputKind::Answer],
            ),
        ];
        Registry { modules }
    }

    /// Looks a module up by canonical name or alias.
    pub fn get(&self, name: &str) -> Option<&ModuleSignature> {
        self.modules.iter().find(|m| m.name == name || m.alias == name)
    }

    /// Checks the registry invariants: exactly the seventeen known modules,
    /// unique names, well-formed defaults and search spaces.
    pub fn validate(&self) -> Result<(), ProgramError> {
        let err = |msg: String| ProgramError::Registry(msg);
        let mut seen = BTreeSet::new();
        for m in &self.modules {
            if !seen.insert(m.name.as_str()) || (m.alias != m.name && !seen.insert(m.alias.as_str())) {
                return Err(err(format!("duplicate module name or alias {:?}", m.name)));
            }
            if !MODULE_NAMES.contains(&m.name.as_str()) {
                return Err(err(format!(
                    "unknown module {:?}; the runtime implements only the built-in library",
                    m.name
                )));
            }
            if m.returns.is_empty() {
                return Err(err(format!("{}: no return kinds", m.name)));
            }
            let mut pnames = BTreeSet::new();
            for p in &m.params {
                if !pnames.insert(p.name.as_str()) {
                    return Err(err(format!("{}: duplicate param {}", m.name, p.name)));
                }
                if let Some(d) = &p.default {
                    if !p.kind.accepts(d) {
                        return Err(err(format!("{}.{}: default {} is not a {:?}", m.name, p.name, d, p.kind)));
                    }
                }
                if let Some(space) = &p.search_space {
                    if space.is_empty() {
                        return Err(err(format!("{}.{}: empty search space", m.name, p.name)));
                    }
                    if let Some(bad) = space.iter().find(|v| !p.kind.accepts(v)) {
                        return Err(err(format!("{}.{}: search value {} is not a {:?}", m.name, p.name, bad, p.kind)));
                    }
                }
            }
        }
        if self.modules.len() != MODULE_NAMES.len() {
            return Err(err(format!("registry has {} modules, expected {}", self.modules.len(), MODULE_NAMES.len())));
        }
        Ok(())
    }

    /// Names of all parameters that carry a search space anywhere in the registry.
    pub fn searchable_params(&self) -> BTreeSet<String> {
        self.modules
            .iter()
            .flat_map(|m| m.params.iter())
            .filter(|p| p.is_searchable())
            .map(|p| p.name.clone())
            .collect()
    }
}

/// Literal values. Serialized untagged: JSON strings, integers, floats, arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Literal {
    Int(i64),
    Float(f64),
    Str(String),
    List(Vec<Literal>),
}

impl Literal {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Literal::Int(i) => Some(*i as f64),
            Literal::Float(f) => Some(*f),
            _ => None,
        }
    }

    /// Numeric-aware equality: `Int(3)` equals `Float(3.0)`.
    pub fn same_value(&self, other: &Literal) -> bool {
        match (self.as_f64(), other.as_f64()) {
            (Some(a), Some(b)) => a == b,
            _ => self == other,
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Int(i) => write!(f, "{i}"),
            // Debug keeps a decimal point or exponent, so floats re-lex as floats
            Literal::Float(x) => write!(f, "{x:?}"),
            Literal::Str(s) => {
                f.write_str("\"")?;
                for c in s.chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        '\n' => f.write_str("\\n")?,
                        '\t' => f.write_str("\\t")?,
                        '\r' => f.write_str("\\r")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")
            }
            Literal::List(items) => {
                f.write_str("[")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str("]")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arg {
    Lit(Literal),
    Var(String),
}

impl fmt::Display for Arg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arg::Lit(l) => write!(f, "{l}"),
            Arg::Var(v) => f.write_str(v),
        }
    }
}

/// 1-based inclusive line range of a statement in the planner output.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSpan {
    pub first_line: usize,
    pub last_line: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Statement {
    pub targets: Vec<String>,
    /// Canonical module name.
    pub module: String,
    pub args: BTreeMap<String, Arg>,
    pub source_span: SourceSpan,
}

// Spans are diagnostics, not structure.
impl PartialEq for Statement {
    fn eq(&self, other: &Self) -> bool {
        self.targets == other.targets && self.module == other.module && self.args == other.args
    }
}

/// Names bound by the execution context rather than by statements.
pub const INPUT_VARIABLES: [(&str, InputVar); 8] = [
    ("video_path", InputVar::Video),
    ("video", InputVar::Video),
    ("v", InputVar::Video),
    ("query", InputVar::Query),
    ("question", InputVar::Query),
    ("q", InputVar::Query),
    ("choices", InputVar::Choices),
    ("options", InputVar::Choices),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputVar {
    Video,
    Query,
    Choices,
}

pub fn input_var(name: &str) -> Option<InputVar> {
    INPUT_VARIABLES.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Program {
    pub statements: Vec<Statement>,
    pub planning_text: Vec<String>,
    pub has_fast_marker: bool,
    pub terminated: bool,
    /// Variable named by `return`, when given.
    pub return_var: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl PartialEq for Program {
    fn eq(&self, other: &Self) -> bool {
        self.statements == other.statements
            && self.planning_text == other.planning_text
            && self.has_fast_marker == other.has_fast_marker
            && self.terminated == other.terminated
            && self.return_var == other.return_var
    }
}

impl Program {
    /// Distinct canonical module names in statement order.
    pub fn modules_used(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for s in &self.statements {
            if !out.contains(&s.module) {
                out.push(s.module.clone());
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBinding {
    pub statement_index: usize,
    pub param_name: String,
    pub value: Literal,
}

impl fmt::Display for ParamBinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}:{}={}", self.statement_index, self.param_name, self.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationKind {
    UnknownModule,
    UnknownArg,
    DuplicateArg,
    MissingArg,
    KindMismatch,
    UseBeforeDefine,
    TargetCount,
    NotSearchable,
    BadBinding,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProgramError {
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("validation error on line {line} ({kind:?}): {message}")]
    Validation { line: usize, kind: ValidationKind, message: String },
    #[error("registry error: {0}")]
    Registry(String),
}

impl ProgramError {
    fn validation(line: usize, kind: ValidationKind, message: String) -> Self {
        ProgramError::Validation { line, kind, message }
    }
}

// ---------------------------------------------------------------- lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Int(i64),
    Float(f64),
    Punct(char),
    Comment(String),
    Newline,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
}

/// Tokens up to and including the first top-level `return` line, plus the
/// unlexed remainder of the text.
fn lex(text: &str) -> Result<(Vec<Token>, String), ProgramError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut depth) = (0usize, 1usize, 0i32);
    let mut on_return_line = false;
    let perr = |line: usize, message: String| ProgramError::Parse { line, message };
    while i < chars.len() {
        let c = chars[i];
        match c {
            '\n' => {
                if depth == 0 {
                    out.push(Token { tok: Tok::Newline, line });
                }
                line += 1;
                i += 1;
                if on_return_line && depth == 0 {
                    break;
                }
            }
            ' ' | '\t' | '\r' => i += 1,
            '#' => {
                let start = i + 1;
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                let body: String = chars[start..i].iter().collect();
                // comments inside an open call are dropped rather than split the statement
                if depth == 0 {
                    out.push(Token { tok: Tok::Comment(body.trim().to_string()), line });
                }
            }
            '"' => {
                let start_line = line;
                i += 1;
                let mut s = String::new();
                loop {
                    let Some(&c) = chars.get(i) else {
                        return Err(perr(start_line, "unterminated string literal".into()));
                    };
                    i += 1;
                    match c {
                        '"' => break,
                        '\\' => {
                            let Some(&e) = chars.get(i) else {
                                return Err(perr(line, "dangling escape".into()));
                            };
                            i += 1;
                            s.push(match e {
                                'n' => '\n',
                                't' => '\t',
                                'r' => '\r',
                                '"' => '"',
                                '\\' => '\\',
                                other => return Err(perr(line, format!("unknown escape \\{other}"))),
                            });
                        }
                        '\n' => return Err(perr(start_line, "newline inside string literal".into())),
                        c => s.push(c),
                    }
                }
                out.push(Token { tok: Tok::Str(s), line: start_line });
            }
            '(' | '[' => {
                depth += 1;
                out.push(Token { tok: Tok::Punct(c), line });
                i += 1;
            }
            ')' | ']' => {
                depth -= 1;
                if depth < 0 {
                    return Err(perr(line, format!("unbalanced '{c}'")));
                }
                out.push(Token { tok: Tok::Punct(c), line });
                i += 1;
            }
            '=' | ',' => {
                out.push(Token { tok: Tok::Punct(c), line });
                i += 1;
            }
            c if c.is_ascii_digit()
                || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit() || *d == '.'))
                || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) =>
            {
                let start = i;
                i += 1;
                let mut is_float = c == '.';
                while i < chars.len() {
                    let d = chars[i];
                    if d.is_ascii_digit() {
                        i += 1;
                    } else if d == '.' && !is_float {
                        is_float = true;
                        i += 1;
                    } else if (d == 'e' || d == 'E')
                        && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit() || *n == '-' || *n == '+')
                    {
                        is_float = true;
                        i += 2;
                    } else {
                        break;
                    }
                }
                let s: String = chars[start..i].iter().collect();
                let tok = if is_float {
                    Tok::Float(s.parse().map_err(|_| perr(line, format!("bad number {s:?}")))?)
                } else {
                    Tok::Int(s.parse().map_err(|_| perr(line, format!("bad integer {s:?}")))?)
                };
                out.push(Token { tok, line });
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let ident: String = chars[start..i].iter().collect();
                if ident == "return" && depth == 0 && matches!(out.last(), None | Some(Token { tok: Tok::Newline, .. }))
                {
                    on_return_line = true;
                }
                out.push(Token { tok: Tok::Ident(ident), line });
            }
            other => return Err(perr(line, format!("unexpected character {other:?}"))),
        }
    }
    if depth != 0 {
        return Err(perr(line, "unclosed parenthesis or bracket".into()));
    }
    out.push(Token { tok: Tok::Newline, line });
    Ok((out, chars[i..].iter().collect()))
}

// ---------------------------------------------------------------- parser

struct Cursor<'a> {
    toks: &'a [Token],
    pos: usize,
}

impl Cursor<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn line(&self) -> usize {
        self.toks[self.pos.min(self.toks.len() - 1)].line
    }

    fn next(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, c: char) -> Result<(), ProgramError> {
        match self.next() {
            Tok::Punct(p) if p == c => Ok(()),
            other => Err(ProgramError::Parse {
                line: self.line(),
                message: format!("expected '{c}', found {}", describe(&other)),
            }),
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ProgramError> {
        match self.next() {
            Tok::Ident(s) => Ok(s),
            other => Err(ProgramError::Parse {
                line: self.line(),
                message: format!("expected {what}, found {}", describe(&other)),
            }),
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("identifier {s:?}"),
        Tok::Str(s) => format!("string {s:?}"),
        Tok::Int(i) => format!("number {i}"),
        Tok::Float(x) => format!("number {x}"),
        Tok::Punct(c) => format!("'{c}'"),
        Tok::Comment(_) => "comment".into(),
        Tok::Newline => "end of line".into(),
    }
}

fn parse_literal(cur: &mut Cursor<'_>) -> Result<Literal, ProgramError> {
    let line = cur.line();
    match cur.next() {
        Tok::Str(s) => Ok(Literal::Str(s)),
        Tok::Int(i) => Ok(Literal::Int(i)),
        Tok::Float(x) => Ok(Literal::Float(x)),
        Tok::Punct('[') => {
            let mut items = Vec::new();
            if *cur.peek() == Tok::Punct(']') {
                cur.next();
                return Ok(Literal::List(items));
            }
            loop {
                items.push(parse_literal(cur)?);
                match cur.next() {
                    Tok::Punct(',') if *cur.peek() == Tok::Punct(']') => {
                        cur.next();
                        break;
                    }
                    Tok::Punct(',') => {}
                    Tok::Punct(']') => break,
                    other => {
                        return Err(ProgramError::Parse {
                            line,
                            message: format!("expected ',' or ']' in list, found {}", describe(&other)),
                        })
                    }
                }
            }
            Ok(Literal::List(items))
        }
        other => Err(ProgramError::Parse { line, message: format!("expected a literal, found {}", describe(&other)) }),
    }
}

/// Assignment targets, module name, and `(name, value, position)` arguments.
type RawStatement = (Vec<String>, String, Vec<(String, Arg, usize)>);

fn parse_statement(cur: &mut Cursor<'_>, first: String) -> Result<RawStatement, ProgramError> {
    let mut targets = vec![first];
    if *cur.peek() == Tok::Punct(',') {
        cur.next();
        targets.push(cur.ident("second assignment target")?);
    }
    cur.expect('=')?;
    let module = cur.ident("module name")?;
    cur.expect('(')?;
    let mut args = Vec::new();
    if *cur.peek() == Tok::Punct(')') {
        cur.next();
        return Ok((targets, module, args));
    }
    loop {
        let line = cur.line();
        let name = match cur.next() {
            Tok::Ident(n) => n,
            other => {
                return Err(ProgramError::Parse {
                    line,
                    message: format!("expected keyword argument `name=value`, found {}", describe(&other)),
                })
            }
        };
        cur.expect('=')?;
        let value = match cur.peek().clone() {
            Tok::Ident(v) => {
                cur.next();
                Arg::Var(v)
            }
            _ => Arg::Lit(parse_literal(cur)?),
        };
        args.push((name, value, line));
        match cur.next() {
            Tok::Punct(',') if *cur.peek() == Tok::Punct(')') => {
                cur.next();
                break;
            }
            Tok::Punct(',') => {}
            Tok::Punct(')') => break,
            other => {
                return Err(ProgramError::Parse {
                    line: cur.line(),
                    message: format!("expected ',' or ')', found {}", describe(&other)),
                })
            }
        }
    }
    Ok((targets, module, args))
}

/// Parses and validates planner output against `registry`.
pub fn parse(text: &str, registry: &Registry) -> Result<Program, ProgramError> {
    let (toks, rest) = lex(text)?;
    let mut cur = Cursor { toks: &toks, pos: 0 };
    let mut program = Program::default();

    // the lexer always ends with a sentinel newline
    while cur.pos < toks.len() - 1 {
        let line = cur.line();
        match cur.next() {
            Tok::Newline => {}
            Tok::Comment(c) => program.planning_text.push(c),
            Tok::Ident(kw) if kw == "return" => {
                program.terminated = true;
                if let Tok::Ident(v) = cur.peek().clone() {
                    cur.next();
                    program.return_var = Some(v);
                }
                if let Tok::Comment(c) = cur.peek().clone() {
                    cur.next();
                    program.planning_text.push(c);
                }
                if !matches!(cur.peek(), Tok::Newline) {
                    return Err(ProgramError::Parse { line, message: "unexpected tokens after return".into() });
                }
                let trailing = rest.lines().filter(|l| !l.trim().is_empty()).count();
                if trailing > 0 {
                    program.warnings.push(format!("ignored {trailing} non-empty line(s) after return on line {line}"));
                }
                break;
            }
            Tok::Ident(first) => {
                let (targets, module, args) = parse_statement(&mut cur, first)?;
                let last_line = cur.line();
                if let Tok::Comment(c) = cur.peek().clone() {
                    cur.next();
                    program.planning_text.push(c);
                }
                match cur.peek() {
                    Tok::Newline => {}
                    other => {
                        return Err(ProgramError::Parse {
                            line: last_line,
                            message: format!("unexpected {} after statement", describe(other)),
                        })
                    }
                }
                let mut map = BTreeMap::new();
                let mut dup = None;
                for (name, value, l) in args {
                    if map.insert(name.clone(), value).is_some() {
                        dup = Some((name, l));
                    }
                }
                if let Some((name, l)) = dup {
                    return Err(ProgramError::validation(
                        l,
                        ValidationKind::DuplicateArg,
                        format!("argument {name:?} given twice"),
                    ));
                }
                program.statements.push(Statement {
                    targets,
                    module,
                    args: map,
                    source_span: SourceSpan { first_line: line, last_line: last_line.max(line) },
                });
            }
            other => {
                return Err(ProgramError::Parse {
                    line,
                    message: format!("unexpected {} at start of line", describe(&other)),
                })
            }
        }
    }

    let scanned = &text[..text.len() - rest.len()];
    program.has_fast_marker = scanned.contains(FAST_MARKER)
        || registry
            .get("fast_think")
            .is_some_and(|f| scanned.contains(f.name.as_str()) || scanned.contains(f.alias.as_str()));
    validate(&mut program, registry)?;
    Ok(program)
}

/// Validates statements in order, canonicalizing module aliases.
pub fn validate(program: &mut Program, registry: &Registry) -> Result<(), ProgramError> {
    let mut defined: BTreeSet<String> = BTreeSet::new();
    for st in program.statements.iter_mut() {
        let line = st.source_span.first_line;
        let sig = registry.get(&st.module).ok_or_else(|| {
            ProgramError::validation(line, ValidationKind::UnknownModule, format!("unknown module {:?}", st.module))
        })?;
        st.module = sig.name.clone();
        if st.targets.len() != 1 && st.targets.len() != sig.returns.len() {
            return Err(ProgramError::validation(
                line,
                ValidationKind::TargetCount,
                format!(
                    "{} returns {} value(s); cannot bind {} targets",
                    sig.name,
                    sig.returns.len(),
                    st.targets.len()
                ),
            ));
        }
        if st.targets.len() == 2 && st.targets[0] == st.targets[1] {
            return Err(ProgramError::validation(
                line,
                ValidationKind::TargetCount,
                "duplicate assignment target".into(),
            ));
        }
        for (name, arg) in &st.args {
            let spec = sig.param(name).ok_or_else(|| {
                ProgramError::validation(
                    line,
                    ValidationKind::UnknownArg,
                    format!("{} has no parameter {name:?}", sig.name),
                )
            })?;
            match arg {
                Arg::Lit(lit) if !spec.kind.accepts(lit) => {
                    return Err(ProgramError::validation(
                        line,
                        ValidationKind::KindMismatch,
                        format!("{}.{name} expects {:?}, got {lit}", sig.name, spec.kind),
                    ))
                }
                Arg::Var(v) if !defined.contains(v) && input_var(v).is_none() => {
                    return Err(ProgramError::validation(
                        line,
                        ValidationKind::UseBeforeDefine,
                        format!("variable {v:?} used before definition"),
                    ))
                }
                _ => {}
            }
        }
        if let Some(missing) = sig.params.iter().find(|p| p.required && !st.args.contains_key(&p.name)) {
            return Err(ProgramError::validation(
                line,
                ValidationKind::MissingArg,
                format!("{} is missing required argument {:?}", sig.name, missing.name),
            ));
        }
        defined.extend(st.targets.iter().cloned());
    }
    Ok(())
}

/// Renders a program back to DSL text: planning comments, statements in order
/// with arguments in signature order, then the return line.
pub fn render(program: &Program, registry: &Registry) -> String {
    let mut out = String::new();
    for c in &program.planning_text {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    for st in &program.statements {
        out.push_str(&st.targets.join(", "));
        out.push_str(" = ");
        out.push_str(&st.module);
        out.push('(');
        let order: Vec<&str> = match registry.get(&st.module) {
            Some(sig) => {
                let mut o: Vec<&str> =
                    sig.params.iter().map(|p| p.name.as_str()).filter(|n| st.args.contains_key(*n)).collect();
                o.extend(st.args.keys().map(String::as_str).filter(|k| sig.param(k).is_none()));
                o
            }
            None => st.args.keys().map(String::as_str).collect(),
        };
        for (i, name) in order.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            out.push_str(name);
            out.push('=');
            out.push_str(&st.args[*name].to_string());
        }
        out.push_str(")\n");
    }
    if program.terminated {
        out.push_str("return");
        if let Some(v) = &program.return_var {
            out.push(' ');
            out.push_str(v);
        }
        out.push('\n');
    }
    out
}

/// Returns a copy of `program` with one searchable argument replaced.
pub fn substitute(program: &Program, binding: &ParamBinding, registry: &Registry) -> Result<Program, ProgramError> {
    let st = program.statements.get(binding.statement_index).ok_or_else(|| {
        ProgramError::validation(
            0,
            ValidationKind::BadBinding,
            format!("statement index {} out of range", binding.statement_index),
        )
    })?;
    let line = st.source_span.first_line;
    let sig = registry.get(&st.module).ok_or_else(|| {
        ProgramError::validation(line, ValidationKind::UnknownModule, format!("unknown module {:?}", st.module))
    })?;
    let spec = sig.param(&binding.param_name).filter(|p| p.is_searchable()).ok_or_else(|| {
        ProgramError::validation(
            line,
            ValidationKind::NotSearchable,
            format!("{}.{} is not a searchable parameter", sig.name, binding.param_name),
        )
    })?;
    if !spec.kind.accepts(&binding.value) {
        return Err(ProgramError::validation(
            line,
            ValidationKind::KindMismatch,
            format!("{}.{} expects {:?}, got {}", sig.name, spec.name, spec.kind, binding.value),
        ));
    }
    let mut out = program.clone();
    out.statements[binding.statement_index].args.insert(binding.param_name.clone(), Arg::Lit(binding.value.clone()));
    Ok(out)
}

/// One binding per (statement, searchable parameter, candidate value), in
/// statement, then signature-parameter, then search-space order. Parameters
/// left at their default are still searchable.
pub fn enumerate_bindings(program: &Program, registry: &Registry) -> Vec<ParamBinding> {
    let mut out = Vec::new();
    for (i, st) in program.statements.iter().enumerate() {
        let Some(sig) = registry.get(&st.module) else { continue };
        for p in sig.params.iter().filter(|p| p.is_searchable()) {
            for v in p.search_space.iter().flatten() {
                out.push(ParamBinding { statement_index: i, param_name: p.name.clone(), value: v.clone() });
            }
        }
    }
    out
}

/// Value a statement's parameter takes at run time: the written literal, else the default.
pub fn effective_literal<'a>(st: &'a Statement, sig: &'a ModuleSignature, param: &str) -> Option<&'a Literal> {
    match st.args.get(param) {
        Some(Arg::Lit(l)) => Some(l),
        Some(Arg::Var(_)) => None,
        None => sig.param(param).and_then(|p| p.default.as_ref()),
    }
}
