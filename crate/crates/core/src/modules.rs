//! The seventeen vision modules, written against a [`Backend`] seam.
//!
//! Modules own the deterministic parts (clip windows, top-k ranking, interval
//! arithmetic, frame sampling, crop algebra, event splitting); the backend owns
//! everything a model would do (relevance scoring, QA, OCR, detection).

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::confidence::{compute_confidence, Confidence, ConfidenceSource, DomainError};
use crate::text::answers_match;
use crate::world::{BBox, DetectedObject, Frame, TextSpan, TimeSpan, CLIP_WINDOW_S};

/// Most frames a single QA call receives; longer inputs are subsampled uniformly.
pub const FRAME_CAP: usize = 64;
/// Frames `fast_think` samples over the whole video.
pub const FAST_THINK_FRAMES: usize = 64;
/// Lines concatenated by the simulated subtitle hint.
pub const HINT_LINES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendError {
    #[error("{capability} timed out after {after_ms} ms")]
    Timeout { capability: String, after_ms: u64 },
    #[error("backend unavailable: {message}")]
    Unavailable { message: String },
    #[error("unknown video {video:?}")]
    UnknownVideo { video: String },
    #[error("protocol error: {message}")]
    Protocol { message: String },
    #[error("remote error: {message}")]
    Remote { message: String },
}

impl BackendError {
    pub fn protocol(message: impl Into<String>) -> Self {
        BackendError::Protocol { message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModuleError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("type error: {0}")]
    Type(String),
}

impl From<DomainError> for ModuleError {
    fn from(e: DomainError) -> Self {
        ModuleError::Domain(e.to_string())
    }
}

fn domain(msg: impl Into<String>) -> ModuleError {
    ModuleError::Domain(msg.into())
}

/// Backend capabilities, also the `capability` field of the remote wire schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    VideoInfo,
    ClipScores,
    Subtitles,
    Captions,
    TextScores,
    VideoQa,
    Ocr,
    Detect,
    SceneBoundaries,
    SubtitleHint,
}

impl Capability {
    pub const ALL: [Capability; 10] = [
        Capability::VideoInfo,
        Capability::ClipScores,
        Capability::Subtitles,
        Capability::Captions,
        Capability::TextScores,
        Capability::VideoQa,
        Capability::Ocr,
        Capability::Detect,
        Capability::SceneBoundaries,
        Capability::SubtitleHint,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Capability::VideoInfo => "video_info",
            Capability::ClipScores => "clip_scores",
            Capability::Subtitles => "subtitles",
            Capability::Captions => "captions",
            Capability::TextScores => "text_scores",
            Capability::VideoQa => "video_qa",
            Capability::Ocr => "ocr",
            Capability::Detect => "detect",
            Capability::SceneBoundaries => "scene_boundaries",
            Capability::SubtitleHint => "subtitle_hint",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VideoInfo {
    pub duration: f64,
    pub fps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QaOrigin {
    /// Direct answer over the whole video (`fast_think`).
    Fast,
    /// Answer inside an executing program.
    Program,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QaKind {
    MultipleChoice,
    YesNo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaRequest {
    pub video_id: String,
    pub frames: Vec<Frame>,
    pub query: String,
    /// Empty for yes/no questions.
    pub choices: Vec<String>,
    pub kind: QaKind,
    pub origin: QaOrigin,
}

/// A videoQA reply. Exactly one of `token_logprobs` (token-derived confidence)
/// or `confidence` (scalar reported by the backend) should be present;
/// logprobs win when both are.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaResponse {
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_logprobs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

/// External models behind one seam. Implementations must be callable
/// concurrently and must return (possibly an error) rather than hang.
pub trait Backend: Send + Sync {
    fn video_info(&self, video: &str) -> Result<VideoInfo, BackendError>;
    /// Relevance of `query` to each window, one score per window, all `>= 0`.
    fn clip_scores(&self, video: &str, query: &str, windows: &[TimeSpan]) -> Result<Vec<f64>, BackendError>;
    fn subtitles(&self, video: &str) -> Result<Vec<TextSpan>, BackendError>;
    fn captions(&self, video: &str) -> Result<Vec<TextSpan>, BackendError>;
    /// Relevance of `query` to each text, one score per text, all `>= 0`.
    fn text_scores(&self, query: &str, texts: &[String]) -> Result<Vec<f64>, BackendError>;
    fn video_qa(&self, request: &QaRequest) -> Result<QaResponse, BackendError>;
    fn ocr(&self, frame: &Frame) -> Result<String, BackendError>;
    fn detect(
        &self,
        frame: &Frame,
        text: &str,
        text_thr: f64,
        box_thr: f64,
    ) -> Result<Vec<DetectedObject>, BackendError>;
    fn scene_boundaries(&self, video: &str) -> Result<Vec<f64>, BackendError>;
    fn subtitle_hint(&self, video: &str, query: &str) -> Result<String, BackendError>;
}

impl<B: Backend + ?Sized> Backend for alloc::sync::Arc<B> {
    fn video_info(&self, video: &str) -> Result<VideoInfo, BackendError> {
        (**self).video_info(video)
    }
    fn clip_scores(&self, video: &str, query: &str, windows: &[TimeSpan]) -> Result<Vec<f64>, BackendError> {
        (**self).clip_scores(video, query, windows)
    }
    fn subtitles(&self, video: &str) -> Result<Vec<TextSpan>, BackendError> {
        (**self).subtitles(video)
    }
    fn captions(&self, video: &str) -> Result<Vec<TextSpan>, BackendError> {
        (**self).captions(video)
    }
    fn text_scores(&self, query: &str, texts: &[String]) -> Result<Vec<f64>, BackendError> {
        (**self).text_scores(query, texts)
    }
    fn video_qa(&self, request: &QaRequest) -> Result<QaResponse, BackendError> {
        (**self).video_qa(request)
    }
    fn ocr(&self, frame: &Frame) -> Result<String, BackendError> {
        (**self).ocr(frame)
    }
    fn detect(
        &self,
        frame: &Frame,
        text: &str,
        text_thr: f64,
        box_thr: f64,
    ) -> Result<Vec<DetectedObject>, BackendError> {
        (**self).detect(frame, text, text_thr, box_thr)
    }
    fn scene_boundaries(&self, video: &str) -> Result<Vec<f64>, BackendError> {
        (**self).scene_boundaries(video)
    }
    fn subtitle_hint(&self, video: &str, query: &str) -> Result<String, BackendError> {
        (**self).subtitle_hint(video, query)
    }
}

// ---------------------------------------------------------------- value types

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clip {
    pub video_id: String,
    pub start: f64,
    pub end: f64,
    pub score: f64,
}

impl Clip {
    pub fn span(&self) -> TimeSpan {
        TimeSpan::new(self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtitleHit {
    pub start: f64,
    pub end: f64,
    pub text: String,
    pub score: f64,
}

impl SubtitleHit {
    pub fn span(&self) -> TimeSpan {
        TimeSpan::new(self.start, self.end)
    }
}

/// Half-open range `[start, end)` of a video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRange {
    pub video_id: String,
    pub start: f64,
    pub end: f64,
}

impl FrameRange {
    pub fn span(&self) -> TimeSpan {
        TimeSpan::new(self.start, self.end)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// A QA answer with its confidence (the multiple-choice `McAnswer`, also used for yes/no).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub text: String,
    pub confidence: Confidence,
    pub source: ConfidenceSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub timestamp: f64,
    pub label: String,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub score: f64,
}

// ---------------------------------------------------------------- helpers

/// Consecutive clip windows of [`CLIP_WINDOW_S`] covering `[0, duration)`; the last may be shorter.
pub fn clip_windows(duration: f64) -> Vec<TimeSpan> {
    let mut out = Vec::new();
    let mut k = 0u32;
    loop {
        let start = k as f64 * CLIP_WINDOW_S;
        if start >= duration {
            break;
        }
        out.push(TimeSpan::new(start, (start + CLIP_WINDOW_S).min(duration)));
        k += 1;
    }
    out
}

/// Stable top-k: score descending, ties by earlier start, then input order.
pub fn rank_top_k<T>(mut items: Vec<(T, f64, f64)>, k: usize) -> Vec<(T, f64)> {
    items.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.2.partial_cmp(&b.2).unwrap_or(core::cmp::Ordering::Equal))
    });
    items.into_iter().take(k).map(|(t, s, _)| (t, s)).collect()
}

/// Sorted, merged, clamped, non-empty spans.
pub fn normalize_spans(spans: &[TimeSpan], duration: f64) -> Vec<TimeSpan> {
    let mut v: Vec<TimeSpan> =
        spans.iter().map(|s| TimeSpan::new(s.start.max(0.0), s.end.min(duration))).filter(|s| !s.is_empty()).collect();
    v.sort_by(|a, b| a.start.partial_cmp(&b.start).unwrap_or(core::cmp::Ordering::Equal));
    let mut out: Vec<TimeSpan> = Vec::with_capacity(v.len());
    for s in v {
        match out.last_mut() {
            Some(last) if s.start <= last.end => last.end = last.end.max(s.end),
            _ => out.push(s),
        }
    }
    out
}

/// `n` bin-midpoint timestamps over the concatenation of `spans`, then
/// deduplicated by frame index `floor(t * fps)` (first kept).
///
/// With a single span `[0, d)` the timestamps are exactly `(i + 0.5) * d / n`.
pub fn sample_timestamps(spans: &[TimeSpan], n: usize, fps: f64) -> Vec<f64> {
    let total: f64 = spans.iter().map(TimeSpan::len).sum();
    if n == 0 || total <= 0.0 {
        return Vec::new();
    }
    let mut out: Vec<f64> = Vec::with_capacity(n);
    let mut last_index: Option<i64> = None;
    let (mut span_i, mut offset) = (0usize, 0.0f64);
    for i in 0..n {
        let u = (i as f64 + 0.5) * total / n as f64;
        while span_i + 1 < spans.len() && u >= offset + spans[span_i].len() {
            offset += spans[span_i].len();
            span_i += 1;
        }
        let t = spans[span_i].start + (u - offset);
        let idx = libm::floor(t * fps) as i64;
        if last_index != Some(idx) {
            out.push(t);
            last_index = Some(idx);
        }
    }
    out
}

/// Uniform subsample of `frames` down to [`FRAME_CAP`], indices `floor((i + 0.5) * n / cap)`.
pub fn cap_frames(frames: &[Frame]) -> Vec<Frame> {
    let n = frames.len();
    if n <= FRAME_CAP {
        return frames.to_vec();
    }
    (0..FRAME_CAP)
        .map(|i| frames[libm::floor((i as f64 + 0.5) * n as f64 / FRAME_CAP as f64) as usize].clone())
        .collect()
}

/// Frames a QA module sees when handed a time scope instead of frames:
/// one bin per second of scope (at least one), capped at [`FRAME_CAP`].
pub fn scope_frames(backend: &dyn Backend, video: &str, spans: &[TimeSpan]) -> Result<Vec<Frame>, ModuleError> {
    let info = backend.video_info(video)?;
    let spans = normalize_spans(spans, info.duration);
    let total: f64 = spans.iter().map(TimeSpan::len).sum();
    let n = (libm::ceil(total) as usize).clamp(1, FRAME_CAP);
    Ok(sample_timestamps(&spans, n, info.fps).into_iter().map(|t| Frame::new(video, t)).collect())
}

fn answer_from_response(resp: QaResponse) -> Result<(String, Confidence, ConfidenceSource), ModuleError> {
    if let Some(lp) = &resp.token_logprobs {
        let c = compute_confidence(lp).map_err(|e| BackendError::protocol(format!("bad token logprobs: {e}")))?;
        return Ok((resp.answer, c, ConfidenceSource::Computed));
    }
    if let Some(c) = resp.confidence {
        let c = Confidence::new(c).map_err(|e| BackendError::protocol(format!("bad scalar confidence: {e}")))?;
        return Ok((resp.answer, c, ConfidenceSource::Backend));
    }
    Err(BackendError::protocol("videoQA response carries neither token_logprobs nor confidence").into())
}

fn check_top_k(top_k: i64) -> Result<usize, ModuleError> {
    if top_k < 1 {
        return Err(domain(format!("top_k must be >= 1, got {top_k}")));
    }
    Ok(top_k as usize)
}

fn check_timestamp(t: f64, duration: f64) -> Result<(), ModuleError> {
    if !(0.0..=duration).contains(&t) {
        return Err(domain(format!("timestamp {t} outside video [0, {duration}]")));
    }
    Ok(())
}

// ---------------------------------------------------------------- modules

/// Top-k 10-second clips for `query`. With `scope`, only windows intersecting it compete.
pub fn get_clips(
    backend: &dyn Backend,
    video: &str,
    scope: Option<&[TimeSpan]>,
    query: &str,
    top_k: i64,
) -> Result<Vec<Clip>, ModuleError> {
    let k = check_top_k(top_k)?;
    let info = backend.video_info(video)?;
    let windows: Vec<TimeSpan> = clip_windows(info.duration)
        .into_iter()
        .filter(|w| scope.is_none_or(|s| s.iter().any(|x| x.intersects(w))))
        .collect();
    let scores = backend.clip_scores(video, query, &windows)?;
    if scores.len() != windows.len() {
        return Err(
            BackendError::protocol(format!("{} clip scores for {} windows", scores.len(), windows.len())).into()
        );
    }
    let ranked = rank_top_k(windows.into_iter().zip(scores).map(|(w, s)| (w, s.max(0.0), w.start)).collect(), k);
    Ok(ranked
        .into_iter()
        .map(|(w, score)| Clip { video_id: video.to_string(), start: w.start, end: w.end, score })
        .collect())
}

/// Top-k subtitle lines for `query`. With `scope`, only lines intersecting it compete.
pub fn get_subtitles(
    backend: &dyn Backend,
    video: &str,
    scope: Option<&[TimeSpan]>,
    query: &str,
    top_k: i64,
) -> Result<Vec<SubtitleHit>, ModuleError> {
    let k = check_top_k(top_k)?;
    let subs: Vec<TextSpan> = backend
        .subtitles(video)?
        .into_iter()
        .filter(|s| scope.is_none_or(|sc| sc.iter().any(|x| x.intersects(&s.span()))))
        .collect();
    let texts: Vec<String> = subs.iter().map(|s| s.text.clone()).collect();
    let scores = backend.text_scores(query, &texts)?;
    if scores.len() != subs.len() {
        return Err(BackendError::protocol(format!("{} text scores for {} subtitles", scores.len(), subs.len())).into());
    }
    let ranked = rank_top_k(
        subs.into_iter()
            .zip(scores)
            .map(|(s, sc)| {
                let st = s.start;
                (s, sc.max(0.0), st)
            })
            .collect(),
        k,
    );
    Ok(ranked.into_iter().map(|(s, score)| SubtitleHit { start: s.start, end: s.end, text: s.text, score }).collect())
}

/// Cuts everything before `timestamp`, keeping the following `intervals` seconds.
pub fn trim_before(
    backend: &dyn Backend,
    video: &str,
    timestamp: f64,
    intervals: i64,
) -> Result<FrameRange, ModuleError> {
    let info = backend.video_info(video)?;
    check_timestamp(timestamp, info.duration)?;
    if intervals <= 0 {
        return Err(domain(format!("intervals must be > 0, got {intervals}")));
    }
    Ok(FrameRange { video_id: video.into(), start: timestamp, end: (timestamp + intervals as f64).min(info.duration) })
}

/// Cuts everything after `timestamp`, keeping the preceding `intervals` seconds.
pub fn trim_after(
    backend: &dyn Backend,
    video: &str,
    timestamp: f64,
    intervals: i64,
) -> Result<FrameRange, ModuleError> {
    let info = backend.video_info(video)?;
    check_timestamp(timestamp, info.duration)?;
    if intervals <= 0 {
        return Err(domain(format!("intervals must be > 0, got {intervals}")));
    }
    Ok(FrameRange { video_id: video.into(), start: (timestamp - intervals as f64).max(0.0), end: timestamp })
}

pub fn trim_range(backend: &dyn Backend, video: &str, start: f64, end: f64) -> Result<FrameRange, ModuleError> {
    let info = backend.video_info(video)?;
    if !(0.0 <= start && start <= end && end <= info.duration) {
        return Err(domain(format!("range [{start}, {end}) not within [0, {}]", info.duration)));
    }
    Ok(FrameRange { video_id: video.into(), start, end })
}

/// `num_frames` uniformly spaced frames over `scope` (whole video when `None`).
pub fn extract_frames(
    backend: &dyn Backend,
    video: &str,
    scope: Option<&[TimeSpan]>,
    num_frames: i64,
) -> Result<Vec<Frame>, ModuleError> {
    if num_frames < 1 {
        return Err(domain(format!("num_frames must be >= 1, got {num_frames}")));
    }
    let info = backend.video_info(video)?;
    let whole = [TimeSpan::new(0.0, info.duration)];
    let spans = normalize_spans(scope.unwrap_or(&whole), info.duration);
    Ok(sample_timestamps(&spans, num_frames as usize, info.fps).into_iter().map(|t| Frame::new(video, t)).collect())
}

fn frames_video(frames: &[Frame]) -> Result<String, ModuleError> {
    let first = frames.first().ok_or_else(|| domain("no frames given"))?;
    if frames.iter().any(|f| f.video_id != first.video_id) {
        return Err(domain("frames come from more than one video"));
    }
    Ok(first.video_id.clone())
}

pub fn query_mc(
    backend: &dyn Backend,
    frames: &[Frame],
    query: &str,
    choices: &[String],
    origin: QaOrigin,
) -> Result<Answer, ModuleError> {
    let video_id = frames_video(frames)?;
    if choices.is_empty() {
        return Err(domain("query_mc needs at least one choice"));
    }
    let req = QaRequest {
        video_id,
        frames: cap_frames(frames),
        query: query.into(),
        choices: choices.to_vec(),
        kind: QaKind::MultipleChoice,
        origin,
    };
    let (text, confidence, source) = answer_from_response(backend.video_qa(&req)?)?;
    let choice = choices
        .iter()
        .find(|c| answers_match(c, &text))
        .ok_or_else(|| BackendError::protocol(format!("answer {text:?} is not one of the choices")))?;
    Ok(Answer { text: choice.clone(), confidence, source })
}

pub fn query_yn(backend: &dyn Backend, frames: &[Frame], query: &str, origin: QaOrigin) -> Result<Answer, ModuleError> {
    let video_id = frames_video(frames)?;
    let req = QaRequest {
        video_id,
        frames: cap_frames(frames),
        query: query.into(),
        choices: Vec::new(),
        kind: QaKind::YesNo,
        origin,
    };
    let (text, confidence, source) = answer_from_response(backend.video_qa(&req)?)?;
    let text = if answers_match(&text, "yes") {
        "yes"
    } else if answers_match(&text, "no") {
        "no"
    } else {
        return Err(BackendError::protocol(format!("yes/no answer {text:?}")).into());
    };
    Ok(Answer { text: text.into(), confidence, source })
}

/// OCR text of each frame; distinct non-empty results joined by newlines.
pub fn run_ocr(backend: &dyn Backend, frames: &[Frame]) -> Result<String, ModuleError> {
    let mut seen: Vec<String> = Vec::new();
    for f in frames {
        let t = backend.ocr(f)?;
        if !t.is_empty() && !seen.contains(&t) {
            seen.push(t);
        }
    }
    Ok(seen.join("\n"))
}

/// Detections over all frames, score descending (stable in frame order).
pub fn detect_object(
    backend: &dyn Backend,
    frames: &[Frame],
    text: &str,
    text_thr: f64,
    box_thr: f64,
) -> Result<Vec<Detection>, ModuleError> {
    if !(0.0..=1.0).contains(&text_thr) || !(0.0..=1.0).contains(&box_thr) {
        return Err(domain(format!("thresholds must lie in [0, 1], got text_thr={text_thr} box_thr={box_thr}")));
    }
    let mut out = Vec::new();
    for f in frames {
        for o in backend.detect(f, text, text_thr, box_thr)? {
            out.push(Detection { timestamp: f.timestamp, label: o.label, bbox: o.bbox, score: o.score });
        }
    }
    out.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(core::cmp::Ordering::Equal));
    Ok(out)
}

fn records_in(records: Vec<TextSpan>, start: f64, end: f64) -> Result<Vec<TextSpan>, ModuleError> {
    if start > end {
        return Err(domain(format!("range start {start} after end {end}")));
    }
    let range = TimeSpan::new(start, end);
    let mut v: Vec<TextSpan> = records.into_iter().filter(|r| r.span().intersects(&range)).collect();
    v.sort_by(|a, b| a.start.partial_cmp(&b.start).unwrap_or(core::cmp::Ordering::Equal));
    Ok(v)
}

pub fn get_subs_range(backend: &dyn Backend, video: &str, start: f64, end: f64) -> Result<Vec<TextSpan>, ModuleError> {
    records_in(backend.subtitles(video)?, start, end)
}

pub fn get_caps_range(backend: &dyn Backend, video: &str, start: f64, end: f64) -> Result<Vec<TextSpan>, ModuleError> {
    records_in(backend.captions(video)?, start, end)
}

pub fn get_subtitle_hint(backend: &dyn Backend, video: &str, query: &str) -> Result<String, ModuleError> {
    Ok(backend.subtitle_hint(video, query)?)
}

/// Sets each frame's crop to the intersection of its existing crop and `bbox`.
pub fn crop(frames: &[Frame], bbox: BBox) -> Result<Vec<Frame>, ModuleError> {
    if !bbox.is_valid() {
        return Err(domain(format!("invalid box {bbox:?}")));
    }
    frames
        .iter()
        .map(|f| {
            let current = f.crop_box.unwrap_or(BBox::FULL);
            let b = current
                .intersection(&bbox)
                .ok_or_else(|| domain(format!("crop {bbox:?} does not intersect {current:?}")))?;
            Ok(Frame { crop_box: Some(b), ..f.clone() })
        })
        .collect()
}

/// Scene intervals partitioning `[0, duration)`.
pub fn split_video(backend: &dyn Backend, video: &str) -> Result<Vec<TimeSpan>, ModuleError> {
    let info = backend.video_info(video)?;
    let mut cuts: Vec<f64> =
        backend.scene_boundaries(video)?.into_iter().filter(|&b| b > 0.0 && b < info.duration).collect();
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    cuts.dedup();
    let mut out = Vec::with_capacity(cuts.len() + 1);
    let mut prev = 0.0;
    for c in cuts {
        out.push(TimeSpan::new(prev, c));
        prev = c;
    }
    if info.duration > 0.0 {
        out.push(TimeSpan::new(prev, info.duration));
    }
    Ok(out)
}

fn bare_word(w: &str) -> String {
    w.trim_matches(|c: char| c == ',' || c == ':').to_lowercase()
}

/// Splits on `. ! ? ;` and the connectives "then", "next", "after that".
pub fn split_event(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut flush = |cur: &mut Vec<&str>| {
        let s = cur.join(" ");
        let s = s.trim_matches(|c: char| c == ',' || c.is_whitespace());
        if !s.is_empty() {
            out.push(s.to_string());
        }
        cur.clear();
    };
    for sentence in text.split(['.', '!', '?', ';']) {
        let words: Vec<&str> = sentence.split_whitespace().collect();
        let mut cur: Vec<&str> = Vec::new();
        let mut i = 0;
        while i < words.len() {
            let w = bare_word(words[i]);
            let skip = if w == "then" || w == "next" {
                1
            } else if w == "after" && words.get(i + 1).is_some_and(|n| bare_word(n) == "that") {
                2
            } else {
                0
            };
            if skip > 0 {
                flush(&mut cur);
                i += skip;
            } else {
                cur.push(words[i]);
                i += 1;
            }
        }
        flush(&mut cur);
    }
    out
}

/// Direct answer from [`FAST_THINK_FRAMES`] uniform frames; confidence first.
pub fn fast_think(
    backend: &dyn Backend,
    video: &str,
    query: &str,
    choices: Option<&[String]>,
) -> Result<(Confidence, Answer), ModuleError> {
    let frames = extract_frames(backend, video, None, FAST_THINK_FRAMES as i64)?;
    let answer = match choices {
        Some(c) if !c.is_empty() => query_mc(backend, &frames, query, c, QaOrigin::Fast)?,
        _ => query_yn(backend, &frames, query, QaOrigin::Fast)?,
    };
    Ok((answer.confidence, answer))
}
