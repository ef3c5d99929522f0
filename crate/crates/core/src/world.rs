//! Deterministic synthetic video world.
//!
//! Videos are annotation records rather than pixels: timed events, scene
//! boundaries, subtitles, captions and per-timestamp frame annotations. Every
//! gold answer is recoverable by scanning those annotations, so each vision
//! module has an exact brute-force reference.
//!
//! Two kinds of question are generated:
//!
//! * easy: the evidence is an ambient event spanning the whole video, so any
//!   uniform frame sample sees it;
//! * difficult: the evidence is a short span placed between the midpoints of
//!   every uniform 8/16/32/64-frame sample of the video, so whole-video
//!   sampling misses it and retrieval (clips, subtitles, trims) is required.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use crate::text::relevance;
use crate::text::token_set;

/// Length of a difficult item's evidence span, in seconds.
pub const EVIDENCE_SPAN_S: f64 = 1.5;
/// Uniform sample sizes a difficult item's evidence must evade.
pub const EVADED_SAMPLE_SIZES: [usize; 4] = [8, 16, 32, 64];
/// Retrieval clip window, in seconds.
pub const CLIP_WINDOW_S: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorldError {
    #[error("invalid corpus spec: {0}")]
    InvalidSpec(String),
    #[error("video {video}: {message}")]
    InvalidVideo { video: String, message: String },
    #[error("qa item {item}: {message}")]
    InvalidItem { item: String, message: String },
}

/// Half-open time interval `[start, end)` in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSpan {
    pub start: f64,
    pub end: f64,
}

impl TimeSpan {
    pub fn new(start: f64, end: f64) -> Self {
        TimeSpan { start, end }
    }

    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, t: f64) -> bool {
        self.start <= t && t < self.end
    }

    pub fn intersects(&self, other: &TimeSpan) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// Box in unit coordinates, `x0 < x1`, `y0 < y1`, all within `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub const FULL: BBox = BBox { x0: 0.0, y0: 0.0, x1: 1.0, y1: 1.0 };

    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        BBox { x0, y0, x1, y1 }
    }

    pub fn is_valid(&self) -> bool {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        unit(self.x0) && unit(self.y0) && unit(self.x1) && unit(self.y1) && self.x0 < self.x1 && self.y0 < self.y1
    }

    /// Intersection with positive area, if any.
    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let b = BBox {
            x0: self.x0.max(other.x0),
            y0: self.y0.max(other.y0),
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
        };
        (b.x0 < b.x1 && b.y0 < b.y1).then_some(b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub start: f64,
    pub end: f64,
    pub tags: Vec<String>,
    pub detail: String,
}

impl Event {
    pub fn span(&self) -> TimeSpan {
        TimeSpan::new(self.start, self.end)
    }

    pub fn text(&self) -> String {
        let mut s = self.tags.join(" ");
        s.push(' ');
        s.push_str(&self.detail);
        s
    }
}

/// A subtitle or caption record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextSpan {
    pub start: f64,
    pub end: f64,
    pub text: String,
}

impl TextSpan {
    pub fn span(&self) -> TimeSpan {
        TimeSpan::new(self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedObject {
    pub label: String,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameAnnotation {
    pub timestamp: f64,
    pub ocr_text: String,
    /// Region holding the OCR text; `None` means the whole frame.
    pub ocr_box: Option<BBox>,
    pub objects: Vec<DetectedObject>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticVideo {
    pub id: String,
    pub duration: f64,
    pub fps: f64,
    pub events: Vec<Event>,
    pub scene_boundaries: Vec<f64>,
    pub subtitles: Vec<TextSpan>,
    pub captions: Vec<TextSpan>,
    /// Sorted by timestamp.
    pub frame_annotations: Vec<FrameAnnotation>,
}

impl SyntheticVideo {
    pub fn validate(&self) -> Result<(), WorldError> {
        let err = |message: String| WorldError::InvalidVideo { video: self.id.clone(), message };
        if !(self.fps > 0.0) {
            return Err(err(format!("fps {} must be positive", self.fps)));
        }
        if !(self.duration > 0.0) {
            return Err(err(format!("duration {} must be positive", self.duration)));
        }
        let spans = self
            .events
            .iter()
            .map(Event::span)
            .chain(self.subtitles.iter().map(TextSpan::span))
            .chain(self.captions.iter().map(TextSpan::span));
        for s in spans {
            if !(0.0 <= s.start && s.start < s.end && s.end <= self.duration) {
                return Err(err(format!("span [{}, {}) outside video", s.start, s.end)));
            }
        }
        let mut prev = 0.0;
        for &b in &self.scene_boundaries {
            if !(b > prev && b < self.duration) {
                return Err(err(format!("scene boundary {b} not strictly increasing in (0, duration)")));
            }
            prev = b;
        }
        let mut prev = f64::NEG_INFINITY;
        for a in &self.frame_annotations {
            if !(a.timestamp >= 0.0 && a.timestamp <= self.duration && a.timestamp > prev) {
                return Err(err(format!("frame annotation at {} out of order or range", a.timestamp)));
            }
            prev = a.timestamp;
        }
        Ok(())
    }

    /// Annotation nearest to `t` within `tolerance` seconds; ties go to the earlier one.
    pub fn annotation_near(&self, t: f64, tolerance: f64) -> Option<&FrameAnnotation> {
        self.frame_annotations.iter().filter(|a| (a.timestamp - t).abs() <= tolerance).min_by(|a, b| {
            let (da, db) = ((a.timestamp - t).abs(), (b.timestamp - t).abs());
            da.partial_cmp(&db).unwrap_or(core::cmp::Ordering::Equal)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DurationBucket {
    Short,
    Medium,
    Long,
}

impl DurationBucket {
    pub const ALL: [DurationBucket; 3] = [DurationBucket::Short, DurationBucket::Medium, DurationBucket::Long];

    pub fn as_str(self) -> &'static str {
        match self {
            DurationBucket::Short => "short",
            DurationBucket::Medium => "medium",
            DurationBucket::Long => "long",
        }
    }
}

/// `short < medium_from <= medium < long_from <= long`, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationBuckets {
    pub medium_from: f64,
    pub long_from: f64,
}

impl Default for DurationBuckets {
    fn default() -> Self {
        DurationBuckets { medium_from: 120.0, long_from: 900.0 }
    }
}

impl DurationBuckets {
    pub fn classify(&self, duration: f64) -> DurationBucket {
        if duration < self.medium_from {
            DurationBucket::Short
        } else if duration < self.long_from {
            DurationBucket::Medium
        } else {
            DurationBucket::Long
        }
    }
}

/// How an item was constructed, which fixes what each reasoning path can do with it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    Easy,
    Difficult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAItem {
    pub id: String,
    pub video_id: String,
    pub question: String,
    pub choices: Option<Vec<String>>,
    pub gold_answer: String,
    pub duration_bucket: DurationBucket,
    /// `None` means the evidence is visible throughout the video.
    pub evidence_span: Option<TimeSpan>,
    pub kind: ItemKind,
}

impl QAItem {
    pub fn validate(&self, video: &SyntheticVideo) -> Result<(), WorldError> {
        let err = |message: String| WorldError::InvalidItem { item: self.id.clone(), message };
        if let Some(choices) = &self.choices {
            if !choices.iter().any(|c| c == &self.gold_answer) {
                return Err(err(format!("gold answer {:?} not among choices", self.gold_answer)));
            }
        }
        if let Some(s) = self.evidence_span {
            if !(0.0 <= s.start && s.start < s.end && s.end <= video.duration) {
                return Err(err(format!("evidence span [{}, {}) outside video", s.start, s.end)));
            }
        }
        Ok(())
    }

    /// Whether any of the given timestamps (on this item's video) sees the evidence.
    pub fn evidence_covered<I: IntoIterator<Item = f64>>(&self, timestamps: I) -> bool {
        let mut ts = timestamps.into_iter().peekable();
        match self.evidence_span {
            None => ts.peek().is_some(),
            Some(span) => ts.any(|t| span.contains(t)),
        }
    }
}

/// A sampled frame: an annotation lookup key, not a pixel buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub video_id: String,
    pub timestamp: f64,
    pub crop_box: Option<BBox>,
}

impl Frame {
    pub fn new(video_id: impl Into<String>, timestamp: f64) -> Self {
        Frame { video_id: video_id.into(), timestamp, crop_box: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub n_videos: usize,
    /// Inclusive range of whole-second durations.
    pub duration_range: (f64, f64),
    pub qa_per_video: usize,
    pub easy_fraction: f64,
    #[serde(default)]
    pub buckets: DurationBuckets,
}

impl CorpusSpec {
    pub fn new(n_videos: usize, duration_range: (f64, f64), qa_per_video: usize, easy_fraction: f64) -> Self {
        CorpusSpec { n_videos, duration_range, qa_per_video, easy_fraction, buckets: DurationBuckets::default() }
    }

    fn validate(&self) -> Result<(), WorldError> {
        let bad = |m: &str| Err(WorldError::InvalidSpec(m.to_string()));
        if self.n_videos == 0 || self.qa_per_video == 0 {
            return bad("n_videos and qa_per_video must be positive");
        }
        let (lo, hi) = self.duration_range;
        if !(lo >= 2.0 * CLIP_WINDOW_S && lo <= hi) {
            return bad("duration_range must satisfy 20 <= lo <= hi");
        }
        if !(0.0..=1.0).contains(&self.easy_fraction) {
            return bad("easy_fraction must be within [0, 1]");
        }
        if self.qa_per_video > SUBJECT_NOUNS.len().min(SUBJECT_ADJECTIVES.len()) {
            return bad("qa_per_video exceeds the subject vocabulary");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub videos: Vec<SyntheticVideo>,
    pub items: Vec<QAItem>,
}

impl Corpus {
    pub fn video(&self, id: &str) -> Option<&SyntheticVideo> {
        self.videos.iter().find(|v| v.id == id)
    }

    pub fn item(&self, id: &str) -> Option<&QAItem> {
        self.items.iter().find(|i| i.id == id)
    }

    /// Resolves the QA item a question refers to: exact text match on the video
    /// first, otherwise the item whose question covers at least half of the
    /// query's tokens best (earliest item on ties). Rewritten questions that keep
    /// the subject words resolve to their source item.
    pub fn find_item(&self, video_id: &str, question: &str) -> Option<&QAItem> {
        let on_video = || self.items.iter().filter(move |i| i.video_id == video_id);
        if let Some(exact) = on_video().find(|i| i.question == question) {
            return Some(exact);
        }
        let mut best: Option<(&QAItem, f64)> = None;
        for item in on_video() {
            let score = relevance(question, &item.question);
            if score >= 0.5 && best.is_none_or(|(_, s)| score > s) {
                best = Some((item, score));
            }
        }
        best.map(|(i, _)| i)
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let mut ids = BTreeSet::new();
        for v in &self.videos {
            v.validate()?;
            if !ids.insert(v.id.as_str()) {
                return Err(WorldError::InvalidVideo { video: v.id.clone(), message: "duplicate id".into() });
            }
        }
        for item in &self.items {
            let video = self.video(&item.video_id).ok_or_else(|| WorldError::InvalidItem {
                item: item.id.clone(),
                message: format!("unknown video {}", item.video_id),
            })?;
            item.validate(video)?;
        }
        Ok(())
    }
}

// Vocabularies are pairwise disjoint so that a question's words only ever
// match the event, subtitle and caption text of its own evidence.
const SUBJECT_ADJECTIVES: &[&str] = &[
    "crimson", "silver", "amber", "violet", "golden", "scarlet", "ivory", "cobalt", "emerald", "copper", "indigo",
    "teal", "maroon", "ochre", "azure", "onyx", "coral", "jade", "russet", "saffron",
];
const SUBJECT_NOUNS: &[&str] = &[
    "juggler",
    "lighthouse",
    "tram",
    "violinist",
    "parrot",
    "kayak",
    "glacier",
    "baker",
    "falcon",
    "locomotive",
    "acrobat",
    "windmill",
    "ferry",
    "drummer",
    "tortoise",
    "zeppelin",
    "gondola",
    "blacksmith",
    "peacock",
    "caravan",
];
const ANSWER_OBJECTS: &[&str] = &[
    "umbrella", "lantern", "kite", "teapot", "guitar", "compass", "ladder", "basket", "clock", "helmet", "anchor",
    "trumpet",
];
const FILLER_WORDS: &[&str] = &[
    "crowd",
    "street",
    "breeze",
    "traffic",
    "murmur",
    "market",
    "footsteps",
    "rain",
    "chatter",
    "hallway",
    "window",
    "shadows",
    "corridor",
    "bench",
    "fountain",
    "pigeons",
];
const FILLER_OBJECTS: &[&str] = &["chair", "table", "door", "sign", "car", "tree"];

/// Deterministically generates a corpus. Identical `(seed, spec)` pairs produce
/// identical corpora.
pub fn generate_corpus(seed: u64, spec: &CorpusSpec) -> Result<Corpus, WorldError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let total = spec.n_videos * spec.qa_per_video;
    let n_easy = libm::round(spec.easy_fraction * total as f64) as usize;
    let mut kinds: Vec<ItemKind> =
        (0..total).map(|i| if i < n_easy { ItemKind::Easy } else { ItemKind::Difficult }).collect();
    kinds.shuffle(&mut rng);

    let mut corpus = Corpus::default();
    for v in 0..spec.n_videos {
        let kinds = &kinds[v * spec.qa_per_video..(v + 1) * spec.qa_per_video];
        let (video, items) = generate_video(&mut rng, spec, v, kinds);
        corpus.videos.push(video);
        corpus.items.extend(items);
    }
    corpus.validate()?;
    Ok(corpus)
}

fn generate_video(
    rng: &mut ChaCha8Rng,
    spec: &CorpusSpec,
    index: usize,
    kinds: &[ItemKind],
) -> (SyntheticVideo, Vec<QAItem>) {
    let id = format!("vid{index:04}");
    let (lo, hi) = spec.duration_range;
    let duration = rng.gen_range(libm::ceil(lo) as u32..=libm::floor(hi).max(libm::ceil(lo)) as u32) as f64;
    let fps = [24.0, 25.0, 30.0][rng.gen_range(0..3)];

    let mut video = SyntheticVideo {
        id: id.clone(),
        duration,
        fps,
        events: Vec::new(),
        scene_boundaries: Vec::new(),
        subtitles: Vec::new(),
        captions: Vec::new(),
        frame_annotations: Vec::new(),
    };

    // scene boundaries at distinct whole seconds
    let n_bounds = rng.gen_range(0..=4usize);
    let mut bounds = BTreeSet::new();
    while bounds.len() < n_bounds {
        bounds.insert(rng.gen_range(1..duration as u32));
    }
    video.scene_boundaries = bounds.into_iter().map(f64::from).collect();

    // background activity
    for _ in 0..(duration / 30.0) as usize + 1 {
        let len = rng.gen_range(5..=20) as f64;
        let start = rng.gen_range(0..(duration - len) as u32) as f64;
        let w1 = *FILLER_WORDS.choose(rng).unwrap();
        let w2 = *FILLER_WORDS.choose(rng).unwrap();
        video.events.push(Event {
            start,
            end: start + len,
            tags: alloc::vec![w1.to_string()],
            detail: format!("{w1} {w2}"),
        });
        video.subtitles.push(TextSpan { start, end: start + len.min(4.0), text: format!("{w2} {w1}") });
    }
    for _ in 0..(duration / 60.0) as usize + 1 {
        let t = rng.gen_range(0..(duration as u32 * 10)) as f64 / 10.0;
        let label = *FILLER_OBJECTS.choose(rng).unwrap();
        video.frame_annotations.push(FrameAnnotation {
            timestamp: t,
            ocr_text: String::new(),
            ocr_box: None,
            objects: alloc::vec![DetectedObject { label: label.to_string(), bbox: random_box(rng), score: 0.5 }],
        });
    }

    let mut adjectives: Vec<&str> = SUBJECT_ADJECTIVES.to_vec();
    let mut nouns: Vec<&str> = SUBJECT_NOUNS.to_vec();
    adjectives.shuffle(rng);
    nouns.shuffle(rng);

    let mut used_spans: Vec<TimeSpan> = Vec::new();
    let mut items = Vec::new();
    for (j, &kind) in kinds.iter().enumerate() {
        let (adj, noun) = (adjectives[j], nouns[j]);
        let mut options: Vec<&str> = ANSWER_OBJECTS.to_vec();
        options.shuffle(rng);
        let gold = options[0];
        let mut choices: Vec<String> = options[..4].iter().map(|s| s.to_string()).collect();
        choices.shuffle(rng);

        let (question, evidence_span) = match kind {
            ItemKind::Easy => {
                video.events.push(Event {
                    start: 0.0,
                    end: duration,
                    tags: alloc::vec![adj.to_string(), noun.to_string()],
                    detail: format!("{adj} {noun} beside {gold}"),
                });
                video.captions.push(TextSpan {
                    start: 0.0,
                    end: duration,
                    text: format!("{adj} {noun} beside {gold}"),
                });
                for k in 0..4 {
                    let t = libm::floor((k as f64 + 0.5) * duration / 4.0 * 10.0) / 10.0 + 0.05;
                    video.frame_annotations.push(FrameAnnotation {
                        timestamp: t,
                        ocr_text: format!("{noun} {gold}"),
                        ocr_box: Some(random_box(rng)),
                        objects: alloc::vec![DetectedObject {
                            label: gold.to_string(),
                            bbox: random_box(rng),
                            score: 0.9
                        }],
                    });
                }
                (format!("What object accompanies the {adj} {noun} throughout?"), None)
            }
            ItemKind::Difficult => {
                let span = place_evidence(rng, duration, &used_spans);
                used_spans.push(span);
                video.events.push(Event {
                    start: span.start,
                    end: span.end,
                    tags: alloc::vec![adj.to_string(), noun.to_string()],
                    detail: format!("{adj} {noun} beside {gold}"),
                });
                video.subtitles.push(TextSpan {
                    start: span.start,
                    end: span.end,
                    text: format!("look {adj} {noun} here"),
                });
                video.captions.push(TextSpan {
                    start: span.start,
                    end: span.end,
                    text: format!("{adj} {noun} beside {gold}"),
                });
                let mut t = span.start + 0.25;
                while t < span.end {
                    video.frame_annotations.push(FrameAnnotation {
                        timestamp: t,
                        ocr_text: format!("{noun} {gold}"),
                        ocr_box: Some(random_box(rng)),
                        objects: alloc::vec![DetectedObject {
                            label: gold.to_string(),
                            bbox: random_box(rng),
                            score: rng.gen_range(60..=95) as f64 / 100.0,
                        }],
                    });
                    t += 0.5;
                }
                (format!("Which object appears briefly near the {adj} {noun}?"), Some(span))
            }
        };
        items.push(QAItem {
            id: format!("{id}-q{j}"),
            video_id: id.clone(),
            question,
            choices: Some(choices),
            gold_answer: gold.to_string(),
            duration_bucket: spec.buckets.classify(duration),
            evidence_span,
            kind,
        });
    }

    video.events.sort_by(|a, b| a.start.partial_cmp(&b.start).unwrap());
    video.subtitles.sort_by(|a, b| a.start.partial_cmp(&b.start).unwrap());
    video.captions.sort_by(|a, b| a.start.partial_cmp(&b.start).unwrap());
    video.frame_annotations.sort_by(|a, b| a.timestamp.partial_cmp(&b.timestamp).unwrap());
    video.frame_annotations = merge_annotations(core::mem::take(&mut video.frame_annotations));
    (video, items)
}

/// Merges annotations sharing a timestamp (input sorted): objects are pooled,
/// OCR texts joined, the first OCR box kept.
fn merge_annotations(sorted: Vec<FrameAnnotation>) -> Vec<FrameAnnotation> {
    let mut out: Vec<FrameAnnotation> = Vec::with_capacity(sorted.len());
    for a in sorted {
        match out.last_mut() {
            Some(last) if last.timestamp == a.timestamp => {
                if !a.ocr_text.is_empty() {
                    if !last.ocr_text.is_empty() {
                        last.ocr_text.push(' ');
                    }
                    last.ocr_text.push_str(&a.ocr_text);
                }
                last.ocr_box = last.ocr_box.or(a.ocr_box);
                last.objects.extend(a.objects);
            }
            _ => out.push(a),
        }
    }
    out
}

fn random_box(rng: &mut ChaCha8Rng) -> BBox {
    let x0 = rng.gen_range(0..60) as f64 / 100.0;
    let y0 = rng.gen_range(0..60) as f64 / 100.0;
    let w = rng.gen_range(10..=40) as f64 / 100.0;
    let h = rng.gen_range(10..=40) as f64 / 100.0;
    BBox::new(x0, y0, x0 + w, y0 + h)
}

/// Midpoints `(i + 0.5) * duration / n` of a uniform `n`-frame sample.
pub fn uniform_midpoints(duration: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| (i as f64 + 0.5) * duration / n as f64)
}

/// Picks an evidence span inside one clip window that contains no uniform
/// sampling midpoint for any of [`EVADED_SAMPLE_SIZES`]. Falls back to evading
/// only the 8-frame sample when the video is too short to evade all of them.
fn place_evidence(rng: &mut ChaCha8Rng, duration: f64, used: &[TimeSpan]) -> TimeSpan {
    let strict: Vec<f64> = EVADED_SAMPLE_SIZES.iter().flat_map(|&n| uniform_midpoints(duration, n)).collect();
    let relaxed: Vec<f64> = uniform_midpoints(duration, 8).collect();
    let n_clips = libm::ceil(duration / CLIP_WINDOW_S) as usize;
    let mut clips: Vec<usize> = (0..n_clips).collect();
    clips.shuffle(rng);

    for forbidden in [&strict, &relaxed] {
        for &c in &clips {
            let c0 = c as f64 * CLIP_WINDOW_S;
            let c1 = (c0 + CLIP_WINDOW_S).min(duration);
            // candidate starts on a 0.1 s grid
            let first = libm::round(c0 * 10.0) as i64;
            let last = libm::floor((c1 - EVIDENCE_SPAN_S) * 10.0) as i64;
            let candidates: Vec<TimeSpan> = (first..=last)
                .map(|k| TimeSpan::new(k as f64 / 10.0, k as f64 / 10.0 + EVIDENCE_SPAN_S))
                .filter(|s| s.end <= c1)
                .filter(|s| !forbidden.iter().any(|&p| s.contains(p)))
                .filter(|s| !used.iter().any(|u| u.intersects(s)))
                .collect();
            if let Some(span) = candidates.choose(rng) {
                return *span;
            }
        }
    }
    // only reachable when every clip is already occupied; overlap an existing span
    TimeSpan::new(0.1, 0.1 + EVIDENCE_SPAN_S)
}

/// Whether a difficult item's evidence evades whole-video uniform sampling of size `n`.
pub fn evades_uniform_sample(item: &QAItem, duration: f64, n: usize) -> bool {
    match item.evidence_span {
        None => false,
        Some(span) => !uniform_midpoints(duration, n).any(|t| span.contains(t)),
    }
}

/// Tokens shared by the question and the given text; handy in diagnostics.
pub fn shared_tokens(question: &str, text: &str) -> Vec<String> {
    let q = token_set(question);
    let t = token_set(text);
    q.intersection(&t).cloned().collect()
}
