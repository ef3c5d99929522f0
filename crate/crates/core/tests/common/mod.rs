#![allow(dead_code)]

use std::sync::Arc;

use fastslow_core::modules::Backend;
use fastslow_core::world::{
    BBox, DetectedObject, DurationBucket, Event, FrameAnnotation, ItemKind, QAItem, TextSpan, TimeSpan,
};
use fastslow_core::{Corpus, SimulatedBackend, SimulationConfig, SyntheticVideo};

pub fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn event(start: f64, end: f64, tags: &[&str], detail: &str) -> Event {
    Event { start, end, tags: strings(tags), detail: detail.into() }
}

fn span(start: f64, end: f64, text: &str) -> TextSpan {
    TextSpan { start, end, text: text.into() }
}

/// A hand-built 100 s video:
/// * "red car" event in [30, 40) with a lantern visible at 35.2-36.7
/// * "blue kite" event over the whole video (easy item)
/// * scene cuts at 30 and 60
pub fn hand_video() -> SyntheticVideo {
    SyntheticVideo {
        id: "hand".into(),
        duration: 100.0,
        fps: 30.0,
        events: vec![
            event(0.0, 100.0, &["blue", "kite"], "blue kite beside drum"),
            event(12.0, 18.0, &["grey"], "grey fog"),
            event(30.0, 40.0, &["red", "car"], "red car beside lantern"),
        ],
        scene_boundaries: vec![30.0, 60.0],
        subtitles: vec![span(31.0, 33.0, "the red car stops here"), span(70.0, 72.0, "birds sing loudly")],
        captions: vec![span(0.0, 10.0, "a field with a kite"), span(30.0, 40.0, "red car beside lantern")],
        frame_annotations: vec![
            FrameAnnotation {
                timestamp: 35.5,
                ocr_text: "STOP".into(),
                ocr_box: Some(BBox::new(0.1, 0.1, 0.3, 0.3)),
                objects: vec![
                    DetectedObject { label: "lantern".into(), bbox: BBox::new(0.5, 0.5, 0.7, 0.7), score: 0.9 },
                    DetectedObject { label: "red car".into(), bbox: BBox::new(0.0, 0.6, 0.4, 1.0), score: 0.8 },
                ],
            },
            FrameAnnotation {
                timestamp: 36.0,
                ocr_text: "STOP".into(),
                ocr_box: Some(BBox::new(0.1, 0.1, 0.3, 0.3)),
                objects: vec![DetectedObject {
                    label: "lantern".into(),
                    bbox: BBox::new(0.5, 0.5, 0.7, 0.7),
                    score: 0.3,
                }],
            },
        ],
    }
}

pub fn hand_items() -> Vec<QAItem> {
    vec![
        QAItem {
            id: "hand-q0".into(),
            video_id: "hand".into(),
            question: "Which object appears briefly near the red car?".into(),
            choices: Some(strings(&["kite", "lantern", "drum", "bell"])),
            gold_answer: "lantern".into(),
            duration_bucket: DurationBucket::Short,
            evidence_span: Some(TimeSpan::new(35.2, 36.7)),
            kind: ItemKind::Difficult,
        },
        QAItem {
            id: "hand-q1".into(),
            video_id: "hand".into(),
            question: "What object accompanies the blue kite throughout?".into(),
            choices: Some(strings(&["lantern", "drum", "bell", "kite"])),
            gold_answer: "drum".into(),
            duration_bucket: DurationBucket::Short,
            evidence_span: None,
            kind: ItemKind::Easy,
        },
    ]
}

/// A second video with no subtitles, no scene cuts and no annotations.
pub fn bare_video() -> SyntheticVideo {
    SyntheticVideo {
        id: "bare".into(),
        duration: 45.0,
        fps: 25.0,
        events: vec![],
        scene_boundaries: vec![],
        subtitles: vec![],
        captions: vec![],
        frame_annotations: vec![],
    }
}

pub fn hand_corpus() -> Arc<Corpus> {
    let c = Corpus { videos: vec![hand_video(), bare_video()], items: hand_items() };
    c.validate().expect("hand corpus is valid");
    Arc::new(c)
}

pub fn hand_backend() -> SimulatedBackend {
    SimulatedBackend::new(hand_corpus(), SimulationConfig::default())
}

pub fn backend_over(corpus: Arc<Corpus>) -> Arc<dyn Backend> {
    Arc::new(SimulatedBackend::new(corpus, SimulationConfig::default()))
}

/// Wraps a backend and fails every capability named in `fail` with a timeout.
pub struct Faulty<B> {
    pub inner: B,
    pub fail: Vec<&'static str>,
}

impl<B: Backend> Faulty<B> {
    fn check(&self, cap: &str) -> Result<(), fastslow_core::BackendError> {
        if self.fail.contains(&cap) || self.fail.contains(&"*") {
            return Err(fastslow_core::BackendError::Timeout { capability: cap.into(), after_ms: 10 });
        }
        Ok(())
    }
}

use fastslow_core::modules::{QaRequest, QaResponse, VideoInfo};
use fastslow_core::world::Frame;
use fastslow_core::BackendError;

impl<B: Backend> Backend for Faulty<B> {
    fn video_info(&self, video: &str) -> Result<VideoInfo, BackendError> {
        self.check("video_info")?;
        self.inner.video_info(video)
    }
    fn clip_scores(&self, video: &str, query: &str, windows: &[TimeSpan]) -> Result<Vec<f64>, BackendError> {
        self.check("clip_scores")?;
        self.inner.clip_scores(video, query, windows)
    }
    fn subtitles(&self, video: &str) -> Result<Vec<TextSpan>, BackendError> {
        self.check("subtitles")?;
        self.inner.subtitles(video)
    }
    fn captions(&self, video: &str) -> Result<Vec<TextSpan>, BackendError> {
        self.check("captions")?;
        self.inner.captions(video)
    }
    fn text_scores(&self, query: &str, texts: &[String]) -> Result<Vec<f64>, BackendError> {
        self.check("text_scores")?;
        self.inner.text_scores(query, texts)
    }
    fn video_qa(&self, request: &QaRequest) -> Result<QaResponse, BackendError> {
        self.check("video_qa")?;
        self.inner.video_qa(request)
    }
    fn ocr(&self, frame: &Frame) -> Result<String, BackendError> {
        self.check("ocr")?;
        self.inner.ocr(frame)
    }
    fn detect(
        &self,
        frame: &Frame,
        text: &str,
        text_thr: f64,
        box_thr: f64,
    ) -> Result<Vec<DetectedObject>, BackendError> {
        self.check("detect")?;
        self.inner.detect(frame, text, text_thr, box_thr)
    }
    fn scene_boundaries(&self, video: &str) -> Result<Vec<f64>, BackendError> {
        self.check("scene_boundaries")?;
        self.inner.scene_boundaries(video)
    }
    fn subtitle_hint(&self, video: &str, query: &str) -> Result<String, BackendError> {
        self.check("subtitle_hint")?;
        self.inner.subtitle_hint(video, query)
    }
}
