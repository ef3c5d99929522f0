#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use fastslow::planner::{easy_target, MarkerPolicy, Planner, Script, ScriptedPlanner, SyntheticPlanner};
use fastslow::Engine;
use fastslow_core::modules::{QaOrigin, QaRequest, QaResponse, VideoInfo};
use fastslow_core::world::{
    BBox, DetectedObject, DurationBucket, Event, Frame, FrameAnnotation, ItemKind, QAItem, TextSpan, TimeSpan,
};
use fastslow_core::{
    generate_corpus, Backend, BackendError, Corpus, CorpusSpec, FrozenClock, Registry, SimulatedBackend,
    SimulationConfig, SyntheticVideo,
};

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
/// * "blue kite" over the whole video (easy item)
/// * a "red car parked near the gate" distractor in [70, 80) that outranks
///   the evidence clip, so top_k = 1 picks the wrong window
pub fn hand_video() -> SyntheticVideo {
    SyntheticVideo {
        id: "hand".into(),
        duration: 100.0,
        fps: 30.0,
        events: vec![
            event(0.0, 100.0, &["blue", "kite"], "blue kite beside drum"),
            event(30.0, 40.0, &["red", "car"], "red car beside lantern"),
            event(70.0, 80.0, &["red", "car", "object", "appears", "briefly"], "red car parked near the gate appears"),
        ],
        scene_boundaries: vec![30.0, 60.0],
        subtitles: vec![span(35.0, 37.0, "look red car here"), span(70.0, 72.0, "birds sing loudly")],
        captions: vec![span(0.0, 10.0, "a field with a kite"), span(30.0, 40.0, "red car beside lantern")],
        frame_annotations: vec![FrameAnnotation {
            timestamp: 35.5,
            ocr_text: "STOP".into(),
            ocr_box: Some(BBox::new(0.1, 0.1, 0.3, 0.3)),
            objects: vec![DetectedObject { label: "lantern".into(), bbox: BBox::new(0.5, 0.5, 0.7, 0.7), score: 0.9 }],
        }],
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

pub fn hand_corpus() -> Arc<Corpus> {
    let c = Corpus { videos: vec![hand_video()], items: hand_items() };
    c.validate().expect("hand corpus is valid");
    Arc::new(c)
}

pub fn generated(seed: u64, n_videos: usize, qa_per_video: usize, easy_fraction: f64) -> Arc<Corpus> {
    let spec = CorpusSpec::new(n_videos, (300.0, 1500.0), qa_per_video, easy_fraction);
    Arc::new(generate_corpus(seed, &spec).expect("valid spec"))
}

pub fn simulated(corpus: &Arc<Corpus>, noise: f64) -> Arc<dyn Backend> {
    Arc::new(SimulatedBackend::new(
        corpus.clone(),
        SimulationConfig { program_noise: noise, ..SimulationConfig::default() },
    ))
}

pub fn engine(backend: Arc<dyn Backend>, planner: Arc<dyn Planner>) -> Engine {
    Engine::new(Arc::new(Registry::builtin()), backend, planner, Arc::new(FrozenClock))
}

pub fn synthetic_engine(corpus: &Arc<Corpus>, noise: f64, policy: MarkerPolicy) -> Engine {
    engine(simulated(corpus, noise), Arc::new(SyntheticPlanner::new(corpus.clone(), policy)))
}

pub fn scripted(scripts: &[(&str, Script)]) -> ScriptedPlanner {
    ScriptedPlanner::new(scripts.iter().map(|(k, s)| (k.to_string(), s.clone())).collect::<BTreeMap<_, _>>())
}

/// Script that marks the query easy and continues with `program`.
pub fn easy_then(program: &str) -> Script {
    Script { answer: Some(easy_target()), continuation: Some(program.to_string()), ..Script::default() }
}

/// Script that plans `program` directly.
pub fn slow_with(program: &str) -> Script {
    Script { answer: Some(program.to_string()), ..Script::default() }
}

/// Fails every capability named in `fail` (or all with `"*"`) with a timeout.
pub struct Faulty<B> {
    pub inner: B,
    pub fail: Vec<&'static str>,
}

impl<B: Backend> Faulty<B> {
    fn check(&self, cap: &str) -> Result<(), BackendError> {
        if self.fail.contains(&cap) || self.fail.contains(&"*") {
            return Err(BackendError::Timeout { capability: cap.into(), after_ms: 10 });
        }
        Ok(())
    }
}

/// Program-origin QA only fails; `fast_think` still works.
pub struct SlowBroken<B>(pub B);

/// Fast-origin QA answers `answer` with a scalar confidence of exactly `conf`.
pub struct FixedFast<B> {
    pub inner: B,
    pub answer: String,
    pub conf: f64,
}

macro_rules! delegate {
    ($t:ident, $s:ident, $pre:expr, $qa:expr) => {
        impl<B: Backend> Backend for $t<B> {
            fn video_info(&$s, video: &str) -> Result<VideoInfo, BackendError> {
                $pre("video_info")?;
                $s.inner().video_info(video)
            }
            fn clip_scores(&$s, video: &str, query: &str, windows: &[TimeSpan]) -> Result<Vec<f64>, BackendError> {
                $pre("clip_scores")?;
                $s.inner().clip_scores(video, query, windows)
            }
            fn subtitles(&$s, video: &str) -> Result<Vec<TextSpan>, BackendError> {
                $pre("subtitles")?;
                $s.inner().subtitles(video)
            }
            fn captions(&$s, video: &str) -> Result<Vec<TextSpan>, BackendError> {
                $pre("captions")?;
                $s.inner().captions(video)
            }
            fn text_scores(&$s, query: &str, texts: &[String]) -> Result<Vec<f64>, BackendError> {
                $pre("text_scores")?;
                $s.inner().text_scores(query, texts)
            }
            fn video_qa(&$s, request: &QaRequest) -> Result<QaResponse, BackendError> {
                $pre("video_qa")?;
                $qa(request)
            }
            fn ocr(&$s, frame: &Frame) -> Result<String, BackendError> {
                $pre("ocr")?;
                $s.inner().ocr(frame)
            }
            fn detect(&$s, frame: &Frame, text: &str, text_thr: f64, box_thr: f64) -> Result<Vec<DetectedObject>, BackendError> {
                $pre("detect")?;
                $s.inner().detect(frame, text, text_thr, box_thr)
            }
            fn scene_boundaries(&$s, video: &str) -> Result<Vec<f64>, BackendError> {
                $pre("scene_boundaries")?;
                $s.inner().scene_boundaries(video)
            }
            fn subtitle_hint(&$s, video: &str, query: &str) -> Result<String, BackendError> {
                $pre("subtitle_hint")?;
                $s.inner().subtitle_hint(video, query)
            }
        }
    };
}

trait Inner {
    type B: Backend;
    fn inner(&self) -> &Self::B;
}

impl<B: Backend> Inner for Faulty<B> {
    type B = B;
    fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: Backend> Inner for SlowBroken<B> {
    type B = B;
    fn inner(&self) -> &B {
        &self.0
    }
}

impl<B: Backend> Inner for FixedFast<B> {
    type B = B;
    fn inner(&self) -> &B {
        &self.inner
    }
}

delegate!(Faulty, self, |cap| self.check(cap), |r| self.inner.video_qa(r));
delegate!(SlowBroken, self, |_| Ok::<(), BackendError>(()), |r: &QaRequest| {
    if r.origin == QaOrigin::Program {
        Err(BackendError::Unavailable { message: "program QA down".into() })
    } else {
        self.0.video_qa(r)
    }
});
delegate!(FixedFast, self, |_| Ok::<(), BackendError>(()), |r: &QaRequest| {
    if r.origin == QaOrigin::Fast {
        Ok(QaResponse { answer: self.answer.clone(), token_logprobs: None, confidence: Some(self.conf) })
    } else {
        self.inner.video_qa(r)
    }
});

/// Fast-origin QA only fails; programs still run.
pub struct FastBroken<B>(pub B);

impl<B: Backend> Inner for FastBroken<B> {
    type B = B;
    fn inner(&self) -> &B {
        &self.0
    }
}

delegate!(FastBroken, self, |_| Ok::<(), BackendError>(()), |r: &QaRequest| {
    if r.origin == QaOrigin::Fast {
        Err(BackendError::Unavailable { message: "fast QA down".into() })
    } else {
        self.0.video_qa(r)
    }
});

/// Sleeps `delay` in every call and records the peak number of concurrent calls.
pub struct Sleepy<B> {
    pub inner: B,
    pub delay: std::time::Duration,
    pub active: std::sync::atomic::AtomicUsize,
    pub peak: std::sync::atomic::AtomicUsize,
}

impl<B: Backend> Sleepy<B> {
    pub fn new(inner: B, delay: std::time::Duration) -> Self {
        Sleepy { inner, delay, active: Default::default(), peak: Default::default() }
    }

    fn nap(&self) -> Result<(), BackendError> {
        use std::sync::atomic::Ordering::SeqCst;
        let now = self.active.fetch_add(1, SeqCst) + 1;
        self.peak.fetch_max(now, SeqCst);
        std::thread::sleep(self.delay);
        self.active.fetch_sub(1, SeqCst);
        Ok(())
    }
}

impl<B: Backend> Inner for Sleepy<B> {
    type B = B;
    fn inner(&self) -> &B {
        &self.inner
    }
}

delegate!(Sleepy, self, |_| self.nap(), |r| self.inner.video_qa(r));
