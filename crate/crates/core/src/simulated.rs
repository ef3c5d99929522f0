//! Deterministic backend over a synthetic [`Corpus`].
//!
//! Every answer is a pure function of the corpus and the call inputs; the
//! "randomness" (confidence within a band, which wrong choice, injected
//! program noise) comes from FNV hashes of ids and inputs.

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::hash::Fnv1a;
use crate::modules::{
    rank_top_k, Backend, BackendError, QaKind, QaOrigin, QaRequest, QaResponse, VideoInfo, HINT_LINES,
};
use crate::text::{answers_match, relevance};
use crate::world::{Corpus, DetectedObject, Frame, SyntheticVideo, TextSpan, TimeSpan};

/// Annotations within this distance of a frame are what the frame "shows".
pub const ANNOTATION_TOLERANCE_S: f64 = 0.5;

/// How the simulated videoQA reports confidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceMode {
    /// `token_logprobs = [ln c]`, so the caller computes `c` itself.
    #[default]
    TokenLogprobs,
    /// A scalar `confidence = c`.
    Scalar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    /// Confidence band for answers backed by evidence.
    pub high_band: (f64, f64),
    /// Confidence band for unsupported answers.
    pub low_band: (f64, f64),
    /// Probability that a program-issued QA call answers wrongly despite seeing
    /// the evidence. `fast_think` calls are never perturbed.
    pub program_noise: f64,
    pub confidence_mode: ConfidenceMode,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            high_band: (0.78, 0.95),
            low_band: (0.30, 0.60),
            program_noise: 0.0,
            confidence_mode: ConfidenceMode::TokenLogprobs,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, (lo, hi)) in [("high_band", self.high_band), ("low_band", self.low_band)] {
            if !(0.0 < lo && lo < hi && hi <= 1.0) {
                return Err(alloc::format!("{name} must satisfy 0 < lo < hi <= 1, got ({lo}, {hi})"));
            }
        }
        if !(0.0..=1.0).contains(&self.program_noise) {
            return Err(alloc::format!("program_noise must lie in [0, 1], got {}", self.program_noise));
        }
        Ok(())
    }
}

/// Maps a hash strictly inside `(lo, hi)`.
pub fn band_value(band: (f64, f64), h: u64) -> f64 {
    let (lo, hi) = band;
    lo + (hi - lo) * (1 + h % 999) as f64 / 1000.0
}

fn unit(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

#[derive(Debug, Clone)]
pub struct SimulatedBackend {
    corpus: Arc<Corpus>,
    config: SimulationConfig,
}

impl SimulatedBackend {
    pub fn new(corpus: Arc<Corpus>, config: SimulationConfig) -> Self {
        SimulatedBackend { corpus, config }
    }

    pub fn corpus(&self) -> &Arc<Corpus> {
        &self.corpus
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.config
    }

    fn video(&self, id: &str) -> Result<&SyntheticVideo, BackendError> {
        self.corpus.video(id).ok_or_else(|| BackendError::UnknownVideo { video: id.to_string() })
    }

    fn respond(&self, answer: &str, confidence: f64) -> QaResponse {
        match self.config.confidence_mode {
            ConfidenceMode::TokenLogprobs => QaResponse {
                answer: answer.into(),
                token_logprobs: Some(alloc::vec![libm::log(confidence)]),
                confidence: None,
            },
            ConfidenceMode::Scalar => {
                QaResponse { answer: answer.into(), token_logprobs: None, confidence: Some(confidence) }
            }
        }
    }

    fn frames_hash(req: &QaRequest) -> Fnv1a {
        let mut h = Fnv1a::new().field(&req.video_id).field(&req.query);
        for f in &req.frames {
            h = h.f64(f.timestamp);
        }
        h
    }

    fn visible<'a>(&self, video: &'a SyntheticVideo, frame: &Frame) -> Option<&'a crate::world::FrameAnnotation> {
        video.annotation_near(frame.timestamp, ANNOTATION_TOLERANCE_S)
    }
}

impl Backend for SimulatedBackend {
    fn video_info(&self, video: &str) -> Result<VideoInfo, BackendError> {
        let v = self.video(video)?;
        Ok(VideoInfo { duration: v.duration, fps: v.fps })
    }

    fn clip_scores(&self, video: &str, query: &str, windows: &[TimeSpan]) -> Result<Vec<f64>, BackendError> {
        let v = self.video(video)?;
        Ok(windows
            .iter()
            .map(|w| {
                let text: Vec<String> = v.events.iter().filter(|e| e.span().intersects(w)).map(|e| e.text()).collect();
                relevance(query, &text.join(" "))
            })
            .collect())
    }

    fn subtitles(&self, video: &str) -> Result<Vec<TextSpan>, BackendError> {
        Ok(self.video(video)?.subtitles.clone())
    }

    fn captions(&self, video: &str) -> Result<Vec<TextSpan>, BackendError> {
        Ok(self.video(video)?.captions.clone())
    }

    fn text_scores(&self, query: &str, texts: &[String]) -> Result<Vec<f64>, BackendError> {
        Ok(texts.iter().map(|t| relevance(query, t)).collect())
    }

    fn video_qa(&self, req: &QaRequest) -> Result<QaResponse, BackendError> {
        self.video(&req.video_id)?;
        let item = self.corpus.find_item(&req.video_id, &req.query);
        let covered = item.is_some_and(|i| i.evidence_covered(req.frames.iter().map(|f| f.timestamp)));
        let base = Self::frames_hash(req);
        let noisy = req.origin == QaOrigin::Program
            && self.config.program_noise > 0.0
            && unit(base.field("noise").finish()) < self.config.program_noise;
        let high = band_value(self.config.high_band, base.field("high").finish());
        let low = band_value(self.config.low_band, base.field("low").finish());
        let supported = covered && !noisy;

        match req.kind {
            QaKind::YesNo => Ok(self.respond(if supported { "yes" } else { "no" }, if supported { high } else { low })),
            QaKind::MultipleChoice => {
                if req.choices.is_empty() {
                    return Err(BackendError::protocol("multiple-choice request without choices"));
                }
                let gold = item.and_then(|i| req.choices.iter().find(|c| answers_match(c, &i.gold_answer)));
                match gold {
                    Some(g) if supported => Ok(self.respond(g, high)),
                    _ => {
                        let wrong: Vec<&String> = req.choices.iter().filter(|c| Some(*c) != gold).collect();
                        let pick = if wrong.is_empty() {
                            &req.choices[0]
                        } else {
                            wrong[(base.field("pick").finish() % wrong.len() as u64) as usize]
                        };
                        Ok(self.respond(pick, low))
                    }
                }
            }
        }
    }

    fn ocr(&self, frame: &Frame) -> Result<String, BackendError> {
        let v = self.video(&frame.video_id)?;
        let Some(ann) = self.visible(v, frame) else { return Ok(String::new()) };
        let in_view = match (frame.crop_box, ann.ocr_box) {
            (Some(c), Some(b)) => c.intersection(&b).is_some(),
            _ => true,
        };
        Ok(if in_view { ann.ocr_text.clone() } else { String::new() })
    }

    fn detect(
        &self,
        frame: &Frame,
        text: &str,
        text_thr: f64,
        box_thr: f64,
    ) -> Result<Vec<DetectedObject>, BackendError> {
        let v = self.video(&frame.video_id)?;
        let Some(ann) = self.visible(v, frame) else { return Ok(Vec::new()) };
        let mut out: Vec<DetectedObject> = ann
            .objects
            .iter()
            .filter(|o| relevance(text, &o.label) >= text_thr && o.score >= box_thr)
            .filter(|o| frame.crop_box.is_none_or(|c| c.intersection(&o.bbox).is_some()))
            .cloned()
            .collect();
        out.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(core::cmp::Ordering::Equal));
        Ok(out)
    }

    fn scene_boundaries(&self, video: &str) -> Result<Vec<f64>, BackendError> {
        Ok(self.video(video)?.scene_boundaries.clone())
    }

    fn subtitle_hint(&self, video: &str, query: &str) -> Result<String, BackendError> {
        let v = self.video(video)?;
        let scored: Vec<(&TextSpan, f64, f64)> = v
            .subtitles
            .iter()
            .map(|s| (s, relevance(query, &s.text), s.start))
            .filter(|(_, sc, _)| *sc > 0.0)
            .collect();
        let top: Vec<&str> = rank_top_k(scored, HINT_LINES).into_iter().map(|(s, _)| s.text.as_str()).collect();
        Ok(top.join("\n"))
    }
}
