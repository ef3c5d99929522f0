//! Token-level confidence, difficulty labels, and the confidence diagnostics
//! (correct/incorrect gap, accuracy-above-threshold curve).

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::text::answers_match;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DomainError {
    #[error("confidence requires at least one token log-probability")]
    EmptyLogprobs,
    #[error("token log-probability #{index} is {value}, expected a value <= 0")]
    PositiveLogprob { index: usize, value: f64 },
    #[error("confidence {0} outside (0, 1]")]
    ConfidenceRange(f64),
    #[error("gap report needs both correct and incorrect records (correct={correct}, incorrect={incorrect})")]
    EmptyClass { correct: usize, incorrect: usize },
}

/// A model confidence in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Confidence(f64);

impl Confidence {
    pub fn new(value: f64) -> Result<Self, DomainError> {
        if value > 0.0 && value <= 1.0 {
            Ok(Confidence(value))
        } else {
            Err(DomainError::ConfidenceRange(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Confidence {
    type Error = DomainError;
    fn try_from(v: f64) -> Result<Self, Self::Error> {
        Confidence::new(v)
    }
}

impl From<Confidence> for f64 {
    fn from(c: Confidence) -> f64 {
        c.0
    }
}

/// Whether a confidence was derived here from token log-probabilities or
/// passed through as a scalar reported by the backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceSource {
    Computed,
    Backend,
}

/// `exp(mean(logprobs))`, i.e. the geometric mean of the decoded tokens'
/// probabilities.
///
/// Log-probabilities of exactly 0 are accepted; positive (or NaN) entries are
/// adapter bugs and rejected. A mean so negative that `exp` underflows is
/// clamped to the smallest positive normal so the result stays in `(0, 1]`.
pub fn compute_confidence(logprobs: &[f64]) -> Result<Confidence, DomainError> {
    if logprobs.is_empty() {
        return Err(DomainError::EmptyLogprobs);
    }
    let mut sum = 0.0;
    for (index, &value) in logprobs.iter().enumerate() {
        if !(value <= 0.0) {
            return Err(DomainError::PositiveLogprob { index, value });
        }
        sum += value;
    }
    let mean = sum / logprobs.len() as f64;
    let conf = libm::exp(mean).max(f64::MIN_POSITIVE);
    Ok(Confidence(conf))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Easy,
    Difficult,
}

pub const DEFAULT_TAU: f64 = 0.75;

/// Easy iff the prediction matches gold *and* the confidence strictly exceeds `tau`.
pub fn label_difficulty(predicted: &str, gold: &str, conf: Confidence, tau: f64) -> Difficulty {
    if answers_match(predicted, gold) && conf.value() > tau {
        Difficulty::Easy
    } else {
        Difficulty::Difficult
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredPrediction {
    pub confidence: f64,
    pub correct: bool,
}

impl ScoredPrediction {
    pub fn new(confidence: f64, correct: bool) -> Self {
        ScoredPrediction { confidence, correct }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub mean_correct: f64,
    pub mean_incorrect: f64,
    pub delta: f64,
    pub n_correct: usize,
    pub n_incorrect: usize,
}

pub fn confidence_gap_report(records: &[ScoredPrediction]) -> Result<GapReport, DomainError> {
    let (mut sum_c, mut n_c, mut sum_i, mut n_i) = (0.0, 0usize, 0.0, 0usize);
    for r in records {
        if r.correct {
            sum_c += r.confidence;
            n_c += 1;
        } else {
            sum_i += r.confidence;
            n_i += 1;
        }
    }
    if n_c == 0 || n_i == 0 {
        return Err(DomainError::EmptyClass { correct: n_c, incorrect: n_i });
    }
    let mean_correct = sum_c / n_c as f64;
    let mean_incorrect = sum_i / n_i as f64;
    Ok(GapReport {
        mean_correct,
        mean_incorrect,
        delta: mean_correct - mean_incorrect,
        n_correct: n_c,
        n_incorrect: n_i,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPoint {
    pub threshold: f64,
    /// `None` when no record reaches the threshold.
    pub accuracy: Option<f64>,
    pub coverage: f64,
}

/// Accuracy and coverage of the records whose confidence is `>= threshold`.
pub fn accuracy_above_threshold(records: &[ScoredPrediction], thresholds: &[f64]) -> Vec<ThresholdPoint> {
    thresholds
        .iter()
        .map(|&threshold| {
            let (mut kept, mut correct) = (0usize, 0usize);
            for r in records.iter().filter(|r| r.confidence >= threshold) {
                kept += 1;
                correct += usize::from(r.correct);
            }
            let coverage = if records.is_empty() { 0.0 } else { kept as f64 / records.len() as f64 };
            let accuracy = (kept > 0).then(|| correct as f64 / kept as f64);
            ThresholdPoint { threshold, accuracy, coverage }
        })
        .collect()
}
