//! Selecting one answer from a pool of execution results.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::confidence::Confidence;
use crate::exec::ExecutionResult;
use crate::text::normalize_answer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Confidence,
    Voting,
}

/// The winning answer and the pool index of the result it was taken from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<Confidence>,
    pub index: usize,
}

// a result without a confidence ranks below every confidence
fn rank(c: Option<Confidence>) -> f64 {
    c.map_or(f64::NEG_INFINITY, Confidence::value)
}

/// Maximum-confidence successful result; ties go to the earliest. `None` when nothing succeeded.
pub fn aggregate_confidence(results: &[ExecutionResult]) -> Option<Selection> {
    let mut best: Option<(usize, &ExecutionResult)> = None;
    for (i, r) in results.iter().enumerate() {
        let Some(_) = r.answer.as_ref().filter(|_| r.is_success()) else { continue };
        if best.is_none_or(|(_, b)| rank(r.confidence) > rank(b.confidence)) {
            best = Some((i, r));
        }
    }
    best.map(|(i, r)| Selection { answer: r.answer.clone().unwrap_or_default(), confidence: r.confidence, index: i })
}

/// Most frequent answer among successful results. Vote ties go to the higher
/// summed confidence, then to the answer seen first. The reported confidence
/// (and index) is that of the answer's most confident result.
pub fn aggregate_voting(results: &[ExecutionResult]) -> Option<Selection> {
    struct Tally {
        key: String,
        votes: usize,
        sum: f64,
        best: usize,
    }
    let mut tallies: Vec<Tally> = Vec::new();
    for (i, r) in results.iter().enumerate() {
        let Some(answer) = r.answer.as_ref().filter(|_| r.is_success()) else { continue };
        let key = normalize_answer(answer);
        let c = r.confidence.map_or(0.0, Confidence::value);
        match tallies.iter_mut().find(|t| t.key == key) {
            Some(t) => {
                t.votes += 1;
                t.sum += c;
                if rank(r.confidence) > rank(results[t.best].confidence) {
                    t.best = i;
                }
            }
            None => tallies.push(Tally { key, votes: 1, sum: c, best: i }),
        }
    }
    let mut winner: Option<&Tally> = None;
    for t in &tallies {
        let better = match winner {
            None => true,
            Some(w) => t.votes > w.votes || (t.votes == w.votes && t.sum > w.sum),
        };
        if better {
            winner = Some(t);
        }
    }
    winner.map(|t| {
        let r = &results[t.best];
        Selection { answer: r.answer.clone().unwrap_or_default(), confidence: r.confidence, index: t.best }
    })
}

pub fn aggregate(results: &[ExecutionResult], how: Aggregation) -> Option<Selection> {
    match how {
        Aggregation::Confidence => aggregate_confidence(results),
        Aggregation::Voting => aggregate_voting(results),
    }
}
