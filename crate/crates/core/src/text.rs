//! Tokenization and bag-of-words relevance.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

/// Lower-cased alphanumeric runs.
pub fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(|t| t.to_lowercase()).collect()
}

pub fn token_set(text: &str) -> BTreeSet<String> {
    tokens(text).into_iter().collect()
}

/// Fraction of distinct query tokens that occur in `span_text`, in `[0, 1]`.
///
/// Case-folded; an empty query scores 0. Callers that rank spans break ties
/// by earlier span start.
pub fn relevance(query: &str, span_text: &str) -> f64 {
    let query = token_set(query);
    if query.is_empty() {
        return 0.0;
    }
    let span = token_set(span_text);
    let hits = query.iter().filter(|t| span.contains(*t)).count();
    hits as f64 / query.len() as f64
}

/// Answer comparison used for gold checks and vote tallies: trimmed, case-insensitive.
pub fn answers_match(a: &str, b: &str) -> bool {
    normalize_answer(a) == normalize_answer(b)
}

pub fn normalize_answer(a: &str) -> String {
    a.trim().to_lowercase()
}
