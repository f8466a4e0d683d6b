//! Answer normalization and the lexical statistics built on it.

use std::collections::HashSet;
use std::sync::LazyLock;

use regex::Regex;

use super::ExpertPrediction;
use crate::error::{Error, Result};

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Optional sign, digits, interior `.`/`,` groups, optional `%`.
static NUMBER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[+-]?[0-9]+(?:[.,][0-9]+)*%?").expect("valid regex"));

/// Lowercase, drop ASCII punctuation, drop the articles a/an/the as whole
/// tokens, and collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let stripped: String = lowered
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    stripped
        .split_whitespace()
        .filter(|t| !ARTICLES.contains(t))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Normalized whitespace tokens.
pub fn tokens(text: &str) -> Vec<String> {
    normalize_answer(text)
        .split(' ')
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

pub fn exact_match(pred: &str, golds: &[String]) -> Result<bool> {
    if golds.is_empty() {
        return Err(Error::contract("exact_match called with no gold answers"));
    }
    let pred = normalize_answer(pred);
    Ok(golds.iter().any(|g| normalize_answer(g) == pred))
}

pub fn count_numbers(text: &str) -> usize {
    NUMBER.find_iter(text).count()
}

/// Jaccard similarity of the normalized token sets; 0 when both are empty.
pub fn token_overlap(a: &str, b: &str) -> f64 {
    let a: HashSet<String> = tokens(a).into_iter().collect();
    let b: HashSet<String> = tokens(b).into_iter().collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

/// Geometric-mean token probability of the answer span.
pub fn normalized_answer_prob(p: &ExpertPrediction) -> Result<f64> {
    let lps = &p.answer_token_logprobs;
    if lps.is_empty() {
        return Err(Error::MalformedLog(format!(
            "{} prediction for `{}` has no answer log-probabilities",
            p.expert, p.question_id
        )));
    }
    let mean = lps.iter().sum::<f64>() / lps.len() as f64;
    Ok(mean.exp())
}
