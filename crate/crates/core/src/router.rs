//! Answer selection over prediction sets and generalizable-QA evaluation.
//!
//! Every argmax in this module breaks exact ties by canonical expert order
//! (factual, multihop, math, commonsense).

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::featurize_expert;
use crate::forest::RandomForest;
use crate::qa::{
    normalize_answer, normalized_answer_prob, Benchmark, ExpertId, ExpertPrediction,
    PredictionSet, Split,
};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub prediction: ExpertPrediction,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Forest router: argmax of predicted correctness.
    Mope,
    Majority,
    MaxProb,
    Oracle,
    Random { seed: u64 },
    QTypeOracle,
    Single(ExpertId),
    /// Reserved name for an LLM-prompted router; not implemented.
    GptRouter,
}

impl Strategy {
    pub fn needs_forest(self) -> bool {
        self == Strategy::Mope
    }

    pub fn needs_labels(self) -> bool {
        self == Strategy::Oracle
    }

    /// `oracle`, `majority`, `maxprob`, `mope`, then the four single experts.
    pub fn comparison() -> Vec<Strategy> {
        let mut v = vec![
            Strategy::Oracle,
            Strategy::Majority,
            Strategy::MaxProb,
            Strategy::Mope,
        ];
        v.extend(ExpertId::ALL.map(Strategy::Single));
        v
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Mope => f.write_str("mope"),
            Strategy::Majority => f.write_str("majority"),
            Strategy::MaxProb => f.write_str("maxprob"),
            Strategy::Oracle => f.write_str("oracle"),
            Strategy::Random { seed: 0 } => f.write_str("random"),
            Strategy::Random { seed } => write!(f, "random:{seed}"),
            Strategy::QTypeOracle => f.write_str("qtype_oracle"),
            Strategy::Single(e) => write!(f, "single:{e}"),
            Strategy::GptRouter => f.write_str("gpt"),
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown strategy `{s}`"));
        Ok(match s {
            "mope" => Strategy::Mope,
            "majority" => Strategy::Majority,
            "maxprob" => Strategy::MaxProb,
            "oracle" => Strategy::Oracle,
            "random" => Strategy::Random { seed: 0 },
            "qtype_oracle" => Strategy::QTypeOracle,
            "gpt" => Strategy::GptRouter,
            _ => {
                if let Some(seed) = s.strip_prefix("random:") {
                    Strategy::Random {
                        seed: seed.parse().map_err(|_| bad())?,
                    }
                } else if let Some(e) = s.strip_prefix("single:") {
                    Strategy::Single(e.parse().map_err(|_| bad())?)
                } else {
                    return Err(bad());
                }
            }
        })
    }
}

impl Serialize for Strategy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Strategy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutedAnswer {
    pub question_id: String,
    pub chosen_expert: ExpertId,
    pub answer: String,
    pub score: f64,
    pub all_scores: Vec<ScoredCandidate>,
    pub strategy: Strategy,
}

impl RoutedAnswer {
    pub fn chosen(&self) -> &ExpertPrediction {
        &self.all_scores[self.chosen_expert.index()].prediction
    }
}

/// One line of routed-answer JSONL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutedRecord {
    pub question_id: String,
    pub strategy: Strategy,
    pub chosen_expert: ExpertId,
    pub answer: String,
    pub score: f64,
    pub all_scores: IndexMap<ExpertId, f64>,
    pub correct: u8,
}

impl RoutedRecord {
    pub fn new(r: &RoutedAnswer, correct: bool) -> Self {
        RoutedRecord {
            question_id: r.question_id.clone(),
            strategy: r.strategy,
            chosen_expert: r.chosen_expert,
            answer: r.answer.clone(),
            score: r.score,
            all_scores: r
                .all_scores
                .iter()
                .map(|c| (c.prediction.expert, c.score))
                .collect(),
            correct: u8::from(correct),
        }
    }
}

fn answer_prob(p: &ExpertPrediction) -> f64 {
    if p.answer_token_logprobs.is_empty() {
        0.0
    } else {
        normalized_answer_prob(p).unwrap_or(0.0)
    }
}

fn candidates(ps: &PredictionSet, score: impl Fn(&ExpertPrediction) -> f64) -> [ScoredCandidate; 4] {
    ps.predictions().clone().map(|p| ScoredCandidate {
        score: score(&p),
        prediction: p,
    })
}

fn routed(cands: [ScoredCandidate; 4], chosen: ExpertId, strategy: Strategy) -> RoutedAnswer {
    let c = &cands[chosen.index()];
    RoutedAnswer {
        question_id: c.prediction.question_id.clone(),
        chosen_expert: chosen,
        answer: c.prediction.answer_text.clone(),
        score: c.score,
        all_scores: cands.into(),
        strategy,
    }
}

/// Index of the first maximum.
fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

pub fn score_candidates(f: &RandomForest, ps: &PredictionSet) -> Result<[ScoredCandidate; 4]> {
    let mut scores = [0.0; 4];
    for e in ExpertId::ALL {
        scores[e.index()] = f.predict_score(&featurize_expert(ps, e, f.mode)?)?;
    }
    Ok(candidates(ps, |p| scores[p.expert.index()]))
}

pub fn select_answer(cands: [ScoredCandidate; 4]) -> RoutedAnswer {
    select_with(cands, Strategy::Mope)
}

fn select_with(cands: [ScoredCandidate; 4], strategy: Strategy) -> RoutedAnswer {
    let i = argmax(cands.iter().map(|c| c.score));
    routed(cands, ExpertId::ALL[i], strategy)
}

pub fn mope_select(f: &RandomForest, ps: &PredictionSet) -> Result<RoutedAnswer> {
    Ok(select_answer(score_candidates(f, ps)?))
}

/// Most frequent normalized answer; ties (including all-distinct) go to
/// the tied candidate with the highest answer probability. Candidate
/// scores are answer frequencies.
pub fn majority_vote(ps: &PredictionSet) -> RoutedAnswer {
    let norm: Vec<String> = ps
        .predictions()
        .iter()
        .map(|p| normalize_answer(&p.answer_text))
        .collect();
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for n in &norm {
        *counts.entry(n.as_str()).or_default() += 1;
    }
    let top = counts.values().copied().max().unwrap_or(0);
    let probs: Vec<f64> = ps.predictions().iter().map(answer_prob).collect();
    let chosen = argmax((0..4).map(|i| {
        if counts[norm[i].as_str()] == top {
            probs[i]
        } else {
            f64::NEG_INFINITY
        }
    }));
    let cands = candidates(ps, |p| counts[norm[p.expert.index()].as_str()] as f64 / 4.0);
    routed(cands, ExpertId::ALL[chosen], Strategy::Majority)
}

pub fn maxprob_select(ps: &PredictionSet) -> RoutedAnswer {
    select_with(candidates(ps, answer_prob), Strategy::MaxProb)
}

/// First correct expert in canonical order; the factual expert when none is.
pub fn oracle_select(ps: &PredictionSet) -> RoutedAnswer {
    let cands = candidates(ps, |p| {
        if ps.question.is_correct(&p.answer_text) { 1.0 } else { 0.0 }
    });
    select_with(cands, Strategy::Oracle)
}

/// Uniform choice from a stream keyed by (seed, question id), so the pick
/// for a question does not depend on evaluation order.
pub fn random_select(ps: &PredictionSet, seed: u64) -> RoutedAnswer {
    let mut r = rng::rng(rng::keyed_seed(seed, ps.id()));
    let chosen = ExpertId::ALL[r.random_range(0..4)];
    let cands = candidates(ps, |p| if p.expert == chosen { 1.0 } else { 0.0 });
    routed(cands, chosen, Strategy::Random { seed })
}

pub fn qtype_oracle_select(ps: &PredictionSet) -> Result<RoutedAnswer> {
    let t = ps.question.reasoning_type.ok_or_else(|| {
        Error::MissingLabel(format!("question `{}` has no reasoning type", ps.id()))
    })?;
    let home = t.home_expert();
    let cands = candidates(ps, |p| if p.expert == home { 1.0 } else { 0.0 });
    Ok(routed(cands, home, Strategy::QTypeOracle))
}

fn single_select(ps: &PredictionSet, e: ExpertId) -> RoutedAnswer {
    let cands = candidates(ps, |p| if p.expert == e { 1.0 } else { 0.0 });
    routed(cands, e, Strategy::Single(e))
}

/// Router models available to the `mope` strategy.
#[derive(Debug, Clone, Copy)]
pub enum Models<'a> {
    None,
    Pooled(&'a RandomForest),
    PerDataset(&'a IndexMap<String, RandomForest>),
}

impl<'a> Models<'a> {
    pub fn for_dataset(&self, id: &str) -> Option<&'a RandomForest> {
        match *self {
            Models::None => None,
            Models::Pooled(f) => Some(f),
            Models::PerDataset(m) => m.get(id),
        }
    }
}

impl<'a> From<Option<&'a RandomForest>> for Models<'a> {
    fn from(f: Option<&'a RandomForest>) -> Self {
        f.map_or(Models::None, Models::Pooled)
    }
}

pub fn route(strategy: Strategy, ps: &PredictionSet, forest: Option<&RandomForest>) -> Result<RoutedAnswer> {
    match strategy {
        Strategy::Mope => {
            let f = forest.ok_or_else(|| Error::Config("strategy `mope` needs a router model".into()))?;
            mope_select(f, ps)
        }
        Strategy::Majority => Ok(majority_vote(ps)),
        Strategy::MaxProb => Ok(maxprob_select(ps)),
        Strategy::Oracle => Ok(oracle_select(ps)),
        Strategy::Random { seed } => Ok(random_select(ps, seed)),
        Strategy::QTypeOracle => qtype_oracle_select(ps),
        Strategy::Single(e) => Ok(single_select(ps, e)),
        Strategy::GptRouter => Err(Error::NotImplemented(
            "the LLM-prompted router needs a live model and is not part of this build".into(),
        )),
    }
}

/// Routes every question of `split`. Label-free strategies only ever see
/// blinded copies of the prediction sets; correctness is attached after
/// routing from the labeled originals.
pub fn route_split(
    bench: &Benchmark,
    split: Split,
    strategy: Strategy,
    models: Models<'_>,
) -> Result<Vec<(RoutedAnswer, bool)>> {
    if strategy.needs_forest() && matches!(models, Models::None) {
        return Err(Error::Config("strategy `mope` needs a router model".into()));
    }
    let mut out = Vec::with_capacity(bench.len(split));
    for d in &bench.datasets {
        let f = models.for_dataset(&d.id);
        if strategy.needs_forest() && f.is_none() {
            return Err(Error::Config(format!("no router model for dataset `{}`", d.id)));
        }
        let one = |ps: &PredictionSet| -> Result<(RoutedAnswer, bool)> {
            let r = if strategy.needs_labels() {
                route(strategy, ps, f)?
            } else {
                route(strategy, &ps.blinded(), f)?
            };
            let correct = ps.question.is_correct(&r.answer);
            Ok((r, correct))
        };
        #[cfg(feature = "parallel")]
        let rows: Vec<Result<(RoutedAnswer, bool)>> = {
            use rayon::prelude::*;
            d.split(split).par_iter().map(one).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let rows: Vec<Result<(RoutedAnswer, bool)>> = d.split(split).iter().map(one).collect();
        for r in rows {
            out.push(r?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemReport {
    pub strategy: String,
    pub per_dataset_em: IndexMap<String, f64>,
    pub macro_average: f64,
}

impl SystemReport {
    pub fn from_per_dataset(strategy: impl Into<String>, per_dataset_em: IndexMap<String, f64>) -> Result<Self> {
        if per_dataset_em.is_empty() {
            return Err(Error::Empty("no datasets to average".into()));
        }
        let macro_average = per_dataset_em.values().sum::<f64>() / per_dataset_em.len() as f64;
        Ok(SystemReport {
            strategy: strategy.into(),
            per_dataset_em,
            macro_average,
        })
    }
}

pub fn evaluate_system(bench: &Benchmark, strategy: Strategy, forest: Option<&RandomForest>) -> Result<SystemReport> {
    evaluate_with(bench, strategy, forest.into())
}

/// Test-split EM per dataset plus the unweighted macro-average.
pub fn evaluate_with(bench: &Benchmark, strategy: Strategy, models: Models<'_>) -> Result<SystemReport> {
    let rows = route_split(bench, Split::Test, strategy, models)?;
    let mut hits: IndexMap<String, (usize, usize)> = IndexMap::new();
    for d in &bench.datasets {
        if !d.test.is_empty() {
            hits.insert(d.id.clone(), (0, 0));
        }
    }
    let dataset_of: HashMap<&str, &str> = bench
        .split(Split::Test)
        .map(|ps| (ps.id(), ps.question.dataset_id.as_str()))
        .collect();
    for (r, correct) in &rows {
        let h = &mut hits[dataset_of[r.question_id.as_str()]];
        h.0 += usize::from(*correct);
        h.1 += 1;
    }
    let em = hits
        .into_iter()
        .map(|(id, (c, n))| (id, c as f64 / n as f64))
        .collect();
    SystemReport::from_per_dataset(strategy.to_string(), em)
}
