//! End-to-end evaluation protocols: router training, the generalizable
//! (per-dataset EM) comparison and the selective-QA comparison.

use std::io::Write;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{build_training_set, featurize_expert, FeatureMode};
use crate::forest::{train_forest, ForestConfig, RandomForest};
use crate::qa::{normalized_answer_prob, Benchmark, Dataset, Split};
use crate::rng::keyed_seed;
use crate::router::{evaluate_with, mope_select, Models, Strategy, SystemReport};
use crate::selective::{
    apply_policy, coverage_at_accuracy, effective_reliability, extended_float, risk_coverage_auc,
    risk_coverage_curve, tune_threshold, AbstentionPolicy, RiskCoveragePoint, ScoredDecision,
};

/// One router over the pooled train splits of every dataset.
pub fn train_router(bench: &Benchmark, mode: FeatureMode, config: &ForestConfig) -> Result<RandomForest> {
    let data = build_training_set(bench, Split::Train, mode)?;
    train_forest(&data, config)
}

/// One router per dataset, each seeded from the config seed and the
/// dataset id.
pub fn train_per_dataset(
    bench: &Benchmark,
    mode: FeatureMode,
    config: &ForestConfig,
) -> Result<IndexMap<String, RandomForest>> {
    bench
        .datasets
        .iter()
        .map(|d| {
            let sub = Benchmark {
                datasets: vec![d.clone()],
            };
            let cfg = ForestConfig {
                seed: keyed_seed(config.seed, &d.id),
                ..config.clone()
            };
            Ok((d.id.clone(), train_router(&sub, mode, &cfg)?))
        })
        .collect()
}

/// Evaluates every strategy on the test split. Inputs are checked for all
/// strategies before any of them runs.
pub fn run_generalizable(bench: &Benchmark, strategies: &[Strategy], models: Models<'_>) -> Result<Vec<SystemReport>> {
    if strategies.is_empty() {
        return Err(Error::Config("no strategies requested".into()));
    }
    for s in strategies {
        if s.needs_forest() && matches!(models, Models::None) {
            return Err(Error::Config(format!("strategy `{s}` needs a router model")));
        }
        if *s == Strategy::GptRouter {
            return Err(Error::NotImplemented("strategy `gpt` is not available".into()));
        }
    }
    strategies.iter().map(|&s| evaluate_with(bench, s, models)).collect()
}

/// Confidence scores for the answer the full router selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scorer {
    /// Mean-token probability of the selected answer.
    #[serde(rename = "maxprob")]
    MaxProb,
    /// A forest trained without the agreement features.
    RfNoAgreement,
    /// The router's own score.
    MopeFull,
}

impl Scorer {
    pub const ALL: [Scorer; 3] = [Scorer::MaxProb, Scorer::RfNoAgreement, Scorer::MopeFull];

    pub fn as_str(self) -> &'static str {
        match self {
            Scorer::MaxProb => "maxprob",
            Scorer::RfNoAgreement => "rf_no_agreement",
            Scorer::MopeFull => "mope_full",
        }
    }
}

impl std::str::FromStr for Scorer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scorer::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown scorer `{s}`")))
    }
}

impl std::fmt::Display for Scorer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SelectiveModels<'a> {
    pub full: Models<'a>,
    pub no_agreement: Models<'a>,
}

fn model_for<'a>(m: Models<'a>, d: &Dataset, what: &str) -> Result<&'a RandomForest> {
    m.for_dataset(&d.id)
        .ok_or_else(|| Error::Config(format!("no {what} model for dataset `{}`", d.id)))
}

/// Scores each question's routed answer. Routing and scoring see only
/// blinded prediction sets; correctness is attached afterwards.
pub fn scored_decisions(
    bench: &Benchmark,
    split: Split,
    scorer: Scorer,
    models: SelectiveModels<'_>,
) -> Result<IndexMap<String, Vec<ScoredDecision>>> {
    let mut out = IndexMap::new();
    for d in &bench.datasets {
        let rows = d.split(split);
        if rows.is_empty() {
            continue;
        }
        let full = model_for(models.full, d, "full-mode router")?;
        let noagr = match scorer {
            Scorer::RfNoAgreement => Some(model_for(models.no_agreement, d, "no_agreement")?),
            _ => None,
        };
        let mut ds = Vec::with_capacity(rows.len());
        for ps in rows {
            let blind = ps.blinded();
            let r = mope_select(full, &blind)?;
            let score = match scorer {
                Scorer::MopeFull => r.score,
                Scorer::MaxProb => {
                    let p = r.chosen();
                    if p.answer_token_logprobs.is_empty() { 0.0 } else { normalized_answer_prob(p)? }
                }
                Scorer::RfNoAgreement => {
                    let x = featurize_expert(&blind, r.chosen_expert, FeatureMode::NoAgreement)?;
                    noagr.expect("checked above").predict_score(&x)?
                }
            };
            ds.push(ScoredDecision::new(ps.id(), score, ps.question.is_correct(&r.answer)));
        }
        out.insert(d.id.clone(), ds);
    }
    if out.is_empty() {
        return Err(Error::Empty(format!("{split} split has no questions")));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaScope {
    #[default]
    Global,
    PerDataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectiveMetrics {
    pub auc: f64,
    pub cov_at_80: f64,
    pub cov_at_90: f64,
    pub er: f64,
    #[serde(with = "extended_float")]
    pub gamma: f64,
    pub n: usize,
}

impl SelectiveMetrics {
    pub fn compute(test: &[ScoredDecision], policy: AbstentionPolicy) -> Result<Self> {
        Ok(SelectiveMetrics {
            auc: risk_coverage_auc(test)?,
            cov_at_80: coverage_at_accuracy(test, 0.8)?,
            cov_at_90: coverage_at_accuracy(test, 0.9)?,
            er: effective_reliability(&apply_policy(policy, test))?,
            gamma: policy.gamma,
            n: test.len(),
        })
    }
}

/// Macro-averaged metrics for one scorer. In per-dataset scope the
/// top-level `gamma` is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectiveReport {
    pub scorer: Scorer,
    pub auc: f64,
    pub cov_at_80: f64,
    pub cov_at_90: f64,
    pub er: f64,
    #[serde(with = "opt_float")]
    pub gamma: Option<f64>,
    pub n: usize,
    pub per_dataset: IndexMap<String, SelectiveMetrics>,
}

mod opt_float {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Wrap(#[serde(with = "super::extended_float")] f64);

    pub fn serialize<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        x.map(Wrap).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
    }
}

/// Tunes gamma on dev, applies it to test, and reports per-dataset
/// metrics with their unweighted means.
pub fn selective_report(
    scorer: Scorer,
    dev: &IndexMap<String, Vec<ScoredDecision>>,
    test: &IndexMap<String, Vec<ScoredDecision>>,
    scope: GammaScope,
) -> Result<SelectiveReport> {
    let global = match scope {
        GammaScope::Global => {
            let pooled: Vec<ScoredDecision> = dev.values().flatten().cloned().collect();
            Some(tune_threshold(&pooled)?)
        }
        GammaScope::PerDataset => None,
    };
    let mut per_dataset = IndexMap::new();
    for (id, t) in test {
        let policy = match global {
            Some(p) => p,
            None => {
                let d = dev
                    .get(id)
                    .ok_or_else(|| Error::Empty(format!("dataset `{id}` has no dev questions")))?;
                tune_threshold(d)?
            }
        };
        per_dataset.insert(id.clone(), SelectiveMetrics::compute(t, policy)?);
    }
    if per_dataset.is_empty() {
        return Err(Error::Empty("no test datasets".into()));
    }
    let k = per_dataset.len() as f64;
    let mean = |f: fn(&SelectiveMetrics) -> f64| per_dataset.values().map(f).sum::<f64>() / k;
    Ok(SelectiveReport {
        scorer,
        auc: mean(|m| m.auc),
        cov_at_80: mean(|m| m.cov_at_80),
        cov_at_90: mean(|m| m.cov_at_90),
        er: mean(|m| m.er),
        gamma: global.map(|p| p.gamma),
        n: per_dataset.values().map(|m| m.n).sum(),
        per_dataset,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectiveRun {
    pub reports: Vec<SelectiveReport>,
    /// Test decisions per scorer and dataset, for curves.
    pub test: Vec<(Scorer, IndexMap<String, Vec<ScoredDecision>>)>,
}

pub fn run_selective(
    bench: &Benchmark,
    scorers: &[Scorer],
    models: SelectiveModels<'_>,
    scope: GammaScope,
) -> Result<SelectiveRun> {
    if matches!(models.full, Models::None) {
        return Err(Error::Config("selective evaluation needs a full-mode router".into()));
    }
    if scorers.contains(&Scorer::RfNoAgreement) && matches!(models.no_agreement, Models::None) {
        return Err(Error::Config("scorer `rf_no_agreement` needs a no_agreement model".into()));
    }
    let mut run = SelectiveRun {
        reports: Vec::new(),
        test: Vec::new(),
    };
    for &s in scorers {
        let dev = scored_decisions(bench, Split::Dev, s, models)?;
        let test = scored_decisions(bench, Split::Test, s, models)?;
        run.reports.push(selective_report(s, &dev, &test, scope)?);
        run.test.push((s, test));
    }
    Ok(run)
}

/// Rows `scorer,dataset,coverage,risk`; dataset `all` is the pooled curve.
pub fn write_risk_coverage_csv<W: Write>(mut w: W, run: &SelectiveRun) -> Result<()> {
    writeln!(w, "scorer,dataset,coverage,risk")?;
    let emit = |w: &mut W, s: Scorer, id: &str, pts: &[RiskCoveragePoint]| -> Result<()> {
        for p in pts {
            writeln!(w, "{s},{id},{},{}", p.coverage, p.risk)?;
        }
        Ok(())
    };
    for (s, by_ds) in &run.test {
        let pooled: Vec<ScoredDecision> = by_ds.values().flatten().cloned().collect();
        emit(&mut w, *s, "all", &risk_coverage_curve(&pooled)?)?;
        for (id, ds) in by_ds {
            emit(&mut w, *s, id, &risk_coverage_curve(ds)?)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{default_config, generate_benchmark, SimConfig};

    #[test]
    fn scorer_names_agree_across_serde_display_and_parse() {
        for s in Scorer::ALL {
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{s}\""));
            assert_eq!(s.to_string().parse::<Scorer>().unwrap(), s);
        }
        assert!("max_prob".parse::<Scorer>().is_err());
    }

    fn small() -> (Benchmark, ForestConfig) {
        let mut cfg: SimConfig = default_config();
        cfg.datasets.truncate(4);
        for d in &mut cfg.datasets {
            d.n_train = 60;
            d.n_dev = 40;
            d.n_test = 80;
        }
        let fc = ForestConfig {
            n_trees: 20,
            ..ForestConfig::with_seed(3)
        };
        (generate_benchmark(&cfg).unwrap(), fc)
    }

    #[test]
    fn generalizable_checks_inputs_first() {
        let (b, _) = small();
        let err = run_generalizable(&b, &[Strategy::Oracle, Strategy::Mope], Models::None).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let reps = run_generalizable(&b, &[Strategy::Oracle, Strategy::MaxProb], Models::None).unwrap();
        assert_eq!(reps.len(), 2);
        assert!(reps[0].macro_average >= reps[1].macro_average);
    }

    #[test]
    fn per_dataset_routers_cover_every_dataset() {
        let (b, fc) = small();
        let m = train_per_dataset(&b, FeatureMode::Full, &fc).unwrap();
        assert_eq!(m.len(), 4);
        let rep = evaluate_with(&b, Strategy::Mope, Models::PerDataset(&m)).unwrap();
        assert_eq!(rep.per_dataset_em.len(), 4);
    }

    #[test]
    fn selective_report_shape() {
        let (b, fc) = small();
        let full = train_router(&b, FeatureMode::Full, &fc).unwrap();
        let noagr = train_router(&b, FeatureMode::NoAgreement, &fc).unwrap();
        let models = SelectiveModels {
            full: Models::Pooled(&full),
            no_agreement: Models::Pooled(&noagr),
        };
        for scope in [GammaScope::Global, GammaScope::PerDataset] {
            let run = run_selective(&b, &Scorer::ALL, models, scope).unwrap();
            assert_eq!(run.reports.len(), 3);
            for r in &run.reports {
                assert_eq!(r.n, 320);
                assert_eq!(r.per_dataset.len(), 4);
                assert_eq!(r.gamma.is_some(), scope == GammaScope::Global);
                let v = serde_json::to_value(r).unwrap();
                for k in ["auc", "cov_at_80", "cov_at_90", "er", "gamma", "n", "per_dataset"] {
                    assert!(v.get(k).is_some(), "{k}");
                }
                let back: SelectiveReport = serde_json::from_value(v).unwrap();
                assert_eq!(&back, r);
            }
            let mut csv = Vec::new();
            write_risk_coverage_csv(&mut csv, &run).unwrap();
            let text = String::from_utf8(csv).unwrap();
            assert_eq!(text.lines().count(), 1 + 3 * (320 + 320));
        }
        let missing = SelectiveModels {
            full: Models::Pooled(&full),
            no_agreement: Models::None,
        };
        assert!(run_selective(&b, &Scorer::ALL, missing, GammaScope::Global).is_err());
        assert!(run_selective(&b, &[Scorer::MaxProb], missing, GammaScope::Global).is_ok());
    }

    #[test]
    fn all_scorers_share_the_routed_answer() {
        let (b, fc) = small();
        let full = train_router(&b, FeatureMode::Full, &fc).unwrap();
        let noagr = train_router(&b, FeatureMode::NoAgreement, &fc).unwrap();
        let models = SelectiveModels {
            full: Models::Pooled(&full),
            no_agreement: Models::Pooled(&noagr),
        };
        let per: Vec<_> = Scorer::ALL
            .iter()
            .map(|&s| scored_decisions(&b, Split::Test, s, models).unwrap())
            .collect();
        for (id, ds) in &per[0] {
            let c0: Vec<bool> = ds.iter().map(|d| d.correct).collect();
            for p in &per[1..] {
                assert_eq!(c0, p[id].iter().map(|d| d.correct).collect::<Vec<_>>());
            }
        }
    }
}
