//! Browser demo over a small simulated benchmark. [`DemoState`] holds the
//! plain Rust logic; [`Demo`] is the thin wasm-bindgen wrapper around it.

use selqa_core::experiment::{run_selective, train_router, GammaScope, Scorer, SelectiveModels, SelectiveRun};
use selqa_core::features::FeatureMode;
use selqa_core::forest::{ForestConfig, RandomForest};
use selqa_core::qa::Benchmark;
use selqa_core::router::{evaluate_with, Models, Strategy};
use selqa_core::selective::{
    apply_policy, effective_reliability, risk_coverage_auc, risk_coverage_curve, AbstentionPolicy,
    RiskCoveragePoint, ScoredDecision,
};
use selqa_core::simulator::{default_config, generate_benchmark};
use selqa_core::{Error, Result};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

/// Knobs exposed on the page. Missing fields take these defaults.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoParams {
    pub seed: u64,
    pub agreement_boost: f64,
    pub confidence_gap: f64,
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    pub n_trees: usize,
}

impl Default for DemoParams {
    fn default() -> Self {
        let cfg = default_config();
        DemoParams {
            seed: 0,
            agreement_boost: cfg.agreement_boost,
            confidence_gap: cfg.confidence_gap,
            n_train: 60,
            n_dev: 60,
            n_test: 100,
            n_trees: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyRow {
    pub strategy: String,
    pub macro_average: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Curve {
    pub scorer: Scorer,
    pub auc: f64,
    /// Lowest and highest test score, for slider bounds.
    pub min_score: f64,
    pub max_score: f64,
    pub points: Vec<RiskCoveragePoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Operating {
    pub gamma: f64,
    pub coverage: f64,
    pub risk: f64,
    pub er: f64,
}

pub struct DemoState {
    bench: Benchmark,
    full: RandomForest,
    run: SelectiveRun,
}

impl DemoState {
    pub fn build(params: &DemoParams) -> Result<Self> {
        let mut cfg = default_config();
        cfg.seed = params.seed;
        cfg.agreement_boost = params.agreement_boost;
        cfg.confidence_gap = params.confidence_gap;
        for d in &mut cfg.datasets {
            d.n_train = params.n_train;
            d.n_dev = params.n_dev;
            d.n_test = params.n_test;
        }
        let bench = generate_benchmark(&cfg)?;
        let fc = ForestConfig {
            n_trees: params.n_trees,
            seed: params.seed,
            ..ForestConfig::default()
        };
        let full = train_router(&bench, FeatureMode::Full, &fc)?;
        let no_agreement = train_router(&bench, FeatureMode::NoAgreement, &fc)?;
        let models = SelectiveModels {
            full: Models::Pooled(&full),
            no_agreement: Models::Pooled(&no_agreement),
        };
        let run = run_selective(&bench, &Scorer::ALL, models, GammaScope::Global)?;
        Ok(DemoState { bench, full, run })
    }

    /// Macro EM of each system on the test split.
    pub fn strategies(&self) -> Result<Vec<StrategyRow>> {
        let mut list = Strategy::comparison();
        list.push(Strategy::Random { seed: 0 });
        list.into_iter()
            .map(|s| {
                let r = evaluate_with(&self.bench, s, Models::Pooled(&self.full))?;
                Ok(StrategyRow {
                    strategy: r.strategy,
                    macro_average: r.macro_average,
                })
            })
            .collect()
    }

    fn pooled(&self, scorer: Scorer) -> Result<Vec<ScoredDecision>> {
        self.run
            .test
            .iter()
            .find(|(s, _)| *s == scorer)
            .map(|(_, by_ds)| by_ds.values().flatten().cloned().collect())
            .ok_or_else(|| Error::Config(format!("unknown scorer `{scorer}`")))
    }

    /// Pooled test risk-coverage curve per scorer.
    pub fn curves(&self) -> Result<Vec<Curve>> {
        Scorer::ALL
            .iter()
            .map(|&s| {
                let ds = self.pooled(s)?;
                let scores = ds.iter().map(|d| d.score);
                Ok(Curve {
                    scorer: s,
                    auc: risk_coverage_auc(&ds)?,
                    min_score: scores.clone().fold(f64::INFINITY, f64::min),
                    max_score: scores.fold(f64::NEG_INFINITY, f64::max),
                    points: risk_coverage_curve(&ds)?,
                })
            })
            .collect()
    }

    /// Pooled test coverage, risk and ER when answering iff score >= gamma.
    pub fn at_gamma(&self, scorer: Scorer, gamma: f64) -> Result<Operating> {
        let ds = self.pooled(scorer)?;
        let out = apply_policy(AbstentionPolicy { gamma }, &ds);
        let answered: Vec<_> = out.iter().filter(|o| o.answered).collect();
        let wrong = answered.iter().filter(|o| o.phi < 0).count();
        Ok(Operating {
            gamma,
            coverage: answered.len() as f64 / out.len() as f64,
            risk: if answered.is_empty() {
                0.0
            } else {
                wrong as f64 / answered.len() as f64
            },
            er: effective_reliability(&out)?,
        })
    }

    pub fn run(&self) -> &SelectiveRun {
        &self.run
    }
}

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn to_json<T: Serialize>(v: &T) -> std::result::Result<String, JsError> {
    serde_json::to_string(v).map_err(js_err)
}

#[wasm_bindgen]
pub struct Demo {
    state: DemoState,
}

#[wasm_bindgen]
impl Demo {
    /// Simulates and trains from a JSON object of [`DemoParams`] fields.
    #[wasm_bindgen(constructor)]
    pub fn new(params_json: &str) -> std::result::Result<Demo, JsError> {
        let params: DemoParams = serde_json::from_str(params_json).map_err(js_err)?;
        Ok(Demo {
            state: DemoState::build(&params).map_err(js_err)?,
        })
    }

    pub fn strategies(&self) -> std::result::Result<String, JsError> {
        to_json(&self.state.strategies().map_err(js_err)?)
    }

    pub fn curves(&self) -> std::result::Result<String, JsError> {
        to_json(&self.state.curves().map_err(js_err)?)
    }

    /// Selective reports with dev-tuned thresholds.
    pub fn reports(&self) -> std::result::Result<String, JsError> {
        to_json(&self.state.run.reports)
    }

    pub fn at_gamma(&self, scorer: &str, gamma: f64) -> std::result::Result<String, JsError> {
        let s = parse_scorer(scorer).map_err(js_err)?;
        to_json(&self.state.at_gamma(s, gamma).map_err(js_err)?)
    }
}

pub fn parse_scorer(name: &str) -> Result<Scorer> {
    name.parse()
}
