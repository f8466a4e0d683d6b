//! Random forest for binary answer-correctness classification.
//!
//! Trees are grown greedily on Gini impurity over bootstrap resamples with
//! per-split feature subsampling. Tree `i` draws from its own RNG stream
//! (see [`crate::rng`]), so a forest is a pure function of the training
//! data order and the seed, whether or not trees are built in parallel.

mod io;
mod tree;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMode, FeatureVector, LabeledExample};
use crate::rng;

pub use io::{load_forest, read_forest, save_forest, write_forest};
pub use tree::{DecisionTree, Node};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "FpsRepr", into = "FpsRepr")]
pub enum FeaturesPerSplit {
    /// `floor(sqrt(n_features))`, at least 1.
    Sqrt,
    Count(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum FpsRepr {
    Count(usize),
    Named(String),
}

impl TryFrom<FpsRepr> for FeaturesPerSplit {
    type Error = String;

    fn try_from(r: FpsRepr) -> Result<Self, String> {
        match r {
            FpsRepr::Count(n) => Ok(FeaturesPerSplit::Count(n)),
            FpsRepr::Named(s) if s == "sqrt" => Ok(FeaturesPerSplit::Sqrt),
            FpsRepr::Named(s) => Err(format!("features_per_split must be \"sqrt\" or a count, got `{s}`")),
        }
    }
}

impl From<FeaturesPerSplit> for FpsRepr {
    fn from(f: FeaturesPerSplit) -> Self {
        match f {
            FeaturesPerSplit::Sqrt => FpsRepr::Named("sqrt".into()),
            FeaturesPerSplit::Count(n) => FpsRepr::Count(n),
        }
    }
}

impl FeaturesPerSplit {
    pub fn resolve(self, n_features: usize) -> usize {
        match self {
            FeaturesPerSplit::Sqrt => ((n_features as f64).sqrt().floor() as usize).max(1),
            FeaturesPerSplit::Count(n) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub features_per_split: FeaturesPerSplit,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: 12,
            min_leaf: 2,
            features_per_split: FeaturesPerSplit::Sqrt,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn with_seed(seed: u64) -> Self {
        ForestConfig {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self, n_features: usize) -> Result<usize> {
        if self.n_trees == 0 {
            return Err(Error::Config("n_trees must be >= 1".into()));
        }
        if self.max_depth == 0 {
            return Err(Error::Config("max_depth must be >= 1".into()));
        }
        if self.min_leaf == 0 {
            return Err(Error::Config("min_leaf must be >= 1".into()));
        }
        let k = self.features_per_split.resolve(n_features);
        if k == 0 || k > n_features {
            return Err(Error::Config(format!(
                "features_per_split = {k} but there are {n_features} features"
            )));
        }
        Ok(k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
    pub config: ForestConfig,
    pub schema_id: String,
    pub mode: FeatureMode,
    pub n_features: usize,
}

impl RandomForest {
    /// Assembles a forest from prebuilt trees (tests, imports).
    pub fn from_trees(trees: Vec<DecisionTree>, mode: FeatureMode) -> Result<Self> {
        let n_features = crate::features::feature_schema(mode).len();
        let forest = RandomForest {
            config: ForestConfig {
                n_trees: trees.len(),
                ..ForestConfig::default()
            },
            trees,
            schema_id: mode.schema_id(),
            mode,
            n_features,
        };
        forest.validate()?;
        Ok(forest)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.trees.is_empty() || self.trees.len() != self.config.n_trees {
            return Err(Error::CorruptModel(format!(
                "expected {} trees, found {}",
                self.config.n_trees,
                self.trees.len()
            )));
        }
        if self.schema_id != self.mode.schema_id() {
            return Err(Error::CorruptModel(format!(
                "schema `{}` does not match mode {}",
                self.schema_id, self.mode
            )));
        }
        for t in &self.trees {
            t.validate(self.n_features)?;
        }
        Ok(())
    }

    pub fn predict_score(&self, x: &FeatureVector) -> Result<f64> {
        if x.schema_id != self.schema_id {
            return Err(Error::SchemaMismatch {
                expected: self.schema_id.clone(),
                found: x.schema_id.clone(),
            });
        }
        Ok(self.score_values(&x.values))
    }

    fn score_values(&self, x: &[f64]) -> f64 {
        let total: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        total / self.trees.len() as f64
    }
}

/// Free-function form of [`RandomForest::predict_score`].
pub fn predict_score(f: &RandomForest, x: &FeatureVector) -> Result<f64> {
    f.predict_score(x)
}

pub fn train_forest(data: &[LabeledExample], config: &ForestConfig) -> Result<RandomForest> {
    let first = data
        .first()
        .ok_or_else(|| Error::Empty("no training examples".into()))?;
    let schema_id = first.features.schema_id.clone();
    let mode = first.features.mode;
    if let Some(bad) = data.iter().find(|e| e.features.schema_id != schema_id) {
        return Err(Error::SchemaMismatch {
            expected: schema_id,
            found: bad.features.schema_id.clone(),
        });
    }
    let n_features = first.features.len();
    let k = config.validate(n_features)?;

    let mut columns = vec![Vec::with_capacity(data.len()); n_features];
    for ex in data {
        for (col, &v) in columns.iter_mut().zip(&ex.features.values) {
            col.push(v);
        }
    }
    let labels: Vec<bool> = data.iter().map(|e| e.label).collect();
    let matrix = tree::Matrix {
        columns: &columns,
        labels: &labels,
    };
    let params = tree::GrowParams {
        max_depth: config.max_depth,
        min_leaf: config.min_leaf,
        features_per_split: k,
    };
    let n = data.len();
    let build = |i: usize| {
        use rand::Rng as _;
        let mut r = rng::rng(rng::child_seed(config.seed, i as u64));
        let samples = if config.bootstrap {
            (0..n).map(|_| r.random_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        tree::grow(&matrix, &params, samples, &mut r)
    };

    #[cfg(feature = "parallel")]
    let trees: Vec<DecisionTree> = {
        use rayon::prelude::*;
        (0..config.n_trees).into_par_iter().map(build).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let trees: Vec<DecisionTree> = (0..config.n_trees).map(build).collect();

    Ok(RandomForest {
        trees,
        config: config.clone(),
        schema_id,
        mode,
        n_features,
    })
}
