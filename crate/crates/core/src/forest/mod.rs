//! Random-forest classifier for crowd (dis)agreement.
//!
//! Each tree is grown on its own bootstrap sample with a ChaCha stream
//! selected by the tree's position, so serial and parallel training produce
//! the same forest. The forest's confidence is the fraction of trees voting
//! disagreement.

mod tree;

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::answers::{corpus_labels, AgreementLabel};
use crate::corpus::{Corpus, ImageFeatureTable, VisualQuestion};
use crate::error::{Error, Result};
use crate::features::{
    build_vocabularies, extract_corpus, extract_features, feature_dimension, AblationLayout, FeatureMode,
    FeatureVector, Vocabularies,
};

pub use tree::{gini_impurity, DecisionTree, Node};

pub const DEFAULT_TREES: usize = 25;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// `None` means `ceil(sqrt(d))`.
    pub features_per_split: Option<usize>,
    pub min_leaf_size: usize,
    pub max_depth: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: DEFAULT_TREES,
            features_per_split: None,
            min_leaf_size: 1,
            max_depth: None,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn with_seed(seed: u64) -> Self {
        ForestConfig {
            seed,
            ..ForestConfig::default()
        }
    }

    /// Checks the configuration against a feature dimension and returns the
    /// resolved number of features tried per split.
    pub fn resolve(&self, dimension: usize) -> Result<usize> {
        if self.n_trees == 0 || self.n_trees.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "tree count must be odd and positive, got {}",
                self.n_trees
            )));
        }
        if self.min_leaf_size == 0 {
            return Err(Error::InvalidConfig("min_leaf_size must be at least 1".into()));
        }
        if dimension == 0 {
            return Err(Error::InvalidConfig("feature vectors are empty".into()));
        }
        let mtry = self
            .features_per_split
            .unwrap_or_else(|| (dimension as f64).sqrt().ceil() as usize);
        if mtry == 0 || mtry > dimension {
            return Err(Error::InvalidConfig(format!(
                "features_per_split {mtry} outside 1..={dimension}"
            )));
        }
        Ok(mtry)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: AgreementLabel,
    pub p_disagreement: f64,
    /// Trees voting disagreement.
    pub votes: usize,
}

/// A trained ensemble over fixed-dimension feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    config: ForestConfig,
    features_per_split: usize,
    input_dimension: usize,
    trees: Vec<DecisionTree>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    #[default]
    Parallel,
    Serial,
}

/// Trains a forest, building trees in parallel.
pub fn train_forest(x: &[FeatureVector], y: &[AgreementLabel], config: &ForestConfig) -> Result<RandomForest> {
    train_forest_with(x, y, config, Parallelism::Parallel)
}

pub fn train_forest_with(
    x: &[FeatureVector],
    y: &[AgreementLabel],
    config: &ForestConfig,
    parallelism: Parallelism,
) -> Result<RandomForest> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::EmptyTrainingSet(x.len()));
    }
    let dimension = x[0].len();
    if let Some(bad) = x.iter().find(|v| v.len() != dimension) {
        return Err(Error::DimensionMismatch {
            expected: dimension,
            found: bad.len(),
        });
    }
    let features_per_split = config.resolve(dimension)?;
    let positive: Vec<bool> = y.iter().map(|l| l.is_disagreement()).collect();
    let params = tree::TreeParams {
        features_per_split,
        min_leaf_size: config.min_leaf_size,
        max_depth: config.max_depth,
    };

    let grow = |index: usize| {
        let mut rng = tree_rng(config.seed, index);
        let sample = tree::bootstrap_sample(x.len(), &mut rng);
        tree::grow_tree(x, &positive, sample, &params, &mut rng)
    };
    let trees = match parallelism {
        Parallelism::Parallel => (0..config.n_trees).into_par_iter().map(grow).collect(),
        Parallelism::Serial => (0..config.n_trees).map(grow).collect(),
    };

    Ok(RandomForest {
        config: config.clone(),
        features_per_split,
        input_dimension: dimension,
        trees,
    })
}

/// Tree `index` draws from ChaCha stream `index` under the master seed.
fn tree_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

impl RandomForest {
    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn input_dimension(&self) -> usize {
        self.input_dimension
    }

    pub fn features_per_split(&self) -> usize {
        self.features_per_split
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<Prediction> {
        if x.len() != self.input_dimension {
            return Err(Error::DimensionMismatch {
                expected: self.input_dimension,
                found: x.len(),
            });
        }
        let votes = self
            .trees
            .iter()
            .filter(|t| t.vote(x.as_slice()).is_disagreement())
            .count();
        Ok(prediction_from_votes(votes, self.trees.len()))
    }

    pub fn predict_many(&self, xs: &[FeatureVector]) -> Result<Vec<Prediction>> {
        xs.par_iter().map(|x| self.predict(x)).collect()
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.trees.len() != self.config.n_trees {
            return Err(format!(
                "{} trees stored, config says {}",
                self.trees.len(),
                self.config.n_trees
            ));
        }
        self.config.resolve(self.input_dimension).map_err(|e| e.to_string())?;
        if self
            .trees
            .iter()
            .filter_map(DecisionTree::max_feature)
            .any(|f| f >= self.input_dimension)
        {
            return Err("tree references a feature beyond the input dimension".into());
        }
        Ok(())
    }
}

/// Majority vote over `trees` with `votes` trees voting disagreement.
pub fn prediction_from_votes(votes: usize, trees: usize) -> Prediction {
    let p_disagreement = votes as f64 / trees as f64;
    Prediction {
        label: if p_disagreement > 0.5 {
            AgreementLabel::Disagreement
        } else {
            AgreementLabel::Agreement
        },
        p_disagreement,
        votes,
    }
}

const MODEL_FORMAT: &str = "crowd-consensus-forest";
const MODEL_VERSION: u32 = 1;

/// A forest bundled with the vocabulary and feature settings it was trained
/// with, so that raw visual questions can be scored directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub vocab: Vocabularies,
    pub feature_mode: FeatureMode,
    pub layout: AblationLayout,
    pub forest: RandomForest,
}

#[derive(Serialize)]
struct ModelFileOut<'a> {
    format: &'static str,
    version: u32,
    #[serde(flatten)]
    model: &'a ForestModel,
}

#[derive(Deserialize)]
struct ModelHeader {
    format: Option<String>,
    version: Option<u32>,
}

#[derive(Deserialize)]
struct ModelFileIn {
    #[serde(flatten)]
    model: ForestModel,
}

impl ForestModel {
    pub fn new(
        forest: RandomForest,
        vocab: Vocabularies,
        feature_mode: FeatureMode,
        layout: AblationLayout,
    ) -> Result<Self> {
        let expected = feature_dimension(&vocab, feature_mode, layout);
        if expected != forest.input_dimension {
            return Err(Error::DimensionMismatch {
                expected,
                found: forest.input_dimension,
            });
        }
        Ok(ForestModel {
            vocab,
            feature_mode,
            layout,
            forest,
        })
    }

    pub fn features(&self, vq: &VisualQuestion, images: &ImageFeatureTable) -> Result<FeatureVector> {
        extract_features(vq, &self.vocab, images, self.feature_mode, self.layout)
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<Prediction> {
        self.forest.predict(x)
    }

    pub fn predict_question(&self, vq: &VisualQuestion, images: &ImageFeatureTable) -> Result<Prediction> {
        self.forest.predict(&self.features(vq, images)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ModelFileOut {
            format: MODEL_FORMAT,
            version: MODEL_VERSION,
            model: self,
        };
        serde_json::to_string(&doc).map_err(|e| Error::parse("model", e))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mismatch = |msg: String| Error::FormatVersionMismatch(msg);
        let header: ModelHeader =
            serde_json::from_str(text).map_err(|e| mismatch(format!("not a model document: {e}")))?;
        match (header.format.as_deref(), header.version) {
            (Some(MODEL_FORMAT), Some(MODEL_VERSION)) => {}
            (format, version) => {
                return Err(mismatch(format!(
                    "expected {MODEL_FORMAT} v{MODEL_VERSION}, found {} v{}",
                    format.unwrap_or("<none>"),
                    version.map_or_else(|| "?".to_string(), |v| v.to_string())
                )))
            }
        }
        let file: ModelFileIn = serde_json::from_str(text).map_err(|e| mismatch(format!("malformed model: {e}")))?;
        let model = file.model;
        model.forest.validate().map_err(mismatch)?;
        let expected = feature_dimension(&model.vocab, model.feature_mode, model.layout);
        if expected != model.forest.input_dimension {
            return Err(mismatch(format!(
                "vocabulary implies dimension {expected}, forest expects {}",
                model.forest.input_dimension
            )));
        }
        Ok(model)
    }
}

pub fn save_model(model: &ForestModel, path: &Path) -> Result<()> {
    let json = model.to_json()?;
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(json.as_bytes())
        .and_then(|_| file.write_all(b"\n"))
        .map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<ForestModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ForestModel::from_json(&text)
}

/// Builds vocabularies from `training`, extracts descriptors, labels each
/// question and trains a forest on the result.
pub fn fit_model(
    training: &Corpus,
    images: &ImageFeatureTable,
    mode: FeatureMode,
    layout: AblationLayout,
    config: &ForestConfig,
    parallelism: Parallelism,
) -> Result<ForestModel> {
    let vocab = build_vocabularies(training)?;
    let x = extract_corpus(training, &vocab, images, mode, layout)?;
    let y = corpus_labels(training)?;
    let forest = train_forest_with(&x, &y, config, parallelism)?;
    ForestModel::new(forest, vocab, mode, layout)
}
