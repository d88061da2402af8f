//! Predicting whether a crowd will agree on the answer to a visual question,
//! and spending an answer-collection budget where disagreement is likely.
//!
//! The pipeline: load a [`Corpus`], label questions with
//! [`agreement_label`], turn them into [`FeatureVector`]s, train a
//! [`RandomForest`], score it with [`average_precision`], and feed its
//! predictions to the budgeted collection simulator in [`allocation`].

pub mod allocation;
pub mod answers;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod forest;
pub mod synthetic;

pub use allocation::{
    diversity_score, make_plan, oracle_ranking, rank_by_disagreement, simulate_collection, status_quo_ranking, sweep,
    AllocationPlan, AnswerCounts, CollectionModel, DiversityReport, Ranking, RankingSet, SimulationMode, SweepRow,
    TruthSet,
};
pub use answers::{
    agreement_by_answer_type, agreement_label, corpus_labels, diversity_histogram, normalize_answer, valid_answers,
    AgreementLabel, AgreementRates, NormalizedAnswer, ValidAnswerSet,
};
pub use corpus::{
    load_corpus, load_image_features, AnswerType, Corpus, CorpusFormat, ImageFeatureTable, LoadOptions, VisualQuestion,
};
pub use error::{Error, Result};
pub use evaluation::{average_precision, pr_curve, stratified_eval, EvalReport, PrCurve, PrPoint};
pub use features::{
    build_vocabularies, extract_corpus, extract_features, feature_dimension, tokenize_question, AblationLayout,
    FeatureMode, FeatureVector, Vocabularies,
};
pub use forest::{
    fit_model, gini_impurity, load_model, save_model, train_forest, train_forest_with, ForestConfig, ForestModel,
    Parallelism, Prediction, RandomForest,
};
