//! Question vocabularies and the per-question feature descriptor.
//!
//! A descriptor is laid out as
//! `[question length | one-hot first word | one-hot second word | saliency]`,
//! where the saliency block is the 5-vector of salient-object count
//! probabilities for the question's image.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, ImageFeatureTable, VisualQuestion, SALIENCY_BINS};
use crate::error::{Error, Result};

/// Lowercases, removes ASCII punctuation and splits on whitespace.
pub fn tokenize_question(question_text: &str) -> Result<Vec<String>> {
    let cleaned: String = question_text
        .to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    let tokens: Vec<String> = cleaned.split_whitespace().map(str::to_string).collect();
    if tokens.is_empty() {
        return Err(Error::EmptyQuestion { question_id: None });
    }
    Ok(tokens)
}

fn tokenize_vq(vq: &VisualQuestion) -> Result<Vec<String>> {
    tokenize_question(&vq.question_text).map_err(|_| Error::EmptyQuestion {
        question_id: Some(vq.question_id),
    })
}

/// Words observed at the first and second position of training questions,
/// in first-seen order.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "VocabularyDoc", into = "VocabularyDoc")]
pub struct Vocabularies {
    first: Vec<String>,
    second: Vec<String>,
    built_from: String,
    first_index: HashMap<String, usize>,
    second_index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyDoc {
    first: Vec<String>,
    second: Vec<String>,
    built_from: String,
}

impl From<VocabularyDoc> for Vocabularies {
    fn from(doc: VocabularyDoc) -> Self {
        Vocabularies::new(doc.first, doc.second, doc.built_from)
    }
}

impl From<Vocabularies> for VocabularyDoc {
    fn from(v: Vocabularies) -> Self {
        VocabularyDoc {
            first: v.first,
            second: v.second,
            built_from: v.built_from,
        }
    }
}

impl PartialEq for Vocabularies {
    fn eq(&self, other: &Self) -> bool {
        self.first == other.first && self.second == other.second && self.built_from == other.built_from
    }
}

fn index_of(words: &[String]) -> HashMap<String, usize> {
    words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect()
}

impl Vocabularies {
    /// Duplicate words keep their first position.
    pub fn new(first: Vec<String>, second: Vec<String>, built_from: impl Into<String>) -> Self {
        let dedup = |words: Vec<String>| {
            let mut seen = std::collections::HashSet::new();
            words.into_iter().filter(|w| seen.insert(w.clone())).collect::<Vec<_>>()
        };
        let (first, second) = (dedup(first), dedup(second));
        Vocabularies {
            first_index: index_of(&first),
            second_index: index_of(&second),
            first,
            second,
            built_from: built_from.into(),
        }
    }

    pub fn first(&self) -> &[String] {
        &self.first
    }

    pub fn second(&self) -> &[String] {
        &self.second
    }

    pub fn built_from(&self) -> &str {
        &self.built_from
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::parse("vocabulary", e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse("vocabulary", e))
    }
}

/// Builds vocabularies from a training corpus.
pub fn build_vocabularies(training: &Corpus) -> Result<Vocabularies> {
    if training.is_empty() {
        return Err(Error::EmptyTrainingSet(0));
    }
    let mut first = Vec::new();
    let mut second = Vec::new();
    for vq in training {
        let mut tokens = tokenize_vq(vq)?.into_iter();
        first.extend(tokens.next());
        second.extend(tokens.next());
    }
    Ok(Vocabularies::new(first, second, training.source_tag()))
}

/// Which feature groups feed the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    /// Question features only.
    Q,
    /// Image saliency features only.
    I,
    /// Both.
    QI,
}

impl FeatureMode {
    pub fn uses_question(self) -> bool {
        matches!(self, FeatureMode::Q | FeatureMode::QI)
    }

    pub fn uses_image(self) -> bool {
        matches!(self, FeatureMode::I | FeatureMode::QI)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureMode::Q => "q",
            FeatureMode::I => "i",
            FeatureMode::QI => "qi",
        }
    }
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('+', "").as_str() {
            "q" => Ok(FeatureMode::Q),
            "i" => Ok(FeatureMode::I),
            "qi" => Ok(FeatureMode::QI),
            _ => Err(Error::parse("feature mode", format!("unknown mode {s:?}"))),
        }
    }
}

/// How an ablated feature group is represented.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AblationLayout {
    /// Unused blocks are left out of the vector.
    #[default]
    Truncated,
    /// Unused blocks are present but zero.
    Zeroed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Block offsets of a descriptor for a given vocabulary, mode and layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureLayout {
    pub question: Option<(usize, usize)>,
    pub saliency: Option<usize>,
    pub dimension: usize,
    first_len: usize,
    second_len: usize,
}

impl FeatureLayout {
    pub fn new(vocab: &Vocabularies, mode: FeatureMode, layout: AblationLayout) -> Self {
        let question_len = 1 + vocab.first.len() + vocab.second.len();
        let keep_question = mode.uses_question() || layout == AblationLayout::Zeroed;
        let keep_image = mode.uses_image() || layout == AblationLayout::Zeroed;
        let q_width = if keep_question { question_len } else { 0 };
        FeatureLayout {
            question: keep_question.then_some((0, question_len)),
            saliency: keep_image.then_some(q_width),
            dimension: q_width + if keep_image { SALIENCY_BINS } else { 0 },
            first_len: vocab.first.len(),
            second_len: vocab.second.len(),
        }
    }
}

/// Feature dimension produced for a vocabulary, mode and layout.
pub fn feature_dimension(vocab: &Vocabularies, mode: FeatureMode, layout: AblationLayout) -> usize {
    FeatureLayout::new(vocab, mode, layout).dimension
}

/// Builds the descriptor of one visual question.
///
/// Out-of-vocabulary first or second words leave their one-hot block at zero,
/// as does a missing second word.
pub fn extract_features(
    vq: &VisualQuestion,
    vocab: &Vocabularies,
    images: &ImageFeatureTable,
    mode: FeatureMode,
    layout: AblationLayout,
) -> Result<FeatureVector> {
    let shape = FeatureLayout::new(vocab, mode, layout);
    let mut values = vec![0.0; shape.dimension];

    if mode.uses_question() {
        let tokens = tokenize_vq(vq)?;
        values[0] = tokens.len() as f64;
        if let Some(&i) = vocab.first_index.get(&tokens[0]) {
            values[1 + i] = 1.0;
        }
        if let Some(&i) = tokens.get(1).and_then(|t| vocab.second_index.get(t)) {
            values[1 + shape.first_len + i] = 1.0;
        }
    }
    if mode.uses_image() {
        let offset = shape.saliency.expect("image block present when the mode uses it");
        values[offset..offset + SALIENCY_BINS].copy_from_slice(&images.get(vq.image_id));
    }
    Ok(FeatureVector(values))
}

/// Descriptors for every question in a corpus, in corpus order.
pub fn extract_corpus(
    corpus: &Corpus,
    vocab: &Vocabularies,
    images: &ImageFeatureTable,
    mode: FeatureMode,
    layout: AblationLayout,
) -> Result<Vec<FeatureVector>> {
    corpus
        .iter()
        .map(|vq| extract_features(vq, vocab, images, mode, layout))
        .collect()
}

/// Writes a feature matrix as CSV with a leading `question_id` column.
pub fn write_feature_csv<W: Write>(writer: W, question_ids: &[u64], features: &[FeatureVector]) -> Result<()> {
    if question_ids.len() != features.len() {
        return Err(Error::LengthMismatch {
            left: question_ids.len(),
            right: features.len(),
        });
    }
    let err = |e: csv::Error| Error::parse("feature csv", e);
    let mut csv = csv::Writer::from_writer(writer);
    let dim = features.first().map_or(0, FeatureVector::len);
    let mut header = vec!["question_id".to_string()];
    header.extend((0..dim).map(|i| format!("f{i}")));
    csv.write_record(&header).map_err(err)?;
    for (id, fv) in question_ids.iter().zip(features) {
        let mut row = vec![id.to_string()];
        row.extend(fv.0.iter().map(f64::to_string));
        csv.write_record(&row).map_err(err)?;
    }
    csv.flush().map_err(|e| Error::io("<writer>", e))
}
