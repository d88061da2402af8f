//! Visual-question corpora and precomputed image saliency features.
//!
//! Two corpus formats are understood: the paired VQA v1.0 question and
//! annotation JSON files, and a flat JSONL format with one question per line.
//! Loaded corpora are immutable and ordered by ascending question id.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Answers stored per question unless a corpus says otherwise.
pub const DEFAULT_ANSWERS_PER_QUESTION: usize = 10;

/// Number of salient-object count bins: 0, 1, 2, 3 and 4+.
pub const SALIENCY_BINS: usize = 5;

/// Saliency vector used for images missing from the feature table.
pub const UNIFORM_SALIENCY: [f64; SALIENCY_BINS] = [0.2; SALIENCY_BINS];

const PROBABILITY_SUM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AnswerType {
    #[serde(rename = "yes/no")]
    YesNo,
    #[serde(rename = "number")]
    Number,
    #[serde(rename = "other")]
    Other,
}

impl AnswerType {
    pub const ALL: [AnswerType; 3] = [AnswerType::YesNo, AnswerType::Number, AnswerType::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            AnswerType::YesNo => "yes/no",
            AnswerType::Number => "number",
            AnswerType::Other => "other",
        }
    }
}

impl fmt::Display for AnswerType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnswerType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "yes/no" => Ok(AnswerType::YesNo),
            "number" => Ok(AnswerType::Number),
            "other" => Ok(AnswerType::Other),
            _ => Err(Error::parse("answer_type", format!("unknown answer type {s:?}"))),
        }
    }
}

/// Stratum name used for questions without an answer type.
pub const UNKNOWN_STRATUM: &str = "unknown";

/// Stratum name for an optional answer type.
pub fn stratum_name(answer_type: Option<AnswerType>) -> &'static str {
    answer_type.map_or(UNKNOWN_STRATUM, AnswerType::as_str)
}

/// One question about one image together with its stored crowd answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualQuestion {
    pub question_id: u64,
    pub image_id: u64,
    #[serde(rename = "question")]
    pub question_text: String,
    #[serde(rename = "answers")]
    pub raw_answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_type: Option<AnswerType>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusFormat {
    VqaV1Json,
    Jsonl,
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vqa_v1_json" | "vqa" => Ok(CorpusFormat::VqaV1Json),
            "jsonl" => Ok(CorpusFormat::Jsonl),
            _ => Err(Error::parse("format", format!("unknown corpus format {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadOptions {
    pub format: CorpusFormat,
    pub answers_per_question: usize,
    /// Drop questions with the wrong number of answers instead of failing.
    pub skip_malformed: bool,
    pub source_tag: String,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            format: CorpusFormat::Jsonl,
            answers_per_question: DEFAULT_ANSWERS_PER_QUESTION,
            skip_malformed: false,
            source_tag: "real".to_string(),
        }
    }
}

impl LoadOptions {
    pub fn new(format: CorpusFormat) -> Self {
        LoadOptions {
            format,
            ..LoadOptions::default()
        }
    }
}

/// An ordered, immutable collection of visual questions sharing one answer
/// pool size.
#[derive(Debug, Clone)]
pub struct Corpus {
    questions: Vec<VisualQuestion>,
    answers_per_question: usize,
    source_tag: String,
    dropped: usize,
    index: HashMap<u64, usize>,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.questions == other.questions
            && self.answers_per_question == other.answers_per_question
            && self.source_tag == other.source_tag
    }
}

impl Corpus {
    /// Builds a corpus, sorting by question id and checking that ids are unique
    /// and that every question carries exactly `answers_per_question` answers.
    pub fn new(
        questions: Vec<VisualQuestion>,
        answers_per_question: usize,
        source_tag: impl Into<String>,
    ) -> Result<Self> {
        Self::build(questions, answers_per_question, source_tag.into(), false)
    }

    fn build(
        mut questions: Vec<VisualQuestion>,
        answers_per_question: usize,
        source_tag: String,
        skip_malformed: bool,
    ) -> Result<Self> {
        if answers_per_question == 0 {
            return Err(Error::InvalidConfig("answers per question must be positive".into()));
        }
        let before = questions.len();
        if skip_malformed {
            questions.retain(|q| q.raw_answers.len() == answers_per_question);
        } else if let Some(q) = questions.iter().find(|q| q.raw_answers.len() != answers_per_question) {
            return Err(Error::AnswerCountMismatch {
                question_id: Some(q.question_id),
                expected: answers_per_question,
                found: q.raw_answers.len(),
            });
        }
        let dropped = before - questions.len();

        questions.sort_by_key(|q| q.question_id);
        if let Some(w) = questions.windows(2).find(|w| w[0].question_id == w[1].question_id) {
            return Err(Error::DuplicateQuestion(w[0].question_id));
        }
        let index = questions.iter().enumerate().map(|(i, q)| (q.question_id, i)).collect();

        Ok(Corpus {
            questions,
            answers_per_question,
            source_tag,
            dropped,
            index,
        })
    }

    pub fn questions(&self) -> &[VisualQuestion] {
        &self.questions
    }

    pub fn answers_per_question(&self) -> usize {
        self.answers_per_question
    }

    pub fn source_tag(&self) -> &str {
        &self.source_tag
    }

    /// Questions discarded during loading because of a wrong answer count.
    pub fn dropped(&self) -> usize {
        self.dropped
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    pub fn get(&self, question_id: u64) -> Option<&VisualQuestion> {
        self.index.get(&question_id).map(|&i| &self.questions[i])
    }

    pub fn question_ids(&self) -> Vec<u64> {
        self.questions.iter().map(|q| q.question_id).collect()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, VisualQuestion> {
        self.questions.iter()
    }

    pub fn write_jsonl<W: Write>(&self, mut writer: W) -> Result<()> {
        for q in &self.questions {
            let line = serde_json::to_string(q).map_err(|e| Error::parse("jsonl record", e))?;
            writeln!(writer, "{line}").map_err(|e| Error::io("<writer>", e))?;
        }
        Ok(())
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = BufWriter::new(file);
        self.write_jsonl(&mut writer)?;
        writer.flush().map_err(|e| Error::io(path, e))
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a VisualQuestion;
    type IntoIter = std::slice::Iter<'a, VisualQuestion>;

    fn into_iter(self) -> Self::IntoIter {
        self.questions.iter()
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

/// Loads a corpus from disk. The VQA v1.0 format needs both the questions and
/// the annotations file; JSONL ignores `annotations`.
pub fn load_corpus(questions: &Path, annotations: Option<&Path>, options: &LoadOptions) -> Result<Corpus> {
    let records = match options.format {
        CorpusFormat::Jsonl => read_jsonl(open(questions)?, &questions.display().to_string())?,
        CorpusFormat::VqaV1Json => {
            let annotations =
                annotations.ok_or_else(|| Error::InvalidConfig("vqa_v1_json needs an annotations file".into()))?;
            read_vqa_v1(open(questions)?, open(annotations)?)?
        }
    };
    Corpus::build(
        records,
        options.answers_per_question,
        options.source_tag.clone(),
        options.skip_malformed,
    )
}

pub fn read_jsonl<R: Read>(reader: R, what: &str) -> Result<Vec<VisualQuestion>> {
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::io(what, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: VisualQuestion =
            serde_json::from_str(&line).map_err(|e| Error::parse(format!("{what} line {}", lineno + 1), e))?;
        out.push(record);
    }
    Ok(out)
}

#[derive(Deserialize)]
struct VqaQuestions {
    questions: Vec<VqaQuestion>,
}

#[derive(Deserialize)]
struct VqaQuestion {
    question_id: u64,
    image_id: u64,
    question: String,
}

#[derive(Deserialize)]
struct VqaAnnotations {
    annotations: Vec<VqaAnnotation>,
}

#[derive(Deserialize)]
struct VqaAnnotation {
    question_id: u64,
    #[serde(default)]
    answer_type: Option<String>,
    answers: Vec<VqaAnswer>,
}

#[derive(Deserialize)]
struct VqaAnswer {
    answer: String,
}

pub fn read_vqa_v1<Q: Read, A: Read>(questions: Q, annotations: A) -> Result<Vec<VisualQuestion>> {
    let questions: VqaQuestions =
        serde_json::from_reader(BufReader::new(questions)).map_err(|e| Error::parse("VQA questions", e))?;
    let annotations: VqaAnnotations =
        serde_json::from_reader(BufReader::new(annotations)).map_err(|e| Error::parse("VQA annotations", e))?;

    let mut by_id: HashMap<u64, VqaAnnotation> = HashMap::with_capacity(annotations.annotations.len());
    for ann in annotations.annotations {
        by_id.insert(ann.question_id, ann);
    }

    questions
        .questions
        .into_iter()
        .map(|q| {
            let ann = by_id
                .remove(&q.question_id)
                .ok_or(Error::MissingAnnotation(q.question_id))?;
            let answer_type = ann.answer_type.as_deref().map(str::parse).transpose()?;
            Ok(VisualQuestion {
                question_id: q.question_id,
                image_id: q.image_id,
                question_text: q.question,
                raw_answers: ann.answers.into_iter().map(|a| a.answer).collect(),
                answer_type,
            })
        })
        .collect()
}

/// Probabilities that an image holds 0, 1, 2, 3 or 4+ salient objects.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImageFeatureTable {
    entries: BTreeMap<u64, [f64; SALIENCY_BINS]>,
}

impl ImageFeatureTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Validates and stores one row. Rows whose sum is within 1e-3 of one are
    /// renormalized; anything else is rejected. Rows already summing to one up
    /// to rounding are kept bit-for-bit, so a written table reloads unchanged.
    pub fn insert(&mut self, image_id: u64, probabilities: [f64; SALIENCY_BINS]) -> Result<()> {
        let invalid = |reason: String| Error::InvalidProbability { image_id, reason };
        if let Some(p) = probabilities.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(invalid(format!("component {p} is not a probability")));
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
            return Err(invalid(format!("components sum to {sum}")));
        }
        let row = if (sum - 1.0).abs() <= 1e-12 {
            probabilities
        } else {
            probabilities.map(|p| p / sum)
        };
        self.entries.insert(image_id, row);
        Ok(())
    }

    /// Saliency vector for an image, or the uniform vector when absent.
    pub fn get(&self, image_id: u64) -> [f64; SALIENCY_BINS] {
        self.entries.get(&image_id).copied().unwrap_or(UNIFORM_SALIENCY)
    }

    pub fn contains(&self, image_id: u64) -> bool {
        self.entries.contains_key(&image_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        const HEADER: [&str; 6] = ["image_id", "p0", "p1", "p2", "p3", "p4"];
        let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = csv.headers().map_err(|e| Error::parse("image feature header", e))?;
        if header.iter().ne(HEADER.iter().copied()) {
            return Err(Error::parse(
                "image feature header",
                format!(
                    "expected {}, found {}",
                    HEADER.join(","),
                    header.iter().collect::<Vec<_>>().join(",")
                ),
            ));
        }

        let mut table = ImageFeatureTable::new();
        for (row, record) in csv.records().enumerate() {
            let what = || format!("image feature row {}", row + 1);
            let record = record.map_err(|e| Error::parse(what(), e))?;
            let image_id: u64 = record[0].parse().map_err(|e| Error::parse(what(), e))?;
            let mut p = [0.0; SALIENCY_BINS];
            for (slot, field) in p.iter_mut().zip(record.iter().skip(1)) {
                *slot = field.parse().map_err(|e| Error::parse(what(), e))?;
            }
            table.insert(image_id, p)?;
        }
        Ok(table)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| Error::parse("image feature csv", e);
        csv.write_record(["image_id", "p0", "p1", "p2", "p3", "p4"])
            .map_err(err)?;
        for (id, p) in &self.entries {
            let mut row = vec![id.to_string()];
            row.extend(p.iter().map(|v| v.to_string()));
            csv.write_record(&row).map_err(err)?;
        }
        csv.flush().map_err(|e| Error::io("<writer>", e))
    }
}

pub fn load_image_features(path: &Path) -> Result<ImageFeatureTable> {
    ImageFeatureTable::from_csv_reader(open(path)?)
}
