//! Answer normalization, valid-answer sets, diversity statistics and
//! agreement labels.

use std::borrow::Borrow;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{stratum_name, Corpus};
use crate::error::{Error, Result};

const ARTICLES: [&str; 3] = ["a", "an", "the"];

const NUMBER_WORDS: [(&str, &str); 11] = [
    ("zero", "0"),
    ("one", "1"),
    ("two", "2"),
    ("three", "3"),
    ("four", "4"),
    ("five", "5"),
    ("six", "6"),
    ("seven", "7"),
    ("eight", "8"),
    ("nine", "9"),
    ("ten", "10"),
];

/// An answer after cosmetic differences have been removed. Two answers agree
/// exactly when their normalized forms are equal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NormalizedAnswer(String);

impl NormalizedAnswer {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl fmt::Display for NormalizedAnswer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Borrow<str> for NormalizedAnswer {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// Normalizes a raw crowd answer.
///
/// Steps, in order: lowercase; drop commas sitting between two digits; map the
/// number words "zero" through "ten" to digits when they form a whole
/// alphanumeric token; delete ASCII punctuation; drop standalone articles;
/// collapse whitespace.
///
/// Deleting punctuation can glue a number word back together ("tw.o"), so the
/// number-word mapping runs once more after that step. This keeps the function
/// a fixed point on its own output.
pub fn normalize_answer(raw: &str) -> NormalizedAnswer {
    let lowered = raw.to_lowercase();
    let without_commas = strip_digit_commas(&lowered);
    let numbered = map_number_words(&without_commas);
    let unpunctuated: String = numbered.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    let renumbered = map_number_words(&unpunctuated);
    let text = renumbered
        .split_whitespace()
        .filter(|token| !ARTICLES.contains(token))
        .collect::<Vec<_>>()
        .join(" ");
    NormalizedAnswer(text)
}

fn strip_digit_commas(s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    chars
        .iter()
        .enumerate()
        .filter(|&(i, &c)| {
            !(c == ','
                && i > 0
                && chars[i - 1].is_ascii_digit()
                && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit()))
        })
        .map(|(_, &c)| c)
        .collect()
}

fn map_number_words(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut token = String::new();
    let flush = |token: &mut String, out: &mut String| {
        match NUMBER_WORDS.iter().find(|(word, _)| *word == token.as_str()) {
            Some((_, digits)) => out.push_str(digits),
            None => out.push_str(token),
        }
        token.clear();
    };
    for c in s.chars() {
        if c.is_alphanumeric() {
            token.push(c);
        } else {
            flush(&mut token, &mut out);
            out.push(c);
        }
    }
    flush(&mut token, &mut out);
    out
}

/// Occurrence counts of each normalized answer.
pub fn tally<S: AsRef<str>>(raw_answers: &[S]) -> BTreeMap<NormalizedAnswer, usize> {
    let mut counts = BTreeMap::new();
    for raw in raw_answers {
        *counts.entry(normalize_answer(raw.as_ref())).or_insert(0) += 1;
    }
    counts
}

/// Count of the most frequent normalized answer (0 for an empty list).
pub fn modal_count<S: AsRef<str>>(raw_answers: &[S]) -> usize {
    tally(raw_answers).values().copied().max().unwrap_or(0)
}

/// Normalized answers with their counts, plus the threshold `m` that makes an
/// answer valid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidAnswerSet {
    counts: BTreeMap<NormalizedAnswer, usize>,
    m: usize,
}

impl ValidAnswerSet {
    pub fn threshold(&self) -> usize {
        self.m
    }

    /// All tallied answers, valid or not.
    pub fn counts(&self) -> &BTreeMap<NormalizedAnswer, usize> {
        &self.counts
    }

    pub fn answers(&self) -> impl Iterator<Item = &NormalizedAnswer> + '_ {
        self.counts.iter().filter(move |(_, &c)| c >= self.m).map(|(a, _)| a)
    }

    pub fn contains(&self, answer: &str) -> bool {
        self.counts.get(answer).is_some_and(|&c| c >= self.m)
    }

    pub fn len(&self) -> usize {
        self.answers().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Total number of raw answers tallied.
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }
}

/// Answers given by at least `m` people after normalization.
pub fn valid_answers<S: AsRef<str>>(raw_answers: &[S], m: usize) -> Result<ValidAnswerSet> {
    if m < 1 || m > raw_answers.len() {
        return Err(Error::InvalidThreshold {
            m,
            answers: raw_answers.len(),
        });
    }
    Ok(ValidAnswerSet {
        counts: tally(raw_answers),
        m,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgreementLabel {
    Agreement,
    Disagreement,
}

impl AgreementLabel {
    pub fn is_disagreement(self) -> bool {
        self == AgreementLabel::Disagreement
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AgreementLabel::Agreement => "agreement",
            AgreementLabel::Disagreement => "disagreement",
        }
    }
}

impl fmt::Display for AgreementLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Agreement when at least `A - 1` of the `A` answers match exactly after
/// normalization, i.e. at most one stray answer.
pub fn agreement_label<S: AsRef<str>>(raw_answers: &[S], answers_per_question: usize) -> Result<AgreementLabel> {
    if raw_answers.len() != answers_per_question || answers_per_question < 2 {
        return Err(Error::AnswerCountMismatch {
            question_id: None,
            expected: answers_per_question.max(2),
            found: raw_answers.len(),
        });
    }
    Ok(if modal_count(raw_answers) + 1 >= answers_per_question {
        AgreementLabel::Agreement
    } else {
        AgreementLabel::Disagreement
    })
}

/// Labels for every question of a corpus, in corpus order.
pub fn corpus_labels(corpus: &Corpus) -> Result<Vec<AgreementLabel>> {
    let a = corpus.answers_per_question();
    corpus
        .iter()
        .map(|q| {
            agreement_label(&q.raw_answers, a).map_err(|e| match e {
                Error::AnswerCountMismatch { expected, found, .. } => Error::AnswerCountMismatch {
                    question_id: Some(q.question_id),
                    expected,
                    found,
                },
                other => other,
            })
        })
        .collect()
}

/// How many questions yield exactly `k` valid answers, for every `k` in
/// `0..=A`.
pub fn diversity_histogram(corpus: &Corpus, m: usize) -> Result<BTreeMap<usize, usize>> {
    let a = corpus.answers_per_question();
    if m < 1 || m > a {
        return Err(Error::InvalidThreshold { m, answers: a });
    }
    let mut histogram: BTreeMap<usize, usize> = (0..=a).map(|k| (k, 0)).collect();
    for q in corpus {
        let k = valid_answers(&q.raw_answers, m)?.len();
        *histogram.entry(k).or_insert(0) += 1;
    }
    Ok(histogram)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementRates {
    pub unanimous: f64,
    pub exactly_one_disagreement: f64,
    pub at_most_one_disagreement: f64,
    pub n: usize,
}

/// Name of the pooled stratum in per-type reports.
pub const ALL_STRATUM: &str = "all";

/// Unanimity and near-unanimity rates per answer type, plus the pooled
/// `"all"` stratum. Questions without a type fall into `"unknown"`.
pub fn agreement_by_answer_type(corpus: &Corpus) -> BTreeMap<String, AgreementRates> {
    let a = corpus.answers_per_question();
    // (n, unanimous, exactly one)
    let mut counts: BTreeMap<&'static str, (usize, usize, usize)> = BTreeMap::new();
    for q in corpus {
        let modal = modal_count(&q.raw_answers);
        for key in [ALL_STRATUM, stratum_name(q.answer_type)] {
            let entry = counts.entry(key).or_default();
            entry.0 += 1;
            entry.1 += usize::from(modal == a);
            entry.2 += usize::from(modal + 1 == a);
        }
    }
    counts
        .into_iter()
        .map(|(key, (n, unanimous, one))| {
            let rate = |x: usize| x as f64 / n as f64;
            (
                key.to_string(),
                AgreementRates {
                    unanimous: rate(unanimous),
                    exactly_one_disagreement: rate(one),
                    at_most_one_disagreement: rate(unanimous + one),
                    n,
                },
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AnswerType, VisualQuestion};
    use proptest::prelude::*;

    fn pool(parts: &[(&str, usize)]) -> Vec<String> {
        parts
            .iter()
            .flat_map(|(a, n)| std::iter::repeat_n(a.to_string(), *n))
            .collect()
    }

    fn question(id: u64, answers: Vec<String>, t: Option<AnswerType>) -> VisualQuestion {
        VisualQuestion {
            question_id: id,
            image_id: id,
            question_text: "is it?".into(),
            raw_answers: answers,
            answer_type: t,
        }
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_answer("The Cat!").as_str(), "cat");
        assert_eq!(normalize_answer("Two").as_str(), "2");
        assert_eq!(normalize_answer("  YES  ").as_str(), "yes");
        assert_eq!(normalize_answer("1,000").as_str(), "1000");
        assert_eq!(normalize_answer("someone").as_str(), "someone");
        assert_eq!(normalize_answer("theater").as_str(), "theater");
        assert_eq!(normalize_answer("").as_str(), "");
    }

    #[test]
    fn punctuation_glued_number_word_is_still_mapped() {
        assert_eq!(normalize_answer("tw.o").as_str(), "2");
        assert_eq!(normalize_answer("two-thirds").as_str(), "2thirds");
    }

    #[test]
    fn valid_answer_threshold_examples() {
        let answers = pool(&[("yes", 5), ("no", 3), ("maybe", 2)]);
        let at2: Vec<_> = valid_answers(&answers, 2)
            .unwrap()
            .answers()
            .map(|a| a.to_string())
            .collect();
        assert_eq!(at2, ["maybe", "no", "yes"]);
        let at3 = valid_answers(&answers, 3).unwrap();
        assert_eq!(at3.len(), 2);
        assert!(at3.contains("yes") && at3.contains("no") && !at3.contains("maybe"));
        assert_eq!(at3.total(), 10);

        let distinct: Vec<String> = (0..10).map(|i| format!("answer {i}")).collect();
        assert!(valid_answers(&distinct, 2).unwrap().is_empty());
    }

    #[test]
    fn invalid_thresholds() {
        let answers = pool(&[("yes", 10)]);
        assert!(matches!(
            valid_answers(&answers, 0),
            Err(Error::InvalidThreshold { m: 0, .. })
        ));
        assert!(matches!(
            valid_answers(&answers, 11),
            Err(Error::InvalidThreshold { m: 11, .. })
        ));
    }

    #[test]
    fn agreement_examples() {
        let label = |p: &[(&str, usize)]| agreement_label(&pool(p), 10).unwrap();
        assert_eq!(label(&[("yes", 9), ("no", 1)]), AgreementLabel::Agreement);
        assert_eq!(label(&[("yes", 8), ("no", 2)]), AgreementLabel::Disagreement);
        assert_eq!(label(&[("2", 10)]), AgreementLabel::Agreement);
        assert_eq!(label(&[("Two", 5), ("2", 4), ("3", 1)]), AgreementLabel::Agreement);
        assert!(matches!(
            agreement_label(&pool(&[("yes", 9)]), 10),
            Err(Error::AnswerCountMismatch { found: 9, .. })
        ));
    }

    #[test]
    fn toy_histogram() {
        // valid-answer counts at m = 2: {1, 1, 3}
        let qs = vec![
            question(1, pool(&[("yes", 10)]), None),
            question(2, pool(&[("no", 8), ("x", 1), ("y", 1)]), None),
            question(3, pool(&[("a1", 4), ("b", 3), ("c", 2), ("d", 1)]), None),
        ];
        let corpus = Corpus::new(qs, 10, "toy").unwrap();
        let h = diversity_histogram(&corpus, 2).unwrap();
        assert_eq!(h.len(), 11);
        assert_eq!(h[&1], 2);
        assert_eq!(h[&3], 1);
        assert_eq!(h.values().sum::<usize>(), 3);
        assert!(h.iter().all(|(k, v)| *k == 1 || *k == 3 || *v == 0));
        assert!(diversity_histogram(&corpus, 0).is_err());
    }

    #[test]
    fn toy_answer_type_rates() {
        let qs = vec![
            question(1, pool(&[("yes", 10)]), Some(AnswerType::YesNo)),
            question(2, pool(&[("yes", 5), ("no", 5)]), Some(AnswerType::YesNo)),
        ];
        let corpus = Corpus::new(qs, 10, "toy").unwrap();
        let rates = agreement_by_answer_type(&corpus);
        let yn = rates["yes/no"];
        assert_eq!(yn.unanimous, 0.5);
        assert_eq!(yn.exactly_one_disagreement, 0.0);
        assert_eq!(yn.at_most_one_disagreement, 0.5);
        assert_eq!(yn.n, 2);
        assert_eq!(rates["all"], yn);
        assert!(!rates.contains_key("unknown"));
    }

    #[test]
    fn untyped_questions_go_to_unknown() {
        let qs = vec![question(1, pool(&[("yes", 9), ("no", 1)]), None)];
        let rates = agreement_by_answer_type(&Corpus::new(qs, 10, "toy").unwrap());
        assert_eq!(rates["unknown"].exactly_one_disagreement, 1.0);
        assert_eq!(rates.len(), 2);
    }

    fn answer_word() -> impl Strategy<Value = String> {
        prop_oneof![
            Just("yes".to_string()),
            Just("No".to_string()),
            Just("two".to_string()),
            Just("2".to_string()),
            Just("the dog".to_string()),
            Just("a dog".to_string()),
            "[a-c]{1,2}",
        ]
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "\\PC{0,24}") {
            let once = normalize_answer(&s);
            prop_assert_eq!(normalize_answer(once.as_str()), once);
        }

        #[test]
        fn normalize_is_idempotent_on_tricky_ascii(s in "[a-zA-Z0-9 ,.!?'-]{0,24}") {
            let once = normalize_answer(&s);
            prop_assert!(!once.as_str().chars().any(|c| c.is_ascii_uppercase() || c.is_ascii_punctuation()));
            prop_assert!(once.as_str().split(' ').all(|t| !ARTICLES.contains(&t)));
            prop_assert_eq!(normalize_answer(once.as_str()), once);
        }

        #[test]
        fn valid_sets_shrink_with_threshold(
            answers in proptest::collection::vec(answer_word(), 10),
            m1 in 1usize..=10,
            m2 in 1usize..=10,
        ) {
            let (lo, hi) = (m1.min(m2), m1.max(m2));
            let small = valid_answers(&answers, hi).unwrap();
            let large = valid_answers(&answers, lo).unwrap();
            prop_assert!(small.answers().all(|a| large.contains(a.as_str())));
        }

        #[test]
        fn labels_and_sets_ignore_order(
            answers in proptest::collection::vec(answer_word(), 10),
            seed in any::<u64>(),
        ) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut shuffled = answers.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(agreement_label(&answers, 10).unwrap(), agreement_label(&shuffled, 10).unwrap());
            prop_assert_eq!(valid_answers(&answers, 2).unwrap(), valid_answers(&shuffled, 2).unwrap());
        }

        #[test]
        fn agreement_implies_single_valid_answer(answers in proptest::collection::vec(answer_word(), 10)) {
            if agreement_label(&answers, 10).unwrap() == AgreementLabel::Agreement {
                prop_assert_eq!(valid_answers(&answers, 2).unwrap().len(), 1);
            }
        }
    }
}
