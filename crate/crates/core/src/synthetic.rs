//! Seeded corpora with a planted disagreement signal.
//!
//! Questions opening with "why" get spread-out answer pools (several answers
//! each given by two or more workers, so the crowd disagrees); questions
//! opening with "is" get yes/no pools where at least nine workers match. The
//! second word and the saliency features carry no signal.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::answers::agreement_label;
use crate::corpus::{AnswerType, Corpus, ImageFeatureTable, VisualQuestion, SALIENCY_BINS};
use crate::error::{Error, Result};

const SECOND_WORDS: [&str; 5] = ["the", "this", "that", "there", "it"];
const SUBJECTS: [&str; 12] = [
    "dog", "man", "bus", "sky", "street", "cake", "woman", "train", "room", "cat", "table", "sign",
];
const PREDICATES: [&str; 8] = ["here", "open", "wet", "red", "empty", "moving", "outside", "on"];
const REASONS: [&str; 16] = [
    "because it is raining",
    "to eat",
    "safety",
    "it is broken",
    "for fun",
    "waiting for the bus",
    "cold",
    "sunny",
    "to stay dry",
    "tired",
    "decoration",
    "hungry",
    "no one knows",
    "to see better",
    "work",
    "playing",
];
const ODD_ANSWERS: [&str; 6] = ["maybe", "not sure", "blue", "2", "cat", "i do not know"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_questions: usize,
    /// Share of "why" (planted disagreement) questions.
    pub why_fraction: f64,
    pub answers_per_question: usize,
    pub n_images: u64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_questions: 2000,
            why_fraction: 0.5,
            answers_per_question: 10,
            n_images: 400,
            seed: 0,
        }
    }
}

/// Writes the same answer with varied case and trailing punctuation.
fn decorate(answer: &str, rng: &mut ChaCha8Rng) -> String {
    let mut s = match rng.random_range(0..4) {
        0 => answer.to_uppercase(),
        1 => {
            let mut c = answer.chars();
            c.next()
                .map(|f| f.to_uppercase().chain(c).collect())
                .unwrap_or_default()
        }
        _ => answer.to_string(),
    };
    match rng.random_range(0..5) {
        0 => s.push('.'),
        1 => s.push('!'),
        _ => {}
    }
    s
}

fn why_pool(a: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    // 2..=4 answers given by at least two workers each, filled out with singletons
    let max_true = (a / 2).clamp(2, 4);
    let n_true = rng.random_range(2..=max_true);
    let n_single = rng.random_range(0..=(a - 2 * n_true).min(2));
    let chosen: Vec<&str> = REASONS.choose_multiple(rng, n_true + n_single).copied().collect();
    let mut counts = vec![2usize; n_true];
    for _ in 0..(a - 2 * n_true - n_single) {
        counts[rng.random_range(0..n_true)] += 1;
    }
    let mut pool: Vec<String> = Vec::with_capacity(a);
    for (answer, &count) in chosen.iter().zip(&counts) {
        for _ in 0..count {
            pool.push(decorate(answer, rng));
        }
    }
    for answer in &chosen[n_true..] {
        pool.push(decorate(answer, rng));
    }
    pool.shuffle(rng);
    pool
}

fn is_pool(a: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let base = if rng.random_bool(0.5) { "yes" } else { "no" };
    let mut pool: Vec<String> = (0..a).map(|_| decorate(base, rng)).collect();
    if rng.random_bool(0.5) {
        let odd = if rng.random_bool(0.5) {
            if base == "yes" {
                "no"
            } else {
                "yes"
            }
        } else {
            ODD_ANSWERS.choose(rng).copied().unwrap_or("maybe")
        };
        let slot = rng.random_range(0..a);
        pool[slot] = decorate(odd, rng);
    }
    pool
}

/// Generates a corpus of `n_questions` with ids `1..=n`, types "other" for
/// why-questions and "yes/no" for is-questions.
pub fn planted_corpus(config: &SyntheticConfig) -> Result<Corpus> {
    let a = config.answers_per_question;
    if a < 4 {
        return Err(Error::InvalidConfig(format!(
            "planted corpora need at least 4 answers per question, got {a}"
        )));
    }
    if !(0.0..=1.0).contains(&config.why_fraction) {
        return Err(Error::InvalidConfig(format!(
            "why fraction {} outside [0, 1]",
            config.why_fraction
        )));
    }
    if config.n_images == 0 {
        return Err(Error::InvalidConfig("need at least one image".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n_why = (config.n_questions as f64 * config.why_fraction).round() as usize;
    let mut kinds: Vec<bool> = (0..config.n_questions).map(|i| i < n_why).collect();
    kinds.shuffle(&mut rng);

    let questions = kinds
        .into_iter()
        .enumerate()
        .map(|(i, why)| {
            let second = SECOND_WORDS.choose(&mut rng).copied().unwrap_or("the");
            let subject = SUBJECTS.choose(&mut rng).copied().unwrap_or("dog");
            let predicate = PREDICATES.choose(&mut rng).copied().unwrap_or("here");
            let (question_text, raw_answers, answer_type) = if why {
                (
                    format!("Why {second} {subject} {predicate}?"),
                    why_pool(a, &mut rng),
                    AnswerType::Other,
                )
            } else {
                (
                    format!("Is {second} {subject} {predicate}?"),
                    is_pool(a, &mut rng),
                    AnswerType::YesNo,
                )
            };
            VisualQuestion {
                question_id: i as u64 + 1,
                image_id: rng.random_range(0..config.n_images),
                question_text,
                raw_answers,
                answer_type: Some(answer_type),
            }
        })
        .collect();
    Corpus::new(questions, a, "synthetic")
}

/// Random saliency probabilities for images `0..n_images`, independent of
/// any question.
pub fn random_image_features(n_images: u64, seed: u64) -> Result<ImageFeatureTable> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = ImageFeatureTable::new();
    for image_id in 0..n_images {
        let mut row = [0.0; SALIENCY_BINS];
        for v in &mut row {
            *v = rng.random_range(0.01..1.0);
        }
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= total);
        table.insert(image_id, row)?;
    }
    Ok(table)
}

/// Label noise: swaps answer pools between pairs of questions with opposite
/// labels, flipping both. Only questions in `eligible` are touched; about
/// `rate × |eligible|` labels change. Returns the new corpus and the ids whose
/// pools were swapped.
pub fn swap_answer_pools(
    corpus: &Corpus,
    eligible: &BTreeSet<u64>,
    rate: f64,
    seed: u64,
) -> Result<(Corpus, BTreeSet<u64>)> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::InvalidConfig(format!("noise rate {rate} outside [0, 1]")));
    }
    let a = corpus.answers_per_question();
    let mut disagree = Vec::new();
    let mut agree = Vec::new();
    for (i, q) in corpus.iter().enumerate() {
        if !eligible.contains(&q.question_id) {
            continue;
        }
        if agreement_label(&q.raw_answers, a)?.is_disagreement() {
            disagree.push(i);
        } else {
            agree.push(i);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    disagree.shuffle(&mut rng);
    agree.shuffle(&mut rng);
    let pairs = ((rate * eligible.len() as f64) / 2.0).round() as usize;
    let pairs = pairs.min(disagree.len()).min(agree.len());

    let mut questions = corpus.questions().to_vec();
    let mut swapped = BTreeSet::new();
    for (&d, &g) in disagree.iter().zip(&agree).take(pairs) {
        let tmp = std::mem::take(&mut questions[d].raw_answers);
        questions[d].raw_answers = std::mem::replace(&mut questions[g].raw_answers, tmp);
        swapped.insert(questions[d].question_id);
        swapped.insert(questions[g].question_id);
    }
    Ok((Corpus::new(questions, a, corpus.source_tag())?, swapped))
}

/// Random split into `n_first` and the remaining questions.
pub fn split_corpus(corpus: &Corpus, n_first: usize, seed: u64) -> Result<(Corpus, Corpus)> {
    if n_first > corpus.len() {
        return Err(Error::InvalidConfig(format!(
            "cannot take {n_first} questions from a corpus of {}",
            corpus.len()
        )));
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |idx: &[usize]| idx.iter().map(|&i| corpus.questions()[i].clone()).collect::<Vec<_>>();
    let a = corpus.answers_per_question();
    Ok((
        Corpus::new(pick(&order[..n_first]), a, corpus.source_tag())?,
        Corpus::new(pick(&order[n_first..]), a, corpus.source_tag())?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::TruthSet;
    use crate::answers::{corpus_labels, AgreementLabel};

    fn small(seed: u64) -> Corpus {
        planted_corpus(&SyntheticConfig {
            n_questions: 300,
            seed,
            ..SyntheticConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn planted_labels_follow_first_word() {
        let corpus = small(5);
        let labels = corpus_labels(&corpus).unwrap();
        let truth = TruthSet::from_corpus(&corpus);
        let mut why = 0;
        for (q, label) in corpus.iter().zip(labels) {
            let t = truth.get(q.question_id).unwrap().len();
            if q.question_text.starts_with("Why") {
                why += 1;
                assert_eq!(label, AgreementLabel::Disagreement);
                assert!((2..=4).contains(&t));
                assert_eq!(q.answer_type, Some(AnswerType::Other));
            } else {
                assert_eq!(label, AgreementLabel::Agreement);
                assert_eq!(t, 1);
                assert_eq!(q.answer_type, Some(AnswerType::YesNo));
            }
        }
        assert_eq!(why, 150);
    }

    #[test]
    fn generation_is_seeded() {
        assert_eq!(small(1), small(1));
        assert_ne!(small(1), small(2));
    }

    #[test]
    fn swaps_flip_exactly_the_requested_share() {
        let corpus = small(3);
        let eligible: BTreeSet<u64> = corpus.question_ids().into_iter().take(200).collect();
        let (noisy, swapped) = swap_answer_pools(&corpus, &eligible, 0.1, 9).unwrap();
        assert_eq!(swapped.len(), 20);
        assert!(swapped.is_subset(&eligible));
        let before = corpus_labels(&corpus).unwrap();
        let after = corpus_labels(&noisy).unwrap();
        let flipped: BTreeSet<u64> = corpus
            .question_ids()
            .into_iter()
            .zip(before.iter().zip(&after))
            .filter(|(_, (b, a))| b != a)
            .map(|(id, _)| id)
            .collect();
        assert_eq!(flipped, swapped);
        let (same, none) = swap_answer_pools(&corpus, &eligible, 0.0, 9).unwrap();
        assert!(none.is_empty());
        assert_eq!(same, corpus);
    }

    #[test]
    fn split_partitions() {
        let corpus = small(4);
        let (a, b) = split_corpus(&corpus, 100, 0).unwrap();
        assert_eq!((a.len(), b.len()), (100, 200));
        let mut ids = a.question_ids();
        ids.extend(b.question_ids());
        ids.sort();
        assert_eq!(ids, corpus.question_ids());
        assert!(split_corpus(&corpus, 301, 0).is_err());
    }

    #[test]
    fn image_features_are_valid() {
        let t = random_image_features(50, 1).unwrap();
        assert_eq!(t.len(), 50);
        assert!((t.get(7).iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
