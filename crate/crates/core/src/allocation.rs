//! Budgeted answer collection.
//!
//! Questions are ranked by predicted disagreement; the first `B` questions of
//! the ranking receive `R` answers and the rest receive `S`. Captured
//! diversity is the number of true answers (normalized answers given by at
//! least two of the stored workers) found among the collected answers, summed
//! over questions. Collection is simulated by drawing without replacement from
//! the stored answer pool, either by Monte Carlo or through the exact
//! hypergeometric expectation.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::answers::{normalize_answer, tally, NormalizedAnswer};
use crate::corpus::Corpus;
use crate::error::{Error, Result};

/// Workers that must give an answer for it to count as true.
pub const TRUTH_MIN_COUNT: usize = 2;

/// Largest answer pool handled by the exact expectation.
pub const MAX_EXACT_POOL: usize = 64;

/// Question ids, most likely disagreement first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ranking(Vec<u64>);

impl Ranking {
    pub fn new(order: Vec<u64>) -> Self {
        Ranking(order)
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// True when the ranking lists every corpus question exactly once.
    pub fn is_permutation_of(&self, corpus: &Corpus) -> bool {
        let mut ids = self.0.clone();
        ids.sort_unstable();
        ids == corpus.question_ids()
    }
}

/// Descending predicted disagreement; ties broken by ascending question id.
pub fn rank_by_disagreement(question_ids: &[u64], predictions: &BTreeMap<u64, f64>) -> Result<Ranking> {
    let mut scored = question_ids
        .iter()
        .map(|&id| {
            predictions
                .get(&id)
                .map(|&p| (id, p))
                .ok_or(Error::MissingPrediction(id))
        })
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(Ranking(scored.into_iter().map(|(id, _)| id).collect()))
}

/// A uniformly random order, reproducible from `seed`.
pub fn status_quo_ranking(question_ids: &[u64], seed: u64) -> Ranking {
    let mut ids = question_ids.to_vec();
    ids.sort_unstable();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ranking(ids)
}

/// True answers of every question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthSet {
    sets: BTreeMap<u64, BTreeSet<NormalizedAnswer>>,
}

impl TruthSet {
    pub fn from_corpus(corpus: &Corpus) -> Self {
        let sets = corpus
            .iter()
            .map(|q| {
                let truth = tally(&q.raw_answers)
                    .into_iter()
                    .filter(|(_, c)| *c >= TRUTH_MIN_COUNT)
                    .map(|(a, _)| a)
                    .collect();
                (q.question_id, truth)
            })
            .collect();
        TruthSet { sets }
    }

    pub fn get(&self, question_id: u64) -> Option<&BTreeSet<NormalizedAnswer>> {
        self.sets.get(&question_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&u64, &BTreeSet<NormalizedAnswer>)> {
        self.sets.iter()
    }

    /// Diversity obtained if every true answer were captured.
    pub fn max_diversity(&self) -> usize {
        self.sets.values().map(BTreeSet::len).sum()
    }
}

/// Minimum (`S`) and maximum (`R`) answers collected per question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerCounts {
    pub min: usize,
    pub max: usize,
}

impl Default for AnswerCounts {
    fn default() -> Self {
        AnswerCounts { min: 1, max: 5 }
    }
}

impl AnswerCounts {
    pub fn validate(&self, pool: usize) -> Result<()> {
        if self.min < 1 || self.min >= self.max || self.max > pool {
            return Err(Error::InvalidCounts {
                min: self.min,
                max: self.max,
                pool,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub assignments: BTreeMap<u64, usize>,
    pub counts: AnswerCounts,
    pub budget: usize,
}

impl AllocationPlan {
    pub fn total_answers(&self) -> usize {
        self.assignments.values().sum()
    }
}

/// Gives `counts.max` answers to the first `budget` questions of the ranking
/// and `counts.min` to the others.
pub fn make_plan(ranking: &Ranking, budget: usize, counts: AnswerCounts, pool: usize) -> Result<AllocationPlan> {
    counts.validate(pool)?;
    if budget > ranking.len() {
        return Err(Error::InvalidBudget {
            budget,
            questions: ranking.len(),
        });
    }
    let assignments = ranking
        .0
        .iter()
        .enumerate()
        .map(|(i, &id)| (id, if i < budget { counts.max } else { counts.min }))
        .collect();
    Ok(AllocationPlan {
        assignments,
        counts,
        budget,
    })
}

/// Total number of true answers present in the collected sets.
pub fn diversity_score(collected: &BTreeMap<u64, BTreeSet<NormalizedAnswer>>, truth: &TruthSet) -> Result<usize> {
    if let Some(id) = collected.keys().find(|id| !truth.sets.contains_key(id)) {
        return Err(Error::KeyMismatch(*id));
    }
    if let Some(id) = truth.sets.keys().find(|id| !collected.contains_key(id)) {
        return Err(Error::KeyMismatch(*id));
    }
    Ok(collected
        .iter()
        .map(|(id, answers)| answers.intersection(&truth.sets[id]).count())
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum SimulationMode {
    ExactExpectation,
    MonteCarlo { trials: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub budget: usize,
    pub diversity: f64,
    pub max_diversity: usize,
    pub answers_spent: usize,
    pub mode: SimulationMode,
}

/// Exact binomial coefficients `C(n, k)` for `n <= MAX_EXACT_POOL`.
#[derive(Debug, Clone)]
struct Binomials {
    rows: Vec<Vec<u128>>,
}

impl Binomials {
    fn new(max_n: usize) -> Result<Self> {
        if max_n > MAX_EXACT_POOL {
            return Err(Error::Overflow(max_n));
        }
        let mut rows: Vec<Vec<u128>> = Vec::with_capacity(max_n + 1);
        for n in 0..=max_n {
            let mut row = vec![1u128; n + 1];
            for k in 1..n {
                row[k] = rows[n - 1][k - 1] + rows[n - 1][k];
            }
            rows.push(row);
        }
        Ok(Binomials { rows })
    }

    fn choose(&self, n: usize, k: usize) -> u128 {
        if k > n {
            0
        } else {
            self.rows[n][k]
        }
    }
}

/// Per-question data needed to simulate collection.
struct PoolInfo {
    id: u64,
    /// Index into the truth list for each stored answer, if it is true.
    truth_slot: Vec<Option<u8>>,
    /// How often each true answer occurs in the pool.
    truth_counts: Vec<usize>,
}

/// Normalized answer pools of a corpus, prepared once and reused across plans.
pub struct CollectionModel {
    pool: usize,
    questions: Vec<PoolInfo>,
    index: BTreeMap<u64, usize>,
    max_diversity: usize,
    binomials: Option<Binomials>,
}

impl CollectionModel {
    pub fn new(corpus: &Corpus) -> Self {
        let truth = TruthSet::from_corpus(corpus);
        let questions: Vec<PoolInfo> = corpus
            .iter()
            .map(|q| {
                let true_answers: Vec<&NormalizedAnswer> = truth.sets[&q.question_id].iter().collect();
                let truth_slot: Vec<Option<u8>> = q
                    .raw_answers
                    .iter()
                    .map(|raw| {
                        let norm = normalize_answer(raw);
                        true_answers.iter().position(|t| **t == norm).map(|i| i as u8)
                    })
                    .collect();
                let truth_counts = (0..true_answers.len())
                    .map(|t| truth_slot.iter().filter(|s| **s == Some(t as u8)).count())
                    .collect();
                PoolInfo {
                    id: q.question_id,
                    truth_slot,
                    truth_counts,
                }
            })
            .collect();
        let index = questions.iter().enumerate().map(|(i, q)| (q.id, i)).collect();
        CollectionModel {
            pool: corpus.answers_per_question(),
            max_diversity: truth.max_diversity(),
            binomials: Binomials::new(corpus.answers_per_question()).ok(),
            questions,
            index,
        }
    }

    pub fn max_diversity(&self) -> usize {
        self.max_diversity
    }

    fn binomials(&self) -> Result<&Binomials> {
        self.binomials.as_ref().ok_or(Error::Overflow(self.pool))
    }

    /// Expected number of true answers captured when `n` of the stored answers
    /// are drawn without replacement: the sum over true answers of
    /// `1 - C(A - c, n) / C(A, n)`.
    fn expected_capture(&self, q: &PoolInfo, n: usize) -> Result<f64> {
        let b = self.binomials()?;
        let all = b.choose(self.pool, n) as f64;
        Ok(q.truth_counts
            .iter()
            .map(|&c| 1.0 - b.choose(self.pool - c, n) as f64 / all)
            .sum())
    }

    fn sampled_capture(&self, q: &PoolInfo, n: usize, trials: usize, seed: u64) -> f64 {
        let mut base = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(q.id)));
        let mut captured = 0usize;
        for trial in 0..trials {
            base.set_stream(trial as u64);
            base.set_word_pos(0);
            let mut seen = 0u64;
            for i in index::sample(&mut base, self.pool, n) {
                if let Some(slot) = q.truth_slot[i] {
                    seen |= 1 << slot;
                }
            }
            captured += seen.count_ones() as usize;
        }
        captured as f64 / trials as f64
    }

    fn check_plan(&self, plan: &AllocationPlan) -> Result<()> {
        plan.counts.validate(self.pool)?;
        if let Some(id) = plan.assignments.keys().find(|id| !self.index.contains_key(id)) {
            return Err(Error::KeyMismatch(*id));
        }
        if let Some(q) = self.questions.iter().find(|q| !plan.assignments.contains_key(&q.id)) {
            return Err(Error::KeyMismatch(q.id));
        }
        if let Some((_, &n)) = plan.assignments.iter().find(|(_, &n)| n > self.pool) {
            return Err(Error::InvalidCounts {
                min: plan.counts.min,
                max: n,
                pool: self.pool,
            });
        }
        if plan.budget > self.questions.len() {
            return Err(Error::InvalidBudget {
                budget: plan.budget,
                questions: self.questions.len(),
            });
        }
        Ok(())
    }

    /// Per-question capture (expected or sampled) when each question gets
    /// `n` answers, in corpus order. Sampled values depend only on the seed,
    /// the question id, the trial index and `n`, never on the plan.
    pub fn captures(&self, n: usize, mode: SimulationMode) -> Result<Vec<f64>> {
        if n > self.pool {
            return Err(Error::InvalidCounts {
                min: n,
                max: n,
                pool: self.pool,
            });
        }
        match mode {
            SimulationMode::ExactExpectation => self.questions.iter().map(|q| self.expected_capture(q, n)).collect(),
            SimulationMode::MonteCarlo { trials: 0, .. } => {
                Err(Error::InvalidConfig("Monte Carlo needs at least one trial".into()))
            }
            SimulationMode::MonteCarlo { trials, seed } => Ok(self
                .questions
                .par_iter()
                .map(|q| self.sampled_capture(q, n, trials, seed))
                .collect()),
        }
    }

    pub fn simulate(&self, plan: &AllocationPlan, mode: SimulationMode) -> Result<DiversityReport> {
        self.check_plan(plan)?;
        let sizes: BTreeSet<usize> = plan.assignments.values().copied().collect();
        let by_size = sizes
            .into_iter()
            .map(|n| Ok((n, self.captures(n, mode)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Ok(self.report(plan, mode, &by_size))
    }

    /// Sums precomputed captures in corpus order, so the same plan always
    /// gives bit-identical diversity however the captures were obtained.
    fn report(
        &self,
        plan: &AllocationPlan,
        mode: SimulationMode,
        by_size: &BTreeMap<usize, Vec<f64>>,
    ) -> DiversityReport {
        let diversity = self
            .questions
            .iter()
            .enumerate()
            .map(|(i, q)| by_size[&plan.assignments[&q.id]][i])
            .sum();
        DiversityReport {
            budget: plan.budget,
            diversity,
            max_diversity: self.max_diversity,
            answers_spent: plan.total_answers(),
            mode,
        }
    }

    /// Expected gain from raising a question's answer count from `S` to `R`.
    fn gain(&self, q: &PoolInfo, counts: AnswerCounts) -> Result<f64> {
        Ok(self.expected_capture(q, counts.max)? - self.expected_capture(q, counts.min)?)
    }

    /// Exact expected diversity for every budget `0..=N` under one ranking.
    pub fn budget_curve(&self, ranking: &Ranking, counts: AnswerCounts) -> Result<Vec<f64>> {
        counts.validate(self.pool)?;
        if ranking.len() != self.questions.len() {
            return Err(Error::LengthMismatch {
                left: ranking.len(),
                right: self.questions.len(),
            });
        }
        let mut base = 0.0;
        for q in &self.questions {
            base += self.expected_capture(q, counts.min)?;
        }
        let mut curve = Vec::with_capacity(ranking.len() + 1);
        curve.push(base);
        let mut running = base;
        for id in ranking.as_slice() {
            let i = *self.index.get(id).ok_or(Error::KeyMismatch(*id))?;
            running += self.gain(&self.questions[i], counts)?;
            curve.push(running);
        }
        Ok(curve)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Simulates collecting answers according to `plan` and scores the captured
/// diversity.
pub fn simulate_collection(plan: &AllocationPlan, corpus: &Corpus, mode: SimulationMode) -> Result<DiversityReport> {
    CollectionModel::new(corpus).simulate(plan, mode)
}

/// Upper-bound ranking built from the true answers: largest exact expected
/// gain from `S` to `R` answers first, then most true answers, then id.
///
/// With `A = 10, S = 1, R = 5` the gain strictly increases with the number of
/// true answers, so this is the order by true-answer count; ordering by the
/// gain itself keeps the ranking optimal for any `S`, `R` and pool size.
pub fn oracle_ranking(corpus: &Corpus, counts: AnswerCounts) -> Result<Ranking> {
    let model = CollectionModel::new(corpus);
    counts.validate(model.pool)?;
    let mut keyed = model
        .questions
        .iter()
        .map(|q| Ok((q.id, q.truth_counts.len(), model.gain(q, counts)?)))
        .collect::<Result<Vec<_>>>()?;
    keyed.sort_by(|a, b| b.2.total_cmp(&a.2).then(b.1.cmp(&a.1)).then(a.0.cmp(&b.0)));
    Ok(Ranking(keyed.into_iter().map(|(id, _, _)| id).collect()))
}

/// Rankings whose results are averaged under one name, e.g. several
/// status-quo seeds.
#[derive(Debug, Clone)]
pub struct RankingSet {
    pub name: String,
    pub rankings: Vec<Ranking>,
}

impl RankingSet {
    pub fn single(name: impl Into<String>, ranking: Ranking) -> Self {
        RankingSet {
            name: name.into(),
            rankings: vec![ranking],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub ranking: String,
    pub budget: usize,
    pub answers_spent: usize,
    pub diversity: f64,
    pub diversity_fraction: f64,
}

/// One row per (ranking set, budget), in input order.
pub fn sweep(
    corpus: &Corpus,
    rankings: &[RankingSet],
    budgets: &[usize],
    counts: AnswerCounts,
    mode: SimulationMode,
) -> Result<Vec<SweepRow>> {
    let model = CollectionModel::new(corpus);
    counts.validate(model.pool)?;
    let by_size = BTreeMap::from([
        (counts.min, model.captures(counts.min, mode)?),
        (counts.max, model.captures(counts.max, mode)?),
    ]);
    let mut rows = Vec::with_capacity(rankings.len() * budgets.len());
    for set in rankings {
        if set.rankings.is_empty() {
            return Err(Error::InvalidConfig(format!("ranking set {} is empty", set.name)));
        }
        for &budget in budgets {
            let mut total = 0.0;
            let mut spent = 0;
            for ranking in &set.rankings {
                let plan = make_plan(ranking, budget, counts, model.pool)?;
                model.check_plan(&plan)?;
                let report = model.report(&plan, mode, &by_size);
                total += report.diversity;
                spent = report.answers_spent;
            }
            let diversity = total / set.rankings.len() as f64;
            rows.push(SweepRow {
                ranking: set.name.clone(),
                budget,
                answers_spent: spent,
                diversity,
                diversity_fraction: if model.max_diversity == 0 {
                    0.0
                } else {
                    diversity / model.max_diversity as f64
                },
            });
        }
    }
    Ok(rows)
}

/// Fewest answers a curve (indexed by budget) needs to reach `fraction` of
/// the maximum diversity.
pub fn answers_to_reach(
    curve: &[f64],
    max_diversity: usize,
    fraction: f64,
    corpus_size: usize,
    counts: AnswerCounts,
) -> Option<usize> {
    let target = fraction * max_diversity as f64;
    curve
        .iter()
        .position(|&d| d >= target - 1e-9)
        .map(|b| b * counts.max + (corpus_size - b) * counts.min)
}
