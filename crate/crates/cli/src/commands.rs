use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use crowd_consensus::allocation::answers_to_reach;
use crowd_consensus::synthetic::{
    planted_corpus, random_image_features, split_corpus, swap_answer_pools, SyntheticConfig,
};
use crowd_consensus::{
    agreement_by_answer_type, build_vocabularies, corpus_labels, diversity_histogram, fit_model, load_corpus,
    load_image_features, load_model, make_plan, oracle_ranking, pr_curve, rank_by_disagreement, status_quo_ranking,
    stratified_eval, sweep, AnswerCounts, CollectionModel, Corpus, ForestConfig, ForestModel, ImageFeatureTable,
    LoadOptions, Parallelism, Prediction, Ranking, RankingSet, SimulationMode,
};

use crate::args::{
    AllocateArgs, AnalyzeArgs, Cli, Command, CorpusArgs, EvalArgs, ModelInputArgs, PredictArgs, SimArg, SweepArgs,
    SynthArgs, TrainArgs, VocabArgs,
};
use crate::output::Outputs;

/// Price and time of one crowd answer, used for the derived cost columns.
const USD_PER_ANSWER: f64 = 0.02;
const SECONDS_PER_ANSWER: f64 = 30.0;

pub fn run(cli: &Cli) -> Result<()> {
    let mut out = Outputs::new(&cli.out_dir);
    match &cli.command {
        Command::Analyze(a) => analyze(a, &mut out)?,
        Command::Vocab(a) => vocab(a, &mut out)?,
        Command::Train(a) => train(a, cli.seed, &mut out)?,
        Command::Predict(a) => predict(a, &mut out)?,
        Command::Eval(a) => eval(a, &mut out)?,
        Command::Allocate(a) => allocate(a, &mut out)?,
        Command::Sweep(a) => run_sweep(a, cli.seed, &mut out)?,
        Command::Synth(a) => synth(a, cli.seed, &mut out)?,
    }
    out.add_json("run_config.json", &RunConfig::new(cli))?;
    for path in out.commit()? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct RunConfig<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    out_dir: &'a Path,
    args: &'a Command,
}

impl<'a> RunConfig<'a> {
    fn new(cli: &'a Cli) -> Self {
        RunConfig {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: cli.command.name(),
            seed: cli.seed,
            out_dir: &cli.out_dir,
            args: &cli.command,
        }
    }
}

fn read_corpus(args: &CorpusArgs) -> Result<Corpus> {
    let options = LoadOptions {
        format: args.format.into(),
        answers_per_question: args.answers_per_question,
        skip_malformed: args.skip_malformed,
        ..LoadOptions::default()
    };
    let corpus = load_corpus(&args.corpus, args.annotations.as_deref(), &options)?;
    if corpus.dropped() > 0 {
        eprintln!("skipped {} malformed questions", corpus.dropped());
    }
    Ok(corpus)
}

fn read_images(path: Option<&Path>) -> Result<ImageFeatureTable> {
    Ok(match path {
        Some(p) => load_image_features(p)?,
        None => ImageFeatureTable::new(),
    })
}

struct Scored {
    corpus: Corpus,
    predictions: Vec<Prediction>,
}

fn score(input: &ModelInputArgs) -> Result<Scored> {
    let model: ForestModel = load_model(&input.model)?;
    let corpus = read_corpus(&input.corpus)?;
    let images = read_images(input.image_features.as_deref())?;
    let features = corpus
        .iter()
        .map(|q| model.features(q, &images))
        .collect::<crowd_consensus::Result<Vec<_>>>()?;
    let predictions = model.forest.predict_many(&features)?;
    Ok(Scored { corpus, predictions })
}

impl Scored {
    fn ranking(&self) -> Result<Ranking> {
        let ids = self.corpus.question_ids();
        Ok(rank_by_disagreement(&ids, &self.p_by_id())?)
    }

    fn p_by_id(&self) -> BTreeMap<u64, f64> {
        self.corpus
            .iter()
            .zip(&self.predictions)
            .map(|(q, p)| (q.question_id, p.p_disagreement))
            .collect()
    }
}

#[derive(Serialize)]
struct HistogramRow {
    m: usize,
    k: usize,
    count: usize,
}

#[derive(Serialize)]
struct TypeRow<'a> {
    answer_type: &'a str,
    unanimous: f64,
    exactly_one: f64,
    at_most_one: f64,
    n: usize,
}

#[derive(Serialize)]
struct AnalysisSummary {
    questions: usize,
    dropped: usize,
    answers_per_question: usize,
    /// Share of questions with no answer reaching the threshold, per m.
    no_valid_answer_rate: BTreeMap<usize, f64>,
}

fn analyze(args: &AnalyzeArgs, out: &mut Outputs) -> Result<()> {
    let corpus = read_corpus(&args.corpus)?;
    let mut rows = Vec::new();
    let mut no_valid = BTreeMap::new();
    for &m in &args.m {
        let hist = diversity_histogram(&corpus, m)?;
        let zero = hist.get(&0).copied().unwrap_or(0);
        no_valid.insert(
            m,
            if corpus.is_empty() {
                0.0
            } else {
                zero as f64 / corpus.len() as f64
            },
        );
        rows.extend(hist.into_iter().map(|(k, count)| HistogramRow { m, k, count }));
    }
    out.add_csv("histograms.csv", &rows)?;

    let rates = agreement_by_answer_type(&corpus);
    let type_rows: Vec<TypeRow> = rates
        .iter()
        .map(|(t, r)| TypeRow {
            answer_type: t,
            unanimous: r.unanimous,
            exactly_one: r.exactly_one_disagreement,
            at_most_one: r.at_most_one_disagreement,
            n: r.n,
        })
        .collect();
    out.add_csv("agreement_by_type.csv", &type_rows)?;
    out.add_json(
        "analysis.json",
        &AnalysisSummary {
            questions: corpus.len(),
            dropped: corpus.dropped(),
            answers_per_question: corpus.answers_per_question(),
            no_valid_answer_rate: no_valid,
        },
    )
}

fn vocab(args: &VocabArgs, out: &mut Outputs) -> Result<()> {
    let corpus = read_corpus(&args.corpus)?;
    let vocab = build_vocabularies(&corpus)?;
    let mut bytes = vocab.to_json()?.into_bytes();
    bytes.push(b'\n');
    out.add("vocab.json", bytes);
    Ok(())
}

fn train(args: &TrainArgs, seed: u64, out: &mut Outputs) -> Result<()> {
    let corpus = read_corpus(&args.corpus)?;
    let images = read_images(args.image_features.as_deref())?;
    let config = ForestConfig {
        n_trees: args.trees,
        features_per_split: args.features_per_split,
        min_leaf_size: args.min_leaf_size,
        max_depth: args.max_depth,
        seed,
    };
    let parallelism = if args.serial {
        Parallelism::Serial
    } else {
        Parallelism::Parallel
    };
    let model = fit_model(
        &corpus,
        &images,
        args.mode.into(),
        args.layout.into(),
        &config,
        parallelism,
    )?;
    eprintln!(
        "trained {} trees on {} questions, {} features ({} per split)",
        model.forest.trees().len(),
        corpus.len(),
        model.forest.input_dimension(),
        model.forest.features_per_split()
    );
    let mut bytes = model.to_json()?.into_bytes();
    bytes.push(b'\n');
    match &args.model {
        Some(path) => out.add(path, bytes),
        None => out.add("model.json", bytes),
    }
    Ok(())
}

#[derive(Serialize)]
struct PredictionRow {
    question_id: u64,
    p_disagreement: f64,
    label: &'static str,
    votes: usize,
}

fn prediction_rows(scored: &Scored) -> Vec<PredictionRow> {
    scored
        .corpus
        .iter()
        .zip(&scored.predictions)
        .map(|(q, p)| PredictionRow {
            question_id: q.question_id,
            p_disagreement: p.p_disagreement,
            label: p.label.as_str(),
            votes: p.votes,
        })
        .collect()
}

fn predict(args: &PredictArgs, out: &mut Outputs) -> Result<()> {
    let scored = score(&args.input)?;
    out.add_csv("predictions.csv", &prediction_rows(&scored))
}

#[derive(Serialize)]
struct CurveRow {
    threshold: f64,
    recall: f64,
    precision: f64,
}

fn eval(args: &EvalArgs, out: &mut Outputs) -> Result<()> {
    let scored = score(&args.input)?;
    let labels = corpus_labels(&scored.corpus)?;
    let scores: Vec<f64> = scored.predictions.iter().map(|p| p.p_disagreement).collect();
    let types: Vec<_> = scored.corpus.iter().map(|q| q.answer_type).collect();
    let report = stratified_eval(&scores, &labels, &types)?;
    match report.ap_overall {
        Some(ap) => eprintln!("average precision: {ap:.4}"),
        None => eprintln!("no disagreement questions; average precision undefined"),
    }
    if report.ap_overall.is_some() {
        let curve = pr_curve(&scores, &labels)?;
        let rows: Vec<CurveRow> = curve
            .points
            .iter()
            .map(|p| CurveRow {
                threshold: p.threshold,
                recall: p.recall,
                precision: p.precision,
            })
            .collect();
        out.add_csv("pr_curve.csv", &rows)?;
    }
    out.add_json("eval_report.json", &report)?;
    out.add_csv("predictions.csv", &prediction_rows(&scored))
}

#[derive(Serialize)]
struct PlanRow {
    question_id: u64,
    answer_count: usize,
    p_disagreement: f64,
}

fn allocate(args: &AllocateArgs, out: &mut Outputs) -> Result<()> {
    let scored = score(&args.input)?;
    let ranking = scored.ranking()?;
    let counts = AnswerCounts {
        min: args.s,
        max: args.r,
    };
    let plan = make_plan(&ranking, args.budget, counts, scored.corpus.answers_per_question())?;
    let p = scored.p_by_id();
    let rows: Vec<PlanRow> = ranking
        .as_slice()
        .iter()
        .map(|id| PlanRow {
            question_id: *id,
            answer_count: plan.assignments[id],
            p_disagreement: p[id],
        })
        .collect();
    out.add_csv("plan.csv", &rows)?;
    let report = CollectionModel::new(&scored.corpus).simulate(&plan, SimulationMode::ExactExpectation)?;
    out.add_json("plan_report.json", &report)
}

#[derive(Serialize)]
struct CostRow<'a> {
    ranking: &'a str,
    budget: usize,
    answers_spent: usize,
    cost_usd: f64,
    worker_hours: f64,
}

#[derive(Serialize)]
struct PlotRow<'a> {
    series: &'a str,
    x: usize,
    y: f64,
}

#[derive(Serialize)]
struct SweepSummary {
    questions: usize,
    max_diversity: usize,
    target_fraction: f64,
    /// Fewest answers reaching the target under the exact expectation.
    answers_to_target: BTreeMap<String, Option<usize>>,
    /// Relative answer saving of ours against status quo at the target.
    saving_vs_status_quo: Option<f64>,
}

fn run_sweep(args: &SweepArgs, seed: u64, out: &mut Outputs) -> Result<()> {
    if args.status_quo_seeds == 0 {
        bail!("--status-quo-seeds must be at least 1");
    }
    let scored = score(&args.input)?;
    let corpus = &scored.corpus;
    let n = corpus.len();
    let counts = AnswerCounts {
        min: args.s,
        max: args.r,
    };
    let budgets: Vec<usize> = if args.budgets.is_empty() {
        let mut b: Vec<usize> = (0..=10).map(|i| i * n / 10).collect();
        b.dedup();
        b
    } else {
        args.budgets.clone()
    };
    let mode = match args.sim {
        SimArg::Exact => SimulationMode::ExactExpectation,
        SimArg::Mc => SimulationMode::MonteCarlo {
            trials: args.trials,
            seed,
        },
    };

    let ids = corpus.question_ids();
    let ours = scored.ranking()?;
    let status_quo: Vec<Ranking> = (0..args.status_quo_seeds as u64)
        .map(|k| status_quo_ranking(&ids, seed.wrapping_add(k)))
        .collect();
    let oracle = oracle_ranking(corpus, counts)?;
    let sets = vec![
        RankingSet::single("ours", ours.clone()),
        RankingSet {
            name: "status_quo".into(),
            rankings: status_quo.clone(),
        },
        RankingSet::single("oracle", oracle.clone()),
    ];
    let rows = sweep(corpus, &sets, &budgets, counts, mode)?;
    out.add_csv("sweep.csv", &rows)?;

    let costs: Vec<CostRow> = rows
        .iter()
        .map(|r| CostRow {
            ranking: &r.ranking,
            budget: r.budget,
            answers_spent: r.answers_spent,
            cost_usd: r.answers_spent as f64 * USD_PER_ANSWER,
            worker_hours: r.answers_spent as f64 * SECONDS_PER_ANSWER / 3600.0,
        })
        .collect();
    out.add_csv("sweep_costs.csv", &costs)?;
    let plot: Vec<PlotRow> = rows
        .iter()
        .map(|r| PlotRow {
            series: &r.ranking,
            x: r.answers_spent,
            y: r.diversity_fraction,
        })
        .collect();
    out.add_csv("sweep_plot.csv", &plot)?;

    let model = CollectionModel::new(corpus);
    let reach = |curve: &[f64]| answers_to_reach(curve, model.max_diversity(), args.target_fraction, n, counts);
    let mut answers_to_target = BTreeMap::new();
    let mut saving = None;
    if corpus.answers_per_question() <= crowd_consensus::allocation::MAX_EXACT_POOL {
        let ours_at = reach(&model.budget_curve(&ours, counts)?);
        let mut mean = vec![0.0; n + 1];
        for r in &status_quo {
            for (m, d) in mean.iter_mut().zip(model.budget_curve(r, counts)?) {
                *m += d / status_quo.len() as f64;
            }
        }
        let sq_at = reach(&mean);
        if let (Some(o), Some(s)) = (ours_at, sq_at) {
            if s > 0 {
                saving = Some(1.0 - o as f64 / s as f64);
            }
        }
        answers_to_target.insert("ours".to_string(), ours_at);
        answers_to_target.insert("status_quo".to_string(), sq_at);
        answers_to_target.insert("oracle".to_string(), reach(&model.budget_curve(&oracle, counts)?));
    }
    out.add_json(
        "sweep_summary.json",
        &SweepSummary {
            questions: n,
            max_diversity: model.max_diversity(),
            target_fraction: args.target_fraction,
            answers_to_target,
            saving_vs_status_quo: saving,
        },
    )
}

fn synth(args: &SynthArgs, seed: u64, out: &mut Outputs) -> Result<()> {
    let config = SyntheticConfig {
        n_questions: args.questions,
        why_fraction: args.why_fraction,
        n_images: args.images,
        seed,
        ..SyntheticConfig::default()
    };
    let corpus = planted_corpus(&config)?;
    let (train, test) = split_corpus(&corpus, args.train_size, seed).context("splitting corpus")?;
    let eligible: BTreeSet<u64> = train.question_ids().into_iter().collect();
    let (noisy_train, swapped) = swap_answer_pools(&train, &eligible, args.noise, seed)?;
    eprintln!("flipped {} training labels", swapped.len());

    let jsonl = |c: &Corpus| -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        c.write_jsonl(&mut buf)?;
        Ok(buf)
    };
    out.add("corpus.jsonl", jsonl(&corpus)?);
    out.add("train.jsonl", jsonl(&noisy_train)?);
    out.add("test.jsonl", jsonl(&test)?);
    let mut features = Vec::new();
    random_image_features(args.images, seed)?.write_csv(&mut features)?;
    out.add("image_features.csv", features);
    Ok(())
}
