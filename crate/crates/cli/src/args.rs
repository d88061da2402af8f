use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crowd_consensus::{AblationLayout, CorpusFormat, FeatureMode};

#[derive(Debug, Parser)]
#[command(
    name = "crowd-consensus",
    version,
    about = "Predict crowd answer disagreement and allocate answer budgets"
)]
pub struct Cli {
    /// Directory receiving every output file and run_config.json.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,

    /// Seed for every random choice (forest, status quo orders, Monte Carlo).
    #[arg(long, global = true, env = "CROWD_CONSENSUS_SEED", default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Unique-answer histograms and agreement rates per answer type.
    Analyze(AnalyzeArgs),
    /// Build first/second-word vocabularies from a training corpus.
    Vocab(VocabArgs),
    /// Train a random forest and write the model file.
    Train(TrainArgs),
    /// Score every question of a corpus with a trained model.
    Predict(PredictArgs),
    /// Precision-recall curve and average precision on a labelled corpus.
    Eval(EvalArgs),
    /// Per-question answer counts for one budget.
    Allocate(AllocateArgs),
    /// Captured diversity across budgets for ours, status quo and oracle rankings.
    Sweep(SweepArgs),
    /// Write a seeded synthetic corpus with a planted disagreement signal.
    Synth(SynthArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Analyze(_) => "analyze",
            Command::Vocab(_) => "vocab",
            Command::Train(_) => "train",
            Command::Predict(_) => "predict",
            Command::Eval(_) => "eval",
            Command::Allocate(_) => "allocate",
            Command::Sweep(_) => "sweep",
            Command::Synth(_) => "synth",
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatArg {
    #[value(name = "jsonl")]
    Jsonl,
    #[value(name = "vqa_v1_json", alias = "vqa")]
    VqaV1Json,
}

impl From<FormatArg> for CorpusFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Jsonl => CorpusFormat::Jsonl,
            FormatArg::VqaV1Json => CorpusFormat::VqaV1Json,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Q,
    I,
    Qi,
}

impl From<ModeArg> for FeatureMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Q => FeatureMode::Q,
            ModeArg::I => FeatureMode::I,
            ModeArg::Qi => FeatureMode::QI,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LayoutArg {
    Truncated,
    Zeroed,
}

impl From<LayoutArg> for AblationLayout {
    fn from(l: LayoutArg) -> Self {
        match l {
            LayoutArg::Truncated => AblationLayout::Truncated,
            LayoutArg::Zeroed => AblationLayout::Zeroed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SimArg {
    Exact,
    Mc,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CorpusArgs {
    /// Questions file: JSONL records, or VQA v1 questions JSON.
    #[arg(long)]
    pub corpus: PathBuf,
    /// VQA v1 annotations JSON (required with --format vqa_v1_json).
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Jsonl)]
    pub format: FormatArg,
    #[arg(long, default_value_t = 10)]
    pub answers_per_question: usize,
    /// Drop questions with the wrong number of answers instead of failing.
    #[arg(long)]
    pub skip_malformed: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelInputArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Trained model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Saliency CSV (`image_id,p0..p4`); missing images use a uniform vector.
    #[arg(long)]
    pub image_features: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Agreement thresholds for the histograms.
    #[arg(long = "m", value_delimiter = ',', default_values_t = vec![1usize, 2, 3])]
    pub m: Vec<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VocabArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub image_features: Option<PathBuf>,
    /// Output model path (default: <out-dir>/model.json).
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ModeArg::Qi)]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value_t = LayoutArg::Truncated)]
    pub layout: LayoutArg,
    #[arg(long, default_value_t = 25)]
    pub trees: usize,
    /// Features tried per split (default: ceil(sqrt(dimension))).
    #[arg(long)]
    pub features_per_split: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub min_leaf_size: usize,
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// Build trees one after another instead of in parallel.
    #[arg(long)]
    pub serial: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PredictArgs {
    #[command(flatten)]
    pub input: ModelInputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[command(flatten)]
    pub input: ModelInputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AllocateArgs {
    #[command(flatten)]
    pub input: ModelInputArgs,
    /// Number of questions receiving the maximum answer count.
    #[arg(long)]
    pub budget: usize,
    #[arg(long = "s", default_value_t = 1)]
    pub s: usize,
    #[arg(long = "r", default_value_t = 5)]
    pub r: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: ModelInputArgs,
    /// Budgets to evaluate (default: 0, N/10, ..., N).
    #[arg(long, value_delimiter = ',')]
    pub budgets: Vec<usize>,
    #[arg(long = "s", default_value_t = 1)]
    pub s: usize,
    #[arg(long = "r", default_value_t = 5)]
    pub r: usize,
    #[arg(long, value_enum, default_value_t = SimArg::Exact)]
    pub sim: SimArg,
    /// Monte Carlo trials per question (with --sim mc).
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    /// Number of random status-quo orders averaged.
    #[arg(long, default_value_t = 10)]
    pub status_quo_seeds: usize,
    /// Diversity fraction for the answers-needed summary.
    #[arg(long, default_value_t = 0.7)]
    pub target_fraction: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    pub questions: usize,
    #[arg(long, default_value_t = 0.5)]
    pub why_fraction: f64,
    /// Questions written to train.jsonl; the rest go to test.jsonl.
    #[arg(long, default_value_t = 1500)]
    pub train_size: usize,
    /// Share of training questions whose labels are flipped by swapping answer pools.
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 400)]
    pub images: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_flags_parse() {
        let cli = Cli::try_parse_from([
            "crowd-consensus",
            "--seed",
            "4",
            "sweep",
            "--corpus",
            "c.jsonl",
            "--model",
            "m.json",
            "--budgets",
            "0,10,20",
            "--sim",
            "mc",
            "--trials",
            "50",
            "--s",
            "2",
            "--r",
            "6",
        ])
        .unwrap();
        assert_eq!(cli.seed, 4);
        let Command::Sweep(args) = cli.command else {
            panic!("expected sweep")
        };
        assert_eq!(args.budgets, vec![0, 10, 20]);
        assert_eq!(args.sim, SimArg::Mc);
        assert_eq!((args.s, args.r, args.trials, args.status_quo_seeds), (2, 6, 50, 10));
    }

    #[test]
    fn mode_and_format_names() {
        let cli = Cli::try_parse_from([
            "crowd-consensus",
            "train",
            "--corpus",
            "q.json",
            "--annotations",
            "a.json",
            "--format",
            "vqa_v1_json",
            "--mode",
            "q",
        ])
        .unwrap();
        let Command::Train(args) = cli.command else {
            panic!("expected train")
        };
        assert_eq!(FeatureMode::from(args.mode), FeatureMode::Q);
        assert_eq!(CorpusFormat::from(args.corpus.format), CorpusFormat::VqaV1Json);
        assert_eq!(args.trees, 25);
        assert!(Cli::try_parse_from(["crowd-consensus", "train", "--corpus", "x", "--mode", "q+i"]).is_err());
    }

    #[test]
    fn analyze_defaults_to_three_thresholds() {
        let cli = Cli::try_parse_from(["crowd-consensus", "analyze", "--corpus", "c.jsonl"]).unwrap();
        let Command::Analyze(args) = cli.command else {
            panic!("expected analyze")
        };
        assert_eq!(args.m, vec![1, 2, 3]);
        assert_eq!(cli.out_dir, PathBuf::from("."));
    }
}
