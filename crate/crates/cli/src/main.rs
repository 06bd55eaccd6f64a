//! `cbm-fair` command line.
//!
//! Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric failure.

mod commands;
mod util;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cbm_fair::adversarial::AdvConfig;
use cbm_fair::explain::RemovalSource;
use cbm_fair::fairness::FairnessConfig;
use cbm_fair::heads::{F1Average, TrainConfig};

#[derive(Parser, Debug)]
#[command(name = "cbm-fair", version, about = "Concept bottleneck heads and leakage-based fairness metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a labeled dataset from image embeddings and per-image metadata.
    Ingest(IngestArgs),
    /// Run the four concept filters.
    FilterConcepts(FilterArgs),
    /// Cosine concept activations, optionally top-k filtered and quantized.
    Activations(ActivationArgs),
    /// Train a sparse concept head (from activations) or a dense head (from embeddings).
    Train(TrainArgs),
    /// Predict every row and score one split.
    Eval(EvalArgs),
    /// Leakage and bias amplification of a prediction file.
    Fairness(FairnessArgs),
    /// Hyperparameter grid to CSV, resumable.
    Sweep(SweepArgs),
    /// Train a head against a gender adversary and compare with a plain head.
    DebiasAdv(DebiasArgs),
    /// Rank concepts by gender-head weight.
    RankBias(RankArgs),
    /// Fairness before and after zeroing concepts at inference.
    RemoveEval(RemoveArgs),
    /// Class-averaged contribution shifts between two heads.
    ShiftReport(ShiftArgs),
    /// Largest concept contributions for one image.
    ExplainImage(ExplainArgs),
    /// Synthetic activations with planted class and gender-proxy concepts.
    Synth(SynthArgs),
    /// Tradeoff scatter of a sweep CSV as SVG.
    Plot(PlotArgs),
}

/// Head training flags. Each overrides the config file value.
#[derive(Args, Debug, Default)]
struct TrainFlags {
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long = "lr")]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Early-stopping patience in epochs on test-split accuracy.
    #[arg(long, conflicts_with = "no_early_stop")]
    patience: Option<usize>,
    #[arg(long)]
    no_early_stop: bool,
}

impl TrainFlags {
    fn apply(&self, c: &mut TrainConfig) {
        set(&mut c.lambda, self.lambda);
        set(&mut c.alpha, self.alpha);
        set(&mut c.learning_rate, self.learning_rate);
        set(&mut c.batch_size, self.batch_size);
        set(&mut c.epochs, self.epochs);
        if self.patience.is_some() {
            c.patience = self.patience;
        }
        if self.no_early_stop {
            c.patience = None;
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum F1Arg {
    Micro,
    Macro,
}

#[derive(Args, Debug, Default)]
struct FairnessFlags {
    /// Perturbation runs averaged into the amplification figure.
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long, value_enum)]
    f1: Option<F1Arg>,
    #[arg(long)]
    attacker_iterations: Option<usize>,
}

impl FairnessFlags {
    fn apply(&self, c: &mut FairnessConfig) {
        set(&mut c.n_runs, self.runs);
        if let Some(f) = self.f1 {
            c.f1_average = match f {
                F1Arg::Micro => F1Average::Micro,
                F1Arg::Macro => F1Average::Macro,
            };
        }
        set(&mut c.attacker.iterations, self.attacker_iterations);
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

#[derive(Args, Debug)]
struct IngestArgs {
    /// JSON object: image id -> {"agent", "verb", optional "split"}.
    #[arg(long)]
    metadata: PathBuf,
    /// Image embeddings (.cbmf, row ids = image ids).
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// {"male": [...], "female": [...]} token lists.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n_classes: Option<usize>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the ingest report here as well as to stdout.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FilterArgs {
    /// Concept text embeddings (.cbmf, row ids = concept names).
    #[arg(long)]
    concepts: PathBuf,
    /// Class-name text embeddings (.cbmf).
    #[arg(long)]
    classes: PathBuf,
    /// Image embeddings or dataset (.cbmf).
    #[arg(long)]
    images: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    class_sim: Option<f64>,
    #[arg(long)]
    concept_sim: Option<f64>,
    #[arg(long)]
    cutoff: Option<f64>,
}

#[derive(Args, Debug)]
struct ActivationArgs {
    /// Dataset or image embeddings (.cbmf).
    #[arg(long)]
    images: PathBuf,
    #[arg(long)]
    concepts: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Labels providing the train split for quantizer statistics, when
    /// `--images` is not a dataset.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    topk: Option<usize>,
    #[arg(long)]
    quantize_step: Option<f64>,
    /// Apply top-k before quantization.
    #[arg(long)]
    topk_first: bool,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("input").required(true).args(["acts", "embeddings"]))]
struct TrainArgs {
    /// Concept activations: trains the sparse concept head.
    #[arg(long)]
    acts: Option<PathBuf>,
    /// Dataset with image embeddings: trains the dense head.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Labels (dataset .cbmf or labels .json). Defaults to the
    /// `--embeddings` dataset.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
enum SplitArg {
    Train,
    Test,
    All,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("model").required(true).args(["head", "zero_shot"]))]
struct EvalArgs {
    #[arg(long)]
    head: Option<PathBuf>,
    /// Class-name text embeddings: zero-shot prediction from `--embeddings`.
    #[arg(long)]
    zero_shot: Option<PathBuf>,
    #[arg(long)]
    acts: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Concept heads only: score each class with its N largest concept
    /// contributions, leaving the activations untouched.
    #[arg(long, value_name = "N")]
    test_time_topk: Option<usize>,
}

#[derive(Args, Debug)]
struct FairnessArgs {
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed of the perturbation runs.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    fairness: FairnessFlags,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    acts: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// CSV output; existing setting ids are skipped.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    cutoffs: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    ks: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Top-k points without quantization only.
    #[arg(long)]
    no_quantize: bool,
    #[command(flatten)]
    train: TrainFlags,
    #[command(flatten)]
    fairness: FairnessFlags,
}

#[derive(Args, Debug)]
struct DebiasArgs {
    #[arg(long)]
    acts: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Debiased head.
    #[arg(long)]
    out: PathBuf,
    /// Before/after fairness and contribution shifts as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Contribution shifts as CSV.
    #[arg(long)]
    shifts_csv: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    adv_lr: Option<f64>,
    #[arg(long)]
    adv_steps: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    /// Group shifts by ground-truth class instead of predicted class.
    #[arg(long)]
    truth: bool,
    #[command(flatten)]
    train: TrainFlags,
    #[command(flatten)]
    fairness: FairnessFlags,
}

#[derive(Args, Debug)]
struct RankArgs {
    #[arg(long)]
    acts: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write the gender head.
    #[arg(long)]
    head_out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Concepts printed per gender.
    #[arg(long, default_value_t = 10)]
    show: usize,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SourceArg {
    Interleave,
    Male,
    Female,
}

impl From<SourceArg> for RemovalSource {
    fn from(s: SourceArg) -> Self {
        match s {
            SourceArg::Interleave => RemovalSource::Interleave,
            SourceArg::Male => RemovalSource::Male,
            SourceArg::Female => RemovalSource::Female,
        }
    }
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("selection").required(true).args(["ranking", "ratings"]))]
struct RemoveArgs {
    #[arg(long)]
    head: PathBuf,
    #[arg(long)]
    acts: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Ranking JSON from `rank-bias`.
    #[arg(long)]
    ranking: Option<PathBuf>,
    /// JSON list of {"concept", "bias_score"}.
    #[arg(long)]
    ratings: Option<PathBuf>,
    /// Number of concepts to zero.
    #[arg(long)]
    n: usize,
    #[arg(long, value_enum, default_value = "interleave")]
    source: SourceArg,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    fairness: FairnessFlags,
}

#[derive(Args, Debug)]
struct ShiftArgs {
    #[arg(long)]
    before: PathBuf,
    #[arg(long)]
    after: PathBuf,
    #[arg(long)]
    acts: PathBuf,
    /// Group by ground-truth class from these labels.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExplainArgs {
    #[arg(long)]
    head: PathBuf,
    #[arg(long)]
    acts: PathBuf,
    /// Row id of the image.
    #[arg(long)]
    image: String,
    /// Class index; defaults to the predicted class.
    #[arg(long)]
    class: Option<usize>,
    #[arg(long, default_value_t = cbm_fair::explain::DEFAULT_REPORT_TOP)]
    top: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Activations (.cbmf).
    #[arg(long)]
    out: PathBuf,
    /// Labels JSON.
    #[arg(long)]
    labels_out: PathBuf,
    /// Companion image-embedding dataset (.cbmf).
    #[arg(long)]
    dataset_out: Option<PathBuf>,
    /// Companion concept embeddings (.cbmf).
    #[arg(long)]
    concepts_out: Option<PathBuf>,
    /// Companion class embeddings (.cbmf).
    #[arg(long)]
    classes_out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_images: Option<usize>,
    #[arg(long)]
    n_classes: Option<usize>,
    #[arg(long)]
    n_concepts: Option<usize>,
    #[arg(long)]
    signal: Option<usize>,
    #[arg(long)]
    proxy: Option<usize>,
    /// Proxy strength in [0, 1].
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    noise_std: Option<f64>,
    /// Draw per-class male ratios uniformly from LO,HI.
    #[arg(long, value_delimiter = ',', value_name = "LO,HI")]
    ratio_range: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
struct PlotArgs {
    #[arg(long)]
    sweep: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// Adversarial training config as read from `--config`.
#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DebiasConfig {
    adversarial: AdvConfig,
    fairness: FairnessConfig,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(util::exit_code(&e))
        }
    }
}
