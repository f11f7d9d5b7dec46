// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use persuasion_probe::analysis::{Clause, OutcomeFilter};
use persuasion_probe::{Outcome, Task, WindowPolicy};

#[derive(Debug, Parser)]
#[command(
    name = "pprobe",
    version,
    about = "Train, evaluate and analyze linear probes over conversation activations"
)]
pub struct Cli {
    /// Run file of key=value lines supplying any long flag; explicit flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a probe and write it with its loss curve and a summary.
    Train(TrainArgs),
    /// Apply probes per turn and report AUROC, trait MSE or strategy JSD curves.
    Eval(EvalArgs),
    /// Cohen's kappa between two label columns of a CSV file.
    Kappa(KappaArgs),
    /// Flag conversations from trait-probe trajectories with a threshold rule.
    Detect(DetectArgs),
    /// Correlate persuader strategy scores with persuadee trait scores.
    Correlate(CorrelateArgs),
    /// Share of utterances per semantic label that the probe calls persuasive.
    Calibrate(CalibrateArgs),
    /// Knock-one-out word attributions from ablation bundles.
    AblateReport(AblateArgs),
    /// Train one probe per layer and report held-out accuracy.
    LayerSweep(SweepArgs),
    /// Print the header and spans of activation bundles.
    BundleInfo(InfoArgs),
}

/// Where the corpus lives.
#[derive(Debug, Args)]
pub struct Inputs {
    /// Transcript corpus, one JSON conversation per line.
    #[arg(long, value_name = "FILE")]
    pub transcripts: PathBuf,

    /// Directory of <conversation_id>.L<layer>[.abl<word>].ppab bundles.
    #[arg(long, value_name = "DIR")]
    pub bundles: PathBuf,

    /// Layer to read when the directory holds several.
    #[arg(long)]
    pub layer: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Debug, Args)]
pub struct Hyper {
    /// Step size.
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,

    #[arg(long, value_enum, default_value_t = OptimizerKind::Adam)]
    pub optimizer: OptimizerKind,

    #[arg(long, default_value_t = 200)]
    pub epochs: usize,

    /// Mini-batch size; full batch when omitted.
    #[arg(long)]
    pub batch_size: Option<usize>,

    /// L2 penalty on the weights.
    #[arg(long, default_value_t = 0.0)]
    pub l2: f64,

    /// Seed for shuffling and the train/test split.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse()
        .map_err(|e: persuasion_probe::Error| e.to_string())
}

fn parse_policy(s: &str) -> Result<WindowPolicy, String> {
    s.parse()
        .map_err(|e: persuasion_probe::Error| e.to_string())
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if (0.0..1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1)"))
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub inputs: Inputs,

    /// persuasion, strategy, or trait:<name>.
    #[arg(long, value_parser = parse_task)]
    pub task: Task,

    /// context, context:K, no-context, no-context:T, or hold:H.
    #[arg(long, value_parser = parse_policy, default_value = "context")]
    pub policy: WindowPolicy,

    #[command(flatten)]
    pub hyper: Hyper,

    /// Fraction of conversations held out for a test accuracy.
    #[arg(long, value_parser = parse_fraction, default_value_t = 0.0)]
    pub holdout: f64,

    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GranularityArg {
    Turn,
    Token,
    ConversationEnd,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub inputs: Inputs,

    /// Probe file; repeat for several.
    #[arg(long, value_name = "FILE", action = clap::ArgAction::Append, required = true)]
    pub probe: Vec<PathBuf>,

    /// Require every probe to be for this task.
    #[arg(long, value_parser = parse_task)]
    pub task: Option<Task>,

    /// Granularity of the written trajectories; curves always use turns.
    #[arg(long, value_enum, default_value_t = GranularityArg::Turn)]
    pub granularity: GranularityArg,

    /// Reference strategy trajectories (CSV) for the JSD curve.
    #[arg(long, value_name = "FILE")]
    pub reference: Option<PathBuf>,

    /// Decision threshold for the classification report.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,

    /// Evaluate only the conversations a `train --holdout` run held out.
    #[arg(long, value_parser = parse_fraction, default_value_t = 0.0)]
    pub holdout: f64,

    /// Seed of the split selected by --holdout.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct KappaArgs {
    /// CSV file with a header row.
    #[arg(long, value_name = "FILE")]
    pub labels: PathBuf,

    /// Two column names, comma-separated; the first two columns by default.
    #[arg(long, value_name = "A,B")]
    pub columns: Option<String>,

    /// Also write kappa.json here.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleKind {
    /// Low agreeableness or high neuroticism flags unpersuasion.
    Unpersuasion,
    /// High agreeableness or low neuroticism flags persuasion.
    Persuasion,
}

fn parse_clause(s: &str) -> Result<Clause, String> {
    s.parse()
        .map_err(|e: persuasion_probe::Error| e.to_string())
}

fn parse_outcome(s: &str) -> Result<Outcome, String> {
    s.parse()
        .map_err(|e: persuasion_probe::Error| e.to_string())
}

fn parse_filter(s: &str) -> Result<OutcomeFilter, String> {
    s.parse()
        .map_err(|e: persuasion_probe::Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub inputs: Inputs,

    /// The five trait probes.
    #[arg(long, value_name = "FILE", action = clap::ArgAction::Append, required = true)]
    pub probe: Vec<PathBuf>,

    #[arg(long, value_enum, default_value_t = RuleKind::Unpersuasion)]
    pub rule: RuleKind,

    /// Custom clause such as agreeableness<0.2; repeat to OR several. Replaces --rule.
    #[arg(long, value_parser = parse_clause, action = clap::ArgAction::Append, requires = "positive_class")]
    pub clause: Vec<Clause>,

    /// Outcome that custom clauses flag.
    #[arg(long, value_parser = parse_outcome)]
    pub positive_class: Option<Outcome>,

    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    #[command(flatten)]
    pub inputs: Inputs,

    /// The strategy probe and the five trait probes.
    #[arg(long, value_name = "FILE", action = clap::ArgAction::Append, required = true)]
    pub probe: Vec<PathBuf>,

    /// persuaded, unpersuaded, or all.
    #[arg(long, value_parser = parse_filter, default_value = "persuaded")]
    pub outcome: OutcomeFilter,

    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub inputs: Inputs,

    /// Persuasion probe.
    #[arg(long, value_name = "FILE")]
    pub probe: PathBuf,

    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub inputs: Inputs,

    /// Binary probe (persuasion or a trait).
    #[arg(long, value_name = "FILE")]
    pub probe: PathBuf,

    /// Limit to these conversations; all with ablation bundles by default.
    #[arg(long, value_name = "ID", action = clap::ArgAction::Append)]
    pub conversation: Vec<String>,

    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Transcript corpus, one JSON conversation per line.
    #[arg(long, value_name = "FILE")]
    pub transcripts: PathBuf,

    /// Directory of bundles at one or more layers.
    #[arg(long, value_name = "DIR")]
    pub bundles: PathBuf,

    #[arg(long, value_parser = parse_task)]
    pub task: Task,

    #[arg(long, value_parser = parse_policy, default_value = "context")]
    pub policy: WindowPolicy,

    #[command(flatten)]
    pub hyper: Hyper,

    /// Fraction of conversations held out per layer.
    #[arg(long, value_parser = parse_fraction, default_value_t = 0.2)]
    pub holdout: f64,

    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InfoArgs {
    /// A .ppab file or a directory of them.
    #[arg(long, value_name = "PATH")]
    pub bundles: PathBuf,

    /// Write bundle_info.csv here instead of printing JSON lines.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}
