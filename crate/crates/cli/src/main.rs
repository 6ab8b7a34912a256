//! `leadae`: ingest, reduce, train, reconstruct and evaluate scores.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use leadae::reduction::{ChordPolicy, SelectionBudget};
use leadae::train::Phase;

#[derive(Parser, Debug)]
#[command(name = "leadae", version = env!("LEADAE_VERSION"), about = "Learned lead-sheet reduction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert MIDI files to score JSON.
    Ingest(IngestArgs),
    /// Skyline reduction of a score JSON.
    Skyline(SkylineArgs),
    /// Train one phase from a directory of score JSON files.
    Train(TrainArgs),
    /// Deterministic learned reduction of one or more scores.
    Reduce(ReduceArgs),
    /// Decode a full score from a lead sheet.
    Reconstruct(ReconstructArgs),
    /// Compare hypotheses or lead sheets against references.
    Eval(EvalArgs),
    /// Run every finite-difference gradient suite.
    Gradcheck(GradcheckArgs),
    /// Generate a synthetic corpus with planted melodies.
    Synth(SynthArgs),
}

#[derive(Args, Debug, Clone)]
pub struct BudgetArgs {
    /// Keep `k` events per onset.
    #[arg(long, conflicts_with = "rho")]
    pub k: Option<u32>,
    /// Keep `ceil(rho * n)` events per onset of `n`.
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long, value_enum)]
    pub chord_policy: Option<PolicyArg>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum PolicyArg {
    Forced,
    Competing,
}

impl BudgetArgs {
    /// The flags applied over `default`. A new mode brings its own default
    /// chord policy unless `--chord-policy` is given.
    pub fn resolve(&self, default: SelectionBudget) -> SelectionBudget {
        let base = match (self.k, self.rho) {
            (Some(k), _) => SelectionBudget::fixed(k),
            (None, Some(r)) => SelectionBudget::fractional(r),
            (None, None) => default,
        };
        match self.chord_policy {
            Some(p) => base.with_policy(p.into()),
            None => base,
        }
    }
}

impl From<PolicyArg> for ChordPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Forced => ChordPolicy::Forced,
            PolicyArg::Competing => ChordPolicy::Competing,
        }
    }
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Merge extracted chord symbols.
    #[arg(long)]
    pub chords: bool,
    /// JSON file with optional `quantization` and `chords` sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Args, Debug)]
pub struct SkylineArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub budget: BudgetArgs,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum PhaseArg {
    Warmstart,
    Joint,
}

impl From<PhaseArg> for Phase {
    fn from(p: PhaseArg) -> Self {
        match p {
            PhaseArg::Warmstart => Phase::Warmstart,
            PhaseArg::Joint => Phase::Joint,
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum)]
    pub phase: PhaseArg,
    /// Best-validation checkpoint path; the epoch log goes beside it.
    #[arg(long)]
    pub out: PathBuf,
    /// Starting checkpoint. Joint training requires one unless
    /// `--from-scratch` is given.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub from_scratch: bool,
    /// JSON file with optional `model` and `train` sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, env = "LEADAE_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub no_augment: bool,
    #[command(flatten)]
    pub budget: BudgetArgs,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Args, Debug)]
pub struct ReduceArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Output file for one input, output directory for several.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub budget: BudgetArgs,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub topk: usize,
    #[arg(long, default_value_t = 1.0)]
    pub temp: f64,
    #[arg(long, env = "LEADAE_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Stop after this many events.
    #[arg(long)]
    pub max_events: Option<usize>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long, required_unless_present = "lead")]
    pub hyp: Option<PathBuf>,
    #[arg(long)]
    pub lead: Option<PathBuf>,
    /// Metrics report JSON; the table always goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long, env = "LEADAE_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// JSON file with an optional `synth` section.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, env = "LEADAE_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub pieces: Option<usize>,
    #[arg(long)]
    pub beats: Option<u32>,
    #[arg(long)]
    pub voices: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error: category=usage message={first}");
            return ExitCode::from(commands::EXIT_USAGE);
        }
    };
    let result = match cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Skyline(a) => commands::skyline(a),
        Command::Train(a) => commands::train(a),
        Command::Reduce(a) => commands::reduce(a),
        Command::Reconstruct(a) => commands::reconstruct(a),
        Command::Eval(a) => commands::eval(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: category={} message={}", e.category, e.message.replace('\n', " "));
            ExitCode::from(e.code)
        }
    }
}
