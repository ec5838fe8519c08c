//! The `argmine` command line: corpus preparation, pretraining, finetuning,
//! evaluation and analysis driven by an experiment manifest.

pub mod artifact;
pub mod commands;
pub mod data;
pub mod manifest;

use anyhow::Result;
use argmine_core::corpus::Fold;
use argmine_core::evaluation::{DistanceUnit, TokenAccuracy};
use argmine_core::markers::MaskPolicy;
use argmine_core::synthetic::SynthConfig;
use argmine_model::training::Task;
use clap::{Parser, Subcommand, ValueEnum};
use commands::Ctx;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "argmine", version, about = "Argument mining over discussion threads")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TaskArg {
    Aci,
    Rtp,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::Aci => Task::Aci,
            TaskArg::Rtp => Task::Rtp,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PolicyArg {
    Selective,
    Random15,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FoldArg {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum UnitArg {
    Tokens,
    Posts,
    Components,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AnalysisKind {
    Distance,
    MarkerVicinity,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic corpus as post, component and relation records.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        submissions: usize,
        #[arg(long, default_value_t = 2)]
        replies: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Ingest the corpus into labeled threads, split plans and a vocabulary.
    PrepareData {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Write masked copies of the prepared threads.
    Mask {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "selective")]
        policy: PolicyArg,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Continue pretraining the backbone with selective masked LM.
    PretrainSmlm {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Restrict pretraining to the train fold of this split.
        #[arg(long)]
        split: Option<String>,
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Finetune component identification, one run per seed.
    TrainAci(TrainArgs),
    /// Finetune relation type prediction, one run per seed.
    TrainRtp(TrainArgs),
    /// Score a finetuned checkpoint on a split fold.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "80-20")]
        split: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "test")]
        fold: FoldArg,
        /// Count only argumentative tokens in token accuracy.
        #[arg(long)]
        argumentative_accuracy: bool,
    },
    /// Error analysis by relation distance or marker vicinity.
    Analyze {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum)]
        kind: AnalysisKind,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "80-20")]
        split: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 5)]
        window: usize,
        #[arg(long, value_enum, default_value = "tokens")]
        unit: UnitArg,
    },
    /// Print corpus statistics of the prepared data.
    Stats {
        #[arg(long)]
        manifest: PathBuf,
    },
}

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "80-20")]
    pub split: String,
    /// Repeat for several runs; defaults to the manifest seed.
    #[arg(long)]
    pub seed: Vec<u64>,
    /// Backbone checkpoint to start from.
    #[arg(long)]
    pub init: Option<PathBuf>,
}

/// Runs a parsed command and returns what it prints.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Synth { out, submissions, replies, seed } => {
            let cfg = SynthConfig { submissions, replies, seed, ..SynthConfig::default() };
            commands::synth(&out, &cfg)
        }
        Command::PrepareData { manifest } => commands::prepare(&Ctx::new(&manifest)?),
        Command::Mask { manifest, policy, lexicon, seed } => {
            let policy = match policy {
                PolicyArg::Selective => MaskPolicy::Selective,
                PolicyArg::Random15 => MaskPolicy::Random15,
            };
            commands::mask(&Ctx::new(&manifest)?, policy, lexicon.as_deref(), seed)
        }
        Command::PretrainSmlm { manifest, seed, split, init } => {
            commands::pretrain_smlm(&Ctx::new(&manifest)?, seed, split.as_deref(), init.as_deref())
        }
        Command::TrainAci(a) => commands::train(&Ctx::new(&a.manifest)?, Task::Aci, &a.seed, &a.split, a.init.as_deref()),
        Command::TrainRtp(a) => commands::train(&Ctx::new(&a.manifest)?, Task::Rtp, &a.seed, &a.split, a.init.as_deref()),
        Command::Evaluate { manifest, task, checkpoint, split, seed, fold, argumentative_accuracy } => {
            let fold = match fold {
                FoldArg::Train => Fold::Train,
                FoldArg::Test => Fold::Test,
            };
            let acc = if argumentative_accuracy { TokenAccuracy::Argumentative } else { TokenAccuracy::AllTokens };
            commands::evaluate(&Ctx::new(&manifest)?, task.into(), &checkpoint, &split, seed, fold, acc)
        }
        Command::Analyze { manifest, kind, checkpoint, split, seed, window, unit } => {
            let ctx = Ctx::new(&manifest)?;
            match kind {
                AnalysisKind::Distance => {
                    let unit = match unit {
                        UnitArg::Tokens => DistanceUnit::Tokens,
                        UnitArg::Posts => DistanceUnit::Posts,
                        UnitArg::Components => DistanceUnit::Components,
                    };
                    commands::analyze_distance(&ctx, &checkpoint, &split, seed, unit)
                }
                AnalysisKind::MarkerVicinity => commands::analyze_vicinity(&ctx, &checkpoint, &split, seed, window),
            }
        }
        Command::Stats { manifest } => commands::stats(&Ctx::new(&manifest)?),
    }
}
