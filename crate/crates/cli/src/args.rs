use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tkg_core::data::Split;

#[derive(Debug, Parser)]
#[command(name = "tkgx", version, about = "Temporal knowledge graph extrapolation experiments")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

/// Configuration sources, applied in order: preset, file, `--set`, flags.
#[derive(Debug, Args)]
pub struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Built-in hyperparameters: icews14s, icews18, icews05-15, gdelt or synthetic.
    #[arg(long, global = true)]
    pub dataset_preset: Option<String>,
    #[arg(long, global = true, env = "TKGX_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    #[arg(long, global = true, env = "TKGX_SEED")]
    pub seed: Option<u64>,
    /// Ablation tag(s) joined with `+`, e.g. `no-inv` or `simple-dyn+no-inv`.
    #[arg(long, global = true)]
    pub variant: Option<String>,
    /// Override one configuration key. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Valid,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Valid => Split::Valid,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mine temporal rules from the training split.
    MineRules {
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the invariance and dynamics subgraphs of every query timestamp.
    BuildGraphs {
        #[arg(long)]
        out: PathBuf,
        /// Rule file; mined from the training split when absent.
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Train with early stopping; writes the best checkpoint and logs.
    Train {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        rules: Option<PathBuf>,
    },
    /// Evaluate a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Directory for the report, ranks and manifest.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and test several variants from the same seed.
    Ablate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Comma-separated variant tags.
        #[arg(long, value_delimiter = ',', default_value = "full,no-dyn,no-inv,no-coa,no-red,no-coa-red,no-te,cos-te")]
        variants: Vec<String>,
    },
    /// Re-evaluate a checkpoint with Gaussian noise on the entity embeddings.
    Robustness {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4,0.5")]
        levels: Vec<f64>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic dataset with planted recurrence rules.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub entities: usize,
    #[arg(long, default_value_t = 5)]
    pub relations: usize,
    #[arg(long, default_value_t = 60)]
    pub timestamps: usize,
    /// `BODY,HEAD,PERIOD,LAG`. Repeatable.
    #[arg(long = "rule", value_name = "RULE", default_value = "3,4,2,2")]
    pub rules: Vec<String>,
    /// Probability that a rule body is not followed by its head.
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    /// Steps between partner reshuffles.
    #[arg(long, default_value_t = 20)]
    pub episode: u32,
    #[arg(long, default_value_t = 0.1)]
    pub background: f64,
    #[arg(long, default_value_t = 0.1)]
    pub valid_fraction: f64,
    #[arg(long, default_value_t = 0.1)]
    pub test_fraction: f64,
    /// Generator seed (independent of the training seed).
    #[arg(long, default_value_t = 7)]
    pub data_seed: u64,
}
