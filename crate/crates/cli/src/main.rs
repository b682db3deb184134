mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "ccr", version, about = "Crowdsourced CCR speech quality test pipeline")]
pub struct Cli {
    /// Seed for every randomized stage (build falls back to the study config seed, others to 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON file with a study config overriding the one in the study file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file or directory (depends on the subcommand). Defaults to stdout where sensible.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Compile a study into worker manifest, answer key and training block.
    Build {
        #[arg(long)]
        study: PathBuf,
    },
    /// Accept or reject submissions.
    Screen(ScreenArgs),
    /// Correct votes of accepted submissions and aggregate per condition.
    Score(ScoreArgs),
    /// Comparison and reliability statistics.
    #[command(subcommand)]
    Stats(StatsCommand),
    /// Simulate replicated runs with synthetic rater panels.
    Simulate(SimulateArgs),
    /// Summarize score tables into a report with plot-ready tables.
    Report(ReportArgs),
}

#[derive(Args)]
pub struct ScreenArgs {
    #[arg(long)]
    pub study: PathBuf,
    /// Qualification answer keys (test_id,item_id,expected[,pass_threshold]).
    #[arg(long)]
    pub keys: PathBuf,
    /// answer_key.csv written by `build`.
    #[arg(long)]
    pub answer_key: PathBuf,
    /// Submissions as JSON lines.
    #[arg(long)]
    pub subs: PathBuf,
    /// Also write every resolved vote here.
    #[arg(long)]
    pub votes_out: Option<PathBuf>,
    /// Also write the screening summary as JSON here.
    #[arg(long)]
    pub summary_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Orient {
    Raw,
    Degradation,
}

#[derive(Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub screened: PathBuf,
    #[arg(long)]
    pub votes: PathBuf,
    #[arg(long, value_enum, default_value = "raw")]
    pub orient: Orient,
    /// Also write per-stimulus scores here.
    #[arg(long)]
    pub stimulus_out: Option<PathBuf>,
}

#[derive(Subcommand)]
pub enum StatsCommand {
    /// PCC, SRCC, RMSE and linear mapping of b onto a.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// ICC(A,1) and pairwise agreement across runs.
    Icc {
        #[arg(long, num_args = 2.., required = true)]
        runs: Vec<PathBuf>,
    },
    /// Two-way ANOVA over corrected votes, with Bonferroni pairwise tests on factor B.
    Anova {
        #[arg(long)]
        votes: PathBuf,
        /// Study file providing condition factor tags.
        #[arg(long)]
        study: PathBuf,
        #[arg(long)]
        factor_a: String,
        #[arg(long)]
        factor_b: String,
        /// Keep only votes of accepted submissions.
        #[arg(long)]
        screened: Option<PathBuf>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Rank-order deltas between two score tables.
    Rankdelta {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Per-condition dimension scores to correlate with the deltas.
        #[arg(long)]
        dims: Option<PathBuf>,
        #[arg(long, default_value = "score")]
        dim_column: String,
    },
    /// Fraction of pairwise conclusions shared by all runs (inputs: `stats anova` JSON reports).
    Agree {
        #[arg(long, num_args = 2.., required = true)]
        runs: Vec<PathBuf>,
    },
}

#[derive(Args)]
pub struct SimulateArgs {
    /// True scores (condition_id,score).
    #[arg(long = "true")]
    pub true_scores: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub runs: usize,
    #[arg(long, default_value_t = 60)]
    pub raters: usize,
    /// Votes per condition and run.
    #[arg(long, default_value_t = 60)]
    pub votes: usize,
    #[arg(long, default_value_t = 0.7)]
    pub sigma_v: f64,
    #[arg(long, default_value_t = 0.1)]
    pub sigma_b: f64,
    /// Global offset added to the last run.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub last_offset: f64,
}

#[derive(Args)]
pub struct ReportArgs {
    #[arg(long, default_value = "study")]
    pub study_id: String,
    /// Score tables, one per run.
    #[arg(long, num_args = 1.., required = true)]
    pub runs: Vec<PathBuf>,
    /// Reference scores (e.g. laboratory MOS) for the scatter table.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long, default_value = "mos")]
    pub reference_column: String,
    /// Screening summary JSON from `screen --summary-out`.
    #[arg(long)]
    pub screening: Option<PathBuf>,
    /// Scale bounds for the SOS fit.
    #[arg(long, num_args = 2, default_values_t = [-3.0, 3.0], allow_hyphen_values = true)]
    pub bounds: Vec<f64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CCR_LOG", "warn")).init();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
