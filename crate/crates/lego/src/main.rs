use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lego::cli::{run, Command, RunOptions};

#[derive(Parser)]
#[command(
    name = "lego",
    about = "Modular content-based recommendation: compose content operators, behavior operators, and click predictors; train, evaluate through the caching pipeline, and benchmark."
)]
struct Cli {
    #[command(subcommand)]
    command: Commands,
}

#[derive(Args)]
struct CommonArgs {
    /// Config files, merged in order (later files shadow earlier ones).
    #[arg(long = "config", required = true, num_args = 1..)]
    config: Vec<PathBuf>,
    /// Dotted-path overrides, e.g. --set train.lr=0.01
    #[arg(long = "set")]
    set: Vec<String>,
    /// Training mode; `split` freezes lower encoder layers (see --layer).
    #[arg(long)]
    mode: Option<String>,
    /// With --mode split: freeze transformer layers below this index.
    #[arg(long)]
    layer: Option<usize>,
    /// Override train.seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Evaluate without the content/behavior cachers (full recompute).
    #[arg(long = "no-cache")]
    no_cache: bool,
    /// Restore parameters from a checkpoint before evaluating.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Report global (pooled) AUC as the headline metric.
    #[arg(long = "global-auc")]
    global_auc: bool,
}

#[derive(Subcommand)]
enum Commands {
    /// Materialize the configured dataset source into tri-tables.
    Prepare(CommonArgs),
    /// Train the configured model with dev-based early stopping.
    Train(CommonArgs),
    /// Score a split and report grouped AUC / MRR / NDCG.
    Evaluate(EvalArgs),
    /// Measure cached vs uncached inference wall-clock.
    Benchmark(EvalArgs),
    /// Smoke-test every registered component composition.
    Grid(CommonArgs),
}

fn to_options(common: &CommonArgs) -> RunOptions {
    RunOptions {
        config_files: common.config.clone(),
        overrides: common.set.clone(),
        mode: common.mode.clone(),
        layer: common.layer,
        seed: common.seed,
        ..RunOptions::default()
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, opts) = match &cli.command {
        Commands::Prepare(c) => (Command::Prepare, to_options(c)),
        Commands::Train(c) => (Command::Train, to_options(c)),
        Commands::Evaluate(e) => {
            let mut o = to_options(&e.common);
            o.no_cache = e.no_cache;
            o.checkpoint = e.checkpoint.clone();
            o.global_auc = e.global_auc;
            (Command::Evaluate, o)
        }
        Commands::Benchmark(e) => {
            let mut o = to_options(&e.common);
            o.no_cache = e.no_cache;
            o.checkpoint = e.checkpoint.clone();
            (Command::Benchmark, o)
        }
        Commands::Grid(c) => (Command::Grid, to_options(c)),
    };

    match run(command, &opts) {
        Ok(artifacts) => {
            print!("{}", artifacts.summary);
            println!("artifacts: {}", artifacts.out_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
