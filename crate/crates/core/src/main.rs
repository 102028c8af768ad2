use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qhybrid::runner::{self, RunConfig};

#[derive(Parser)]
#[command(
    name = "qhybrid",
    version,
    about = "Hybrid quantum-classical MNIST experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train once with the configured base seed.
    Run(ConfigArgs),
    /// Train the seeded ensemble and write per-run metrics plus the summary.
    Bootstrap(ConfigArgs),
    /// Validate the shot budget of sampled circuit gradients.
    Shotnoise(ConfigArgs),
    /// Recompute the summary of an existing results directory.
    Summarize { results_dir: PathBuf },
}

#[derive(Args)]
struct ConfigArgs {
    config: PathBuf,
    /// Output directory (overrides run.out_dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed (overrides run.base_seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Epoch count (overrides train.epochs).
    #[arg(long)]
    epochs: Option<usize>,
}

impl ConfigArgs {
    fn load(&self) -> qhybrid::Result<RunConfig> {
        let mut config = runner::load_config(&self.config)?;
        if let Some(out) = &self.out {
            config.out_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            config.base_seed = seed;
        }
        if let Some(epochs) = self.epochs {
            config.train.epochs = epochs;
        }
        Ok(config)
    }
}

fn print_summary(s: &runner::BootstrapSummary) {
    println!(
        "runs {} (failed {})  median val acc {:.4}  68% CI [{:.4}, {:.4}]{}",
        s.runs,
        s.failed,
        s.median_val_acc,
        s.ci_low,
        s.ci_high,
        if s.ci_degenerate { " (degenerate)" } else { "" }
    );
    println!("TR90 {:.4}  VR90 {:.4}", s.tr90, s.vr90);
}

fn execute(cli: Cli) -> qhybrid::Result<()> {
    match cli.command {
        Command::Run(args) => {
            let config = args.load()?;
            println!("parameters: {}", config.k_tot);
            let r = runner::run_single(&config)?;
            println!(
                "seed {}  train acc {:.4}  val acc {:.4}  ({:.1}s)",
                r.seed,
                r.final_train_acc,
                r.final_val_acc,
                r.wall_clock.as_secs_f64()
            );
        }
        Command::Bootstrap(args) => {
            let config = args.load()?;
            println!("parameters: {}", config.k_tot);
            let outcome = runner::run_bootstrap(&config)?;
            print_summary(&outcome.summary);
            println!("results in {}", config.out_dir.display());
        }
        Command::Shotnoise(args) => {
            let config = args.load()?;
            let r = runner::run_shotnoise(&config)?;
            println!(
                "bound {}  shots {}  success {}/{} ({:.3})  mean sq error {:.3e}",
                r.sample_bound,
                r.shots,
                r.successes,
                r.trials,
                r.success_fraction(),
                r.mean_squared_error
            );
        }
        Command::Summarize { results_dir } => {
            print_summary(&runner::summarize_dir(&results_dir)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
