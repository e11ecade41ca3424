use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dstfs::cli::{self, ConfigFile, FlopsArgs, SyntheticArgs};
use dstfs::dst::Strategy;
use dstfs::Result;

#[derive(Parser)]
#[command(
    name = "dstfs",
    version,
    about = "Feature selection with sparse neural networks"
)]
struct Cli {
    /// Output directory (overrides `output_dir` in the config and `DSTFS_OUTPUT_DIR`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML experiment configuration.
    #[arg(long, short)]
    config: PathBuf,
    /// Override a configuration key, e.g. `--set max_epochs=20`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one network and export its checkpoint, topology log and importance scores.
    Train(ConfigArgs),
    /// Grid search, top-K selection and downstream evaluation.
    Select(ConfigArgs),
    /// Downstream accuracy of a feature list (one index per line).
    Evaluate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        features: PathBuf,
    },
    /// Coverage benchmark on synthetic data.
    Benchmark(ConfigArgs),
    /// Generate a synthetic dataset as CSV.
    Synthetic {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 200)]
        features: usize,
        #[arg(long, default_value_t = 100)]
        informative: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Analytic training cost estimate.
    Flops {
        /// Layer widths, e.g. `784,1000,100,10`.
        #[arg(long, value_delimiter = ',', required = true)]
        shape: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0,0.5,0.8,0.9,0.95,0.98")]
        sparsity: Vec<f64>,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        #[arg(long)]
        samples: usize,
        #[arg(long, value_enum, default_value = "set")]
        strategy: StrategyArg,
        #[arg(long, default_value_t = 100)]
        batch_size: usize,
    },
    /// Render per-feature scores as a grayscale image.
    Heatmap {
        /// CSV with a `score` column, e.g. an exported `importance.csv`.
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        height: usize,
        #[arg(long)]
        width: usize,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum StrategyArg {
    Set,
    Rigl,
    None,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Set => Strategy::Set,
            StrategyArg::Rigl => Strategy::RigL,
            StrategyArg::None => Strategy::None,
        }
    }
}

fn load(args: &ConfigArgs) -> Result<ConfigFile> {
    ConfigFile::load(&args.config, &args.overrides)
}

fn run(cli: Cli) -> Result<()> {
    let out = cli.out.as_deref();
    match cli.command {
        Command::Train(args) => {
            let cfg = load(&args)?;
            let dir = cli::resolve_output_dir(out, Some(&cfg));
            cli::cmd_train(&cfg, &dir)?;
            println!("wrote {}", dir.display());
        }
        Command::Select(args) => {
            let cfg = load(&args)?;
            let dir = cli::resolve_output_dir(out, Some(&cfg));
            let result = cli::cmd_select(&cfg, &dir)?;
            println!(
                "{} P={} l2={} accuracy {}",
                result.baseline,
                result.chosen_sparsity,
                result.chosen_l2,
                result.table_cell()
            );
        }
        Command::Evaluate { config, features } => {
            let cfg = load(&config)?;
            let dir = cli::resolve_output_dir(out, Some(&cfg));
            let s = cli::cmd_evaluate(&cfg, &features, &dir)?;
            println!("accuracy {:.4} +- {:.4}", s.mean, s.std);
        }
        Command::Benchmark(args) => {
            let cfg = load(&args)?;
            let dir = cli::resolve_output_dir(out, Some(&cfg));
            let report = cli::cmd_benchmark(&cfg, &dir)?;
            for (b, n, m) in report.mean_coverage() {
                println!("{b:<12} n={n:<6} coverage {m:.3}");
            }
        }
        Command::Synthetic {
            samples,
            features,
            informative,
            seed,
        } => {
            let dir = cli::resolve_output_dir(out, None);
            cli::cmd_synthetic(
                &SyntheticArgs {
                    samples,
                    features,
                    informative,
                    seed,
                },
                &dir,
            )?;
            println!("wrote {}", dir.join("synthetic.csv").display());
        }
        Command::Flops {
            shape,
            sparsity,
            epochs,
            samples,
            strategy,
            batch_size,
        } => {
            let dir = cli::resolve_output_dir(out, None);
            let args = FlopsArgs {
                shape,
                sparsity,
                epochs,
                samples,
                strategy: strategy.into(),
                batch_size,
            };
            print!("{}", cli::cmd_flops(&args, &dir)?);
        }
        Command::Heatmap {
            scores,
            height,
            width,
        } => {
            let dir = cli::resolve_output_dir(out, None);
            cli::cmd_heatmap(&scores, height, width, &dir)?;
            println!("wrote {}", dir.join("heatmap.pgm").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
