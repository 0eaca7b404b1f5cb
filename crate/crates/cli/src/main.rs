use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gisbo::bridge::echo::{serve_stdio, EchoOptions, Outcome};
use gisbo::stats::Alternative;
use gisbo_cli::commands::{cmd_ablate, cmd_list_problems, cmd_plot, cmd_rank, cmd_run, GlobalOpts, PlotMode};
use gisbo_cli::config::AblateKind;
use gisbo_cli::CliError;

#[derive(Parser)]
#[command(name = "gisbo", version, about = "Gradient-informed subspace Bayesian optimization experiments")]
struct Cli {
    /// Worker threads for trial-level parallelism (0 = one per core).
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Replace existing results in the output directory.
    #[arg(long, global = true)]
    overwrite: bool,
    /// Added to every configured trial seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed_offset: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum AltArg {
    TwoSided,
    Greater,
    Less,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (algorithm, problem, seed) trial of a config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Sweep one knob of the gradient-informed loop and rank the arms.
    Ablate {
        #[arg(value_enum)]
        kind: AblateKind,
        #[arg(long)]
        config: PathBuf,
    },
    /// Rank algorithms over the trace CSVs in a results directory.
    Rank {
        results_dir: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, value_enum, default_value_t = AltArg::TwoSided)]
        alternative: AltArg,
    },
    /// Write SVG convergence charts for a results directory.
    Plot {
        results_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = PlotMode::RegretVsIter)]
        mode: PlotMode,
    },
    /// Print the benchmark catalog as JSON.
    ListProblems,
    /// Serve the bridge protocol stub on stdin/stdout.
    ServeEcho {
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        args: Vec<String>,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let opts = GlobalOpts {
        jobs: cli.jobs,
        overwrite: cli.overwrite,
        seed_offset: cli.seed_offset,
    };
    match cli.command {
        Command::Run { config } => {
            let ids = cmd_run(&config, opts)?;
            eprintln!("{} trials written", ids.len());
        }
        Command::Ablate { kind, config } => {
            let ids = cmd_ablate(kind, &config, opts)?;
            eprintln!("{} trials written", ids.len());
        }
        Command::Rank {
            results_dir,
            alpha,
            alternative,
        } => {
            let alt = match alternative {
                AltArg::TwoSided => Alternative::TwoSided,
                AltArg::Greater => Alternative::Greater,
                AltArg::Less => Alternative::Less,
            };
            let report = cmd_rank(&results_dir, alpha, alt)?;
            print!("{}", report.to_markdown());
        }
        Command::Plot { results_dir, mode } => {
            let out = cmd_plot(&results_dir, mode)?;
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            for f in &out.files {
                println!("{}", f.display());
            }
        }
        Command::ListProblems => println!("{}", cmd_list_problems()),
        Command::ServeEcho { args } => {
            let opts = EchoOptions::from_args(args).map_err(CliError::Config)?;
            match serve_stdio(&opts)? {
                Outcome::Crashed => std::process::exit(101),
                Outcome::Shutdown | Outcome::Eof => {}
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Missing(cells) = &e {
                for c in cells {
                    eprintln!("  missing: algorithm={} problem={} seed={}", c.algorithm, c.problem, c.seed);
                }
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
