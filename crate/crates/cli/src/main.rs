use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use moka_cli::bench::{self, BenchOptions};
use moka_cli::verify::{self, VerifyOptions};
use moka_cli::{count, train, CliError};

#[derive(Parser)]
#[command(name = "moka", version, about = "Gated Kronecker adapter toolkit")]
struct Cli {
    /// Make every output byte-identical across reruns (timings are zeroed).
    #[arg(long, global = true)]
    reproducible: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run oracle, gradient and property suites.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated maximum factor dimensions.
        #[arg(long, default_value = "2,4,8,16")]
        sizes: String,
        /// Perturb the factor gradient to prove the checks catch it.
        #[arg(long)]
        inject_bug: bool,
    },
    /// Count trainable parameters of a preset or a model file.
    Count {
        /// `llama2-7b`, `llama3-8b` or a model file path.
        #[arg(long)]
        model: String,
        /// `moka`, `moka_s` or `moka_s-qonly`.
        #[arg(long)]
        variant: Option<String>,
    },
    /// Train on a configured task; writes train.csv and bound.json.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Time reformulated against explicit application.
    Bench {
        /// Comma-separated `A:B` factor shapes, e.g. `64x64:64x64`.
        #[arg(long, default_value = bench::DEFAULT_SHAPES)]
        shapes: String,
        #[arg(long, default_value_t = bench::DEFAULT_REPEATS)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Entry cap for the materialized matrix.
        #[arg(long, default_value_t = moka_core::dense::DEFAULT_EXPLICIT_CAP)]
        cap: usize,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Verify { seed, sizes, inject_bug } => {
            let opts = VerifyOptions {
                seed,
                sizes: verify::parse_sizes(&sizes)?,
                inject_bug,
            };
            verify::cmd_verify(&opts, &mut out)
        }
        Command::Count { model, variant } => count::cmd_count(&model, variant.as_deref(), &mut out),
        Command::Train { config, out: dir } => train::cmd_train(&config, &dir, &mut out),
        Command::Bench {
            shapes,
            repeats,
            seed,
            cap,
            out: path,
        } => {
            let opts = BenchOptions {
                shapes: bench::parse_shapes(&shapes)?,
                repeats,
                seed,
                reproducible: cli.reproducible,
                cap,
            };
            match path {
                Some(p) => {
                    let mut file = std::fs::File::create(&p).map_err(|e| CliError::io(p.display(), e))?;
                    bench::cmd_bench(&opts, &mut file)?;
                    file.flush().map_err(|e| CliError::io(p.display(), e))
                }
                None => bench::cmd_bench(&opts, &mut out),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code();
            let report = anyhow::Error::new(e);
            eprintln!("error: {report:#}");
            ExitCode::from(code as u8)
        }
    }
}
