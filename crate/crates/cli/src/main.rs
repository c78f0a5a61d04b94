use clap::{Args, Parser, Subcommand};
use llstar_cli::StudyConfig;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "llstar", about = "Least-squares hyperbolic solver studies", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a study described by a key = value config file.
    Study(StudyArgs),
}

#[derive(Args)]
struct StudyArgs {
    /// Path to the configuration file.
    config: PathBuf,
    /// Override the output CSV path.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Override the mesh levels, e.g. "8,16,32".
    #[arg(long)]
    levels: Option<String>,
    /// Override the jitter seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Solve the methods of each level concurrently.
    #[arg(long)]
    parallel: bool,
}

fn run(args: &StudyArgs) -> Result<bool, llstar::Error> {
    let mut cfg = StudyConfig::load(&args.config)?;
    if let Some(output) = &args.output {
        cfg.output = output.clone();
    }
    if let Some(levels) = &args.levels {
        cfg.levels = levels
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| llstar::Error::Parse(format!("invalid level '{s}'")))
            })
            .collect::<Result<_, _>>()?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.parallel = args.parallel;
    cfg.validate()?;
    llstar_cli::run_study(&cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Study(args) => match run(&args) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => {
                eprintln!("study finished with partial failures");
                ExitCode::from(2)
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        },
    }
}
