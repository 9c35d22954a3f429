use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use homp_lab::{rate_from_csvs, run_experiment, ExperimentConfig, LabError, Mode, RunOptions};

#[derive(Parser)]
#[command(name = "homp", version, about = "Run and compare Mirror Prox and higher-order Mirror Prox")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Suppress progress output
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Experiment config (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Output directory [default: config `output`, then $HOMP_OUT_DIR, then ./homp-out]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the problem seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores)
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// One method at one horizon; writes trajectory.csv and summary.json
    Solve(RunArgs),
    /// Every method over its horizon grid with fitted merit slopes
    Compare(RunArgs),
    /// Run with all monitors and problem checks; exit 4 on any violation
    Check(RunArgs),
    /// Fit slopes from existing trajectory CSVs (files or directories)
    Rate {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
}

fn out_dir(args: &RunArgs, config: &ExperimentConfig) -> PathBuf {
    args.out
        .clone()
        .or_else(|| config.output.clone())
        .or_else(|| std::env::var_os("HOMP_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("homp-out"))
}

fn run(cli: Cli) -> Result<(), LabError> {
    let quiet = cli.quiet;
    let (args, mode) = match cli.command {
        Command::Solve(a) => (a, Mode::Solve),
        Command::Compare(a) => (a, Mode::Compare),
        Command::Check(a) => (a, Mode::Check),
        Command::Rate { paths } => {
            let slopes = rate_from_csvs(&paths)?;
            println!("{}", serde_json::to_string_pretty(&slopes).expect("slopes serialize"));
            return Ok(());
        }
    };
    let config = ExperimentConfig::load(&args.config)?;
    let options = RunOptions {
        out_dir: Some(out_dir(&args, &config)),
        jobs: args.jobs,
        seed: args.seed,
    };
    let outcome = run_experiment(&config, mode, &options)?;
    if !quiet {
        for r in &outcome.summary.runs {
            println!(
                "{:<10} T={:<6} merit={:.6e} Gamma_T={:.6e} fnorm={:.3e}",
                r.method, r.horizon, r.merit, r.gamma_total, r.fnorm_last
            );
        }
        for s in &outcome.summary.slopes {
            println!("{:<10} slope={:.4} r2={:.4}", s.method, s.slope, s.r_squared);
        }
        if let Some(dir) = &options.out_dir {
            println!("wrote {} files to {}", outcome.written.len(), dir.display());
        }
    }
    outcome.into_result().map(|_| ())
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
