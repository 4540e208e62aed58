use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nlsred::{render, run, RunError, RunOptions, ScenarioConfig};

/// Lyapunov-Schmidt reduction experiments for -Δu + u + V(εx)u = K(εx)u^p.
///
/// Exit codes: 0 when every stage and check passes, 1 on a numerical
/// failure, 2 on a configuration error.
#[derive(Parser)]
#[command(name = "nlsred", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline of a scenario file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Seeds per axis for the critical-point search of A.
        #[arg(long)]
        seed_mesh: Option<usize>,
    },
    /// Summarize a finished run and draw its plots.
    Report {
        /// The run's output directory.
        run_dir: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            out,
            jobs,
            seed_mesh,
        } => ScenarioConfig::load(&config).and_then(|cfg| run(&cfg, &RunOptions { out, jobs, seed_mesh })).map(
            |report| {
                for c in report.checks.iter().filter(|c| !c.pass) {
                    eprintln!("{c}");
                }
                for s in report.stages.iter().filter(|s| !s.ok) {
                    eprintln!("stage {} failed: {}", s.name, s.message);
                }
                println!(
                    "{}: {} ({} checks)",
                    report.config.scenario.name.as_deref().unwrap_or("run"),
                    if report.pass { "PASS" } else { "FAIL" },
                    report.checks.len()
                );
                u8::from(!report.pass)
            },
        ),
        Command::Report { run_dir, out } => match run_dir.or(out) {
            None => Err(RunError::Config("report needs a run directory".into())),
            Some(dir) => render(&dir).map(|report| {
                print!("{}", report.summary());
                0
            }),
        },
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
