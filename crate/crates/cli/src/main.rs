use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use aronsson_cli::{run, verify, Mode, RunConfig, RunOptions, EXIT_ERROR};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "aronsson",
    version,
    about = "Solvers for the Aronsson equation Δ∞u = τ|Du|²"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve with the solver named in the config (default: both).
    Solve(RunArgs),
    /// Tug-of-war value iteration (minimal solution).
    SolveGame(RunArgs),
    /// L^p energy continuation (maximal solution).
    SolveVariational(RunArgs),
    /// Closed-form solution family on an interval.
    Exact1d(RunArgs),
    /// Classify a saved solution by its wells and flat pieces.
    Classify {
        csv: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Write classification.json here instead of printing it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every .cfg in a directory with all checks.
    Verify {
        dir: PathBuf,
        #[arg(long, default_value = "verify-out")]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn solve(args: RunArgs, mode: Option<Mode>) -> anyhow::Result<u8> {
    let mut cfg = RunConfig::load(&args.config)?.with_overrides(args.out, args.threads, args.seed);
    if let Some(m) = mode {
        if m == Mode::Exact1d && cfg.domain.dim() != 1 {
            anyhow::bail!("exact1d needs an interval domain");
        }
        cfg.mode = m;
    }
    let o = run(&cfg, RunOptions::default())?;
    for (label, r) in o
        .game
        .iter()
        .chain(&o.variational)
        .map(|(_, r)| (format!("{:?}", r.solver), r))
    {
        println!(
            "{label}: converged={} iterations={} residual={:.3e}",
            r.converged, r.iterations, r.residual
        );
    }
    for c in &o.checks {
        println!(
            "{} {}: {:.6e} (tol {:.1e})",
            if c.passed { "ok  " } else { "FAIL" },
            c.name,
            c.value,
            c.tol
        );
    }
    println!(
        "wrote {} file(s) to {}",
        o.files.len(),
        cfg.out_dir.display()
    );
    Ok(o.exit_code())
}

fn main_inner(cli: Cli) -> anyhow::Result<u8> {
    match cli.cmd {
        Cmd::Solve(a) => solve(a, None),
        Cmd::SolveGame(a) => solve(a, Some(Mode::Game)),
        Cmd::SolveVariational(a) => solve(a, Some(Mode::Variational)),
        Cmd::Exact1d(a) => solve(a, Some(Mode::Exact1d)),
        Cmd::Classify { csv, config, out } => {
            let cfg = RunConfig::load(&config)?;
            let (_, text) = aronsson_cli::run::classify_csv(&cfg, &csv)?;
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir).with_context(|| dir.display().to_string())?;
                    let path = dir.join("classification.json");
                    std::fs::write(&path, text + "\n")
                        .with_context(|| path.display().to_string())?;
                }
                None => println!("{text}"),
            }
            Ok(0)
        }
        Cmd::Verify {
            dir,
            out,
            threads,
            seed,
        } => {
            let s = verify(&dir, &out, threads, seed)?;
            for f in &s.fixtures {
                let failed: Vec<&str> = f
                    .checks
                    .iter()
                    .filter(|c| !c.passed)
                    .map(|c| c.name.as_str())
                    .collect();
                println!(
                    "{} {} (converged={}){}",
                    if f.exit_code == 0 { "PASS" } else { "FAIL" },
                    f.name,
                    f.converged,
                    if failed.is_empty() {
                        String::new()
                    } else {
                        format!(" failed: {}", failed.join(", "))
                    }
                );
            }
            Ok(s.exit_code)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
