use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser};
use nsplane::config::RunConfig;
use nsplane::run::{execute, replay, RunOptions, RunResult};
use nsplane::Subcommand;

#[derive(Parser)]
#[command(
    name = "nsplane",
    version,
    about = "Spectral Navier-Stokes and plane-wave stability laboratory"
)]
enum Cli {
    /// Two-dimensional periodic Navier-Stokes run
    Simulate2d(RunArgs),
    /// Three-dimensional periodic Navier-Stokes run
    Simulate3d(RunArgs),
    /// Compare the 3D evolution of an embedded profile with the embedded 2D evolution
    PlanewaveCheck(RunArgs),
    /// Successive approximations around a plane-wave background
    Picard(RunArgs),
    /// Perturbation decay around a decaying plane wave
    Stability(RunArgs),
    /// Flatness of the heat semigroup estimate over a Gaussian family
    Heatdecay(RunArgs),
    /// Lipschitz ratio of the perturbation Duhamel map
    Contraction(RunArgs),
    /// Amplitude scan of localized data
    Scan(RunArgs),
    /// Complex Ginzburg-Landau runs
    Cgl(RunArgs),
    /// Rerun a recorded manifest
    Replay(ReplayArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Recorded in the manifest only
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn report(r: &RunResult) {
    for c in &r.summary.checks {
        let mark = if c.passed { "ok  " } else { "FAIL" };
        println!(
            "{mark} {} = {:.6e} ({} {:.6e})",
            c.name, c.value, c.relation, c.threshold
        );
    }
    if let Some(f) = &r.summary.failure {
        eprintln!("run aborted ({}): {}", f.kind, f.message);
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli {
        Cli::Replay(a) => replay(&a.manifest, &a.out),
        other => {
            let (sub, a) = match other {
                Cli::Simulate2d(a) => (Subcommand::Simulate2d, a),
                Cli::Simulate3d(a) => (Subcommand::Simulate3d, a),
                Cli::PlanewaveCheck(a) => (Subcommand::PlanewaveCheck, a),
                Cli::Picard(a) => (Subcommand::Picard, a),
                Cli::Stability(a) => (Subcommand::Stability, a),
                Cli::Heatdecay(a) => (Subcommand::Heatdecay, a),
                Cli::Contraction(a) => (Subcommand::Contraction, a),
                Cli::Scan(a) => (Subcommand::Scan, a),
                Cli::Cgl(a) => (Subcommand::Cgl, a),
                Cli::Replay(_) => unreachable!(),
            };
            RunConfig::from_path(sub, &a.config).and_then(|cfg| {
                execute(
                    &cfg,
                    &RunOptions {
                        out: a.out,
                        seed: a.seed,
                        threads: a.threads,
                    },
                )
            })
        }
    };
    match result {
        Ok(r) => {
            report(&r);
            ExitCode::from(r.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
