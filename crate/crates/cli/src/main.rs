mod cmd;
mod config;
mod sidecar;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "gaussdiff", version, about = "Analytical diffusion score models, samplers and score analysis")]
struct Cli {
    /// JSON file of default flag values (explicit flags take precedence).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a K-component low-rank Gaussian mixture to a point cloud.
    FitGmm(cmd::fit::FitGmmArgs),
    /// Integrate the probability-flow ODE from prior draws.
    Sample(cmd::sample::SampleArgs),
    /// Jump to an intermediate noise level with the Gaussian closed form, then run Heun.
    Teleport(cmd::sample::TeleportArgs),
    /// Score residuals between two models, or deviation between trajectories.
    Compare(cmd::compare::CompareArgs),
    /// Residual of mixture fits over cluster counts, ranks and noise levels.
    Sweep(cmd::sweep::SweepArgs),
    /// Score fields on the plane through three anchor points.
    Slice(cmd::analysis::SliceArgs),
    /// Closed-form coefficient curves for a noise schedule.
    Curves(cmd::analysis::CurvesArgs),
    /// Expected Gaussian-approximation error for a two-mode mixture.
    Bimodal(cmd::analysis::BimodalArgs),
    /// Write a synthetic point cloud.
    GenSynthetic(cmd::synthetic::GenSyntheticArgs),
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("GSL_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| anyhow::anyhow!("GSL_THREADS must be a positive integer, got '{raw}'"))?;
    if n == 0 {
        anyhow::bail!("GSL_THREADS must be a positive integer, got '{raw}'");
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn main() -> ExitCode {
    let argv = match config::merge(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = configure_threads().and_then(|_| match cli.command {
        Command::FitGmm(a) => cmd::fit::run(a),
        Command::Sample(a) => cmd::sample::run_sample(a),
        Command::Teleport(a) => cmd::sample::run_teleport(a),
        Command::Compare(a) => cmd::compare::run(a),
        Command::Sweep(a) => cmd::sweep::run(a),
        Command::Slice(a) => cmd::analysis::run_slice(a),
        Command::Curves(a) => cmd::analysis::run_curves(a),
        Command::Bimodal(a) => cmd::analysis::run_bimodal(a),
        Command::GenSynthetic(a) => cmd::synthetic::run(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(1)
        }
    }
}

/// The error chain joined with `: `, skipping causes already quoted by
/// the message above them.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.ends_with(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}
