use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use gaussdiff::gmm::{fit_gmm_with, DEFAULT_BATCH, DEFAULT_MAX_ITER, DEFAULT_TOL};
use gaussdiff::{io, KMeansConfig};
use serde::{Deserialize, Serialize};

use crate::sidecar::{ensure_parent, Invocation};

#[derive(Args, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct FitGmmArgs {
    /// Point cloud (CSV or PCLD1 binary).
    #[arg(long)]
    pub input: PathBuf,
    /// The CSV input ends with an integer label column.
    #[arg(long)]
    pub labels: bool,
    #[arg(long)]
    pub k: usize,
    /// Maximum rank per component; omit for full rank.
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_BATCH)]
    pub batch: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: FitGmmArgs) -> Result<()> {
    let inv = Invocation::new("fit-gmm", &args)?;
    let cloud = super::load_cloud(&args.input, args.labels)?;
    let config = KMeansConfig {
        batch: args.batch,
        max_iter: args.max_iter,
        tol: args.tol,
        ..KMeansConfig::new(args.k, args.seed)
    };
    let fit = fit_gmm_with(&cloud, &config, args.rank.unwrap_or(usize::MAX))?;
    ensure_parent(&args.out)?;
    io::write_json(&args.out, &fit.mixture)?;
    inv.record(&args.out, &fit.info)?;
    println!(
        "fitted K={} on N={} D={} in {} iterations, inertia {:.6e}",
        fit.info.k,
        cloud.len(),
        cloud.dim(),
        fit.info.iterations,
        fit.info.inertia
    );
    Ok(())
}
