use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use gaussdiff::synthetic::generate;
use gaussdiff::{io, SyntheticConfig, SyntheticKind};
use serde::{Deserialize, Serialize};

use crate::sidecar::{ensure_parent, Invocation};

#[derive(Args, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct GenSyntheticArgs {
    /// gaussian, gmm or two-cluster.
    #[arg(long)]
    pub kind: SyntheticKind,
    #[arg(long)]
    pub d: usize,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub rank: usize,
    #[arg(long, default_value_t = 1.0)]
    pub decay: f64,
    #[arg(long, default_value_t = 5)]
    pub clusters: usize,
    #[arg(long, default_value_t = 10.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// `.bin`/`.pcld` writes the binary format, anything else CSV.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: GenSyntheticArgs) -> Result<()> {
    let inv = Invocation::new("gen-synthetic", &args)?;
    let config = SyntheticConfig {
        rank: args.rank,
        decay: args.decay,
        clusters: args.clusters,
        separation: args.separation,
        noise: args.noise,
        ..SyntheticConfig::new(args.kind, args.d, args.n, args.seed)
    };
    let cloud = generate(&config)?;
    ensure_parent(&args.out)?;
    io::write_cloud(&args.out, &cloud)?;
    inv.record(
        &args.out,
        serde_json::json!({ "n": cloud.len(), "d": cloud.dim(), "labels": cloud.labels().is_some() }),
    )?;
    Ok(())
}
