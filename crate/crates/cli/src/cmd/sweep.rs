use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use gaussdiff::gmm::{minimal_rank, rank_mode_sweep, RankRule, DEFAULT_RANK_SLACK};
use gaussdiff::{io, ScoreField, ScoreModel};
use serde::{Deserialize, Serialize};

use crate::sidecar::{ensure_parent, Invocation};

#[derive(Args, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SweepArgs {
    #[arg(long)]
    pub cloud: PathBuf,
    #[arg(long)]
    pub labels: bool,
    #[arg(long, value_delimiter = ',', required = true)]
    pub k_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub rank_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub sigmas: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    pub probes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Reference model; defaults to the delta mixture of the cloud.
    #[arg(long)]
    pub reference: Option<String>,
    /// Tolerance for the minimal-rank summary.
    #[arg(long, default_value_t = DEFAULT_RANK_SLACK)]
    pub slack: f64,
    /// relative or absolute.
    #[arg(long, default_value = "relative")]
    pub rank_rule: RankRule,
    /// Residual table; the minimal-rank summary goes next to it with a
    /// `.minrank.csv` suffix.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: SweepArgs) -> Result<()> {
    let inv = Invocation::new("sweep", &args)?;
    let cloud = super::load_cloud(&args.cloud, args.labels)?;
    let reference = match &args.reference {
        Some(spec) => super::load_model(spec)?,
        None => ScoreModel::delta(cloud.clone()),
    };
    if reference.dim() != cloud.dim() {
        bail!("reference dimension {} does not match cloud dimension {}", reference.dim(), cloud.dim());
    }
    let rows = rank_mode_sweep(
        &cloud,
        &args.k_list,
        &args.rank_list,
        &args.sigmas,
        &reference,
        args.probes,
        args.seed,
    )?;
    ensure_parent(&args.out)?;
    let table: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            vec![
                r.k as f64,
                r.rank as f64,
                r.sigma,
                r.stats.mean,
                r.stats.q25,
                r.stats.median,
                r.stats.q75,
                r.stats.ratio_of_sums,
            ]
        })
        .collect();
    io::write_table(
        &args.out,
        &["k", "rank", "sigma", "mean", "q25", "median", "q75", "ratio_of_sums"],
        &table,
    )?;
    inv.record(&args.out, serde_json::json!({ "rows": table.len() }))?;

    let mut summary = Vec::new();
    for &k in &args.k_list {
        for &sigma in &args.sigmas {
            let r = minimal_rank(&rows, k, sigma, args.slack, args.rank_rule);
            println!(
                "K={k:<4} sigma={sigma:<10} minimal rank {}",
                r.map_or("-".to_string(), |r| r.to_string())
            );
            summary.push(vec![k as f64, sigma, r.map_or(f64::NAN, |r| r as f64)]);
        }
    }
    let mut name = args.out.file_stem().unwrap_or_default().to_os_string();
    name.push(".minrank.csv");
    let path = args.out.with_file_name(name);
    io::write_table(&path, &["k", "sigma", "minimal_rank"], &summary)?;
    inv.record(&path, serde_json::json!({ "rule": args.rank_rule, "slack": args.slack }))
}
