use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use gaussdiff::analysis::{ensemble_deviation, trajectory_deviation, unexplained_variance_on, ProbeDist};
use gaussdiff::io::{self, read_trajectory_csv};
use gaussdiff::rng::{self, streams};
use gaussdiff::schedule::ScheduleSpec;
use gaussdiff::solution::{closed_form_trajectory, closed_form_trajectory_vp};
use gaussdiff::{DeviationMode, ScoreField, ScoreModel, SolutionContext, Trajectory};
use serde::{Deserialize, Serialize};

use crate::sidecar::{ensure_parent, Invocation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeKind {
    /// `N(0, sigma^2 I)`.
    Origin,
    /// Cloud points plus `N(0, sigma^2 I)`; needs `--cloud`.
    Cloud,
}

#[derive(Args, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct CompareArgs {
    /// Reference model for score comparison.
    #[arg(long = "ref", requires = "approx", conflicts_with = "traj")]
    #[serde(rename = "ref")]
    pub reference: Option<String>,
    /// Approximating model for score comparison.
    #[arg(long, requires = "reference")]
    pub approx: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub sigmas: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    pub probes: usize,
    #[arg(long, value_enum, default_value_t = ProbeKind::Origin)]
    pub probe_dist: ProbeKind,
    #[arg(long)]
    pub cloud: Option<PathBuf>,
    #[arg(long)]
    pub labels: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Trajectory CSV, or a directory of them.
    #[arg(long)]
    pub traj: Option<PathBuf>,
    /// Second trajectory (or directory) compared level by level with `--traj`.
    #[arg(long, requires = "traj", conflicts_with = "closed_form")]
    pub traj_ref: Option<PathBuf>,
    /// Gaussian model whose exact trajectory from the same start is the reference.
    #[arg(long, requires = "traj")]
    pub closed_form: Option<String>,
    /// Schedule of the trajectories when they were not sampled with alpha = 1.
    #[arg(long)]
    pub schedule: Option<String>,
    #[arg(long, default_value = "state")]
    pub mode: DeviationMode,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: CompareArgs) -> Result<()> {
    let inv = Invocation::new("compare", &args)?;
    ensure_parent(&args.out)?;
    if args.traj.is_some() {
        compare_trajectories(&args, &inv)
    } else if let (Some(r), Some(a)) = (&args.reference, &args.approx) {
        compare_scores(&args, r, a, &inv)
    } else {
        bail!("give either --ref and --approx, or --traj")
    }
}

fn compare_scores(args: &CompareArgs, r: &str, a: &str, inv: &Invocation) -> Result<()> {
    if args.sigmas.is_empty() {
        bail!("--sigmas is required for score comparison");
    }
    let reference = super::load_model(r)?;
    let approx = super::load_model(a)?;
    if reference.dim() != approx.dim() {
        bail!("model dimensions differ: {} vs {}", reference.dim(), approx.dim());
    }
    let cloud = match (args.probe_dist, &args.cloud) {
        (ProbeKind::Cloud, Some(p)) => Some(super::load_cloud(p, args.labels)?),
        (ProbeKind::Cloud, None) => bail!("--probe-dist cloud needs --cloud"),
        _ => None,
    };
    let dist = cloud.as_ref().map_or(ProbeDist::Origin, ProbeDist::NoisedCloud);
    let mut rows = Vec::new();
    for (i, &sigma) in args.sigmas.iter().enumerate() {
        let mut r = rng::stream_rng(args.seed, rng::substream(streams::PROBES, i as u64));
        let probes = gaussdiff::analysis::draw_probes(&dist, reference.dim(), sigma, args.probes, &mut r)?;
        let s = unexplained_variance_on(&reference, &approx, sigma, &probes)?;
        println!("sigma {sigma:<10} mean {:.6e}  median {:.6e}", s.mean, s.median);
        rows.push(vec![
            sigma,
            s.mean,
            s.q25,
            s.median,
            s.q75,
            s.ratio_of_sums,
            s.n_used as f64,
            s.excluded as f64,
        ]);
    }
    io::write_table(
        &args.out,
        &["sigma", "mean", "q25", "median", "q75", "ratio_of_sums", "n_used", "excluded"],
        &rows,
    )?;
    inv.record(&args.out, serde_json::json!({ "rows": rows.len() }))
}

fn trajectory_files(path: &Path) -> Result<Vec<PathBuf>> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)
        .with_context(|| format!("{}: cannot list directory", path.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("{}: no trajectory CSV files", path.display());
    }
    Ok(files)
}

fn exact_for(traj: &Trajectory, model: &ScoreModel, schedule: Option<&str>) -> Result<Trajectory> {
    let ScoreModel::Gaussian(spec) = model else {
        bail!("--closed-form needs a Gaussian model (gaussian:<cloud> or a spectrum JSON)");
    };
    let first = traj.first().context("empty trajectory")?;
    let rescaled = traj.steps.iter().any(|s| s.alpha != 1.0);
    match (rescaled, schedule) {
        (false, _) => {
            let ctx = SolutionContext::new(spec.clone(), first.state.clone(), first.sigma)?;
            Ok(closed_form_trajectory(&ctx, &traj.sigmas())?)
        }
        (true, Some(s)) => {
            let sched = s.parse::<ScheduleSpec>()?.schedule()?;
            let ctx = SolutionContext::at_time(spec.clone(), &sched, first.t, first.state.clone())?;
            let times: Vec<f64> = traj.steps.iter().map(|s| s.t).collect();
            Ok(closed_form_trajectory_vp(&ctx, &sched, &times)?)
        }
        (true, None) => bail!("trajectory has alpha != 1; pass --schedule"),
    }
}

fn compare_trajectories(args: &CompareArgs, inv: &Invocation) -> Result<()> {
    let files = trajectory_files(args.traj.as_deref().unwrap())?;
    let read = |p: &Path| read_trajectory_csv(p).with_context(|| format!("{}", p.display()));
    let pairs: Vec<(Trajectory, Trajectory)> = match (&args.traj_ref, &args.closed_form) {
        (Some(r), _) => {
            let refs = trajectory_files(r)?;
            if refs.len() != files.len() {
                bail!("{} trajectories but {} references", files.len(), refs.len());
            }
            files
                .iter()
                .zip(&refs)
                .map(|(a, b)| Ok((read(a)?, read(b)?)))
                .collect::<Result<_>>()?
        }
        (None, Some(m)) => {
            let model = super::load_model(m)?;
            files
                .iter()
                .map(|f| {
                    let t = read(f)?;
                    let e = exact_for(&t, &model, args.schedule.as_deref())?;
                    Ok((t, e))
                })
                .collect::<Result<_>>()?
        }
        (None, None) => bail!("--traj needs --traj-ref or --closed-form"),
    };
    let max = if pairs.len() == 1 {
        let dev = trajectory_deviation(&pairs[0].0, &pairs[0].1, args.mode)?;
        let rows: Vec<Vec<f64>> = dev.iter().map(|p| vec![p.sigma, p.mse]).collect();
        io::write_table(&args.out, &["sigma", "mse"], &rows)?;
        dev.iter().map(|p| p.mse).fold(0.0, f64::max)
    } else {
        let dev = ensemble_deviation(&pairs, args.mode)?;
        let rows: Vec<Vec<f64>> = dev.iter().map(|p| vec![p.sigma, p.mean, p.q25, p.q75]).collect();
        io::write_table(&args.out, &["sigma", "mean", "q25", "q75"], &rows)?;
        dev.iter().map(|p| p.mean).fold(0.0, f64::max)
    };
    println!("max mse: {max:e}");
    inv.record(&args.out, serde_json::json!({ "trajectories": pairs.len(), "max_mse": max }))
}
