use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use gaussdiff::io::{self, TrajectoryCsv};
use gaussdiff::rng::{self, streams};
use gaussdiff::sampler::{ddim_style_sample, heun_sample, rk4_sample_at, teleport_sample};
use gaussdiff::schedule::{karras_grid_from, ScheduleSpec};
use gaussdiff::spectrum::spectrum_from_cloud;
use gaussdiff::{GridParams, NoiseGrid, ScoreField, SkipMode, Trajectory};
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::sidecar::{ensure_dir, Invocation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Heun,
    Rk4,
    Ddim,
}

/// Options shared by every command that writes trajectories.
#[derive(Args, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TrajectoryOut {
    /// Number of trajectories.
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory; trajectory `i` goes to `traj_<i>.csv`.
    #[arg(long)]
    pub out: PathBuf,
    /// Write only the first components of each state.
    #[arg(long)]
    pub max_components: Option<usize>,
    /// Also write the denoiser output at each level.
    #[arg(long)]
    pub denoised: bool,
}

#[derive(Args, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SampleArgs {
    /// Model JSON, or gaussian:/delta:/isotropic:/mixture: followed by a path.
    #[arg(long)]
    pub model: String,
    #[arg(long, value_enum, default_value_t = SamplerKind::Heun)]
    pub sampler: SamplerKind,
    /// Karras grid `sigma_min:sigma_max:rho:n` (heun, rk4).
    #[arg(long, default_value = "0.002:80:7:18")]
    pub grid: String,
    /// Append a final level at sigma = 0 (heun, rk4).
    #[arg(long)]
    pub zero: bool,
    /// RK4 substeps per grid interval.
    #[arg(long, default_value_t = 10)]
    pub n_sub: usize,
    /// Schedule for ddim: `vp[:beta_min:beta_max[:T]]` or `table:path`.
    #[arg(long, default_value = "vp")]
    pub schedule: String,
    /// Number of ddim time points.
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: TrajectoryOut,
}

#[derive(Args, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TeleportArgs {
    /// Model used for the Heun part.
    #[arg(long)]
    pub model: String,
    /// Cloud whose Gaussian fit drives the closed-form jump.
    #[arg(long)]
    pub cloud: PathBuf,
    #[arg(long)]
    pub labels: bool,
    /// Maximum rank of the Gaussian fit; omit for full rank.
    #[arg(long)]
    pub rank: Option<usize>,
    /// Noise level reached by the closed-form jump.
    #[arg(long)]
    pub skip: f64,
    #[arg(long, default_value = "grid-aligned")]
    pub skip_mode: SkipMode,
    #[arg(long, default_value = "0.002:80:7:18")]
    pub grid: String,
    #[arg(long)]
    pub zero: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: TrajectoryOut,
}

fn grid(spec: &str, zero: bool) -> Result<NoiseGrid> {
    let p: GridParams = spec.parse()?;
    let g = karras_grid_from(&p)?;
    Ok(if zero { g.with_zero() } else { g })
}

/// Prior draw `i`, scaled by `scale`. Each index has its own stream, so a
/// trajectory does not depend on how many others are drawn.
pub fn initial_state(seed: u64, index: usize, d: usize, scale: f64) -> DVector<f64> {
    let mut r = rng::stream_rng(seed, rng::substream(streams::INITIAL_STATES, index as u64));
    rng::normal_vector(&mut r, d, scale)
}

pub fn trajectory_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("traj_{index:05}.csv"))
}

fn write_all<F>(inv: &Invocation, out: &TrajectoryOut, d: usize, scale: f64, sampler: F) -> Result<()>
where
    F: Fn(&DVector<f64>) -> gaussdiff::Result<Trajectory> + Sync,
{
    if out.n == 0 {
        bail!("--n must be positive");
    }
    ensure_dir(&out.out)?;
    let opts = TrajectoryCsv {
        max_components: out.max_components,
        denoised: out.denoised,
    };
    let nfe: Vec<usize> = (0..out.n)
        .into_par_iter()
        .map(|i| {
            let x = initial_state(out.seed, i, d, scale);
            let mut traj = sampler(&x).with_context(|| format!("trajectory {i}"))?;
            traj.meta.seed = Some(out.seed);
            let path = trajectory_path(&out.out, i);
            io::write_trajectory_csv(&path, &traj, opts)?;
            inv.record(&path, serde_json::json!({ "index": i, "trajectory": traj.meta }))?;
            Ok(traj.meta.nfe)
        })
        .collect::<Result<_>>()?;
    println!(
        "wrote {} trajectories to {} ({} score evaluations each)",
        out.n,
        out.out.display(),
        nfe[0]
    );
    Ok(())
}

pub fn run_sample(args: SampleArgs) -> Result<()> {
    let inv = Invocation::new("sample", &args)?;
    let model = super::load_model(&args.model)?;
    let d = model.dim();
    match args.sampler {
        SamplerKind::Heun => {
            let g = grid(&args.grid, args.zero)?;
            write_all(&inv, &args.output, d, g.sigma_max(), |x| heun_sample(&model, &g, x))
        }
        SamplerKind::Rk4 => {
            let g = grid(&args.grid, args.zero)?;
            let n_sub = args.n_sub;
            write_all(&inv, &args.output, d, g.sigma_max(), |x| {
                rk4_sample_at(&model, g.levels(), n_sub, x)
            })
        }
        SamplerKind::Ddim => {
            let spec: ScheduleSpec = args.schedule.parse()?;
            if matches!(spec, ScheduleSpec::Edm { .. }) {
                bail!("ddim needs a vp or table schedule");
            }
            let sched = spec.schedule()?;
            let sigma_t = sched.sigma(sched.t_max())?;
            write_all(&inv, &args.output, d, sigma_t, |x| {
                ddim_style_sample(&model, &sched, args.steps, x)
            })
        }
    }
}

pub fn run_teleport(args: TeleportArgs) -> Result<()> {
    let inv = Invocation::new("teleport", &args)?;
    let model = super::load_model(&args.model)?;
    let cloud = super::load_cloud(&args.cloud, args.labels)?;
    let spec = spectrum_from_cloud(&cloud, args.rank.unwrap_or(usize::MAX))?;
    if spec.dim() != model.dim() {
        bail!(
            "cloud dimension {} does not match model dimension {}",
            spec.dim(),
            model.dim()
        );
    }
    let g = grid(&args.grid, args.zero)?;
    write_all(&inv, &args.output, model.dim(), g.sigma_max(), |x| {
        teleport_sample(&model, &spec, &g, args.skip, x, args.skip_mode)
    })
}
