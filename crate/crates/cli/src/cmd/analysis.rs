use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use gaussdiff::analysis::{
    analytical_curves, bimodal_error_curve, bimodal_error_monte_carlo, critical_time, linspace, slice_field,
    MIN_QUAD_PANELS,
};
use gaussdiff::io;
use gaussdiff::schedule::ScheduleSpec;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::sidecar::{ensure_dir, ensure_parent, Invocation};

#[derive(Args, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SliceArgs {
    /// Comma-separated model specs.
    #[arg(long, value_delimiter = ',', required = true)]
    pub models: Vec<String>,
    /// CSV with exactly three rows.
    #[arg(long)]
    pub anchors: PathBuf,
    #[arg(long)]
    pub sigma: f64,
    #[arg(long, default_value_t = 40)]
    pub grid_n: usize,
    /// Half-width of the square grid; defaults to 1.5 times the farthest anchor.
    #[arg(long)]
    pub extent: Option<f64>,
    /// Output directory: `field_<i>.csv` per model and `plane.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct PlaneFile<'a> {
    origin: &'a DVector<f64>,
    e_u: &'a DVector<f64>,
    e_v: &'a DVector<f64>,
    anchor_coords: [(f64, f64); 3],
    extent: f64,
    grid_n: usize,
    models: &'a [String],
}

pub fn run_slice(args: SliceArgs) -> Result<()> {
    let inv = Invocation::new("slice", &args)?;
    let anchors = io::read_cloud(&args.anchors, false)?;
    if anchors.len() != 3 {
        bail!("{}: expected 3 anchor rows, found {}", args.anchors.display(), anchors.len());
    }
    let anchors = [anchors.point(0), anchors.point(1), anchors.point(2)];
    let models = args
        .models
        .iter()
        .map(|m| super::load_model(m))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<_> = models.iter().collect();
    let extent = match args.extent {
        Some(e) => e,
        None => {
            let plane = gaussdiff::analysis::SlicePlane::from_anchors(&anchors)?;
            let far = anchors
                .iter()
                .map(|a| {
                    let (u, v) = plane.coords(a);
                    u.abs().max(v.abs())
                })
                .fold(0.0, f64::max);
            1.5 * far
        }
    };
    let res = slice_field(&refs, &anchors, args.sigma, args.grid_n, extent)?;
    ensure_dir(&args.out)?;
    for (i, field) in res.fields.iter().enumerate() {
        let path = args.out.join(format!("field_{i}.csv"));
        let rows: Vec<Vec<f64>> = field.iter().map(|c| vec![c.u, c.v, c.s_u, c.s_v, c.norm]).collect();
        io::write_table(&path, &["u", "v", "s_u", "s_v", "norm"], &rows)?;
        inv.record(&path, serde_json::json!({ "model": args.models[i] }))?;
    }
    let path = args.out.join("plane.json");
    io::write_json(
        &path,
        &PlaneFile {
            origin: &res.plane.origin,
            e_u: &res.plane.e_u,
            e_v: &res.plane.e_v,
            anchor_coords: res.anchor_coords,
            extent,
            grid_n: args.grid_n,
            models: &args.models,
        },
    )?;
    inv.record(&path, serde_json::Value::Null)
}

#[derive(Args, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct CurvesArgs {
    /// `vp[:beta_min:beta_max[:T]]`, `edm[:sigma_min:sigma_max:rho:n]` or `table:path`.
    #[arg(long, default_value = "vp")]
    pub schedule: String,
    #[arg(long, value_delimiter = ',', required = true)]
    pub lambdas: Vec<f64>,
    /// Number of uniformly spaced times.
    #[arg(long, default_value_t = 1001)]
    pub n_t: usize,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run_curves(args: CurvesArgs) -> Result<()> {
    let inv = Invocation::new("curves", &args)?;
    let sched = args.schedule.parse::<ScheduleSpec>()?.schedule()?;
    let t = linspace(sched.t_min(), sched.t_max(), args.n_t);
    let rows = analytical_curves(&sched, &args.lambdas, &t)?;
    ensure_parent(&args.out)?;
    let table: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| vec![r.t, r.lambda, r.alpha, r.sigma, r.psi_bar, r.xi_scaled, r.dxi_dt, r.gain])
        .collect();
    io::write_table(
        &args.out,
        &["t", "lambda", "alpha", "sigma", "psi_bar", "xi_scaled", "dxi_dt", "gain"],
        &table,
    )?;
    let critical: Vec<_> = args
        .lambdas
        .iter()
        .map(|&l| {
            let tc = critical_time(&rows, l);
            println!("lambda {l:<10} critical time {}", tc.map_or("-".into(), |t| format!("{t:.4}")));
            serde_json::json!({ "lambda": l, "t": tc })
        })
        .collect();
    inv.record(&args.out, serde_json::json!({ "critical_times": critical }))
}

#[derive(Args, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct BimodalArgs {
    /// Mode offset along the first axis.
    #[arg(long)]
    pub m: f64,
    /// Per-mode standard deviation.
    #[arg(long)]
    pub q: f64,
    #[arg(long, value_delimiter = ',', required = true)]
    pub dims: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub sigmas: Vec<f64>,
    /// Quadrature panels per mode.
    #[arg(long, default_value_t = 128)]
    pub n_quad: usize,
    /// Also write a full-dimensional Monte Carlo estimate with this many samples.
    #[arg(long)]
    pub monte_carlo: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run_bimodal(args: BimodalArgs) -> Result<()> {
    let inv = Invocation::new("bimodal", &args)?;
    if args.n_quad < MIN_QUAD_PANELS {
        bail!("--n-quad must be at least {MIN_QUAD_PANELS}");
    }
    if args.dims.contains(&1) {
        eprintln!("warning: the integral diverges for D = 1; those rows are not converged");
    }
    let mut table = Vec::new();
    for &d in &args.dims {
        let e = bimodal_error_curve(args.m, args.q, d, &args.sigmas, args.n_quad)?;
        for (&s, &v) in args.sigmas.iter().zip(&e) {
            let mut row = vec![d as f64, s, v];
            if let Some(n) = args.monte_carlo {
                row.push(bimodal_error_monte_carlo(args.m, args.q, d, s, n, args.seed)?);
            }
            table.push(row);
        }
    }
    let mut header = vec!["d", "sigma", "error"];
    if args.monte_carlo.is_some() {
        header.push("monte_carlo");
    }
    ensure_parent(&args.out)?;
    io::write_table(&args.out, &header, &table)?;
    inv.record(&args.out, serde_json::json!({ "rows": table.len() }))
}
