//! Deterministic probability-flow samplers.
//!
//! All samplers integrate `dx/dσ = −σ s(x, σ) = (x − D(x, σ))/σ` with the
//! noise level itself as the integration variable.

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::schedule::{karras_grid, validate_levels, NoiseGrid, NoiseSchedule};
use crate::score::ScoreField;
use crate::solution::{solve_state, SolutionContext};
use crate::spectrum::CompactSpectrum;
use crate::trajectory::{SkipInfo, Trajectory};

/// Smallest noise level at which RK4 evaluates the model.
pub const RK4_SIGMA_FLOOR: f64 = 1e-10;

/// Relative tolerance for matching `σ_skip` to a grid level.
pub const GRID_MATCH_RTOL: f64 = 1e-9;

/// Wraps a model and counts every score/denoiser evaluation.
pub struct CountingModel<'a, M: ScoreField + ?Sized> {
    inner: &'a M,
    calls: AtomicUsize,
}

impl<'a, M: ScoreField + ?Sized> CountingModel<'a, M> {
    pub fn new(inner: &'a M) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl<M: ScoreField + ?Sized> ScoreField for CountingModel<'_, M> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn score(&self, x: &DVector<f64>, sigma: f64) -> Result<DVector<f64>> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.score(x, sigma)
    }

    fn denoise(&self, x: &DVector<f64>, sigma: f64) -> Result<DVector<f64>> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.denoise(x, sigma)
    }
}

fn slope<M: ScoreField + ?Sized>(model: &M, x: &DVector<f64>, sigma: f64) -> Result<(DVector<f64>, DVector<f64>)> {
    let d = model.denoise(x, sigma)?;
    Ok(((x - &d) / sigma, d))
}

fn check_finite(x: &DVector<f64>, step: usize) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericalBlowup { step })
    }
}

/// Heun (explicit trapezoid) over a noise grid.
pub fn heun_sample<M: ScoreField + ?Sized>(model: &M, grid: &NoiseGrid, x_big_t: &DVector<f64>) -> Result<Trajectory> {
    heun_sample_levels(model, grid.levels(), x_big_t)
}

/// Heun over arbitrary strictly descending levels. Every step but the last
/// takes an Euler predictor and a trapezoidal corrector; the last step is
/// Euler only, so a run over `n` levels costs `2(n−1) − 1` evaluations.
pub fn heun_sample_levels<M: ScoreField + ?Sized>(model: &M, levels: &[f64], x_big_t: &DVector<f64>) -> Result<Trajectory> {
    validate_levels(levels)?;
    check_dim(model.dim(), x_big_t.len())?;
    check_finite(x_big_t, 0)?;
    let n = levels.len();
    let mut traj = Trajectory::new("heun");
    let mut x = x_big_t.clone();
    let mut nfe = 0;
    for i in 0..n - 1 {
        let (s, s_next) = (levels[i], levels[i + 1]);
        let (d, den) = slope(model, &x, s)?;
        nfe += 1;
        let h = s_next - s;
        let pred = &x + &d * h;
        let next = if i + 1 == n - 1 {
            pred
        } else {
            let (d2, _) = slope(model, &pred, s_next)?;
            nfe += 1;
            &x + (d + d2) * (0.5 * h)
        };
        traj.push(s, s, 1.0, x, Some(den));
        check_finite(&next, i + 1)?;
        x = next;
    }
    traj.push(levels[n - 1], levels[n - 1], 1.0, x, None);
    traj.meta.nfe = nfe;
    Ok(traj)
}

/// Classical RK4 from `sigma_start` to `sigma_end` with `n_sub` fixed steps.
pub fn rk4_sample<M: ScoreField + ?Sized>(
    model: &M,
    sigma_start: f64,
    sigma_end: f64,
    n_sub: usize,
    x_start: &DVector<f64>,
) -> Result<Trajectory> {
    if sigma_start == sigma_end {
        check_dim(model.dim(), x_start.len())?;
        let mut traj = Trajectory::new("rk4");
        traj.push(sigma_start, sigma_start, 1.0, x_start.clone(), None);
        return Ok(traj);
    }
    rk4_sample_at(model, &[sigma_start, sigma_end], n_sub, x_start)
}

/// RK4 through the given levels, `n_sub` substeps per interval, recording
/// the state at every level. A final level of zero is integrated to
/// [`RK4_SIGMA_FLOOR`] and reported as zero.
pub fn rk4_sample_at<M: ScoreField + ?Sized>(model: &M, levels: &[f64], n_sub: usize, x_start: &DVector<f64>) -> Result<Trajectory> {
    validate_levels(levels)?;
    if n_sub == 0 {
        return Err(Error::InvalidInput("n_sub must be at least 1".into()));
    }
    check_dim(model.dim(), x_start.len())?;
    check_finite(x_start, 0)?;
    let f = |x: &DVector<f64>, s: f64| slope(model, x, s.max(RK4_SIGMA_FLOOR));
    let mut traj = Trajectory::new("rk4");
    let mut x = x_start.clone();
    let mut nfe = 0;
    let mut step = 0;
    for w in levels.windows(2) {
        let end = w[1].max(RK4_SIGMA_FLOOR);
        let h = (end - w[0]) / n_sub as f64;
        let mut first_den = None;
        for j in 0..n_sub {
            let s = w[0] + j as f64 * h;
            let (k1, den) = f(&x, s)?;
            if j == 0 {
                first_den = Some(den);
            }
            let (k2, _) = f(&(&x + &k1 * (0.5 * h)), s + 0.5 * h)?;
            let (k3, _) = f(&(&x + &k2 * (0.5 * h)), s + 0.5 * h)?;
            let s_next = if j + 1 == n_sub { end } else { s + h };
            let (k4, _) = f(&(&x + &k3 * h), s_next)?;
            nfe += 4;
            let next = &x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            step += 1;
            check_finite(&next, step)?;
            if j == 0 {
                traj.push(w[0], w[0], 1.0, x.clone(), first_den.take());
            }
            x = next;
        }
    }
    let last = levels[levels.len() - 1];
    traj.push(last, last, 1.0, x, None);
    traj.meta.nfe = nfe;
    Ok(traj)
}

/// How the levels below `σ_skip` are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkipMode {
    /// Keep the original grid tail below `σ_skip`.
    GridAligned,
    /// Rebuild a Karras grid on `[σ_min, σ_skip]` with the same `ρ` and step count.
    Regrid,
}

impl std::str::FromStr for SkipMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid-aligned" | "grid_aligned" | "aligned" => Ok(Self::GridAligned),
            "regrid" => Ok(Self::Regrid),
            other => Err(Error::InvalidInput(format!("unknown skip mode '{other}'"))),
        }
    }
}

impl SkipMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::GridAligned => "grid-aligned",
            Self::Regrid => "regrid",
        }
    }
}

/// Hybrid sampler: jump from `σ_max` to `σ_skip` with the Gaussian closed
/// form of `spec`, then continue with Heun.
pub fn teleport_sample<M: ScoreField + ?Sized>(
    model: &M,
    spec: &CompactSpectrum,
    grid: &NoiseGrid,
    sigma_skip: f64,
    x_big_t: &DVector<f64>,
    mode: SkipMode,
) -> Result<Trajectory> {
    let levels = grid.levels();
    let sigma_max = grid.sigma_max();
    let has_zero = grid.sigma_min() == 0.0;
    let sigma_min = if has_zero { levels[levels.len() - 2] } else { grid.sigma_min() };
    if !(sigma_skip > sigma_min && sigma_skip <= sigma_max * (1.0 + GRID_MATCH_RTOL)) {
        return Err(Error::InvalidSkip {
            sigma_skip,
            sigma_min,
            sigma_max,
        });
    }
    check_dim(spec.dim(), x_big_t.len())?;
    let info = |steps_skipped| SkipInfo {
        mode: mode.as_str().to_string(),
        sigma_skip,
        steps_skipped,
    };
    if (sigma_skip - sigma_max).abs() <= GRID_MATCH_RTOL * sigma_max {
        let mut traj = heun_sample(model, grid, x_big_t)?;
        traj.meta.skip = Some(info(0));
        return Ok(traj);
    }
    let ctx = SolutionContext::new(spec.clone(), x_big_t.clone(), sigma_max)?;
    let x_skip = solve_state(&ctx, sigma_skip)?;
    let tail: Vec<f64> = match mode {
        SkipMode::GridAligned => match levels
            .iter()
            .position(|&s| (s - sigma_skip).abs() <= GRID_MATCH_RTOL * sigma_skip)
        {
            Some(i) => levels[i..].to_vec(),
            None => std::iter::once(sigma_skip)
                .chain(levels.iter().copied().filter(|&s| s < sigma_skip))
                .collect(),
        },
        SkipMode::Regrid => {
            let p = grid.params().ok_or_else(|| {
                Error::InvalidInput("regrid mode needs a grid built from Karras parameters".into())
            })?;
            let mut l = karras_grid(p.sigma_min, sigma_skip, p.rho, p.n_step)?.levels().to_vec();
            if has_zero {
                l.push(0.0);
            }
            l
        }
    };
    let skipped = match mode {
        SkipMode::GridAligned => levels.len().saturating_sub(tail.len()),
        SkipMode::Regrid => 0,
    };
    let mut traj = heun_sample_levels(model, &tail, &x_skip)?;
    traj.meta.sampler = "teleport-heun".into();
    traj.meta.skip = Some(info(skipped));
    Ok(traj)
}

/// Deterministic DDIM on `n_step` uniformly spaced times from `T` to the
/// start of the schedule.
pub fn ddim_style_sample<M: ScoreField + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    n_step: usize,
    x_big_t: &DVector<f64>,
) -> Result<Trajectory> {
    let times = schedule.uniform_times(n_step)?;
    ddim_sample_times(model, schedule, &times, x_big_t)
}

/// DDIM over explicit descending times:
/// `x' = α' x̂₀ + σ' (x − α x̂₀)/σ` with `x̂₀ = D(x/α, σ/α)`.
pub fn ddim_sample_times<M: ScoreField + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    times: &[f64],
    x_big_t: &DVector<f64>,
) -> Result<Trajectory> {
    if times.len() < 2 {
        return Err(Error::InvalidInput("DDIM needs at least two times".into()));
    }
    if times.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput("DDIM times must be strictly descending".into()));
    }
    check_dim(model.dim(), x_big_t.len())?;
    let mut traj = Trajectory::new("ddim");
    let mut x = x_big_t.clone();
    let mut nfe = 0;
    for i in 0..times.len() - 1 {
        let (alpha, sigma) = schedule.eval(times[i])?;
        let (alpha_n, sigma_n) = schedule.eval(times[i + 1])?;
        if !(alpha > 0.0) {
            return Err(Error::InvalidSchedule(format!("alpha = {alpha} at t = {}", times[i])));
        }
        if !(sigma > 0.0) {
            return Err(Error::InvalidSchedule(format!("sigma = 0 at t = {} before the last step", times[i])));
        }
        let x0 = model.denoise(&(&x / alpha), sigma / alpha)?;
        nfe += 1;
        let eps = (&x - &x0 * alpha) / sigma;
        let next = &x0 * alpha_n + eps * sigma_n;
        traj.push(times[i], sigma, alpha, x, Some(x0));
        check_finite(&next, i + 1)?;
        x = next;
    }
    let t_last = times[times.len() - 1];
    let (alpha, sigma) = schedule.eval(t_last)?;
    traj.push(t_last, sigma, alpha, x, None);
    traj.meta.nfe = nfe;
    Ok(traj)
}

/// Runs one sampler per initial state in parallel; output order follows input.
pub fn run_many<F>(inits: &[DVector<f64>], sampler: F) -> Result<Vec<Trajectory>>
where
    F: Fn(&DVector<f64>) -> Result<Trajectory> + Sync + Send,
{
    inits.par_iter().map(sampler).collect()
}
