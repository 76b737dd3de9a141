//! Closed-form probability-flow solution for Gaussian data.
//!
//! Along each principal axis `u_k` the coefficient `c_k` evolves independently
//! and the off-manifold residual shrinks linearly with `σ`. The EDM form
//! (`α ≡ 1`) and the scaled form (`x_t = α_t x₀ + σ_t ε`) share one context.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::schedule::NoiseSchedule;
use crate::spectrum::{manifold_split, CompactSpectrum};
use crate::trajectory::Trajectory;

const RANGE_SLACK: f64 = 1e-12;

fn check_args(sigma_t: f64, sigma_big_t: f64, lambda: f64) -> Result<()> {
    if !(sigma_big_t > 0.0 && sigma_big_t.is_finite()) {
        return Err(Error::InvalidInput(format!("sigma_T must be positive, got {sigma_big_t}")));
    }
    if !(sigma_t >= 0.0 && sigma_t.is_finite()) {
        return Err(Error::InvalidInput(format!("sigma_t must be nonnegative, got {sigma_t}")));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!("lambda must be nonnegative, got {lambda}")));
    }
    Ok(())
}

/// `ψ = √((σ_t² + λ)/(σ_T² + λ))`.
pub fn psi(sigma_t: f64, sigma_big_t: f64, lambda: f64) -> Result<f64> {
    check_args(sigma_t, sigma_big_t, lambda)?;
    Ok(((sigma_t * sigma_t + lambda) / (sigma_big_t * sigma_big_t + lambda)).sqrt())
}

/// `ξ = λ/√((λ + σ_t²)(λ + σ_T²))`.
pub fn xi(sigma_t: f64, sigma_big_t: f64, lambda: f64) -> Result<f64> {
    check_args(sigma_t, sigma_big_t, lambda)?;
    if lambda == 0.0 {
        return Ok(0.0);
    }
    Ok(lambda / ((lambda + sigma_t * sigma_t).sqrt() * (lambda + sigma_big_t * sigma_big_t).sqrt()))
}

fn check_scaled(alpha: f64, sigma: f64) -> Result<()> {
    if !(alpha >= 0.0 && alpha.is_finite() && sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidSchedule(format!("invalid (alpha, sigma) = ({alpha}, {sigma})")));
    }
    Ok(())
}

/// `ψ̄ = √((σ_t² + λα_t²)/(σ_T² + λα_T²))`.
pub fn psi_bar(alpha_t: f64, sigma_t: f64, alpha_big_t: f64, sigma_big_t: f64, lambda: f64) -> Result<f64> {
    check_scaled(alpha_t, sigma_t)?;
    check_scaled(alpha_big_t, sigma_big_t)?;
    let den = sigma_big_t * sigma_big_t + lambda * alpha_big_t * alpha_big_t;
    if !(den > 0.0) {
        return Err(Error::InvalidInput("psi_bar denominator vanishes".into()));
    }
    Ok(((sigma_t * sigma_t + lambda * alpha_t * alpha_t) / den).sqrt())
}

/// `ξ̄ = α_t λ/√((α_t²λ + σ_t²)(α_T²λ + σ_T²))`.
pub fn xi_bar(alpha_t: f64, sigma_t: f64, alpha_big_t: f64, sigma_big_t: f64, lambda: f64) -> Result<f64> {
    check_scaled(alpha_t, sigma_t)?;
    check_scaled(alpha_big_t, sigma_big_t)?;
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let a = (alpha_t * alpha_t * lambda + sigma_t * sigma_t).sqrt();
    let b = (alpha_big_t * alpha_big_t * lambda + sigma_big_t * sigma_big_t).sqrt();
    if a == 0.0 || b == 0.0 {
        return Err(Error::InvalidInput("xi_bar denominator vanishes".into()));
    }
    Ok(alpha_t * lambda / (a * b))
}

/// Endpoint gain of a perturbation along an axis of variance `λ` applied at
/// `(α_{t'}, σ_{t'})`: `√(λ/(σ² + λα²))`.
pub fn perturbation_gain(lambda: f64, alpha_tp: f64, sigma_tp: f64) -> Result<f64> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!("lambda must be nonnegative, got {lambda}")));
    }
    if !(alpha_tp >= 0.0 && sigma_tp >= 0.0) {
        return Err(Error::InvalidInput("alpha and sigma must be nonnegative".into()));
    }
    let den = sigma_tp * sigma_tp + lambda * alpha_tp * alpha_tp;
    if !(den > 0.0 && den.is_finite()) {
        if lambda == 0.0 && sigma_tp > 0.0 {
            return Ok(0.0);
        }
        return Err(Error::InvalidInput("perturbation gain denominator vanishes".into()));
    }
    Ok((lambda / den).sqrt())
}

/// `Δx₀ = Σ_k gain_k (u_kᵀ δx) u_k`; the off-manifold part of `δx` has no effect.
pub fn endpoint_shift(spec: &CompactSpectrum, delta: &DVector<f64>, alpha_tp: f64, sigma_tp: f64) -> Result<DVector<f64>> {
    check_dim(spec.dim(), delta.len())?;
    let mut dc = spec.basis().tr_mul(delta);
    for (c, lam) in dc.iter_mut().zip(spec.eigenvalues().iter()) {
        *c *= perturbation_gain(*lam, alpha_tp, sigma_tp)?;
    }
    Ok(spec.basis() * dc)
}

/// Anchor of a closed-form solution: spectrum, initial state and its cached
/// projection `c̄_k = u_kᵀ(x_T − α_T μ)`, `x̄_T^⊥`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionContext {
    spectrum: CompactSpectrum,
    sigma_big_t: f64,
    alpha_big_t: f64,
    x_big_t: DVector<f64>,
    coeffs: DVector<f64>,
    residual: DVector<f64>,
}

impl SolutionContext {
    /// EDM anchor (`α_T = 1`).
    pub fn new(spectrum: CompactSpectrum, x_big_t: DVector<f64>, sigma_big_t: f64) -> Result<Self> {
        Self::with_scale(spectrum, x_big_t, 1.0, sigma_big_t)
    }

    pub fn with_scale(spectrum: CompactSpectrum, x_big_t: DVector<f64>, alpha_big_t: f64, sigma_big_t: f64) -> Result<Self> {
        if !(sigma_big_t > 0.0 && sigma_big_t.is_finite()) {
            return Err(Error::InvalidInput(format!("sigma_T must be positive, got {sigma_big_t}")));
        }
        if !(alpha_big_t >= 0.0 && alpha_big_t.is_finite()) {
            return Err(Error::InvalidSchedule(format!("alpha_T = {alpha_big_t}")));
        }
        check_dim(spectrum.dim(), x_big_t.len())?;
        let shifted = &x_big_t - spectrum.mean() * (alpha_big_t - 1.0);
        let (coeffs, residual) = manifold_split(&spectrum, &shifted)?;
        Ok(Self {
            spectrum,
            sigma_big_t,
            alpha_big_t,
            x_big_t,
            coeffs,
            residual,
        })
    }

    /// Anchor at time `t_big` of a schedule.
    pub fn at_time(spectrum: CompactSpectrum, schedule: &NoiseSchedule, t_big: f64, x_big_t: DVector<f64>) -> Result<Self> {
        let (alpha, sigma) = schedule.eval(t_big)?;
        Self::with_scale(spectrum, x_big_t, alpha, sigma)
    }

    pub fn spectrum(&self) -> &CompactSpectrum {
        &self.spectrum
    }

    pub fn sigma_big_t(&self) -> f64 {
        self.sigma_big_t
    }

    pub fn alpha_big_t(&self) -> f64 {
        self.alpha_big_t
    }

    pub fn x_big_t(&self) -> &DVector<f64> {
        &self.x_big_t
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        &self.coeffs
    }

    pub fn residual(&self) -> &DVector<f64> {
        &self.residual
    }

    fn require_unscaled(&self) -> Result<()> {
        if self.alpha_big_t != 1.0 {
            return Err(Error::InvalidInput(
                "context has alpha_T != 1; use the scaled solution".into(),
            ));
        }
        Ok(())
    }

    fn check_sigma_t(&self, sigma_t: f64) -> Result<()> {
        let hi = self.sigma_big_t * (1.0 + RANGE_SLACK);
        if !(sigma_t >= 0.0 && sigma_t <= hi) {
            return Err(Error::InvalidInput(format!(
                "sigma_t = {sigma_t} outside [0, {}]",
                self.sigma_big_t
            )));
        }
        Ok(())
    }
}

/// `x_t = μ + (σ_t/σ_T) x_T^⊥ + Σ_k ψ(σ_t, σ_T, λ_k) c_k u_k`.
pub fn solve_state(ctx: &SolutionContext, sigma_t: f64) -> Result<DVector<f64>> {
    ctx.require_unscaled()?;
    ctx.check_sigma_t(sigma_t)?;
    if sigma_t == ctx.sigma_big_t {
        return Ok(ctx.x_big_t.clone());
    }
    solve_state_scaled(ctx, 1.0, sigma_t)
}

/// `D(t) = μ + Σ_k ξ(σ_t, σ_T, λ_k) c_k u_k`.
pub fn solve_denoiser(ctx: &SolutionContext, sigma_t: f64) -> Result<DVector<f64>> {
    ctx.require_unscaled()?;
    ctx.check_sigma_t(sigma_t)?;
    solve_denoiser_scaled(ctx, 1.0, sigma_t)
}

/// Closed-form state at `σ_t = 0`; lies on `μ + span(U)`.
pub fn endpoint(ctx: &SolutionContext) -> Result<DVector<f64>> {
    let spec = &ctx.spectrum;
    let mut c = ctx.coeffs.clone();
    for (ck, lam) in c.iter_mut().zip(spec.eigenvalues().iter()) {
        *ck *= psi_bar(1.0, 0.0, ctx.alpha_big_t, ctx.sigma_big_t, *lam)?;
    }
    Ok(spec.mean() + spec.basis() * c)
}

/// `x_t = α_t μ + (σ_t/σ_T) x̄^⊥ + Σ_k ψ̄ c̄_k u_k` at an explicit `(α_t, σ_t)`.
pub fn solve_state_scaled(ctx: &SolutionContext, alpha_t: f64, sigma_t: f64) -> Result<DVector<f64>> {
    if !(alpha_t > 0.0) {
        return Err(Error::InvalidSchedule(format!("alpha_t must be positive, got {alpha_t}")));
    }
    check_scaled(alpha_t, sigma_t)?;
    let spec = &ctx.spectrum;
    let mut c = ctx.coeffs.clone();
    for (ck, lam) in c.iter_mut().zip(spec.eigenvalues().iter()) {
        *ck *= psi_bar(alpha_t, sigma_t, ctx.alpha_big_t, ctx.sigma_big_t, *lam)?;
    }
    Ok(spec.mean() * alpha_t + &ctx.residual * (sigma_t / ctx.sigma_big_t) + spec.basis() * c)
}

/// `D(t) = μ + Σ_k ξ̄ c̄_k u_k` at an explicit `(α_t, σ_t)`.
pub fn solve_denoiser_scaled(ctx: &SolutionContext, alpha_t: f64, sigma_t: f64) -> Result<DVector<f64>> {
    if !(alpha_t > 0.0) {
        return Err(Error::InvalidSchedule(format!("alpha_t must be positive, got {alpha_t}")));
    }
    let spec = &ctx.spectrum;
    let mut c = ctx.coeffs.clone();
    for (ck, lam) in c.iter_mut().zip(spec.eigenvalues().iter()) {
        *ck *= xi_bar(alpha_t, sigma_t, ctx.alpha_big_t, ctx.sigma_big_t, *lam)?;
    }
    Ok(spec.mean() + spec.basis() * c)
}

pub fn solve_state_vp(ctx: &SolutionContext, schedule: &NoiseSchedule, t: f64) -> Result<DVector<f64>> {
    let (alpha, sigma) = schedule.eval(t)?;
    solve_state_scaled(ctx, alpha, sigma)
}

pub fn solve_denoiser_vp(ctx: &SolutionContext, schedule: &NoiseSchedule, t: f64) -> Result<DVector<f64>> {
    let (alpha, sigma) = schedule.eval(t)?;
    solve_denoiser_scaled(ctx, alpha, sigma)
}

/// Closed-form EDM trajectory at the given (descending) noise levels.
pub fn closed_form_trajectory(ctx: &SolutionContext, levels: &[f64]) -> Result<Trajectory> {
    ctx.require_unscaled()?;
    let mut traj = Trajectory::new("closed-form");
    for &s in levels {
        let x = if s == 0.0 { endpoint(ctx)? } else { solve_state(ctx, s)? };
        traj.push(s, s, 1.0, x, Some(solve_denoiser(ctx, s)?));
    }
    Ok(traj)
}

/// Closed-form scaled trajectory at the given (descending) times.
pub fn closed_form_trajectory_vp(ctx: &SolutionContext, schedule: &NoiseSchedule, times: &[f64]) -> Result<Trajectory> {
    let mut traj = Trajectory::new("closed-form-vp");
    for &t in times {
        let (alpha, sigma) = schedule.eval(t)?;
        let x = solve_state_scaled(ctx, alpha, sigma)?;
        traj.push(t, sigma, alpha, x, Some(solve_denoiser_scaled(ctx, alpha, sigma)?));
    }
    Ok(traj)
}

/// `J(α; λ) = √(1 + (λ−1)α²) − α√λ − √(1−α²)`, the per-axis deviation of the
/// variance-preserving closed form from the spherical interpolation
/// `α x₀ + √(1−α²) x_T`. Evaluated in a cancellation-free form.
pub fn rotation_correction(alpha: f64, lambda: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) || !(lambda >= 0.0) {
        return Err(Error::InvalidInput(format!("need alpha in [0,1], lambda >= 0; got {alpha}, {lambda}")));
    }
    let sigma = (1.0 - alpha * alpha).sqrt();
    let sl = lambda.sqrt();
    let a = (sigma * sigma + lambda * alpha * alpha).sqrt();
    let den = a + alpha * sl + sigma;
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok(-2.0 * sigma * alpha * sl / den)
}

/// Upper bound `4(1−√2/2)² Σ c_k²` on the squared off-plane residual.
pub fn rotation_bound(coeffs: &DVector<f64>) -> f64 {
    let k = 1.0 - std::f64::consts::FRAC_1_SQRT_2;
    4.0 * k * k * coeffs.norm_squared()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RotationRecord {
    pub t: f64,
    pub sigma: f64,
    pub a: f64,
    pub b: f64,
    pub residual_norm: f64,
    pub a_pred: f64,
    pub b_pred: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RotationReport {
    pub records: Vec<RotationRecord>,
    /// Present when a solution context was supplied.
    pub bound: Option<f64>,
}

impl RotationReport {
    pub fn max_residual_sq(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.residual_norm * r.residual_norm)
            .fold(0.0, f64::max)
    }
}

/// Least-squares decomposition `x_t = a x₀ + b x_T + residual` for every
/// trajectory step.
pub fn rotation_decompose(
    traj: &Trajectory,
    x0: &DVector<f64>,
    x_big_t: &DVector<f64>,
    ctx: Option<&SolutionContext>,
) -> Result<RotationReport> {
    if traj.is_empty() {
        return Err(Error::EmptyInput);
    }
    check_dim(x0.len(), x_big_t.len())?;
    check_dim(x0.len(), traj.dim())?;
    let g00 = x0.norm_squared();
    let g11 = x_big_t.norm_squared();
    let g01 = x0.dot(x_big_t);
    let det = g00 * g11 - g01 * g01;
    let both = g00 > 0.0 && g11 > 0.0;
    let moving = traj.steps.iter().any(|s| s.state != traj.steps[0].state);
    if both && det < 1e-12 * g00 * g11 && moving {
        return Err(Error::DegeneratePlane);
    }
    let mut records = Vec::with_capacity(traj.len());
    for step in &traj.steps {
        let x = &step.state;
        let (p0, p1) = (x0.dot(x), x_big_t.dot(x));
        let (a, b) = if both && det >= 1e-12 * g00 * g11 {
            ((g11 * p0 - g01 * p1) / det, (g00 * p1 - g01 * p0) / det)
        } else if g00 > 0.0 {
            (p0 / g00, 0.0)
        } else if g11 > 0.0 {
            (0.0, p1 / g11)
        } else {
            (0.0, 0.0)
        };
        let residual = x - x0 * a - x_big_t * b;
        let alpha = step.alpha.clamp(0.0, 1.0);
        records.push(RotationRecord {
            t: step.t,
            sigma: step.sigma,
            a,
            b,
            residual_norm: residual.norm(),
            a_pred: alpha,
            b_pred: (1.0 - alpha * alpha).sqrt(),
        });
    }
    Ok(RotationReport {
        records,
        bound: ctx.map(|c| rotation_bound(c.coeffs())),
    })
}
