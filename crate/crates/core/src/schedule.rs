//! Noise schedules, the discrete noise-level grid, and conversions between
//! diffusion-model notations.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_RHO: f64 = 7.0;
pub const DEFAULT_N_STEP: usize = 18;
pub const EDM_SIGMA_MIN: f64 = 0.002;
pub const EDM_SIGMA_MAX: f64 = 80.0;

/// Parameters of a Karras-style grid, also parsed from `"σmin:σmax:ρ:n"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub rho: f64,
    pub n_step: usize,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            sigma_min: EDM_SIGMA_MIN,
            sigma_max: EDM_SIGMA_MAX,
            rho: DEFAULT_RHO,
            n_step: DEFAULT_N_STEP,
        }
    }
}

impl FromStr for GridParams {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(Error::InvalidInput(format!(
                "grid spec '{s}' must look like sigma_min:sigma_max:rho:n_step"
            )));
        }
        let num = |p: &str| {
            p.parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("bad number '{p}' in grid spec")))
        };
        let n_step = parts[3]
            .parse::<usize>()
            .map_err(|_| Error::InvalidInput(format!("bad step count '{}' in grid spec", parts[3])))?;
        Ok(Self {
            sigma_min: num(parts[0])?,
            sigma_max: num(parts[1])?,
            rho: num(parts[2])?,
            n_step,
        })
    }
}

impl fmt::Display for GridParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}:{}", self.sigma_min, self.sigma_max, self.rho, self.n_step)
    }
}

/// Strictly descending noise levels. The last level may be `0` when the
/// caller wants the sampler to finish with a denoising step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseGrid {
    levels: Vec<f64>,
    params: Option<GridParams>,
}

impl NoiseGrid {
    pub fn from_levels(levels: Vec<f64>) -> Result<Self> {
        validate_levels(&levels)?;
        Ok(Self { levels, params: None })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn params(&self) -> Option<&GridParams> {
        self.params.as_ref()
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn sigma_max(&self) -> f64 {
        self.levels[0]
    }

    pub fn sigma_min(&self) -> f64 {
        self.levels[self.levels.len() - 1]
    }

    /// Same grid with a final `σ = 0` level appended.
    pub fn with_zero(&self) -> Self {
        let mut levels = self.levels.clone();
        if self.sigma_min() > 0.0 {
            levels.push(0.0);
        }
        Self {
            levels,
            params: self.params,
        }
    }
}

pub(crate) fn validate_levels(levels: &[f64]) -> Result<()> {
    if levels.len() < 2 {
        return Err(Error::InvalidInput("a noise grid needs at least two levels".into()));
    }
    if levels.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::InvalidInput("noise levels must be finite and nonnegative".into()));
    }
    if levels.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput("noise levels must be strictly descending".into()));
    }
    Ok(())
}

/// `σ_i = (σmax^{1/ρ} + i/(n−1) (σmin^{1/ρ} − σmax^{1/ρ}))^ρ`, endpoints exact.
pub fn karras_grid(sigma_min: f64, sigma_max: f64, rho: f64, n_step: usize) -> Result<NoiseGrid> {
    if !(sigma_min > 0.0 && sigma_min < sigma_max && sigma_max.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "need 0 < sigma_min < sigma_max, got {sigma_min}, {sigma_max}"
        )));
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidInput(format!("rho must be positive, got {rho}")));
    }
    if n_step < 2 {
        return Err(Error::InvalidInput(format!("n_step must be at least 2, got {n_step}")));
    }
    let hi = sigma_max.powf(1.0 / rho);
    let lo = sigma_min.powf(1.0 / rho);
    let last = (n_step - 1) as f64;
    let mut levels: Vec<f64> = (0..n_step)
        .map(|i| (hi + i as f64 / last * (lo - hi)).powf(rho))
        .collect();
    levels[0] = sigma_max;
    levels[n_step - 1] = sigma_min;
    validate_levels(&levels)?;
    Ok(NoiseGrid {
        levels,
        params: Some(GridParams {
            sigma_min,
            sigma_max,
            rho,
            n_step,
        }),
    })
}

pub fn karras_grid_from(params: &GridParams) -> Result<NoiseGrid> {
    karras_grid(params.sigma_min, params.sigma_max, params.rho, params.n_step)
}

/// Continuous `t ↦ (α_t, σ_t)` schedule.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSchedule {
    /// `σ_t = t`, `α ≡ 1`, on `[0, σ_max]`.
    Edm { sigma_max: f64 },
    /// Linear `β(t)` on `[0, T]`, `α_t = exp(−½∫β)`, `σ_t = √(1 − α_t²)`.
    Vp { beta_min: f64, beta_max: f64, t_max: f64 },
    /// Tabulated `(t, α, σ)` with monotone cubic interpolation.
    Table(TableSchedule),
}

pub fn edm_schedule(sigma_max: f64) -> Result<NoiseSchedule> {
    if !(sigma_max > 0.0 && sigma_max.is_finite()) {
        return Err(Error::InvalidInput(format!("sigma_max must be positive, got {sigma_max}")));
    }
    Ok(NoiseSchedule::Edm { sigma_max })
}

pub fn vp_schedule(beta_min: f64, beta_max: f64, t_max: f64) -> Result<NoiseSchedule> {
    if !(beta_min > 0.0 && beta_min <= beta_max && beta_max.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "need 0 < beta_min <= beta_max, got {beta_min}, {beta_max}"
        )));
    }
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::InvalidInput(format!("T must be positive, got {t_max}")));
    }
    Ok(NoiseSchedule::Vp {
        beta_min,
        beta_max,
        t_max,
    })
}

impl NoiseSchedule {
    pub fn t_min(&self) -> f64 {
        match self {
            Self::Table(tab) => tab.times[0],
            _ => 0.0,
        }
    }

    pub fn t_max(&self) -> f64 {
        match self {
            Self::Edm { sigma_max } => *sigma_max,
            Self::Vp { t_max, .. } => *t_max,
            Self::Table(tab) => tab.times[tab.times.len() - 1],
        }
    }

    fn check_t(&self, t: f64) -> Result<()> {
        let (lo, hi) = (self.t_min(), self.t_max());
        let slack = 1e-12 * hi.abs().max(1.0);
        if !(t >= lo - slack && t <= hi + slack) {
            return Err(Error::InvalidInput(format!("t = {t} outside [{lo}, {hi}]")));
        }
        Ok(())
    }

    /// `(α_t, σ_t)`.
    pub fn eval(&self, t: f64) -> Result<(f64, f64)> {
        self.check_t(t)?;
        Ok(match self {
            Self::Edm { .. } => (1.0, t.max(0.0)),
            Self::Vp { .. } => {
                let b = self.vp_integral(t);
                ((-0.5 * b).exp(), (-(-b).exp_m1()).max(0.0).sqrt())
            }
            Self::Table(tab) => (tab.alpha.eval(t), tab.sigma.eval(t)),
        })
    }

    pub fn alpha(&self, t: f64) -> Result<f64> {
        Ok(self.eval(t)?.0)
    }

    pub fn sigma(&self, t: f64) -> Result<f64> {
        Ok(self.eval(t)?.1)
    }

    /// `dσ/dt`; undefined for VP at `t = 0`, where `σ` has a square-root cusp.
    pub fn sigma_dot(&self, t: f64) -> Result<f64> {
        self.check_t(t)?;
        Ok(match self {
            Self::Edm { .. } => 1.0,
            Self::Vp { .. } => {
                let b = self.vp_integral(t);
                let sigma = (-(-b).exp_m1()).sqrt();
                if sigma == 0.0 {
                    return Err(Error::InvalidInput("sigma_dot undefined at sigma = 0".into()));
                }
                self.beta(t) * (-b).exp() / (2.0 * sigma)
            }
            Self::Table(tab) => tab.sigma.derivative(t),
        })
    }

    /// `dα/dt`.
    pub fn alpha_dot(&self, t: f64) -> Result<f64> {
        self.check_t(t)?;
        Ok(match self {
            Self::Edm { .. } => 0.0,
            Self::Vp { .. } => -0.5 * self.beta(t) * (-0.5 * self.vp_integral(t)).exp(),
            Self::Table(tab) => tab.alpha.derivative(t),
        })
    }

    fn beta(&self, t: f64) -> f64 {
        match self {
            Self::Vp {
                beta_min,
                beta_max,
                t_max,
            } => beta_min + (beta_max - beta_min) * t / t_max,
            _ => 0.0,
        }
    }

    // ∫₀ᵗ β
    fn vp_integral(&self, t: f64) -> f64 {
        match self {
            Self::Vp {
                beta_min,
                beta_max,
                t_max,
            } => beta_min * t + 0.5 * (beta_max - beta_min) * t * t / t_max,
            _ => 0.0,
        }
    }

    /// Times spaced uniformly from `t_max` down to `t_min`.
    pub fn uniform_times(&self, n: usize) -> Result<Vec<f64>> {
        if n < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 times, got {n}")));
        }
        let (lo, hi) = (self.t_min(), self.t_max());
        let mut ts: Vec<f64> = (0..n)
            .map(|i| hi + (lo - hi) * i as f64 / (n - 1) as f64)
            .collect();
        ts[n - 1] = lo;
        Ok(ts)
    }
}

/// Tabulated schedule. Times strictly ascending; α nonincreasing and σ
/// nondecreasing; both are interpolated with monotone (Fritsch–Carlson)
/// cubic Hermite splines so monotonicity carries over.
#[derive(Debug, Clone, PartialEq)]
pub struct TableSchedule {
    times: Vec<f64>,
    alpha: MonotoneCubic,
    sigma: MonotoneCubic,
}

impl TableSchedule {
    pub fn new(times: Vec<f64>, alpha: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        let n = times.len();
        if n < 2 {
            return Err(Error::InvalidSchedule("table needs at least two rows".into()));
        }
        if alpha.len() != n || sigma.len() != n {
            return Err(Error::InvalidSchedule("table columns differ in length".into()));
        }
        if times.iter().chain(&alpha).chain(&sigma).any(|v| !v.is_finite()) {
            return Err(Error::InvalidSchedule("table has non-finite entries".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSchedule("table times must be strictly ascending".into()));
        }
        if alpha.iter().any(|a| *a <= 0.0) || sigma.iter().any(|s| *s < 0.0) {
            return Err(Error::InvalidSchedule("need alpha > 0 and sigma >= 0".into()));
        }
        if alpha.windows(2).any(|w| w[1] > w[0]) || sigma.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidSchedule(
                "alpha must be nonincreasing and sigma nondecreasing in t".into(),
            ));
        }
        Ok(Self {
            alpha: MonotoneCubic::new(&times, &alpha),
            sigma: MonotoneCubic::new(&times, &sigma),
            times,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }
}

#[derive(Debug, Clone, PartialEq)]
struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl MonotoneCubic {
    fn new(x: &[f64], y: &[f64]) -> Self {
        let n = x.len();
        let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / (x[i + 1] - x[i])).collect();
        let mut m = vec![0.0; n];
        m[0] = delta[0];
        m[n - 1] = delta[n - 2];
        for i in 1..n - 1 {
            m[i] = if delta[i - 1] * delta[i] <= 0.0 {
                0.0
            } else {
                (delta[i - 1] + delta[i]) / 2.0
            };
        }
        for i in 0..n - 1 {
            if delta[i] == 0.0 {
                m[i] = 0.0;
                m[i + 1] = 0.0;
                continue;
            }
            let a = m[i] / delta[i];
            let b = m[i + 1] / delta[i];
            let s = a * a + b * b;
            if s > 9.0 {
                let tau = 3.0 / s.sqrt();
                m[i] = tau * a * delta[i];
                m[i + 1] = tau * b * delta[i];
            }
        }
        Self {
            x: x.to_vec(),
            y: y.to_vec(),
            m,
        }
    }

    fn segment(&self, t: f64) -> usize {
        let n = self.x.len();
        match self.x.partition_point(|&xi| xi <= t) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        }
    }

    fn eval(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let h = self.x[i + 1] - self.x[i];
        let s = ((t - self.x[i]) / h).clamp(0.0, 1.0);
        let (s2, s3) = (s * s, s * s * s);
        (2.0 * s3 - 3.0 * s2 + 1.0) * self.y[i]
            + (s3 - 2.0 * s2 + s) * h * self.m[i]
            + (-2.0 * s3 + 3.0 * s2) * self.y[i + 1]
            + (s3 - s2) * h * self.m[i + 1]
    }

    fn derivative(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let h = self.x[i + 1] - self.x[i];
        let s = ((t - self.x[i]) / h).clamp(0.0, 1.0);
        let s2 = s * s;
        ((6.0 * s2 - 6.0 * s) * self.y[i]
            + (-6.0 * s2 + 6.0 * s) * self.y[i + 1])
            / h
            + (3.0 * s2 - 4.0 * s + 1.0) * self.m[i]
            + (3.0 * s2 - 2.0 * s) * self.m[i + 1]
    }
}

/// Diffusion-model notations that map onto the canonical `(α_t, σ_t)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Framework {
    Edm,
    EdmScaled,
    Vp,
    DdpmDiscrete,
}

impl FromStr for Framework {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "edm" => Ok(Self::Edm),
            "edm-scaled" | "edm-with-scaling" => Ok(Self::EdmScaled),
            "vp" => Ok(Self::Vp),
            "ddpm" | "ddpm-discrete" => Ok(Self::DdpmDiscrete),
            other => Err(Error::UnsupportedFramework(other.to_string())),
        }
    }
}

/// Framework-specific parameters accepted by [`convert_notation`].
#[derive(Debug, Clone, PartialEq)]
pub enum NotationParams {
    /// `σ(t) = t` up to `sigma_max`.
    Edm { sigma_max: f64 },
    /// `x = s(t)(x₀ + σ(t) ε)` tabulated on `times`.
    EdmScaled {
        times: Vec<f64>,
        scale: Vec<f64>,
        sigma: Vec<f64>,
    },
    Vp { beta_min: f64, beta_max: f64, t_max: f64 },
    /// Cumulative products `ᾱ_t` indexed by step `t = 0, 1, …`.
    DdpmDiscrete { alpha_bar: Vec<f64> },
}

impl NotationParams {
    pub fn framework(&self) -> Framework {
        match self {
            Self::Edm { .. } => Framework::Edm,
            Self::EdmScaled { .. } => Framework::EdmScaled,
            Self::Vp { .. } => Framework::Vp,
            Self::DdpmDiscrete { .. } => Framework::DdpmDiscrete,
        }
    }
}

/// Canonical `(α_t, σ_t)` schedule for a framework's native parameters.
pub fn convert_notation(framework: Framework, params: NotationParams) -> Result<NoiseSchedule> {
    if params.framework() != framework {
        return Err(Error::InvalidInput(format!(
            "parameters for {:?} given for framework {framework:?}",
            params.framework()
        )));
    }
    match params {
        NotationParams::Edm { sigma_max } => edm_schedule(sigma_max),
        NotationParams::Vp {
            beta_min,
            beta_max,
            t_max,
        } => vp_schedule(beta_min, beta_max, t_max),
        NotationParams::EdmScaled { times, scale, sigma } => {
            if scale.len() != sigma.len() {
                return Err(Error::InvalidSchedule("scale and sigma differ in length".into()));
            }
            let sig = scale.iter().zip(&sigma).map(|(s, g)| s * g).collect();
            Ok(NoiseSchedule::Table(TableSchedule::new(times, scale, sig)?))
        }
        NotationParams::DdpmDiscrete { alpha_bar } => {
            let mut alpha = Vec::with_capacity(alpha_bar.len());
            let mut sigma = Vec::with_capacity(alpha_bar.len());
            for &ab in &alpha_bar {
                let (a, s) = ddpm_to_canonical(ab)?;
                alpha.push(a);
                sigma.push(s);
            }
            let times = (0..alpha_bar.len()).map(|i| i as f64).collect();
            Ok(NoiseSchedule::Table(TableSchedule::new(times, alpha, sigma)?))
        }
    }
}

/// `ᾱ ↦ (√ᾱ, √(1 − ᾱ))`.
pub fn ddpm_to_canonical(alpha_bar: f64) -> Result<(f64, f64)> {
    if !(alpha_bar > 0.0 && alpha_bar <= 1.0) {
        return Err(Error::InvalidSchedule(format!("alpha_bar = {alpha_bar} outside (0, 1]")));
    }
    Ok((alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt()))
}

/// Schedule section of a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScheduleSpec {
    Edm {
        #[serde(default = "default_sigma_min")]
        sigma_min: f64,
        #[serde(default = "default_sigma_max")]
        sigma_max: f64,
        #[serde(default = "default_rho")]
        rho: f64,
        #[serde(default = "default_n_step")]
        n_step: usize,
    },
    Vp {
        beta_min: f64,
        beta_max: f64,
        #[serde(rename = "T", alias = "t_max", default = "default_t_max")]
        t_max: f64,
    },
    Table { path: String },
}

fn default_sigma_min() -> f64 {
    EDM_SIGMA_MIN
}
fn default_sigma_max() -> f64 {
    EDM_SIGMA_MAX
}
fn default_rho() -> f64 {
    DEFAULT_RHO
}
fn default_n_step() -> usize {
    DEFAULT_N_STEP
}
fn default_t_max() -> f64 {
    1.0
}

impl FromStr for ScheduleSpec {
    type Err = Error;

    /// `edm:σmin:σmax:ρ:n`, `edm` , `vp:β_min:β_max[:T]`, `vp`, `table:path`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        match kind.trim().to_ascii_lowercase().as_str() {
            "edm" => {
                let p = if rest.is_empty() {
                    GridParams::default()
                } else {
                    rest.parse()?
                };
                Ok(Self::Edm {
                    sigma_min: p.sigma_min,
                    sigma_max: p.sigma_max,
                    rho: p.rho,
                    n_step: p.n_step,
                })
            }
            "vp" => {
                let nums: Vec<f64> = if rest.is_empty() {
                    vec![0.1, 20.0, 1.0]
                } else {
                    rest.split(':')
                        .map(|p| {
                            p.trim()
                                .parse()
                                .map_err(|_| Error::InvalidInput(format!("bad number '{p}' in vp spec")))
                        })
                        .collect::<Result<_>>()?
                };
                match nums[..] {
                    [beta_min, beta_max] => Ok(Self::Vp {
                        beta_min,
                        beta_max,
                        t_max: 1.0,
                    }),
                    [beta_min, beta_max, t_max] => Ok(Self::Vp {
                        beta_min,
                        beta_max,
                        t_max,
                    }),
                    _ => Err(Error::InvalidInput(format!("vp spec '{s}' needs beta_min:beta_max[:T]"))),
                }
            }
            "table" if !rest.is_empty() => Ok(Self::Table { path: rest.to_string() }),
            other => Err(Error::UnsupportedFramework(other.to_string())),
        }
    }
}

impl ScheduleSpec {
    /// Continuous schedule for the analytic kinds; table specs are loaded
    /// through [`crate::io::read_schedule_table`].
    pub fn schedule(&self) -> Result<NoiseSchedule> {
        match self {
            Self::Edm { sigma_max, .. } => edm_schedule(*sigma_max),
            Self::Vp {
                beta_min,
                beta_max,
                t_max,
            } => vp_schedule(*beta_min, *beta_max, *t_max),
            Self::Table { path } => crate::io::read_schedule_table(path),
        }
    }

    pub fn grid(&self) -> Option<GridParams> {
        match self {
            Self::Edm {
                sigma_min,
                sigma_max,
                rho,
                n_step,
            } => Some(GridParams {
                sigma_min: *sigma_min,
                sigma_max: *sigma_max,
                rho: *rho,
                n_step: *n_step,
            }),
            _ => None,
        }
    }
}
