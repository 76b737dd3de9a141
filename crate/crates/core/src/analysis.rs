//! Score-field comparison metrics, trajectory deviations, analytical curve
//! tables, planar slices of score fields and the bimodal deviation integral.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_sigma, Error, Result};
use crate::quadrature::NormalQuadrature;
use crate::rng::{self, streams, Rng};
use crate::schedule::NoiseSchedule;
use crate::score::{ScoreField, ScoreModel};
use crate::solution::{perturbation_gain, psi_bar, xi_bar};
use crate::spectrum::PointCloud;
use crate::trajectory::Trajectory;

const LEVEL_RTOL: f64 = 1e-12;

/// Where comparison probes are drawn from.
#[derive(Debug, Clone, Copy)]
pub enum ProbeDist<'a> {
    /// `N(0, σ²I)`.
    Origin,
    /// A uniformly chosen cloud point plus `N(0, σ²I)` noise.
    NoisedCloud(&'a PointCloud),
}

/// `n × d` probe matrix, one probe per row.
pub fn draw_probes(dist: &ProbeDist<'_>, d: usize, sigma: f64, n: usize, rng: &mut Rng) -> Result<DMatrix<f64>> {
    check_sigma(sigma)?;
    if n == 0 {
        return Err(Error::InvalidInput("at least one probe is required".into()));
    }
    let mut probes = rng::normal_matrix(rng, n, d, sigma);
    if let ProbeDist::NoisedCloud(cloud) = dist {
        check_dim(d, cloud.dim())?;
        use rand::Rng as _;
        for i in 0..n {
            let j = rng.random_range(0..cloud.len());
            let mut row = probes.row_mut(i);
            row += cloud.data().row(j);
        }
    }
    Ok(probes)
}

/// Summary of per-probe unexplained-variance ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceStats {
    pub mean: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    /// `Σ‖Δs‖² / Σ‖s_ref‖²` over the same probes.
    pub ratio_of_sums: f64,
    pub n_used: usize,
    /// Probes where the reference score vanished.
    pub excluded: usize,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `(mean, q25, q75)` of a sample.
pub fn summarize(values: &[f64]) -> (f64, f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (mean, quantile_sorted(&v, 0.25), quantile_sorted(&v, 0.75))
}

/// Per-probe `‖s_ref − s_approx‖² / ‖s_ref‖²`, `None` where `s_ref = 0`.
pub fn unexplained_ratios<R, A>(reference: &R, approx: &A, sigma: f64, probes: &DMatrix<f64>) -> Result<Vec<Option<(f64, f64)>>>
where
    R: ScoreField + ?Sized,
    A: ScoreField + ?Sized,
{
    check_sigma(sigma)?;
    check_dim(reference.dim(), probes.ncols())?;
    check_dim(approx.dim(), probes.ncols())?;
    (0..probes.nrows())
        .into_par_iter()
        .map(|i| {
            let x = probes.row(i).transpose();
            let s = reference.score(&x, sigma)?;
            let a = approx.score(&x, sigma)?;
            let den = s.norm_squared();
            let num = (s - a).norm_squared();
            Ok(if den > 0.0 { Some((num, den)) } else { None })
        })
        .collect()
}

/// Fraction of unexplained variance on fixed probes.
pub fn unexplained_variance_on<R, A>(reference: &R, approx: &A, sigma: f64, probes: &DMatrix<f64>) -> Result<VarianceStats>
where
    R: ScoreField + ?Sized,
    A: ScoreField + ?Sized,
{
    let pairs = unexplained_ratios(reference, approx, sigma, probes)?;
    let excluded = pairs.iter().filter(|p| p.is_none()).count();
    let used: Vec<(f64, f64)> = pairs.into_iter().flatten().collect();
    if used.is_empty() {
        return Err(Error::InvalidData("reference score vanishes at every probe".into()));
    }
    let mut ratios: Vec<f64> = used.iter().map(|(n, d)| n / d).collect();
    ratios.sort_by(f64::total_cmp);
    let (num, den) = used.iter().fold((0.0, 0.0), |acc, (n, d)| (acc.0 + n, acc.1 + d));
    Ok(VarianceStats {
        mean: ratios.iter().sum::<f64>() / ratios.len() as f64,
        q25: quantile_sorted(&ratios, 0.25),
        median: quantile_sorted(&ratios, 0.5),
        q75: quantile_sorted(&ratios, 0.75),
        ratio_of_sums: num / den,
        n_used: ratios.len(),
        excluded,
    })
}

/// Fraction of unexplained variance on `n_probe` freshly drawn probes.
pub fn unexplained_variance<R, A>(
    reference: &R,
    approx: &A,
    sigma: f64,
    n_probe: usize,
    seed: u64,
    dist: ProbeDist<'_>,
) -> Result<VarianceStats>
where
    R: ScoreField + ?Sized,
    A: ScoreField + ?Sized,
{
    let mut rng = rng::stream_rng(seed, streams::PROBES);
    let probes = draw_probes(&dist, reference.dim(), sigma, n_probe, &mut rng)?;
    unexplained_variance_on(reference, approx, sigma, &probes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviationMode {
    State,
    Denoiser,
}

impl std::str::FromStr for DeviationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "state" => Ok(Self::State),
            "denoiser" => Ok(Self::Denoiser),
            _ => Err(Error::InvalidInput(format!("unknown deviation mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationPoint {
    pub sigma: f64,
    pub mse: f64,
}

fn same_level(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= LEVEL_RTOL * a.abs().max(b.abs())
}

/// Per-level `(1/D)‖a − b‖²`.
pub fn trajectory_deviation(a: &Trajectory, b: &Trajectory, mode: DeviationMode) -> Result<Vec<DeviationPoint>> {
    if a.len() != b.len() {
        return Err(Error::GridMismatch);
    }
    if a.dim() != b.dim() {
        return Err(Error::ShapeError {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    a.steps
        .iter()
        .zip(&b.steps)
        .map(|(sa, sb)| {
            if !same_level(sa.sigma, sb.sigma) {
                return Err(Error::GridMismatch);
            }
            let (va, vb) = match mode {
                DeviationMode::State => (&sa.state, &sb.state),
                DeviationMode::Denoiser => match (&sa.denoised, &sb.denoised) {
                    (Some(x), Some(y)) => (x, y),
                    _ => {
                        return Err(Error::InvalidData(format!(
                            "no denoiser output recorded at sigma = {}",
                            sa.sigma
                        )))
                    }
                },
            };
            Ok(DeviationPoint {
                sigma: sa.sigma,
                mse: (va - vb).norm_squared() / va.len() as f64,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsemblePoint {
    pub sigma: f64,
    pub mean: f64,
    pub q25: f64,
    pub q75: f64,
}

/// Deviation curves aggregated over pairs of trajectories.
pub fn ensemble_deviation(pairs: &[(Trajectory, Trajectory)], mode: DeviationMode) -> Result<Vec<EnsemblePoint>> {
    let curves = pairs
        .iter()
        .map(|(a, b)| trajectory_deviation(a, b, mode))
        .collect::<Result<Vec<_>>>()?;
    let first = curves.first().ok_or(Error::EmptyInput)?;
    if curves.iter().any(|c| c.len() != first.len()) {
        return Err(Error::GridMismatch);
    }
    (0..first.len())
        .map(|l| {
            let vals: Vec<f64> = curves.iter().map(|c| c[l].mse).collect();
            if curves.iter().any(|c| !same_level(c[l].sigma, first[l].sigma)) {
                return Err(Error::GridMismatch);
            }
            let (mean, q25, q75) = summarize(&vals);
            Ok(EnsemblePoint {
                sigma: first[l].sigma,
                mean,
                q25,
                q75,
            })
        })
        .collect()
}

/// One `(t, λ)` row of the analytical-curve table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub t: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub sigma: f64,
    pub psi_bar: f64,
    /// `ξ̄/√λ`.
    pub xi_scaled: f64,
    /// Central-difference `d(ξ̄/√λ)/dt` along the time grid.
    pub dxi_dt: f64,
    pub gain: f64,
}

/// `ψ̄`, `ξ̄/√λ`, its time derivative and the perturbation gain on a time
/// grid, relative to the schedule's final time. Rows are grouped by `λ`.
pub fn analytical_curves(schedule: &NoiseSchedule, lambdas: &[f64], t_grid: &[f64]) -> Result<Vec<CurveRow>> {
    if lambdas.is_empty() || t_grid.len() < 2 {
        return Err(Error::InvalidInput("need at least one lambda and two time points".into()));
    }
    if lambdas.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(Error::InvalidInput("lambdas must be positive".into()));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("time grid must be strictly increasing".into()));
    }
    let (a_big, s_big) = schedule.eval(schedule.t_max())?;
    let ab: Vec<(f64, f64)> = t_grid.iter().map(|&t| schedule.eval(t)).collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(lambdas.len() * t_grid.len());
    for &lambda in lambdas {
        let xs: Vec<f64> = ab
            .iter()
            .map(|&(a, s)| Ok(xi_bar(a, s, a_big, s_big, lambda)? / lambda.sqrt()))
            .collect::<Result<_>>()?;
        let n = t_grid.len();
        for i in 0..n {
            let (lo, hi) = (i.saturating_sub(1), (i + 1).min(n - 1));
            let dxi = (xs[hi] - xs[lo]) / (t_grid[hi] - t_grid[lo]);
            let (alpha, sigma) = ab[i];
            rows.push(CurveRow {
                t: t_grid[i],
                lambda,
                alpha,
                sigma,
                psi_bar: psi_bar(alpha, sigma, a_big, s_big, lambda)?,
                xi_scaled: xs[i],
                dxi_dt: dxi,
                gain: perturbation_gain(lambda, alpha, sigma)?,
            });
        }
    }
    Ok(rows)
}

/// Time of maximal `|d(ξ̄/√λ)/dt|` for one `λ` in a curve table.
pub fn critical_time(rows: &[CurveRow], lambda: f64) -> Option<f64> {
    rows.iter()
        .filter(|r| r.lambda == lambda)
        .max_by(|a, b| a.dxi_dt.abs().total_cmp(&b.dxi_dt.abs()))
        .map(|r| r.t)
}

/// Orthonormal in-plane basis through three anchors, origin at their centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct SlicePlane {
    pub origin: DVector<f64>,
    pub e_u: DVector<f64>,
    pub e_v: DVector<f64>,
}

impl SlicePlane {
    pub fn from_anchors(anchors: &[DVector<f64>; 3]) -> Result<Self> {
        let d = anchors[0].len();
        check_dim(d, anchors[1].len())?;
        check_dim(d, anchors[2].len())?;
        let a = &anchors[1] - &anchors[0];
        let b = &anchors[2] - &anchors[0];
        let scale = a.norm().max(b.norm());
        let na = a.norm();
        if !(na > 1e-12 * scale) || scale == 0.0 {
            return Err(Error::DegeneratePlane);
        }
        let e_u = a / na;
        let w = &b - &e_u * e_u.dot(&b);
        let nw = w.norm();
        if !(nw > 1e-10 * scale) {
            return Err(Error::DegeneratePlane);
        }
        let origin = (&anchors[0] + &anchors[1] + &anchors[2]) / 3.0;
        Ok(Self { origin, e_u, e_v: w / nw })
    }

    pub fn point(&self, u: f64, v: f64) -> DVector<f64> {
        &self.origin + &self.e_u * u + &self.e_v * v
    }

    pub fn coords(&self, x: &DVector<f64>) -> (f64, f64) {
        let d = x - &self.origin;
        (self.e_u.dot(&d), self.e_v.dot(&d))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceCell {
    pub u: f64,
    pub v: f64,
    pub s_u: f64,
    pub s_v: f64,
    /// Norm of the in-plane projection.
    pub norm: f64,
}

#[derive(Debug, Clone)]
pub struct SliceResult {
    pub plane: SlicePlane,
    pub anchor_coords: [(f64, f64); 3],
    /// Grid coordinates along each axis, `grid_n` values in `[-extent, extent]`.
    pub axis: Vec<f64>,
    /// One row-major `grid_n × grid_n` grid per model, `v` outer, `u` inner.
    pub fields: Vec<Vec<SliceCell>>,
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Evaluates each model on a square grid in the anchor plane and projects
/// the scores onto the plane.
pub fn slice_field(
    models: &[&ScoreModel],
    anchors: &[DVector<f64>; 3],
    sigma: f64,
    grid_n: usize,
    extent: f64,
) -> Result<SliceResult> {
    check_sigma(sigma)?;
    if grid_n == 0 || !(extent > 0.0 && extent.is_finite()) {
        return Err(Error::InvalidInput("grid_n must be positive and extent positive".into()));
    }
    let plane = SlicePlane::from_anchors(anchors)?;
    for m in models {
        check_dim(plane.origin.len(), m.dim())?;
    }
    let axis = linspace(-extent, extent, grid_n);
    let nodes: Vec<(f64, f64)> = axis.iter().flat_map(|&v| axis.iter().map(move |&u| (u, v))).collect();
    let fields = models
        .iter()
        .map(|m| {
            nodes
                .par_iter()
                .map(|&(u, v)| {
                    let s = m.score(&plane.point(u, v), sigma)?;
                    let (s_u, s_v) = (plane.e_u.dot(&s), plane.e_v.dot(&s));
                    Ok(SliceCell {
                        u,
                        v,
                        s_u,
                        s_v,
                        norm: s_u.hypot(s_v),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let anchor_coords = [plane.coords(&anchors[0]), plane.coords(&anchors[1]), plane.coords(&anchors[2])];
    Ok(SliceResult {
        plane,
        anchor_coords,
        axis,
        fields,
    })
}

/// Minimum panel count accepted by [`bimodal_error_curve`].
pub const MIN_QUAD_PANELS: usize = 64;

fn check_bimodal(m: f64, q: f64, d: usize) -> Result<()> {
    if !(m > 0.0 && m.is_finite()) || !(q >= 0.0 && q.is_finite()) || d == 0 {
        return Err(Error::InvalidInput(format!("invalid bimodal parameters m={m}, q={q}, D={d}")));
    }
    Ok(())
}

/// Integrand of the reduced bimodal deviation, as a function of the
/// coordinate along the mode axis.
pub fn bimodal_integrand(m: f64, q: f64, d: usize, sigma: f64, x1: f64) -> f64 {
    let v = q * q + sigma * sigma;
    let th = (m * x1 / v).tanh();
    let num = m * m * (th - m * x1 / (v + m * m)).powi(2);
    let den = (m * th - x1).powi(2) + (d as f64 - 1.0) * v;
    if den == 0.0 {
        // x1 = 0 with D = 1: limit of num/den
        let r = (m * m / v - 1.0, m * m / v - m * m / (v + m * m));
        return m * m * (r.1 / m).powi(2) / (r.0).powi(2);
    }
    num / den
}

/// Expected unexplained variance of the Gaussian approximation to a
/// symmetric two-mode isotropic mixture with modes at `±m e₁`, mode variance
/// `q²`, in `D` dimensions, at each `σ`. The off-axis squared norm is
/// replaced by its mean `(D−1)(q²+σ²)`; the remaining one-dimensional
/// expectation uses composite Gauss–Legendre quadrature with `n_quad`
/// panels on each mode.
pub fn bimodal_error_curve(m: f64, q: f64, d: usize, sigma_grid: &[f64], n_quad: usize) -> Result<Vec<f64>> {
    check_bimodal(m, q, d)?;
    if n_quad < MIN_QUAD_PANELS {
        return Err(Error::InvalidInput(format!("n_quad must be at least {MIN_QUAD_PANELS}")));
    }
    let rule = NormalQuadrature::new(n_quad)?;
    sigma_grid
        .iter()
        .map(|&sigma| {
            check_sigma(sigma)?;
            let sd = (q * q + sigma * sigma).sqrt();
            let f = |x: f64| bimodal_integrand(m, q, d, sigma, x);
            Ok(0.5 * (rule.expect(m, sd, f) + rule.expect(-m, sd, f)))
        })
        .collect()
}

/// Full `D`-dimensional Monte Carlo estimate of the same expectation, with
/// exact mixture and Gaussian scores.
pub fn bimodal_error_monte_carlo(m: f64, q: f64, d: usize, sigma: f64, n_samples: usize, seed: u64) -> Result<f64> {
    check_bimodal(m, q, d)?;
    check_sigma(sigma)?;
    if n_samples == 0 {
        return Err(Error::InvalidInput("n_samples must be positive".into()));
    }
    use rand::Rng as _;
    let mut rng = rng::stream_rng(seed, streams::MONTE_CARLO);
    let v = q * q + sigma * sigma;
    let sd = v.sqrt();
    let mut total = 0.0;
    for _ in 0..n_samples {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let mut x = rng::normal_vector(&mut rng, d, sd);
        x[0] += sign * m;
        let th = (m * x[0] / v).tanh();
        let mut s = -&x / v;
        s[0] += m * th / v;
        let mut sg = -&x / v;
        sg[0] = -x[0] / (v + m * m);
        let den = s.norm_squared();
        if den > 0.0 {
            total += (s - sg).norm_squared() / den;
        }
    }
    Ok(total / n_samples as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::vp_schedule;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    struct Fixed(Vec<f64>);

    impl ScoreField for Fixed {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn score(&self, _: &DVector<f64>, _: f64) -> Result<DVector<f64>> {
            Ok(DVector::from_column_slice(&self.0))
        }
    }

    #[test]
    fn metric_edge_cases() {
        let probes = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -1.0, 0.5, 0.0, 3.0]);
        let a = Fixed(vec![1.0, 0.0]);
        assert_eq!(unexplained_variance_on(&a, &a, 1.0, &probes).unwrap().mean, 0.0);
        let zero = Fixed(vec![0.0, 0.0]);
        assert_eq!(unexplained_variance_on(&a, &zero, 1.0, &probes).unwrap().mean, 1.0);
        let orth = Fixed(vec![0.0, 1.0]);
        assert_eq!(unexplained_variance_on(&a, &orth, 1.0, &probes).unwrap().mean, 2.0);
        let s = unexplained_variance_on(&zero, &a, 1.0, &probes);
        assert!(s.is_err());
    }

    #[test]
    fn zero_reference_probes_are_excluded() {
        let model = ScoreModel::isotropic(v(&[0.0, 0.0]));
        let probes = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 1.0]);
        let stats = unexplained_variance_on(&model, &Fixed(vec![0.0, 0.0]), 1.0, &probes).unwrap();
        assert_eq!(stats.excluded, 1);
        assert_eq!(stats.n_used, 1);
    }

    #[test]
    fn quantiles() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&s, 0.25), 2.0);
        assert_eq!(quantile_sorted(&s, 0.5), 3.0);
        assert_eq!(quantile_sorted(&[1.0, 2.0], 0.25), 1.25);
    }

    #[test]
    fn vp_curves_edges() {
        let sched = vp_schedule(0.1, 20.0, 1.0).unwrap();
        let t = linspace(0.0, 1.0, 101);
        let rows = analytical_curves(&sched, &[1.0], &t).unwrap();
        assert!(rows.iter().all(|r| (r.gain - 1.0).abs() < 1e-12));
        assert!(rows.last().unwrap().xi_scaled.abs() < 1e-2);
    }

    #[test]
    fn slice_plane_is_whole_space_in_2d() {
        let anchors = [v(&[0.0, 0.0]), v(&[1.0, 0.0]), v(&[0.0, 1.0])];
        let m = ScoreModel::isotropic(v(&[0.3, -0.2]));
        let res = slice_field(&[&m], &anchors, 0.7, 5, 2.0).unwrap();
        for c in &res.fields[0] {
            let x = res.plane.point(c.u, c.v);
            let s = m.score(&x, 0.7).unwrap();
            assert!((s[0] - c.s_u).abs() < 1e-12 && (s[1] - c.s_v).abs() < 1e-12);
        }
        let bad = [v(&[0.0, 0.0]), v(&[1.0, 1.0]), v(&[2.0, 2.0])];
        assert!(matches!(SlicePlane::from_anchors(&bad), Err(Error::DegeneratePlane)));
    }

    #[test]
    fn bimodal_unimodal_limit() {
        let e = bimodal_error_curve(1e-8, 1.0, 4, &[0.1, 1.0, 10.0], 64).unwrap();
        assert!(e.iter().all(|&x| x < 1e-12));
        assert!(bimodal_error_curve(1.0, 1.0, 4, &[1.0], 32).is_err());
    }
}
