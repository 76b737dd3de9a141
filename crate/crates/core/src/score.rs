//! Idealized score models: isotropic, Gaussian, Gaussian mixture and delta
//! mixture (the exact score of a finite training set).
//!
//! Every model exposes the score `s(x, σ) = ∇ log p(x; σ)` and the optimal
//! denoiser `D(x, σ) = x + σ² s(x, σ)`. Mixture weights are computed in log
//! space with max subtraction, so they stay finite for tiny `σ`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_sigma, Error, Result};
use crate::spectrum::{self, CompactSpectrum, PointCloud};

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Anything that can produce a score vector at `(x, σ)`.
pub trait ScoreField: Sync {
    fn dim(&self) -> usize;

    fn score(&self, x: &DVector<f64>, sigma: f64) -> Result<DVector<f64>>;

    fn denoise(&self, x: &DVector<f64>, sigma: f64) -> Result<DVector<f64>> {
        let s = self.score(x, sigma)?;
        Ok(x + s * (sigma * sigma))
    }
}

/// One weighted component of a Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub spectrum: CompactSpectrum,
}

/// Gaussian mixture with (possibly low-rank) component covariances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureJson", into = "MixtureJson")]
pub struct Mixture {
    components: Vec<GaussianComponent>,
}

impl Mixture {
    /// Weights must be positive and sum to one within `1e-12`.
    pub fn new(components: Vec<GaussianComponent>) -> Result<Self> {
        let first = components.first().ok_or(Error::EmptyInput)?;
        let d = first.spectrum.dim();
        for c in &components {
            check_dim(d, c.spectrum.dim())?;
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return Err(Error::InvalidData(format!("component weight {} is not positive", c.weight)));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidData(format!("mixture weights sum to {total}")));
        }
        Ok(Self { components })
    }

    /// Rescales positive weights so they sum to one.
    pub fn normalized(mut components: Vec<GaussianComponent>) -> Result<Self> {
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidData("mixture weights do not have a positive sum".into()));
        }
        for c in &mut components {
            c.weight /= total;
        }
        Self::new(components)
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.components[0].spectrum.dim()
    }

    /// Mean and covariance of the whole mixture as a compact spectrum.
    pub fn moments(&self) -> Result<CompactSpectrum> {
        let d = self.dim();
        let mut mean = DVector::zeros(d);
        for c in &self.components {
            mean.axpy(c.weight, c.spectrum.mean(), 1.0);
        }
        // Σ = Σ_i π_i (U_i Λ_i U_iᵀ + (μ_i − μ)(μ_i − μ)ᵀ) = F Fᵀ
        let cols: usize = self.components.iter().map(|c| c.spectrum.rank() + 1).sum();
        let mut factor = DMatrix::zeros(d, cols);
        let mut j = 0;
        for c in &self.components {
            let s = &c.spectrum;
            for k in 0..s.rank() {
                let scale = (c.weight * s.eigenvalues()[k]).sqrt();
                factor.set_column(j, &(s.basis().column(k) * scale));
                j += 1;
            }
            factor.set_column(j, &((s.mean() - &mean) * c.weight.sqrt()));
            j += 1;
        }
        spectrum::spectrum_from_factor(mean, &factor, usize::MAX)
    }
}

#[derive(Serialize, Deserialize)]
struct ComponentJson {
    weight: f64,
    #[serde(flatten)]
    spectrum: CompactSpectrum,
}

#[derive(Serialize, Deserialize)]
struct MixtureJson {
    components: Vec<ComponentJson>,
}

impl TryFrom<MixtureJson> for Mixture {
    type Error = Error;

    fn try_from(j: MixtureJson) -> Result<Self> {
        Self::new(
            j.components
                .into_iter()
                .map(|c| GaussianComponent {
                    weight: c.weight,
                    spectrum: c.spectrum,
                })
                .collect(),
        )
    }
}

impl From<Mixture> for MixtureJson {
    fn from(m: Mixture) -> Self {
        Self {
            components: m
                .components
                .into_iter()
                .map(|c| ComponentJson {
                    weight: c.weight,
                    spectrum: c.spectrum,
                })
                .collect(),
        }
    }
}

/// Equal-weight mixture of point masses at the training samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaMixture {
    cloud: PointCloud,
    // D × N, one sample per contiguous column
    points: DMatrix<f64>,
}

impl DeltaMixture {
    pub fn new(cloud: PointCloud) -> Self {
        let points = cloud.data().transpose();
        Self { cloud, points }
    }

    pub fn cloud(&self) -> &PointCloud {
        &self.cloud
    }

    pub fn len(&self) -> usize {
        self.points.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.points.ncols() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.nrows()
    }

    fn weights(&self, x: &DVector<f64>, sigma: f64) -> DVector<f64> {
        let scale = -0.5 / (sigma * sigma);
        let logits = DVector::from_iterator(
            self.len(),
            self.points
                .column_iter()
                .map(|y| scale * (y - x).norm_squared()),
        );
        softmax(logits)
    }

    fn denoise_unchecked(&self, x: &DVector<f64>, sigma: f64) -> DVector<f64> {
        let w = self.weights(x, sigma);
        &self.points * w
    }
}

/// The four idealized score models.
#[derive(Debug, Clone, PartialEq)]
pub enum ScoreModel {
    Isotropic { mean: DVector<f64> },
    Gaussian(CompactSpectrum),
    Mixture(Mixture),
    Delta(DeltaMixture),
}

impl ScoreModel {
    pub fn isotropic(mean: DVector<f64>) -> Self {
        Self::Isotropic { mean }
    }

    pub fn delta(cloud: PointCloud) -> Self {
        Self::Delta(DeltaMixture::new(cloud))
    }

    pub fn variant_name(&self) -> &'static str {
        match self {
            Self::Isotropic { .. } => "isotropic",
            Self::Gaussian(_) => "gaussian",
            Self::Mixture(_) => "mixture",
            Self::Delta(_) => "delta",
        }
    }

    /// Gaussian with the same mean and covariance as the model.
    pub fn gaussian_approximation(&self) -> Result<CompactSpectrum> {
        match self {
            Self::Isotropic { mean } => Ok(CompactSpectrum::point_mass(mean.clone())),
            Self::Gaussian(s) => Ok(s.clone()),
            Self::Mixture(m) => m.moments(),
            Self::Delta(d) => spectrum::spectrum_from_cloud(d.cloud(), usize::MAX),
        }
    }

    /// Scores for every row of `xs` (`M × D`). Rows are independent, so the
    /// parallel path returns exactly what the serial path returns.
    pub fn score_batch(&self, xs: &DMatrix<f64>, sigma: f64, parallel: bool) -> Result<DMatrix<f64>> {
        self.batch(xs, sigma, parallel, |x| self.score(x, sigma))
    }

    pub fn denoise_batch(&self, xs: &DMatrix<f64>, sigma: f64, parallel: bool) -> Result<DMatrix<f64>> {
        self.batch(xs, sigma, parallel, |x| self.denoise(x, sigma))
    }

    fn batch<F>(&self, xs: &DMatrix<f64>, sigma: f64, parallel: bool, f: F) -> Result<DMatrix<f64>>
    where
        F: Fn(&DVector<f64>) -> Result<DVector<f64>> + Sync,
    {
        check_sigma(sigma)?;
        check_dim(ScoreField::dim(self), xs.ncols())?;
        let eval = |i: usize| f(&xs.row(i).transpose());
        let rows: Vec<DVector<f64>> = if parallel {
            (0..xs.nrows()).into_par_iter().map(eval).collect::<Result<_>>()?
        } else {
            (0..xs.nrows()).map(eval).collect::<Result<_>>()?
        };
        let mut out = DMatrix::zeros(xs.nrows(), xs.ncols());
        for (i, r) in rows.iter().enumerate() {
            out.set_row(i, &r.transpose());
        }
        Ok(out)
    }
}

impl ScoreField for ScoreModel {
    fn dim(&self) -> usize {
        match self {
            Self::Isotropic { mean } => mean.len(),
            Self::Gaussian(s) => s.dim(),
            Self::Mixture(m) => m.dim(),
            Self::Delta(d) => d.dim(),
        }
    }

    fn score(&self, x: &DVector<f64>, sigma: f64) -> Result<DVector<f64>> {
        match self {
            Self::Isotropic { mean } => iso_score(mean, x, sigma),
            Self::Gaussian(s) => gaussian_score(s, x, sigma),
            Self::Mixture(m) => gmm_score(m, x, sigma),
            Self::Delta(d) => {
                check_sigma(sigma)?;
                check_dim(d.dim(), x.len())?;
                Ok((d.denoise_unchecked(x, sigma) - x) / (sigma * sigma))
            }
        }
    }

    fn denoise(&self, x: &DVector<f64>, sigma: f64) -> Result<DVector<f64>> {
        match self {
            Self::Isotropic { mean } => {
                check_sigma(sigma)?;
                check_dim(mean.len(), x.len())?;
                Ok(mean.clone())
            }
            Self::Gaussian(s) => gaussian_denoise(s, x, sigma),
            Self::Mixture(m) => gmm_denoise(m, x, sigma),
            Self::Delta(d) => {
                check_sigma(sigma)?;
                check_dim(d.dim(), x.len())?;
                Ok(d.denoise_unchecked(x, sigma))
            }
        }
    }
}

/// `(μ − x) / σ²`.
pub fn iso_score(mean: &DVector<f64>, x: &DVector<f64>, sigma: f64) -> Result<DVector<f64>> {
    check_sigma(sigma)?;
    check_dim(mean.len(), x.len())?;
    Ok((mean - x) / (sigma * sigma))
}

/// `(σ²I + Σ)⁻¹(μ − x)` in Woodbury form, `O(D r)`.
pub fn gaussian_score(spec: &CompactSpectrum, x: &DVector<f64>, sigma: f64) -> Result<DVector<f64>> {
    check_sigma(sigma)?;
    check_dim(spec.dim(), x.len())?;
    let s2 = sigma * sigma;
    let diff = spec.mean() - x;
    let shrunk = shrink_coeffs(spec, spec.basis().tr_mul(&diff), s2);
    Ok((diff - spec.basis() * shrunk) / s2)
}

/// `μ + U Λ̃_σ Uᵀ (x − μ)` with `Λ̃_σ = diag[λ_k / (λ_k + σ²)]`.
pub fn gaussian_denoise(spec: &CompactSpectrum, x: &DVector<f64>, sigma: f64) -> Result<DVector<f64>> {
    check_sigma(sigma)?;
    check_dim(spec.dim(), x.len())?;
    let diff = x - spec.mean();
    let shrunk = shrink_coeffs(spec, spec.basis().tr_mul(&diff), sigma * sigma);
    Ok(spec.mean() + spec.basis() * shrunk)
}

fn shrink_coeffs(spec: &CompactSpectrum, mut coeffs: DVector<f64>, s2: f64) -> DVector<f64> {
    for (c, lam) in coeffs.iter_mut().zip(spec.eigenvalues().iter()) {
        *c *= lam / (lam + s2);
    }
    coeffs
}

/// `log N(x; μ, σ²I + Σ)` without the `D log 2π` constant.
fn gaussian_log_density(spec: &CompactSpectrum, x: &DVector<f64>, s2: f64) -> f64 {
    let diff = x - spec.mean();
    let coeffs = spec.basis().tr_mul(&diff);
    let off = (&diff - spec.basis() * &coeffs).norm_squared();
    let mut quad = off / s2;
    let mut log_det = (spec.dim() - spec.rank()) as f64 * s2.ln();
    for (c, lam) in coeffs.iter().zip(spec.eigenvalues().iter()) {
        quad += c * c / (lam + s2);
        log_det += (lam + s2).ln();
    }
    -0.5 * (log_det + quad)
}

/// Posterior responsibilities `w_i(x, σ)` of a mixture or delta model.
pub fn mixture_weights(model: &ScoreModel, x: &DVector<f64>, sigma: f64) -> Result<DVector<f64>> {
    check_sigma(sigma)?;
    check_dim(ScoreField::dim(model), x.len())?;
    match model {
        ScoreModel::Mixture(m) => Ok(gmm_weights(m, x, sigma)),
        ScoreModel::Delta(d) => Ok(d.weights(x, sigma)),
        _ => Err(Error::WrongVariant),
    }
}

fn gmm_weights(m: &Mixture, x: &DVector<f64>, sigma: f64) -> DVector<f64> {
    let s2 = sigma * sigma;
    let logits = DVector::from_iterator(
        m.len(),
        m.components
            .iter()
            .map(|c| c.weight.ln() + gaussian_log_density(&c.spectrum, x, s2)),
    );
    softmax(logits)
}

/// `Σ_i w_i(x, σ) s_i(x, σ)`.
pub fn gmm_score(m: &Mixture, x: &DVector<f64>, sigma: f64) -> Result<DVector<f64>> {
    check_sigma(sigma)?;
    check_dim(m.dim(), x.len())?;
    let w = gmm_weights(m, x, sigma);
    let mut out = DVector::zeros(x.len());
    for (c, wi) in m.components.iter().zip(w.iter()) {
        if *wi > 0.0 {
            out.axpy(*wi, &gaussian_score(&c.spectrum, x, sigma)?, 1.0);
        }
    }
    Ok(out)
}

pub fn gmm_denoise(m: &Mixture, x: &DVector<f64>, sigma: f64) -> Result<DVector<f64>> {
    check_sigma(sigma)?;
    check_dim(m.dim(), x.len())?;
    let w = gmm_weights(m, x, sigma);
    let mut out = DVector::zeros(x.len());
    for (c, wi) in m.components.iter().zip(w.iter()) {
        if *wi > 0.0 {
            out.axpy(*wi, &gaussian_denoise(&c.spectrum, x, sigma)?, 1.0);
        }
    }
    Ok(out)
}

/// Exact score of the point cloud smoothed at noise level `σ`.
pub fn delta_score(cloud: &PointCloud, x: &DVector<f64>, sigma: f64) -> Result<DVector<f64>> {
    Ok((delta_denoise(cloud, x, sigma)? - x) / (sigma * sigma))
}

/// `Σ_i w_i y_i`, a convex combination of the training samples.
pub fn delta_denoise(cloud: &PointCloud, x: &DVector<f64>, sigma: f64) -> Result<DVector<f64>> {
    check_sigma(sigma)?;
    check_dim(cloud.dim(), x.len())?;
    let scale = -0.5 / (sigma * sigma);
    let data = cloud.data();
    let logits = DVector::from_iterator(
        cloud.len(),
        data.row_iter()
            .map(|y| scale * (y.transpose() - x).norm_squared()),
    );
    let w = softmax(logits);
    Ok(data.tr_mul(&w))
}

/// Max-subtracted softmax.
pub fn softmax(mut logits: DVector<f64>) -> DVector<f64> {
    let max = logits.max();
    logits.apply(|v| *v = (*v - max).exp());
    let total = logits.sum();
    logits / total
}

/// `log Σ exp(v)`, stable for large magnitudes.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_vec(x.to_vec())
    }

    fn two_points() -> PointCloud {
        PointCloud::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap()
    }

    fn diag_spec() -> CompactSpectrum {
        CompactSpectrum::new(v(&[0.0, 0.0]), DMatrix::from_row_slice(2, 1, &[1.0, 0.0]), v(&[3.0])).unwrap()
    }

    #[test]
    fn iso_score_values() {
        let mu = v(&[0.0, 0.0]);
        assert_eq!(iso_score(&mu, &mu, 0.3).unwrap(), v(&[0.0, 0.0]));
        assert_eq!(iso_score(&mu, &v(&[2.0, 0.0]), 1.0).unwrap(), v(&[-2.0, 0.0]));
        assert_eq!(iso_score(&mu, &v(&[2.0, 0.0]), 2.0).unwrap(), v(&[-0.5, 0.0]));
        assert!(matches!(iso_score(&mu, &mu, 0.0), Err(Error::InvalidNoise(_))));
        assert!(matches!(iso_score(&mu, &mu, -1.0), Err(Error::InvalidNoise(_))));
    }

    #[test]
    fn gaussian_score_diag_hand_value() {
        // (σ²I + diag(3,0))⁻¹ (0 − (1,1)) = (−1/4, −1)
        let s = gaussian_score(&diag_spec(), &v(&[1.0, 1.0]), 1.0).unwrap();
        assert_abs_diff_eq!(s[0], -0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(s[1], -1.0, epsilon = 1e-15);
        assert_eq!(gaussian_score(&diag_spec(), &v(&[0.0, 0.0]), 1.0).unwrap().norm(), 0.0);
    }

    #[test]
    fn gaussian_denoise_values() {
        let spec = diag_spec();
        let d = gaussian_denoise(&spec, &v(&[1.0, 0.0]), 1.0).unwrap();
        assert_abs_diff_eq!(d[0], 0.75, epsilon = 1e-15);
        let unit = CompactSpectrum::new(v(&[2.0]), DMatrix::from_element(1, 1, 1.0), v(&[1.0])).unwrap();
        let far = gaussian_denoise(&unit, &v(&[5.0]), 1e6).unwrap();
        assert!((far[0] - 2.0).abs() < 1e-5);
        let pm = CompactSpectrum::point_mass(v(&[1.0, -1.0]));
        assert_eq!(gaussian_denoise(&pm, &v(&[4.0, 4.0]), 0.5).unwrap(), v(&[1.0, -1.0]));
    }

    #[test]
    fn rank_zero_gaussian_is_isotropic() {
        let mu = v(&[0.5, -1.0]);
        let pm = CompactSpectrum::point_mass(mu.clone());
        for (x, s) in [(v(&[3.0, 1.0]), 0.7), (v(&[-2.0, 0.0]), 4.0)] {
            assert_eq!(gaussian_score(&pm, &x, s).unwrap(), iso_score(&mu, &x, s).unwrap());
        }
    }

    #[test]
    fn delta_weights_equidistant_and_one_hot() {
        let m = ScoreModel::delta(two_points());
        let w = mixture_weights(&m, &v(&[0.0, 3.0]), 0.37).unwrap();
        assert_abs_diff_eq!(w[0], 0.5, epsilon = 1e-15);
        let w = mixture_weights(&m, &v(&[1.0, 0.0]), 0.1).unwrap();
        assert!(w[0] >= 1.0 - 1e-20);
        assert!(w[1] < 1e-80 && w[1] >= 0.0);
    }

    #[test]
    fn weights_flatten_at_large_sigma() {
        let cloud = PointCloud::from_rows(&[vec![0.0, 1.0], vec![2.0, -1.0], vec![0.3, 0.3]]).unwrap();
        let w = mixture_weights(&ScoreModel::delta(cloud), &v(&[0.1, 0.2]), 1e4).unwrap();
        for wi in w.iter() {
            assert!((wi - 1.0 / 3.0).abs() < 1e-6);
        }
    }

    #[test]
    fn weights_need_mixture_variant() {
        let m = ScoreModel::Gaussian(diag_spec());
        assert!(matches!(mixture_weights(&m, &v(&[0.0, 0.0]), 1.0), Err(Error::WrongVariant)));
    }

    #[test]
    fn weights_stay_finite_for_tiny_sigma() {
        let cloud = PointCloud::from_rows(&[vec![0.0, 0.0], vec![1e3, 0.0], vec![0.0, -1e3]]).unwrap();
        let w = mixture_weights(&ScoreModel::delta(cloud), &v(&[400.0, 1.0]), 1e-6).unwrap();
        assert!(w.iter().all(|x| x.is_finite() && *x >= 0.0));
        assert_abs_diff_eq!(w.sum(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn isotropic_mixture_hand_value() {
        let comps = [1.0, -1.0]
            .iter()
            .map(|&a| GaussianComponent {
                weight: 0.5,
                spectrum: CompactSpectrum::point_mass(v(&[a, 0.0])),
            })
            .collect();
        let m = Mixture::new(comps).unwrap();
        let s = gmm_score(&m, &v(&[0.0, 2.0]), 1.0).unwrap();
        assert_abs_diff_eq!(s[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s[1], -2.0, epsilon = 1e-15);
    }

    #[test]
    fn delta_score_values() {
        let c = two_points();
        assert_eq!(delta_score(&c, &v(&[0.0, 0.0]), 1.0).unwrap(), v(&[0.0, 0.0]));
        let s = delta_score(&c, &v(&[0.0, 2.0]), 1.0).unwrap();
        assert_abs_diff_eq!(s[1], -2.0, epsilon = 1e-15);
        let single = PointCloud::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let s = delta_score(&single, &v(&[3.0, 0.0]), 2.0).unwrap();
        assert_eq!(s, v(&[-0.5, 0.5]));
    }

    #[test]
    fn delta_denoise_limits() {
        let c = PointCloud::from_rows(&[vec![0.0, 0.0], vec![0.5, 0.0], vec![0.0, 2.0]]).unwrap();
        let d = delta_denoise(&c, &v(&[0.1, 0.05]), 1e-4).unwrap();
        assert!((d - v(&[0.0, 0.0])).norm() < 1e-10);
        let d = delta_denoise(&c, &v(&[0.1, 0.05]), 1e5).unwrap();
        assert!((d - v(&[0.5 / 3.0, 2.0 / 3.0])).norm() < 1e-6);
        let mid = delta_denoise(&two_points(), &v(&[0.0, -7.0]), 0.8).unwrap();
        assert!(mid.norm() < 1e-15);
    }

    #[test]
    fn mixture_rejects_bad_weights() {
        let c = |w| GaussianComponent {
            weight: w,
            spectrum: CompactSpectrum::point_mass(v(&[0.0])),
        };
        assert!(Mixture::new(vec![c(0.5), c(0.4)]).is_err());
        assert!(Mixture::new(vec![c(1.5), c(-0.5)]).is_err());
        assert!(Mixture::normalized(vec![c(2.0), c(2.0)]).is_ok());
    }

    #[test]
    fn mixture_moments_match_dense() {
        let comps = vec![
            GaussianComponent {
                weight: 0.25,
                spectrum: diag_spec(),
            },
            GaussianComponent {
                weight: 0.75,
                spectrum: CompactSpectrum::point_mass(v(&[2.0, 1.0])),
            },
        ];
        let m = Mixture::new(comps).unwrap();
        let s = m.moments().unwrap();
        // μ = (1.5, 0.75); Σ = 0.25 diag(3,0) + Var of means
        assert!((s.mean() - v(&[1.5, 0.75])).norm() < 1e-14);
        let dm = v(&[-1.5, -0.75]);
        let dm2 = v(&[0.5, 0.25]);
        let expect = DMatrix::from_row_slice(2, 2, &[0.75, 0.0, 0.0, 0.0])
            + &dm * dm.transpose() * 0.25
            + &dm2 * dm2.transpose() * 0.75;
        assert!((s.covariance() - expect).norm() < 1e-12);
    }

    #[test]
    fn mixture_json_roundtrip() {
        let m = Mixture::new(vec![GaussianComponent {
            weight: 1.0,
            spectrum: diag_spec(),
        }])
        .unwrap();
        let text = serde_json::to_string(&m).unwrap();
        let val: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(val["components"][0]["weight"], 1.0);
        assert!(val["components"][0]["basis"].is_array());
        let back: Mixture = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn batch_matches_pointwise() {
        let m = ScoreModel::delta(two_points());
        let xs = DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 0.5, -0.2, 3.0, 3.0]);
        let serial = m.score_batch(&xs, 0.6, false).unwrap();
        let par = m.score_batch(&xs, 0.6, true).unwrap();
        assert_eq!(serial, par);
        for i in 0..3 {
            let s = m.score(&xs.row(i).transpose(), 0.6).unwrap();
            assert_eq!(serial.row(i).transpose(), s);
        }
    }

    #[test]
    fn log_sum_exp_is_stable() {
        assert_abs_diff_eq!(log_sum_exp(&[1000.0, 1000.0]), 1000.0 + 2f64.ln(), epsilon = 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }
}
