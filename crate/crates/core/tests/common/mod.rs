//! Independent dense-matrix oracles shared by the integration tests.
#![allow(dead_code)]

use gaussdiff::rng::{self, Rng};
use gaussdiff::synthetic::random_orthonormal;
use gaussdiff::{CompactSpectrum, PointCloud};
use nalgebra::{DMatrix, DVector};
use rand::Rng as _;

/// `−(Σ + σ²I)⁻¹(x − μ)` with a dense covariance.
pub fn dense_gaussian_score(mean: &DVector<f64>, cov: &DMatrix<f64>, x: &DVector<f64>, sigma: f64) -> DVector<f64> {
    let d = mean.len();
    let a = cov + DMatrix::identity(d, d) * (sigma * sigma);
    let chol = a.cholesky().expect("covariance plus noise is positive definite");
    -chol.solve(&(x - mean))
}

fn dense_log_density(mean: &DVector<f64>, cov: &DMatrix<f64>, x: &DVector<f64>, sigma: f64) -> f64 {
    let d = mean.len();
    let a = cov + DMatrix::identity(d, d) * (sigma * sigma);
    let chol = a.cholesky().unwrap();
    let r = x - mean;
    let q = r.dot(&chol.solve(&r));
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    -0.5 * (q + logdet + d as f64 * (2.0 * std::f64::consts::PI).ln())
}

/// Mixture score from dense covariances: posterior-weighted component scores.
pub fn dense_mixture_score(
    comps: &[(f64, DVector<f64>, DMatrix<f64>)],
    x: &DVector<f64>,
    sigma: f64,
) -> DVector<f64> {
    let logs: Vec<f64> = comps
        .iter()
        .map(|(w, m, c)| w.ln() + dense_log_density(m, c, x, sigma))
        .collect();
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ws: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let z: f64 = ws.iter().sum();
    let mut s = DVector::zeros(x.len());
    for ((_, m, c), w) in comps.iter().zip(&ws) {
        s += dense_gaussian_score(m, c, x, sigma) * (w / z);
    }
    s
}

/// Direct sum over training points, `Σ wᵢ (yᵢ − x)/σ²`.
pub fn direct_delta_score(cloud: &PointCloud, x: &DVector<f64>, sigma: f64) -> DVector<f64> {
    let n = cloud.len();
    let d2: Vec<f64> = (0..n).map(|i| (cloud.point(i) - x).norm_squared()).collect();
    let lo = d2.iter().cloned().fold(f64::INFINITY, f64::min);
    let ws: Vec<f64> = d2.iter().map(|v| (-(v - lo) / (2.0 * sigma * sigma)).exp()).collect();
    let z: f64 = ws.iter().sum();
    let mut s = DVector::zeros(x.len());
    for (i, w) in ws.iter().enumerate() {
        s += (cloud.point(i) - x) * (w / z);
    }
    s / (sigma * sigma)
}

pub fn log_uniform(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

/// Random spectrum: orthonormal basis, eigenvalues log-uniform in `[lo, hi]`.
pub fn random_spectrum(rng: &mut Rng, d: usize, r: usize, lo: f64, hi: f64, mean_scale: f64) -> CompactSpectrum {
    let mean = rng::normal_vector(rng, d, mean_scale);
    let basis = random_orthonormal(rng, d, r);
    let mut eig: Vec<f64> = (0..r).map(|_| log_uniform(rng, lo, hi)).collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    CompactSpectrum::new(mean, basis, DVector::from_vec(eig)).unwrap()
}

pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
}
