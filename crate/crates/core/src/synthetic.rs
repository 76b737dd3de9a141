//! Synthetic point clouds for tests, benchmarks and the `gen-synthetic`
//! command.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, streams, Rng};
use crate::spectrum::{CompactSpectrum, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    Gaussian,
    Gmm,
    TwoCluster,
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "gmm" => Ok(Self::Gmm),
            "two-cluster" => Ok(Self::TwoCluster),
            _ => Err(Error::InvalidInput(format!("unknown synthetic kind '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub kind: SyntheticKind,
    pub d: usize,
    pub n: usize,
    pub seed: u64,
    /// Rank of each Gaussian factor (clamped to `d`).
    pub rank: usize,
    /// Eigenvalues decay as `k^-decay`, `k = 1..rank`.
    pub decay: f64,
    /// Number of clusters for the mixture kind.
    pub clusters: usize,
    /// Typical distance between cluster centers.
    pub separation: f64,
    /// Isotropic noise standard deviation added to every sample.
    pub noise: f64,
}

impl SyntheticConfig {
    pub fn new(kind: SyntheticKind, d: usize, n: usize, seed: u64) -> Self {
        Self {
            kind,
            d,
            n,
            seed,
            rank: 8,
            decay: 1.0,
            clusters: 5,
            separation: 10.0,
            noise: 0.0,
        }
    }
}

/// Orthonormal `d × r` matrix from the QR factorization of a Gaussian matrix.
pub fn random_orthonormal(rng: &mut Rng, d: usize, r: usize) -> DMatrix<f64> {
    if r == 0 {
        return DMatrix::zeros(d, 0);
    }
    let g = rng::normal_matrix(rng, d, r, 1.0);
    g.qr().q().columns(0, r).into_owned()
}

/// Spectrum with a random basis and power-law eigenvalues `scale·k^-decay`.
pub fn power_law_spectrum(rng: &mut Rng, mean: DVector<f64>, rank: usize, scale: f64, decay: f64) -> Result<CompactSpectrum> {
    let d = mean.len();
    let r = rank.min(d);
    let basis = random_orthonormal(rng, d, r);
    let eig = DVector::from_iterator(r, (1..=r).map(|k| scale * (k as f64).powf(-decay)));
    CompactSpectrum::new(mean, basis, eig)
}

fn sample_spectrum(rng: &mut Rng, spec: &CompactSpectrum, n: usize, noise: f64, out: &mut Vec<DVector<f64>>) {
    let d = spec.dim();
    let r = spec.rank();
    let sd = spec.eigenvalues().map(f64::sqrt);
    for _ in 0..n {
        let z = rng::normal_vector(rng, r, 1.0).component_mul(&sd);
        let mut x = spec.mean() + spec.basis() * z;
        if noise > 0.0 {
            x += rng::normal_vector(rng, d, noise);
        }
        out.push(x);
    }
}

fn to_cloud(points: Vec<DVector<f64>>, labels: Option<Vec<i32>>) -> Result<PointCloud> {
    let n = points.len();
    let d = points.first().map_or(0, |p| p.len());
    let data = DMatrix::from_fn(n, d, |i, j| points[i][j]);
    PointCloud::with_labels(data, labels)
}

pub fn generate(config: &SyntheticConfig) -> Result<PointCloud> {
    if config.d == 0 || config.n == 0 {
        return Err(Error::EmptyInput);
    }
    let mut rng = rng::stream_rng(config.seed, streams::SYNTHETIC);
    let d = config.d;
    match config.kind {
        SyntheticKind::Gaussian => {
            let spec = power_law_spectrum(&mut rng, DVector::zeros(d), config.rank, 1.0, config.decay)?;
            let mut pts = Vec::with_capacity(config.n);
            sample_spectrum(&mut rng, &spec, config.n, config.noise, &mut pts);
            to_cloud(pts, None)
        }
        SyntheticKind::Gmm => {
            let k = config.clusters.max(1);
            let specs = (0..k)
                .map(|_| {
                    let mean = rng::normal_vector(&mut rng, d, config.separation / 2f64.sqrt());
                    power_law_spectrum(&mut rng, mean, config.rank, 1.0, config.decay)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut pts = Vec::with_capacity(config.n);
            let mut labels = Vec::with_capacity(config.n);
            for i in 0..config.n {
                let c = i % k;
                sample_spectrum(&mut rng, &specs[c], 1, config.noise, &mut pts);
                labels.push(c as i32);
            }
            to_cloud(pts, Some(labels))
        }
        SyntheticKind::TwoCluster => {
            let spread = if config.noise > 0.0 { config.noise } else { 0.1 };
            let half = config.separation / 2.0;
            let mut pts = Vec::with_capacity(config.n);
            let mut labels = Vec::with_capacity(config.n);
            for i in 0..config.n {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                let mut x = rng::normal_vector(&mut rng, d, spread);
                x[0] += sign * half;
                pts.push(x);
                labels.push(i32::from(sign < 0.0));
            }
            to_cloud(pts, Some(labels))
        }
    }
}
