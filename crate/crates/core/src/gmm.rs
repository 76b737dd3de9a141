//! Gaussian mixture score models fitted by mini-batch k-means followed by
//! one pass of per-cluster moment estimation.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, ProbeDist, VarianceStats};
use crate::error::{Error, Result};
use crate::rng::{self, streams, Rng};
use crate::score::{GaussianComponent, Mixture, ScoreModel};
use crate::spectrum::{spectrum_from_cloud, PointCloud};

pub const DEFAULT_BATCH: usize = 2048;
pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-6;
/// Rank tolerance for [`minimal_rank`].
pub const DEFAULT_RANK_SLACK: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub batch: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once no center moves farther than this.
    pub tol: f64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            batch: DEFAULT_BATCH,
            seed,
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// `K × D`, one center per row.
    pub centers: DMatrix<f64>,
    pub assignments: Vec<usize>,
    pub iterations: usize,
    pub inertia: f64,
}

impl KMeansResult {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.centers.nrows()];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == cluster)
            .collect()
    }
}

fn sq_dist_row(data: &DMatrix<f64>, i: usize, centers: &DMatrix<f64>, c: usize) -> f64 {
    (0..data.ncols())
        .map(|j| {
            let d = data[(i, j)] - centers[(c, j)];
            d * d
        })
        .sum()
}

/// Index and squared distance of the nearest center; ties go to the lowest index.
fn nearest(data: &DMatrix<f64>, i: usize, centers: &DMatrix<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centers.nrows() {
        let d = sq_dist_row(data, i, centers, c);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn assign_all(data: &DMatrix<f64>, centers: &DMatrix<f64>) -> Vec<(usize, f64)> {
    (0..data.nrows())
        .into_par_iter()
        .map(|i| nearest(data, i, centers))
        .collect()
}

fn kmeans_pp(data: &DMatrix<f64>, k: usize, rng: &mut Rng) -> DMatrix<f64> {
    let n = data.nrows();
    let mut centers = DMatrix::zeros(k, data.ncols());
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    centers.set_row(0, &data.row(first));
    chosen[first] = true;
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist_row(data, i, &centers, 0)).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut idx = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    idx = Some(i);
                    if r < w {
                        break;
                    }
                    r -= w;
                }
            }
            idx.expect("positive total implies a positive entry")
        } else {
            // every point coincides with a center: take an unused index
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        centers.set_row(c, &data.row(pick));
        for (i, slot) in d2.iter_mut().enumerate() {
            *slot = slot.min(sq_dist_row(data, i, &centers, c));
        }
    }
    centers
}

/// Mini-batch k-means with k-means++ seeding and per-center learning rates
/// `1/count`.
///
/// After the mini-batch phase every point is assigned to its nearest center,
/// empty clusters are refilled with the farthest member of the currently
/// largest cluster, and centers are set to their cluster means.
pub fn minibatch_kmeans(cloud: &PointCloud, config: &KMeansConfig) -> Result<KMeansResult> {
    let n = cloud.len();
    let k = config.k;
    if k == 0 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    if config.batch == 0 {
        return Err(Error::InvalidInput("batch size must be at least 1".into()));
    }
    let data = cloud.data();
    let d = cloud.dim();
    let mut rng = rng::stream_rng(config.seed, streams::KMEANS);
    let mut centers = kmeans_pp(data, k, &mut rng);
    let mut counts = vec![0usize; k];
    let batch = config.batch.min(n);
    let mut iterations = 0;
    for _ in 0..config.max_iter {
        iterations += 1;
        let idx: Vec<usize> = if batch == n {
            (0..n).collect()
        } else {
            let mut v = sample_indices(&mut rng, n, batch).into_vec();
            v.sort_unstable();
            v
        };
        let near: Vec<usize> = idx.par_iter().map(|&i| nearest(data, i, &centers).0).collect();
        let before = centers.clone();
        for (&i, &c) in idx.iter().zip(&near) {
            counts[c] += 1;
            let eta = 1.0 / counts[c] as f64;
            for j in 0..d {
                centers[(c, j)] += eta * (data[(i, j)] - centers[(c, j)]);
            }
        }
        let shift = (0..k)
            .map(|c| (centers.row(c) - before.row(c)).norm())
            .fold(0.0, f64::max);
        if shift < config.tol {
            break;
        }
    }

    let mut assignments: Vec<usize> = assign_all(data, &centers).into_iter().map(|p| p.0).collect();
    repair_empty(data, &mut centers, &mut assignments);
    let centers = cluster_means(data, &assignments, k);
    let inertia = (0..n).map(|i| sq_dist_row(data, i, &centers, assignments[i])).sum();
    Ok(KMeansResult {
        centers,
        assignments,
        iterations,
        inertia,
    })
}

fn repair_empty(data: &DMatrix<f64>, centers: &mut DMatrix<f64>, assignments: &mut [usize]) {
    let k = centers.nrows();
    let mut sizes = vec![0usize; k];
    for &a in assignments.iter() {
        sizes[a] += 1;
    }
    while let Some(empty) = sizes.iter().position(|&s| s == 0) {
        let largest = (0..k).fold(0, |best, c| if sizes[c] > sizes[best] { c } else { best });
        let far = (0..assignments.len())
            .filter(|&i| assignments[i] == largest)
            .map(|i| (i, sq_dist_row(data, i, centers, largest)))
            .fold((usize::MAX, -1.0), |best, p| if p.1 > best.1 { p } else { best })
            .0;
        assignments[far] = empty;
        sizes[largest] -= 1;
        sizes[empty] += 1;
        centers.set_row(empty, &data.row(far));
    }
}

fn cluster_means(data: &DMatrix<f64>, assignments: &[usize], k: usize) -> DMatrix<f64> {
    let mut sums = DMatrix::zeros(k, data.ncols());
    let mut counts = vec![0usize; k];
    for (i, &a) in assignments.iter().enumerate() {
        counts[a] += 1;
        let mut row = sums.row_mut(a);
        row += data.row(i);
    }
    for (c, &m) in counts.iter().enumerate() {
        let mut row = sums.row_mut(c);
        row /= m as f64;
    }
    sums
}

/// Provenance of a fitted mixture, written next to the model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmFitInfo {
    #[serde(rename = "K")]
    pub k: usize,
    pub rank: usize,
    pub seed: u64,
    pub batch: usize,
    pub iterations: usize,
    pub inertia: f64,
}

#[derive(Debug, Clone)]
pub struct GmmFit {
    pub mixture: Mixture,
    pub kmeans: KMeansResult,
    pub info: GmmFitInfo,
}

impl GmmFit {
    pub fn model(&self) -> ScoreModel {
        ScoreModel::Mixture(self.mixture.clone())
    }
}

/// Clusters with k-means, then takes each cluster's population mean and
/// covariance truncated to `rank` and weight `Nᵢ/N`.
pub fn fit_gmm_with(cloud: &PointCloud, config: &KMeansConfig, rank: usize) -> Result<GmmFit> {
    let km = minibatch_kmeans(cloud, config)?;
    let n = cloud.len() as f64;
    let components = (0..config.k)
        .map(|c| {
            let members = km.members(c);
            let sub = cloud.select(&members)?;
            Ok(GaussianComponent {
                weight: members.len() as f64 / n,
                spectrum: spectrum_from_cloud(&sub, rank)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mixture = Mixture::normalized(components)?;
    let info = GmmFitInfo {
        k: config.k,
        rank,
        seed: config.seed,
        batch: config.batch,
        iterations: km.iterations,
        inertia: km.inertia,
    };
    Ok(GmmFit {
        mixture,
        kmeans: km,
        info,
    })
}

pub fn fit_gmm(cloud: &PointCloud, k: usize, rank: usize, seed: u64) -> Result<ScoreModel> {
    Ok(fit_gmm_with(cloud, &KMeansConfig::new(k, seed), rank)?.model())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub rank: usize,
    pub sigma: f64,
    #[serde(flatten)]
    pub stats: VarianceStats,
}

/// Unexplained variance of fitted mixtures against `reference` over a grid
/// of `(K, rank, σ)`. Each `(K, rank)` is fitted once; every model sees the
/// same origin-centred probes at a given `σ`.
pub fn rank_mode_sweep(
    cloud: &PointCloud,
    k_list: &[usize],
    rank_list: &[usize],
    sigma_list: &[f64],
    reference: &ScoreModel,
    n_probe: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if k_list.is_empty() || rank_list.is_empty() || sigma_list.is_empty() {
        return Err(Error::EmptyInput);
    }
    let d = cloud.dim();
    let probes = sigma_list
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let mut r = rng::stream_rng(seed, rng::substream(streams::PROBES, i as u64));
            analysis::draw_probes(&ProbeDist::Origin, d, s, n_probe, &mut r)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for &k in k_list {
        for &rank in rank_list {
            let model = fit_gmm(cloud, k, rank, seed)?;
            for (i, &sigma) in sigma_list.iter().enumerate() {
                let stats = analysis::unexplained_variance_on(reference, &model, sigma, &probes[i])?;
                rows.push(SweepRow { k, rank, sigma, stats });
            }
        }
    }
    Ok(rows)
}

/// How close a truncated model must come to the largest-rank model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankRule {
    /// `residual(r) − residual(full) ≤ slack`, in units of unexplained-variance fraction.
    Absolute,
    /// `residual(r) ≤ (1 + slack) · residual(full)`.
    Relative,
}

impl std::str::FromStr for RankRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "absolute" => Ok(Self::Absolute),
            "relative" => Ok(Self::Relative),
            _ => Err(Error::InvalidInput(format!("unknown rank rule '{s}'"))),
        }
    }
}

/// Smallest rank whose mean residual at `(K, σ)` is within `slack` of the
/// largest-rank residual under `rule`.
pub fn minimal_rank(rows: &[SweepRow], k: usize, sigma: f64, slack: f64, rule: RankRule) -> Option<usize> {
    let mut sel: Vec<&SweepRow> = rows.iter().filter(|r| r.k == k && r.sigma == sigma).collect();
    sel.sort_by_key(|r| r.rank);
    let full = sel.last()?.stats.mean;
    let limit = match rule {
        RankRule::Absolute => full + slack,
        RankRule::Relative => full * (1.0 + slack),
    };
    sel.iter().find(|r| r.stats.mean <= limit).map(|r| r.rank)
}

/// Cluster means as row vectors, convenient for reporting.
pub fn centers_as_vectors(km: &KMeansResult) -> Vec<DVector<f64>> {
    km.centers.row_iter().map(|r| r.transpose()).collect()
}
