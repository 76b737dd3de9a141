//! Moment estimation and compact spectral decompositions.
//!
//! A [`CompactSpectrum`] stores a mean together with the rank-`r`
//! eigendecomposition `Σ = U Λ Uᵀ` of a covariance matrix. Every score and
//! closed-form formula in this crate works on this representation, so no
//! `D × D` matrix is ever formed at evaluation time.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Relative eigenvalue floor applied by [`spectrum_from_cloud`]: eigenvalues
/// at or below `DEFAULT_REL_EIG_FLOOR * λ₁` are treated as numerical noise.
pub const DEFAULT_REL_EIG_FLOOR: f64 = 1e-10;

const ORTHO_TOL: f64 = 1e-8;
const SYMMETRY_TOL: f64 = 1e-8;

/// `N × D` sample matrix (one sample per row) with optional integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    data: DMatrix<f64>,
    labels: Option<Vec<i32>>,
}

impl PointCloud {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        Self::with_labels(data, None)
    }

    pub fn with_labels(data: DMatrix<f64>, labels: Option<Vec<i32>>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::EmptyInput);
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("point cloud has non-finite entries".into()));
        }
        if let Some(l) = &labels {
            if l.len() != data.nrows() {
                return Err(Error::InvalidData(format!(
                    "{} labels for {} samples",
                    l.len(),
                    data.nrows()
                )));
            }
        }
        Ok(Self { data, labels })
    }

    /// Builds a cloud from row vectors.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let d = rows[0].len();
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::ShapeError {
                expected: d,
                got: bad.len(),
            });
        }
        Self::new(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn labels(&self) -> Option<&[i32]> {
        self.labels.as_deref()
    }

    pub fn point(&self, i: usize) -> DVector<f64> {
        self.data.row(i).transpose()
    }

    /// Sub-cloud made of the given sample indices (labels carried along).
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyInput);
        }
        let data = self.data.select_rows(indices);
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        Ok(Self { data, labels })
    }
}

/// Mean plus truncated eigendecomposition of a covariance matrix.
///
/// Invariants: `UᵀU = I_r`, eigenvalues strictly positive and descending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpectrumJson", into = "SpectrumJson")]
pub struct CompactSpectrum {
    mean: DVector<f64>,
    basis: DMatrix<f64>,
    eigenvalues: DVector<f64>,
}

impl CompactSpectrum {
    pub fn new(mean: DVector<f64>, basis: DMatrix<f64>, eigenvalues: DVector<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::EmptyInput);
        }
        check_dim(d, basis.nrows())?;
        check_dim(basis.ncols(), eigenvalues.len())?;
        if mean.iter().chain(basis.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("spectrum has non-finite entries".into()));
        }
        for (k, lam) in eigenvalues.iter().enumerate() {
            if !(*lam > 0.0 && lam.is_finite()) {
                return Err(Error::InvalidData(format!("eigenvalue {k} = {lam} is not positive")));
            }
            if k > 0 && *lam > eigenvalues[k - 1] {
                return Err(Error::InvalidData("eigenvalues must be descending".into()));
            }
        }
        let gram = basis.transpose() * &basis;
        let r = basis.ncols();
        let dev = (gram - DMatrix::identity(r, r)).abs().max();
        if r > 0 && dev > ORTHO_TOL {
            return Err(Error::InvalidData(format!(
                "basis is not semi-orthogonal (max |UᵀU - I| = {dev:e})"
            )));
        }
        Ok(Self {
            mean,
            basis,
            eigenvalues,
        })
    }

    /// Rank-zero spectrum (pure isotropic model around `mean`).
    pub fn point_mass(mean: DVector<f64>) -> Self {
        let d = mean.len();
        Self {
            mean,
            basis: DMatrix::zeros(d, 0),
            eigenvalues: DVector::zeros(0),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.sum()
    }

    /// Dense `U Λ Uᵀ`. Only meant for small `D` (tests, diagnostics).
    pub fn covariance(&self) -> DMatrix<f64> {
        let scaled = &self.basis * DMatrix::from_diagonal(&self.eigenvalues);
        scaled * self.basis.transpose()
    }

    /// Keeps the leading `rank` components.
    pub fn truncated(&self, rank: usize) -> Self {
        let r = rank.min(self.rank());
        Self {
            mean: self.mean.clone(),
            basis: self.basis.columns(0, r).into_owned(),
            eigenvalues: self.eigenvalues.rows(0, r).into_owned(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SpectrumJson {
    mean: Vec<f64>,
    eigenvalues: Vec<f64>,
    /// `D` rows of length `r`.
    basis: Vec<Vec<f64>>,
}

impl TryFrom<SpectrumJson> for CompactSpectrum {
    type Error = Error;

    fn try_from(j: SpectrumJson) -> Result<Self> {
        let d = j.mean.len();
        let r = j.eigenvalues.len();
        if j.basis.len() != d && !(r == 0 && j.basis.is_empty()) {
            return Err(Error::ShapeError {
                expected: d,
                got: j.basis.len(),
            });
        }
        if let Some(row) = j.basis.iter().find(|row| row.len() != r) {
            return Err(Error::ShapeError {
                expected: r,
                got: row.len(),
            });
        }
        let basis = DMatrix::from_fn(d, r, |i, k| j.basis[i][k]);
        Self::new(DVector::from_vec(j.mean), basis, DVector::from_vec(j.eigenvalues))
    }
}

impl From<CompactSpectrum> for SpectrumJson {
    fn from(s: CompactSpectrum) -> Self {
        let basis = (0..s.dim())
            .map(|i| s.basis.row(i).iter().copied().collect())
            .collect();
        Self {
            mean: s.mean.iter().copied().collect(),
            eigenvalues: s.eigenvalues.iter().copied().collect(),
            basis,
        }
    }
}

/// Population mean and covariance (`1/N` normalisation) of a cloud.
pub fn estimate_moments(cloud: &PointCloud) -> (DVector<f64>, DMatrix<f64>) {
    let centered = centered(cloud);
    let n = cloud.len() as f64;
    let mut cov = centered.transpose() * &centered / n;
    symmetrize(&mut cov);
    (cloud_mean(cloud), cov)
}

/// Eigenpairs of `covariance` above `eig_floor`, descending, at most `max_rank`.
pub fn compact_spectrum(
    mean: DVector<f64>,
    covariance: &DMatrix<f64>,
    max_rank: usize,
    eig_floor: f64,
) -> Result<CompactSpectrum> {
    let d = mean.len();
    if covariance.nrows() != d || covariance.ncols() != d {
        return Err(Error::ShapeError {
            expected: d,
            got: covariance.nrows(),
        });
    }
    if !(eig_floor >= 0.0) {
        return Err(Error::InvalidInput(format!("eig_floor = {eig_floor}")));
    }
    let scale = covariance.abs().max().max(1.0);
    if (covariance - covariance.transpose()).abs().max() > SYMMETRY_TOL * scale {
        return Err(Error::InvalidData("covariance is not symmetric".into()));
    }
    let mut cov = covariance.clone();
    symmetrize(&mut cov);
    let eig = SymmetricEigen::new(cov);
    let pairs = sorted_pairs(&eig.eigenvalues, &eig.eigenvectors, eig_floor, max_rank);
    assemble(mean, d, pairs)
}

/// [`compact_spectrum`] of [`estimate_moments`], with the default relative
/// floor. Uses the `N × N` Gram matrix when `N < D`.
pub fn spectrum_from_cloud(cloud: &PointCloud, max_rank: usize) -> Result<CompactSpectrum> {
    let n = cloud.len();
    let d = cloud.dim();
    let mean = cloud_mean(cloud);
    if n == 1 {
        return Ok(CompactSpectrum::point_mass(mean));
    }
    if n < d {
        gram_spectrum(cloud, mean, max_rank)
    } else {
        let (mean, cov) = estimate_moments(cloud);
        dense_spectrum(mean, cov, max_rank)
    }
}

/// Dense `D × D` route, exposed for cross-checking the Gram route.
pub fn spectrum_from_cloud_dense(cloud: &PointCloud, max_rank: usize) -> Result<CompactSpectrum> {
    let (mean, cov) = estimate_moments(cloud);
    dense_spectrum(mean, cov, max_rank)
}

fn dense_spectrum(mean: DVector<f64>, cov: DMatrix<f64>, max_rank: usize) -> Result<CompactSpectrum> {
    let eig = SymmetricEigen::new(cov);
    let top = eig.eigenvalues.max().max(0.0);
    let pairs = sorted_pairs(
        &eig.eigenvalues,
        &eig.eigenvectors,
        DEFAULT_REL_EIG_FLOOR * top,
        max_rank,
    );
    let d = mean.len();
    assemble(mean, d, pairs)
}

fn gram_spectrum(cloud: &PointCloud, mean: DVector<f64>, max_rank: usize) -> Result<CompactSpectrum> {
    let n = cloud.len() as f64;
    let d = cloud.dim();
    let c = centered(cloud);
    let mut gram = &c * c.transpose() / n;
    symmetrize(&mut gram);
    let eig = SymmetricEigen::new(gram);
    let top = eig.eigenvalues.max().max(0.0);
    let pairs = sorted_pairs(
        &eig.eigenvalues,
        &eig.eigenvectors,
        DEFAULT_REL_EIG_FLOOR * top,
        max_rank,
    );
    // u = Cᵀv / sqrt(N λ)
    let lifted = pairs
        .into_iter()
        .map(|(lam, v)| {
            let u = c.transpose() * v / (n * lam).sqrt();
            (lam, u)
        })
        .collect::<Vec<_>>();
    let mut spec = assemble(mean, d, lifted)?;
    reorthonormalize(&mut spec.basis);
    fix_signs(&mut spec.basis);
    Ok(spec)
}

/// Spectrum of `Σ = F Fᵀ` for a `D × m` factor, via the `m × m` Gram matrix
/// when `m < D`.
pub fn spectrum_from_factor(mean: DVector<f64>, factor: &DMatrix<f64>, max_rank: usize) -> Result<CompactSpectrum> {
    let d = mean.len();
    check_dim(d, factor.nrows())?;
    if factor.ncols() >= d {
        let mut cov = factor * factor.transpose();
        symmetrize(&mut cov);
        return dense_spectrum(mean, cov, max_rank);
    }
    let mut gram = factor.tr_mul(factor);
    symmetrize(&mut gram);
    let eig = SymmetricEigen::new(gram);
    let top = eig.eigenvalues.max().max(0.0);
    let pairs = sorted_pairs(&eig.eigenvalues, &eig.eigenvectors, DEFAULT_REL_EIG_FLOOR * top, max_rank);
    let lifted = pairs
        .into_iter()
        .map(|(lam, v)| (lam, factor * v / lam.sqrt()))
        .collect::<Vec<_>>();
    let mut spec = assemble(mean, d, lifted)?;
    reorthonormalize(&mut spec.basis);
    fix_signs(&mut spec.basis);
    Ok(spec)
}

/// `(coeffs, residual)` with `coeffs = Uᵀ(x − μ)` and `residual ⟂ span(U)`.
pub fn manifold_split(spec: &CompactSpectrum, x: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    check_dim(spec.dim(), x.len())?;
    let delta = x - &spec.mean;
    let coeffs = spec.basis.tr_mul(&delta);
    let residual = delta - &spec.basis * &coeffs;
    Ok((coeffs, residual))
}

pub fn cloud_mean(cloud: &PointCloud) -> DVector<f64> {
    cloud.data.row_mean().transpose()
}

fn centered(cloud: &PointCloud) -> DMatrix<f64> {
    let mean = cloud.data.row_mean();
    let mut c = cloud.data.clone();
    for mut row in c.row_iter_mut() {
        row -= &mean;
    }
    c
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

fn sorted_pairs(
    values: &DVector<f64>,
    vectors: &DMatrix<f64>,
    floor: f64,
    max_rank: usize,
) -> Vec<(f64, DVector<f64>)> {
    let mut idx: Vec<usize> = (0..values.len()).filter(|&i| values[i] > floor).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    idx.truncate(max_rank);
    idx.into_iter()
        .map(|i| (values[i], vectors.column(i).into_owned()))
        .collect()
}

fn assemble(mean: DVector<f64>, d: usize, pairs: Vec<(f64, DVector<f64>)>) -> Result<CompactSpectrum> {
    let r = pairs.len();
    let mut basis = DMatrix::zeros(d, r);
    let mut eigenvalues = DVector::zeros(r);
    for (k, (lam, v)) in pairs.into_iter().enumerate() {
        basis.set_column(k, &v);
        eigenvalues[k] = lam;
    }
    fix_signs(&mut basis);
    CompactSpectrum::new(mean, basis, eigenvalues)
}

/// Largest-magnitude entry of every column made positive.
fn fix_signs(basis: &mut DMatrix<f64>) {
    for mut col in basis.column_iter_mut() {
        let pivot = col.iter().copied().fold(0.0_f64, |best, v| if v.abs() > best.abs() { v } else { best });
        if pivot < 0.0 {
            col.neg_mut();
        }
    }
}

// Two passes of modified Gram-Schmidt.
fn reorthonormalize(basis: &mut DMatrix<f64>) {
    let r = basis.ncols();
    for _ in 0..2 {
        for k in 0..r {
            for j in 0..k {
                let proj = basis.column(j).dot(&basis.column(k));
                let uj = basis.column(j).into_owned();
                basis.column_mut(k).axpy(-proj, &uj, 1.0);
            }
            let norm = basis.column(k).norm();
            if norm > 0.0 {
                basis.column_mut(k).unscale_mut(norm);
            }
        }
    }
}
