//! Gauss–Legendre rules and composite expectations under normal densities.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Nodes and weights on `[-1, 1]`, nodes ascending.
///
/// Golub–Welsch: nodes are the eigenvalues of the Jacobi matrix of the
/// Legendre recurrence, weights `2 v₀²` from the first eigenvector entries.
pub fn gauss_legendre(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::InvalidInput("quadrature needs at least one node".into()));
    }
    let mut j = DMatrix::zeros(n, n);
    for i in 1..n {
        let k = i as f64;
        let b = k / (4.0 * k * k - 1.0).sqrt();
        j[(i, i - 1)] = b;
        j[(i - 1, i)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| (eig.eigenvalues[k], 2.0 * eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut nodes: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut weights: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    // symmetrize mirrored pairs
    for i in 0..n / 2 {
        let k = n - 1 - i;
        let z = 0.5 * (nodes[k] - nodes[i]);
        let w = 0.5 * (weights[i] + weights[k]);
        nodes[i] = -z;
        nodes[k] = z;
        weights[i] = w;
        weights[k] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok((nodes, weights))
}

/// Points per panel in [`NormalQuadrature`].
pub const PANEL_ORDER: usize = 10;
/// Half-width of the integration window in standard deviations.
pub const WINDOW_SD: f64 = 12.0;

/// Expectations under `N(mean, sd²)` by composite Gauss–Legendre on
/// `mean ± 12 sd`, split into equal panels.
#[derive(Debug, Clone)]
pub struct NormalQuadrature {
    panels: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl NormalQuadrature {
    pub fn new(panels: usize) -> Result<Self> {
        if panels == 0 {
            return Err(Error::InvalidInput("at least one panel is required".into()));
        }
        let (nodes, weights) = gauss_legendre(PANEL_ORDER)?;
        Ok(Self { panels, nodes, weights })
    }

    pub fn panels(&self) -> usize {
        self.panels
    }

    /// `E[f(X)]` for `X ~ N(mean, sd²)`.
    pub fn expect<F: Fn(f64) -> f64>(&self, mean: f64, sd: f64, f: F) -> f64 {
        if sd == 0.0 {
            return f(mean);
        }
        let width = 2.0 * WINDOW_SD / self.panels as f64;
        let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let mut total = 0.0;
        for p in 0..self.panels {
            let mid = -WINDOW_SD + (p as f64 + 0.5) * width;
            let mut acc = 0.0;
            for (z, w) in self.nodes.iter().zip(&self.weights) {
                let u = mid + 0.5 * width * z;
                acc += w * (-0.5 * u * u).exp() * f(mean + sd * u);
            }
            total += 0.5 * width * acc;
        }
        total * norm
    }
}
