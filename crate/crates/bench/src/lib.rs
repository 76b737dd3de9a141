//! Shared fixtures for the criterion benches.

use gaussdiff::synthetic::generate;
use gaussdiff::{PointCloud, SyntheticConfig, SyntheticKind};

/// Clustered synthetic cloud used across benches.
pub fn clustered(d: usize, n: usize, clusters: usize) -> PointCloud {
    let mut c = SyntheticConfig::new(SyntheticKind::Gmm, d, n, 17);
    c.clusters = clusters;
    c.rank = 4;
    c.noise = 0.05;
    generate(&c).expect("synthetic cloud")
}
