//! Seeded random streams.
//!
//! Every consumer derives its generator from one user seed plus a stream
//! index, so independent stages draw from non-overlapping ChaCha streams and
//! can be rerun in isolation.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Rng = ChaCha8Rng;

/// Stream indices used inside the crate.
pub mod streams {
    pub const KMEANS: u64 = 1;
    pub const PROBES: u64 = 2;
    pub const INITIAL_STATES: u64 = 3;
    pub const SYNTHETIC: u64 = 4;
    pub const MONTE_CARLO: u64 = 5;
}

pub fn stream_rng(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes a sub-index into a stream id, e.g. one stream per noise level.
pub fn substream(stream: u64, index: u64) -> u64 {
    stream.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index.wrapping_add(1).wrapping_mul(0xBF58_476D_1CE4_E5B9)
}

pub fn normal_vector(rng: &mut Rng, d: usize, scale: f64) -> DVector<f64> {
    DVector::from_iterator(d, (0..d).map(|_| {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    }))
}

/// `n × d` matrix of independent `N(0, scale²)` entries, filled row by row.
pub fn normal_matrix(rng: &mut Rng, n: usize, d: usize, scale: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            let z: f64 = StandardNormal.sample(rng);
            m[(i, j)] = scale * z;
        }
    }
    m
}
