//! Analytical score models, closed-form solutions of the probability-flow
//! ODE for Gaussian data, and deterministic diffusion samplers.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod gmm;
pub mod io;
pub mod quadrature;
pub mod rng;
pub mod sampler;
pub mod schedule;
pub mod score;
pub mod solution;
pub mod spectrum;
pub mod synthetic;
pub mod trajectory;

pub use error::{Error, Result};
pub use sampler::SkipMode;
pub use schedule::{GridParams, NoiseGrid, NoiseSchedule};
pub use score::{GaussianComponent, Mixture, ScoreField, ScoreModel};
pub use solution::SolutionContext;
pub use spectrum::{CompactSpectrum, PointCloud};
pub use analysis::{DeviationMode, ProbeDist, VarianceStats};
pub use gmm::{GmmFit, KMeansConfig};
pub use synthetic::{SyntheticConfig, SyntheticKind};
pub use trajectory::{Trajectory, TrajectoryMeta, TrajectoryStep};
